use pdasgd_core::{
    approx_ot, derive_parameters, exact_ot_oracle, greenkhorn, marginal_distance, sinkhorn,
    smooth_marginals, ApproxConfig, CostMatrix, Distribution, Method, StopReason,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(seed: u64, n: usize) -> (CostMatrix, Distribution, Distribution) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let c = CostMatrix::from_fn(n, |_, _| rng.random::<f64>()).unwrap();
    (
        c,
        Distribution::from_mass(&a).unwrap(),
        Distribution::from_mass(&b).unwrap(),
    )
}

#[test]
fn every_method_is_within_epsilon_of_the_exact_value() {
    for method in [Method::Pdasgd, Method::Sinkhorn, Method::Greenkhorn] {
        for n in [2, 3, 4] {
            for eps in [0.05, 0.02] {
                for seed in 0..20 {
                    let (c, a, b) = random_problem(1000 + seed, n);
                    let (_, opt) = exact_ot_oracle(&c, &a, &b).unwrap();
                    let config = ApproxConfig {
                        method,
                        seed,
                        ..ApproxConfig::new(eps)
                    };
                    let r = approx_ot(&c, &a, &b, &config).unwrap();
                    assert_eq!(
                        r.stop_reason,
                        StopReason::Converged,
                        "{method:?} n={n} eps={eps} seed={seed}"
                    );
                    assert!(
                        r.ot_value - opt <= eps,
                        "{method:?} n={n} eps={eps} seed={seed}: {} vs {opt}",
                        r.ot_value
                    );
                    assert!(marginal_distance(&r.plan, &a, &b).unwrap() <= 1e-10);
                }
            }
        }
    }
}

#[test]
fn two_point_endpoint_instance() {
    let a = Distribution::new(vec![0.3, 0.7]).unwrap();
    let b = Distribution::new(vec![0.6, 0.4]).unwrap();
    let c = CostMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    for seed in 0..5 {
        let r = approx_ot(
            &c,
            &a,
            &b,
            &ApproxConfig {
                seed,
                ..ApproxConfig::new(0.02)
            },
        )
        .unwrap();
        assert!((r.ot_value - 0.3).abs() <= 0.02, "{}", r.ot_value);
    }
}

#[test]
fn certified_stop_meets_both_thresholds() {
    let (c, a, b) = random_problem(7, 4);
    let eps = 0.05;
    let r = approx_ot(&c, &a, &b, &ApproxConfig::new(eps)).unwrap();
    let p = r.parameters.unwrap();
    let last = r.records.last().unwrap();
    assert_eq!(r.stop_reason, StopReason::Converged);
    assert!(last.duality_gap <= eps / 4.0);
    assert!(last.constraint_violation_l1 <= p.eps_prime / 2.0);
    let report = r.rounding.unwrap();
    assert!(report.l1_change <= 2.0 * report.input_marginal_gap + 1e-12);
}

#[test]
fn smoothing_moves_marginals_by_at_most_half_eps_prime() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let (c, a, b) = random_problem(rng.random(), n);
        let eps = rng.random_range(0.001..0.5);
        let p = derive_parameters(eps, n, &c).unwrap();
        let (sa, sb) = smooth_marginals(&a, &b, p.eps_prime).unwrap();
        let moved: f64 = sa
            .weights()
            .iter()
            .zip(a.weights())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            + sb.weights()
                .iter()
                .zip(b.weights())
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>();
        assert!(moved <= p.eps_prime / 2.0 + 1e-15);
        assert!(sa.is_strictly_positive() && sb.is_strictly_positive());
    }
}

#[test]
fn exhausted_cap_is_flagged_but_still_feasible() {
    let (c, a, b) = random_problem(9, 4);
    let config = ApproxConfig {
        max_outer: Some(2),
        ..ApproxConfig::new(0.01)
    };
    let r = approx_ot(&c, &a, &b, &config).unwrap();
    assert_eq!(r.stop_reason, StopReason::IterationCap);
    assert!(r.flagged());
    assert!(marginal_distance(&r.plan, &a, &b).unwrap() <= 1e-10);
}

#[test]
fn seeded_pipeline_is_reproducible() {
    let (c, a, b) = random_problem(10, 4);
    let config = ApproxConfig {
        seed: 77,
        ..ApproxConfig::new(0.05)
    };
    let x = approx_ot(&c, &a, &b, &config).unwrap();
    let y = approx_ot(&c, &a, &b, &config).unwrap();
    assert_eq!(x.ot_value.to_bits(), y.ot_value.to_bits());
    assert_eq!(x.cost_units, y.cost_units);
    assert_eq!(x.records, y.records);
}

#[test]
fn scaling_baselines_converge_to_the_same_plan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2, 4, 8, 16] {
        for _ in 0..5 {
            let (c, a, b) = random_problem(rng.random(), n);
            let eta = rng.random_range(0.05..0.5);
            let s = sinkhorn(&c, &a, &b, eta, 1e-8, 1_000_000).unwrap();
            let g = greenkhorn(&c, &a, &b, eta, 1e-8, 100_000_000).unwrap();
            assert!(s.converged && g.converged);
            let d = s.plan.l1_distance(&g.plan).unwrap();
            assert!(d <= 1e-6, "n={n} eta={eta}: {d:e}");
        }
    }
}
