//! Rounding an approximately feasible plan onto the transport polytope.
//!
//! Rows are shrunk so that no row exceeds its target mass, then columns
//! likewise; the mass still missing from rows and columns is restored by a
//! rank-one correction. The result lies in `U(α, β)` and moves at most
//! `2 d(F)` in L1.

use crate::error::{OtError, Result};
use crate::ot::{l1_gap, marginal_distance, Distribution, TransportPlan};

/// Skip the rank-one correction below this much missing mass.
const CORRECTION_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundingReport {
    /// `d(F)`.
    pub input_marginal_gap: f64,
    /// `‖err_r‖₁`.
    pub correction_mass: f64,
    /// `‖E - F‖₁`.
    pub l1_change: f64,
}

pub fn round_to_polytope(
    plan: &TransportPlan,
    alpha: &Distribution,
    beta: &Distribution,
) -> Result<(TransportPlan, RoundingReport)> {
    let n = plan.n();
    for len in [alpha.len(), beta.len()] {
        if len != n {
            return Err(OtError::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    if let Some((index, &value)) = plan.entries().iter().enumerate().find(|(_, &x)| x < 0.0) {
        return Err(OtError::NegativeEntry { index, value });
    }
    let input_marginal_gap = marginal_distance(plan, alpha, beta)?;
    let mut e = plan.entries().to_vec();

    // Shrink rows; an empty row has nothing to shrink.
    for (row, &a) in e.chunks_exact_mut(n).zip(alpha.weights()) {
        let r: f64 = row.iter().sum();
        if r > 0.0 {
            let x = (a / r).min(1.0);
            row.iter_mut().for_each(|v| *v *= x);
        }
    }
    // Shrink columns.
    let cols = crate::ot::col_sums(n, &e);
    let scale: Vec<f64> = cols
        .iter()
        .zip(beta.weights())
        .map(|(&c, &b)| if c > 0.0 { (b / c).min(1.0) } else { 1.0 })
        .collect();
    for row in e.chunks_exact_mut(n) {
        for (v, s) in row.iter_mut().zip(&scale) {
            *v *= s;
        }
    }

    // Both residuals are nonnegative up to rounding dust.
    let rows = crate::ot::row_sums(n, &e);
    let cols = crate::ot::col_sums(n, &e);
    let err_r: Vec<f64> = alpha
        .weights()
        .iter()
        .zip(&rows)
        .map(|(a, r)| (a - r).max(0.0))
        .collect();
    let err_c: Vec<f64> = beta
        .weights()
        .iter()
        .zip(&cols)
        .map(|(b, c)| (b - c).max(0.0))
        .collect();
    let correction_mass: f64 = err_r.iter().sum();
    if correction_mass > CORRECTION_FLOOR {
        let inv = 1.0 / correction_mass;
        for (row, &er) in e.chunks_exact_mut(n).zip(&err_r) {
            if er == 0.0 {
                continue;
            }
            let w = er * inv;
            for (v, ec) in row.iter_mut().zip(&err_c) {
                *v += w * ec;
            }
        }
    }

    let l1_change = l1_gap(&e, plan.entries());
    Ok((
        TransportPlan::from_raw(n, e),
        RoundingReport {
            input_marginal_gap,
            correction_mass,
            l1_change,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn half() -> Distribution {
        Distribution::uniform(2).unwrap()
    }

    #[test]
    fn worked_two_by_two() {
        let f = TransportPlan::new(2, vec![0.4, 0.2, 0.1, 0.3]).unwrap();
        let (e, report) = round_to_polytope(&f, &half(), &half()).unwrap();
        let want = [1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0];
        for (got, want) in e.entries().iter().zip(want) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(report.input_marginal_gap, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(report.correction_mass, 0.1, epsilon = 1e-15);
        assert!(report.l1_change <= 2.0 * report.input_marginal_gap);
    }

    #[test]
    fn feasible_input_is_unchanged() {
        let a = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let b = Distribution::new(vec![0.6, 0.1, 0.3]).unwrap();
        let f = TransportPlan::product(&a, &b).unwrap();
        let (e, report) = round_to_polytope(&f, &a, &b).unwrap();
        assert!(report.l1_change < 1e-15);
        assert!(e.l1_distance(&f).unwrap() < 1e-15);
    }

    #[test]
    fn zero_rows_and_columns() {
        let a = Distribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        let b = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let f = TransportPlan::new(3, vec![0.5, 0.0, 0.1, 0.0, 0.0, 0.0, 0.3, 0.0, 0.1]).unwrap();
        let (e, report) = round_to_polytope(&f, &a, &b).unwrap();
        assert!(marginal_distance(&e, &a, &b).unwrap() < 1e-10);
        assert!(report.l1_change <= 2.0 * report.input_marginal_gap + 1e-12);

        let empty = TransportPlan::new(3, vec![0.0; 9]).unwrap();
        let (e, _) = round_to_polytope(&empty, &a, &b).unwrap();
        let product = TransportPlan::product(&a, &b).unwrap();
        assert!(e.l1_distance(&product).unwrap() < 1e-15);
    }

    #[test]
    fn rejects_negative_entries() {
        let f = TransportPlan::from_raw(2, vec![0.5, -0.1, 0.3, 0.3]);
        assert!(matches!(
            round_to_polytope(&f, &half(), &half()),
            Err(OtError::NegativeEntry { index: 1, .. })
        ));
    }

    fn random_case(seed: u64) -> (TransportPlan, Distribution, Distribution) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..10);
        let mass = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut m: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        0.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            m[n - 1] += 1e-3;
            m
        };
        let a = Distribution::from_mass(&mass(&mut rng)).unwrap();
        let b = Distribution::from_mass(&mass(&mut rng)).unwrap();
        let f = TransportPlan::new(
            n,
            (0..n * n)
                .map(|_| {
                    if rng.random_bool(0.15) {
                        0.0
                    } else {
                        rng.random::<f64>() / (n * n) as f64 * 2.0
                    }
                })
                .collect(),
        )
        .unwrap();
        (f, a, b)
    }

    proptest! {
        #[test]
        fn output_feasible_and_close(seed in any::<u64>()) {
            let (f, a, b) = random_case(seed);
            let (e, report) = round_to_polytope(&f, &a, &b).unwrap();
            prop_assert!(e.entries().iter().all(|&x| x >= 0.0));
            prop_assert!(marginal_distance(&e, &a, &b).unwrap() <= 1e-10);
            prop_assert!(report.l1_change <= 2.0 * report.input_marginal_gap + 1e-12);

            let (again, _) = round_to_polytope(&e, &a, &b).unwrap();
            prop_assert!(again.l1_distance(&e).unwrap() <= 1e-12);
        }
    }
}
