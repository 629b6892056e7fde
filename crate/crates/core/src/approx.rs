//! ε-approximate optimal transport: pick `η` and the marginal smoothing from
//! `ε`, solve the entropic problem on the smoothed marginals, then round the
//! result back onto `U(α, β)`.

use crate::baselines::{
    greenkhorn_until, greenkhorn_update_units, sinkhorn_sweep_units, sinkhorn_until,
};
use crate::error::{OtError, Result};
use crate::ot::{
    col_sums, l1_gap, row_sums, transport_cost, CostMatrix, Distribution, OtInstance, TransportPlan,
};
use crate::rounding::{round_to_polytope, RoundingReport};
use crate::semidual::SemiDualOracle;
use crate::solver::{self, RunRecord, RunStatus, SolverOptions};

/// Per component gradient (softmax of one row plus the combination).
pub const PDASGD_GRADIENT_UNITS_PER_N: u64 = 4;
/// Per inner step: momentum mix, estimator assembly and the two updates.
pub const PDASGD_STEP_UNITS_PER_N: u64 = 6;

/// Cost units charged to a PDASGD run on an `n`-point problem.
pub fn pdasgd_cost_units(n: usize, component_gradients: u64, inner_steps: u64) -> u64 {
    let n = n as u64;
    PDASGD_GRADIENT_UNITS_PER_N * n * component_gradients
        + PDASGD_STEP_UNITS_PER_N * n * inner_steps
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropicParameters {
    /// `η = ε / (8 ln n)`.
    pub eta: f64,
    /// `ε' = ε / (6 ‖C‖∞)`.
    pub eps_prime: f64,
}

/// `η = ε/(8 ln n)` and `ε' = ε/(6‖C‖∞)`.
///
/// A zero cost matrix yields [`OtError::TrivialInstance`]: every feasible
/// plan is optimal.
pub fn derive_parameters(epsilon: f64, n: usize, cost: &CostMatrix) -> Result<EntropicParameters> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(OtError::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if n < 2 {
        return Err(OtError::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    if cost.max_abs() == 0.0 {
        return Err(OtError::TrivialInstance);
    }
    Ok(EntropicParameters {
        eta: epsilon / (8.0 * (n as f64).ln()),
        eps_prime: epsilon / (6.0 * cost.max_abs()),
    })
}

/// Mixes each marginal with the uniform distribution:
/// `b̃ = (1 - ε'/8) b + ε'/(8n)`.
pub fn smooth_marginals(
    alpha: &Distribution,
    beta: &Distribution,
    eps_prime: f64,
) -> Result<(Distribution, Distribution)> {
    if !(eps_prime > 0.0 && eps_prime < 8.0) {
        return Err(OtError::InvalidParameter(format!(
            "smoothing parameter must lie in (0, 8), got {eps_prime}"
        )));
    }
    if alpha.len() != beta.len() {
        return Err(OtError::DimensionMismatch {
            expected: alpha.len(),
            found: beta.len(),
        });
    }
    let n = alpha.len() as f64;
    let keep = 1.0 - eps_prime / 8.0;
    let floor = eps_prime / (8.0 * n);
    let mix = |d: &Distribution| {
        Distribution::new(d.weights().iter().map(|w| keep * w + floor).collect())
    };
    Ok((mix(alpha)?, mix(beta)?))
}

/// Default `κ` for [`theoretical_iteration_cap`]. The bound's hidden constant
/// is unspecified; with `κ = 1` the certified stop never fires before the cap
/// on small instances, while measured runs at `n ≤ 4` need about 40 to 60.
pub const DEFAULT_CAP_MULTIPLIER: f64 = 100.0;

/// `ceil(κ n ‖C‖∞ √(ln n) / ε)` total inner iterations.
pub fn theoretical_iteration_cap(epsilon: f64, n: usize, cost: &CostMatrix, kappa: f64) -> u64 {
    let n_f = n as f64;
    (kappa * n_f * cost.max_abs() * n_f.ln().sqrt() / epsilon).ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverProfile {
    /// `m = n`, unit `z`-step multiplier.
    Theory,
    /// `m = round(2√n)`, `z`-step multiplier 15.
    Benchmark,
}

impl SolverProfile {
    pub fn inner_iterations(self, n: usize) -> usize {
        match self {
            SolverProfile::Theory => n.max(1),
            SolverProfile::Benchmark => ((2.0 * (n as f64).sqrt()).round() as usize).max(1),
        }
    }

    pub fn z_step_multiplier(self) -> f64 {
        match self {
            SolverProfile::Theory => 1.0,
            SolverProfile::Benchmark => 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pdasgd,
    Sinkhorn,
    Greenkhorn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pdasgd => "pdasgd",
            Method::Sinkhorn => "sinkhorn",
            Method::Greenkhorn => "greenkhorn",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = OtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pdasgd" => Ok(Method::Pdasgd),
            "sinkhorn" => Ok(Method::Sinkhorn),
            "greenkhorn" => Ok(Method::Greenkhorn),
            other => Err(OtError::InvalidParameter(format!(
                "unknown solver {other:?}"
            ))),
        }
    }
}

/// When the solver stage stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopTarget {
    /// PDASGD: gap surrogate `f(x) + G(v) ≤ ε/4` and `‖Ax - b̃‖₁ ≤ ε'/2`.
    /// Scaling baselines: marginal distance to `(α̃, β̃)` at most `ε'/2`.
    Certified,
    /// Unrounded iterate within this L1 marginal distance of the original
    /// `(α, β)`.
    MarginalDistance(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxConfig {
    pub epsilon: f64,
    pub method: Method,
    pub profile: SolverProfile,
    pub stop: StopTarget,
    /// `κ` in the iteration cap.
    pub cap_multiplier: f64,
    /// Overrides the derived PDASGD outer-iteration cap.
    pub max_outer: Option<usize>,
    pub seed: u64,
    pub checkpoint_stride: usize,
}

impl ApproxConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            method: Method::Pdasgd,
            profile: SolverProfile::Theory,
            stop: StopTarget::Certified,
            cap_multiplier: DEFAULT_CAP_MULTIPLIER,
            max_outer: None,
            seed: 0,
            checkpoint_stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    IterationCap,
    TrivialInstance,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::IterationCap => "iteration_cap",
            StopReason::TrivialInstance => "trivial_instance",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApproxResult {
    /// The rounded plan, feasible for the original marginals.
    pub plan: TransportPlan,
    /// `⟨C, X̂⟩`.
    pub ot_value: f64,
    /// The solver output before rounding.
    pub unrounded: TransportPlan,
    /// Marginal distance of `unrounded` to the original `(α, β)`.
    pub unrounded_distance: f64,
    pub records: Vec<RunRecord>,
    pub stop_reason: StopReason,
    pub parameters: Option<EntropicParameters>,
    pub rounding: Option<RoundingReport>,
    pub cost_units: u64,
    /// Outer iterations (PDASGD), sweeps (Sinkhorn) or coordinate updates
    /// (Greenkhorn).
    pub iterations: usize,
}

impl ApproxResult {
    pub fn flagged(&self) -> bool {
        self.stop_reason == StopReason::IterationCap
    }
}

/// Cost-unit budget shared by all methods: the PDASGD iteration cap priced
/// with the PDASGD cost model.
fn pdasgd_outer_cap(n: usize, config: &ApproxConfig, cost: &CostMatrix) -> usize {
    if let Some(cap) = config.max_outer {
        return cap;
    }
    let total = theoretical_iteration_cap(config.epsilon, n, cost, config.cap_multiplier);
    let m = config.profile.inner_iterations(n) as u64;
    total.div_ceil(m).max(1) as usize
}

fn cost_budget(n: usize, outer_cap: usize, m: usize) -> u64 {
    let s = outer_cap as u64;
    let m = m as u64;
    pdasgd_cost_units(n, s * (n as u64 + m), s * m)
}

pub fn approx_ot(
    cost: &CostMatrix,
    alpha: &Distribution,
    beta: &Distribution,
    config: &ApproxConfig,
) -> Result<ApproxResult> {
    let n = cost.n();
    for len in [alpha.len(), beta.len()] {
        if len != n {
            return Err(OtError::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    if config.checkpoint_stride == 0 {
        return Err(OtError::InvalidParameter(
            "checkpoint_stride must be >= 1".into(),
        ));
    }

    if cost.max_abs() == 0.0 {
        let plan = TransportPlan::product(alpha, beta)?;
        return Ok(ApproxResult {
            ot_value: 0.0,
            unrounded: plan.clone(),
            unrounded_distance: crate::ot::marginal_distance(&plan, alpha, beta)?,
            plan,
            records: Vec::new(),
            stop_reason: StopReason::TrivialInstance,
            parameters: None,
            rounding: None,
            cost_units: 0,
            iterations: 0,
        });
    }

    let params = derive_parameters(config.epsilon, n, cost)?;
    let (alpha_s, beta_s) = smooth_marginals(alpha, beta, params.eps_prime)?;
    let outer_cap = pdasgd_outer_cap(n, config, cost);
    let m = config.profile.inner_iterations(n);
    let budget = cost_budget(n, outer_cap, m);

    let distance_to = |rows: &[f64], cols: &[f64], a: &Distribution, b: &Distribution| {
        l1_gap(rows, a.weights()) + l1_gap(cols, b.weights())
    };

    let (entries, records, converged, cost_units, iterations) = match config.method {
        Method::Pdasgd => {
            let instance =
                OtInstance::new(cost.clone(), alpha_s.clone(), beta_s.clone(), params.eta)?;
            let oracle = SemiDualOracle::new(instance)?;
            let options = SolverOptions {
                inner_iterations: m,
                outer_iterations: outer_cap,
                seed: config.seed,
                z_step_multiplier: config.profile.z_step_multiplier(),
                checkpoint_stride: config.checkpoint_stride,
                initial_dual: None,
            };
            let outcome = match config.stop {
                StopTarget::Certified => solver::run(
                    &oracle,
                    &options,
                    solver::GapAndViolation {
                        gap: config.epsilon / 4.0,
                        violation: params.eps_prime / 2.0,
                    },
                )?,
                StopTarget::MarginalDistance(acc) => {
                    solver::run(&oracle, &options, |_: &RunRecord, x: &[f64]| {
                        distance_to(&row_sums(n, x), &col_sums(n, x), alpha, beta) <= acc
                    })?
                }
            };
            let last = outcome.records.last().expect("at least one checkpoint");
            let units = pdasgd_cost_units(n, last.cumulative_component_gradients, last.inner_steps);
            let iterations = last.outer_index;
            let converged = outcome.status == RunStatus::StopRuleSatisfied;
            (
                outcome.primal,
                outcome.records,
                converged,
                units,
                iterations,
            )
        }
        Method::Sinkhorn | Method::Greenkhorn => {
            let (target_a, target_b, tol) = match config.stop {
                StopTarget::Certified => (&alpha_s, &beta_s, params.eps_prime / 2.0),
                StopTarget::MarginalDistance(acc) => (alpha, beta, acc),
            };
            let stop =
                |rows: &[f64], cols: &[f64]| distance_to(rows, cols, target_a, target_b) <= tol;
            let (outcome, unit) = if config.method == Method::Sinkhorn {
                let unit = sinkhorn_sweep_units(n);
                let max_iter = (budget / unit).max(1) as usize;
                (
                    sinkhorn_until(cost, &alpha_s, &beta_s, params.eta, max_iter, stop)?,
                    unit,
                )
            } else {
                let unit = greenkhorn_update_units(n);
                let max_iter = (budget / unit).max(1) as usize;
                (
                    greenkhorn_until(cost, &alpha_s, &beta_s, params.eta, max_iter, stop)?,
                    unit,
                )
            };
            let iterations = outcome.iterations();
            (
                outcome.plan.into_entries(),
                Vec::new(),
                outcome.converged,
                iterations as u64 * unit,
                iterations,
            )
        }
    };

    let unrounded = TransportPlan::new(n, entries)?;
    let unrounded_distance = crate::ot::marginal_distance(&unrounded, alpha, beta)?;
    let (plan, report) = round_to_polytope(&unrounded, alpha, beta)?;
    let ot_value = transport_cost(&plan, cost)?;
    Ok(ApproxResult {
        plan,
        ot_value,
        unrounded,
        unrounded_distance,
        records,
        stop_reason: if converged {
            StopReason::Converged
        } else {
            StopReason::IterationCap
        },
        parameters: Some(params),
        rounding: Some(report),
        cost_units,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_cost(n: usize) -> CostMatrix {
        CostMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { 1.0 }).unwrap()
    }

    #[test]
    fn parameters_from_epsilon() {
        let p = derive_parameters(0.1, 100, &unit_cost(3)).unwrap();
        assert_abs_diff_eq!(p.eta, 0.002_714_340_511_895_324, epsilon = 1e-15);
        assert_abs_diff_eq!(p.eps_prime, 0.1 / 6.0, epsilon = 1e-16);
        let q = derive_parameters(0.2, 100, &unit_cost(3)).unwrap();
        assert_abs_diff_eq!(q.eta, 2.0 * p.eta, epsilon = 1e-16);
        assert_abs_diff_eq!(q.eps_prime, 2.0 * p.eps_prime, epsilon = 1e-16);
        let r = derive_parameters(0.01, 784, &unit_cost(3)).unwrap();
        assert_abs_diff_eq!(r.eta, 1.875_635_178_127_582e-4, epsilon = 1e-16);

        assert!(derive_parameters(0.1, 1, &unit_cost(3)).is_err());
        let zero = CostMatrix::new(2, vec![0.0; 4]).unwrap();
        assert_eq!(
            derive_parameters(0.1, 2, &zero),
            Err(OtError::TrivialInstance)
        );
    }

    #[test]
    fn smoothing() {
        let u = Distribution::uniform(5).unwrap();
        let (a, _) = smooth_marginals(&u, &u, 0.3).unwrap();
        for w in a.weights() {
            assert_abs_diff_eq!(*w, 0.2, epsilon = 1e-16);
        }
        let point = Distribution::new(vec![1.0, 0.0]).unwrap();
        let (a, b) = smooth_marginals(&point, &point, 0.08).unwrap();
        assert_abs_diff_eq!(a.weights()[0], 0.995, epsilon = 1e-15);
        assert_abs_diff_eq!(a.weights()[1], 0.005, epsilon = 1e-15);
        assert!(b.min() >= 0.08 / 16.0 - 1e-18);
        let moved = l1_gap(a.weights(), point.weights()) + l1_gap(b.weights(), point.weights());
        assert!(moved <= 0.08 / 2.0 + 1e-15);
        assert!(smooth_marginals(&point, &point, 8.0).is_err());
    }

    #[test]
    fn iteration_cap() {
        let c = unit_cost(4);
        assert_eq!(theoretical_iteration_cap(0.1, 100, &c, 1.0), 2146);
        let small = theoretical_iteration_cap(0.1, 50, &c, 1.0) as f64;
        let large = theoretical_iteration_cap(0.1, 100, &c, 1.0) as f64;
        assert!((large / small - 2.0 * (100f64.ln() / 50f64.ln()).sqrt()).abs() < 1e-3);
        let half = theoretical_iteration_cap(0.05, 100, &c, 1.0);
        assert!((half as i64 - 2 * 2146).abs() <= 2);
    }

    #[test]
    fn profiles() {
        assert_eq!(SolverProfile::Theory.inner_iterations(64), 64);
        assert_eq!(SolverProfile::Benchmark.inner_iterations(64), 16);
        assert_eq!(SolverProfile::Benchmark.inner_iterations(400), 40);
        assert_eq!(SolverProfile::Benchmark.z_step_multiplier(), 15.0);
        assert_eq!("greenkhorn".parse::<Method>().unwrap(), Method::Greenkhorn);
        assert!("apdagd".parse::<Method>().is_err());
    }

    #[test]
    fn zero_cost_short_circuits() {
        let a = Distribution::new(vec![0.3, 0.7]).unwrap();
        let b = Distribution::new(vec![0.6, 0.4]).unwrap();
        let zero = CostMatrix::new(2, vec![0.0; 4]).unwrap();
        let r = approx_ot(&zero, &a, &b, &ApproxConfig::new(0.1)).unwrap();
        assert_eq!(r.stop_reason, StopReason::TrivialInstance);
        assert_eq!(r.ot_value, 0.0);
    }

    #[test]
    fn equal_marginals_zero_diagonal() {
        let a = Distribution::new(vec![0.1, 0.4, 0.2, 0.3]).unwrap();
        let c = CostMatrix::from_fn(4, |i, j| (i as f64 - j as f64).abs() / 3.0).unwrap();
        for method in [Method::Pdasgd, Method::Sinkhorn, Method::Greenkhorn] {
            let config = ApproxConfig {
                method,
                seed: 3,
                ..ApproxConfig::new(0.05)
            };
            let r = approx_ot(&c, &a, &a, &config).unwrap();
            assert!(crate::ot::marginal_distance(&r.plan, &a, &a).unwrap() < 1e-10);
            assert!(r.ot_value <= 0.05, "{method:?}: {}", r.ot_value);
        }
    }
}
