//! Sinkhorn and Greenkhorn matrix scaling in the log domain.
//!
//! Both scale the Gibbs kernel `K = exp(-C/η)` as `diag(e^u) K diag(e^v)`,
//! keeping only the log potentials `u`, `v` and `log K = -C/η`.
//!
//! Cost model used by the benchmark harness: one Sinkhorn sweep (a row pass
//! and a column pass) is `2n²` units, one Greenkhorn coordinate update is
//! `3n` units.

use crate::error::{OtError, Result};
use crate::kernels::logsumexp;
use crate::ot::{l1_gap, CostMatrix, Distribution, TransportPlan};

pub fn sinkhorn_sweep_units(n: usize) -> u64 {
    2 * (n as u64) * (n as u64)
}

pub fn greenkhorn_update_units(n: usize) -> u64 {
    3 * n as u64
}

/// Log-domain scaling variables.
#[derive(Debug, Clone)]
pub struct ScalingState {
    n: usize,
    pub log_u: Vec<f64>,
    pub log_v: Vec<f64>,
    log_kernel: Vec<f64>,
    /// Sweeps (Sinkhorn) or coordinate updates (Greenkhorn) performed.
    pub iteration: usize,
}

impl ScalingState {
    fn new(cost: &CostMatrix, eta: f64) -> Self {
        let n = cost.n();
        let inv_eta = 1.0 / eta;
        Self {
            n,
            log_u: vec![0.0; n],
            log_v: vec![0.0; n],
            log_kernel: cost.entries().iter().map(|c| -c * inv_eta).collect(),
            iteration: 0,
        }
    }

    #[inline]
    fn log_entry(&self, i: usize, j: usize) -> f64 {
        self.log_u[i] + self.log_kernel[i * self.n + j] + self.log_v[j]
    }

    /// `lse_j(log K_ij + v_j)`.
    fn row_lse(&self, i: usize, scratch: &mut [f64]) -> f64 {
        let k = &self.log_kernel[i * self.n..(i + 1) * self.n];
        for ((s, k), v) in scratch.iter_mut().zip(k).zip(&self.log_v) {
            *s = k + v;
        }
        logsumexp(scratch)
    }

    /// `lse_i(log K_ij + u_i)`.
    fn col_lse(&self, j: usize, scratch: &mut [f64]) -> f64 {
        for (i, s) in scratch.iter_mut().enumerate() {
            *s = self.log_kernel[i * self.n + j] + self.log_u[i];
        }
        logsumexp(scratch)
    }

    pub fn plan(&self) -> TransportPlan {
        let n = self.n;
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(self.log_entry(i, j).exp());
            }
        }
        TransportPlan::from_raw(n, entries)
    }

    fn row_sums(&self, scratch: &mut [f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (self.log_u[i] + self.row_lse(i, scratch)).exp())
            .collect()
    }

    fn col_sums(&self, scratch: &mut [f64]) -> Vec<f64> {
        (0..self.n)
            .map(|j| (self.log_v[j] + self.col_lse(j, scratch)).exp())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ScalingOutcome {
    /// The current (unrounded) plan.
    pub plan: TransportPlan,
    pub state: ScalingState,
    /// True when the stopping test passed before `max_iter`.
    pub converged: bool,
}

impl ScalingOutcome {
    pub fn iterations(&self) -> usize {
        self.state.iteration
    }
}

fn validate(cost: &CostMatrix, alpha: &Distribution, beta: &Distribution, eta: f64) -> Result<()> {
    let n = cost.n();
    for len in [alpha.len(), beta.len()] {
        if len != n {
            return Err(OtError::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    for d in [alpha, beta] {
        if let Some((index, &value)) = d.weights().iter().enumerate().find(|(_, &w)| w <= 0.0) {
            return Err(OtError::NonPositiveMarginal { index, value });
        }
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(OtError::NonPositiveEta(eta));
    }
    Ok(())
}

fn distance_test<'a>(
    alpha: &'a Distribution,
    beta: &'a Distribution,
    tol: f64,
) -> impl FnMut(&[f64], &[f64]) -> bool + 'a {
    move |rows, cols| l1_gap(rows, alpha.weights()) + l1_gap(cols, beta.weights()) <= tol
}

/// Alternating row/column scaling until `‖r - α‖₁ + ‖c - β‖₁ ≤ tol` or
/// `max_iter` sweeps.
pub fn sinkhorn(
    cost: &CostMatrix,
    alpha: &Distribution,
    beta: &Distribution,
    eta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ScalingOutcome> {
    sinkhorn_until(
        cost,
        alpha,
        beta,
        eta,
        max_iter,
        distance_test(alpha, beta, tol),
    )
}

/// Sinkhorn with a caller-supplied stopping test on the plan's row and
/// column sums, evaluated after every sweep.
pub fn sinkhorn_until(
    cost: &CostMatrix,
    alpha: &Distribution,
    beta: &Distribution,
    eta: f64,
    max_iter: usize,
    mut stop: impl FnMut(&[f64], &[f64]) -> bool,
) -> Result<ScalingOutcome> {
    validate(cost, alpha, beta, eta)?;
    let n = cost.n();
    let log_a: Vec<f64> = alpha.weights().iter().map(|a| a.ln()).collect();
    let log_b: Vec<f64> = beta.weights().iter().map(|b| b.ln()).collect();
    let mut state = ScalingState::new(cost, eta);
    let mut scratch = vec![0.0; n];
    let mut converged = false;

    while state.iteration < max_iter {
        for (i, la) in log_a.iter().enumerate() {
            state.log_u[i] = la - state.row_lse(i, &mut scratch);
        }
        for (j, lb) in log_b.iter().enumerate() {
            state.log_v[j] = lb - state.col_lse(j, &mut scratch);
        }
        state.iteration += 1;
        if state
            .log_u
            .iter()
            .chain(&state.log_v)
            .any(|x| !x.is_finite())
        {
            return Err(OtError::Divergence {
                outer: state.iteration,
                inner: 0,
                what: "non-finite Sinkhorn potential",
            });
        }
        // Columns are exact right after the column pass.
        let rows = state.row_sums(&mut scratch);
        if stop(&rows, beta.weights()) {
            converged = true;
            break;
        }
    }

    Ok(ScalingOutcome {
        plan: state.plan(),
        state,
        converged,
    })
}

/// `ρ(a, b) = b - a + a ln(a/b)`, the greedy violation score.
fn violation(target: f64, current: f64) -> f64 {
    if current <= 0.0 {
        return f64::INFINITY;
    }
    current - target + target * (target / current).ln()
}

/// Greedy coordinate scaling: each step rescales the single row or column
/// with the largest violation score.
pub fn greenkhorn(
    cost: &CostMatrix,
    alpha: &Distribution,
    beta: &Distribution,
    eta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ScalingOutcome> {
    greenkhorn_until(
        cost,
        alpha,
        beta,
        eta,
        max_iter,
        distance_test(alpha, beta, tol),
    )
}

/// Greenkhorn with a caller-supplied stopping test on the tracked row and
/// column sums, evaluated before every update.
pub fn greenkhorn_until(
    cost: &CostMatrix,
    alpha: &Distribution,
    beta: &Distribution,
    eta: f64,
    max_iter: usize,
    mut stop: impl FnMut(&[f64], &[f64]) -> bool,
) -> Result<ScalingOutcome> {
    validate(cost, alpha, beta, eta)?;
    let n = cost.n();
    let (a, b) = (alpha.weights(), beta.weights());
    let mut state = ScalingState::new(cost, eta);
    let mut scratch = vec![0.0; n];

    // Start from K / ‖K‖₁.
    let total = logsumexp(&state.log_kernel);
    state.log_u.iter_mut().for_each(|u| *u = -total);

    let mut rows = state.row_sums(&mut scratch);
    let mut cols = state.col_sums(&mut scratch);
    // Tracked sums drift by rounding; resynchronize periodically.
    let resync = 4 * n;
    let mut converged = false;

    loop {
        if stop(&rows, &cols) {
            converged = true;
            break;
        }
        if state.iteration >= max_iter {
            break;
        }
        let (best_row, row_score) = argmax_violation(a, &rows);
        let (best_col, col_score) = argmax_violation(b, &cols);
        if row_score >= col_score {
            let i = best_row;
            let new_u = a[i].ln() - state.row_lse(i, &mut scratch);
            let old_u = state.log_u[i];
            for (j, c) in cols.iter_mut().enumerate() {
                let base = state.log_kernel[i * n + j] + state.log_v[j];
                *c += (new_u + base).exp() - (old_u + base).exp();
            }
            state.log_u[i] = new_u;
            rows[i] = a[i];
        } else {
            let j = best_col;
            let new_v = b[j].ln() - state.col_lse(j, &mut scratch);
            let old_v = state.log_v[j];
            for (i, r) in rows.iter_mut().enumerate() {
                let base = state.log_kernel[i * n + j] + state.log_u[i];
                *r += (new_v + base).exp() - (old_v + base).exp();
            }
            state.log_v[j] = new_v;
            cols[j] = b[j];
        }
        state.iteration += 1;
        if !state
            .log_u
            .iter()
            .chain(&state.log_v)
            .all(|x| x.is_finite())
        {
            return Err(OtError::Divergence {
                outer: state.iteration,
                inner: 0,
                what: "non-finite Greenkhorn potential",
            });
        }
        if state.iteration.is_multiple_of(resync) {
            rows = state.row_sums(&mut scratch);
            cols = state.col_sums(&mut scratch);
        }
    }

    Ok(ScalingOutcome {
        plan: state.plan(),
        state,
        converged,
    })
}

fn argmax_violation(target: &[f64], current: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, (&t, &c)) in target.iter().zip(current).enumerate() {
        let score = violation(t, c);
        if score > best.1 {
            best = (k, score);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::marginal_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut impl Rng, n: usize) -> (CostMatrix, Distribution, Distribution) {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        (
            CostMatrix::from_fn(n, |_, _| rng.random::<f64>()).unwrap(),
            Distribution::from_mass(&a).unwrap(),
            Distribution::from_mass(&b).unwrap(),
        )
    }

    #[test]
    fn zero_cost_converges_in_one_sweep() {
        let a = Distribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = Distribution::new(vec![0.25, 0.25, 0.4, 0.1]).unwrap();
        let c = CostMatrix::new(4, vec![0.0; 16]).unwrap();
        let out = sinkhorn(&c, &a, &b, 0.1, 1e-12, 10).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations(), 1);
        let product = TransportPlan::product(&a, &b).unwrap();
        assert!(out.plan.l1_distance(&product).unwrap() < 1e-14);
    }

    #[test]
    fn greenkhorn_zero_cost_reaches_product() {
        let a = Distribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = Distribution::new(vec![0.25, 0.25, 0.4, 0.1]).unwrap();
        let c = CostMatrix::new(4, vec![0.0; 16]).unwrap();
        let out = greenkhorn(&c, &a, &b, 0.1, 1e-12, 1000).unwrap();
        assert!(out.converged);
        let product = TransportPlan::product(&a, &b).unwrap();
        assert!(out.plan.l1_distance(&product).unwrap() < 1e-10);
    }

    #[test]
    fn symmetric_instance_gives_symmetric_plan() {
        let n = 5;
        let c = CostMatrix::from_fn(n, |i, j| (i as f64 - j as f64).powi(2) / 16.0).unwrap();
        let a = Distribution::from_mass(&[1.0, 2.0, 3.0, 2.0, 1.0]).unwrap();
        let out = sinkhorn(&c, &a, &a, 0.1, 1e-12, 10_000).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((out.plan.get(i, j) - out.plan.get(j, i)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn greenkhorn_update_fixes_the_chosen_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (c, a, b) = random_instance(&mut rng, 6);
        for steps in 1..12 {
            let out = greenkhorn(&c, &a, &b, 0.2, 0.0, steps).unwrap();
            let rows = out.plan.row_sums();
            let cols = out.plan.col_sums();
            let exact_line = rows
                .iter()
                .zip(a.weights())
                .any(|(r, a)| (r - a).abs() < 1e-12)
                || cols
                    .iter()
                    .zip(b.weights())
                    .any(|(c, b)| (c - b).abs() < 1e-12);
            assert!(exact_line, "after {steps} updates no line is exact");
        }
    }

    #[test]
    fn baselines_agree_at_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [3, 8, 16] {
            let (c, a, b) = random_instance(&mut rng, n);
            let s = sinkhorn(&c, &a, &b, 0.1, 1e-8, 100_000).unwrap();
            let g = greenkhorn(&c, &a, &b, 0.1, 1e-8, 10_000_000).unwrap();
            assert!(s.converged && g.converged);
            assert!(s.plan.l1_distance(&g.plan).unwrap() < 1e-6);
            assert!(s.plan.entries().iter().all(|&x| x > 0.0));
            assert!(g.plan.entries().iter().all(|&x| x > 0.0));
            assert!(marginal_distance(&s.plan, &a, &b).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn flags_iteration_cap_and_rejects_zero_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (c, a, b) = random_instance(&mut rng, 6);
        let out = sinkhorn(&c, &a, &b, 0.01, 1e-14, 2).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations(), 2);
        let z = Distribution::new(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(sinkhorn(&c, &z, &b, 0.1, 1e-8, 10).is_err());
        assert!(greenkhorn(&c, &a, &b, 0.0, 1e-8, 10).is_err());
    }
}
