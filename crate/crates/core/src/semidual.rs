//! The semi-dual of entropic optimal transport as a finite sum.
//!
//! With the row block `u` of the dual eliminated in closed form, the dual
//! becomes `G(v) = (1/n) Σ_i g_i(v)` where
//!
//! ```text
//! g_i(v) = n α_i [ η lse_j((v_j - c_ij - η)/η) - ⟨β, v⟩ - η ln α_i + η ]
//! ```
//!
//! Each `g_i` touches only row `i` of the cost matrix, which is what makes a
//! stochastic component gradient cost `O(n)`.

use crate::error::{OtError, Result};
use crate::kernels::{logsumexp_scaled, softmax_scaled_into};
use crate::ot::{col_sums, l1_gap, row_sums, xlogx, Distribution, OtInstance, TransportPlan};
use crate::solver::FiniteSumOracle;

/// A point in the semi-dual space (one potential per column).
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint(pub Vec<f64>);

impl DualPoint {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for DualPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Smoothness constants of the semi-dual.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothness {
    /// `L_i = n α_i / η`, per component, w.r.t. the Euclidean norm.
    pub per_component: Vec<f64>,
    /// `L̄ = (1/n) Σ L_i = 1/η`.
    pub average: f64,
    /// `5/η`, smoothness of `G` w.r.t. the max norm.
    pub linf: f64,
}

#[derive(Debug, Clone)]
pub struct SemiDualOracle {
    instance: OtInstance,
    log_alpha: Vec<f64>,
    inv_eta: f64,
}

impl SemiDualOracle {
    /// Requires strictly positive row marginals; zero entries would make
    /// `ln α_i` infinite. Smooth the marginals first.
    pub fn new(instance: OtInstance) -> Result<Self> {
        let mut log_alpha = Vec::with_capacity(instance.n());
        for (index, &a) in instance.alpha().weights().iter().enumerate() {
            if a <= 0.0 {
                return Err(OtError::NonPositiveMarginal { index, value: a });
            }
            log_alpha.push(a.ln());
        }
        let inv_eta = 1.0 / instance.eta();
        Ok(Self {
            instance,
            log_alpha,
            inv_eta,
        })
    }

    pub fn instance(&self) -> &OtInstance {
        &self.instance
    }

    pub fn n(&self) -> usize {
        self.instance.n()
    }

    fn eta(&self) -> f64 {
        self.instance.eta()
    }

    fn alpha(&self) -> &[f64] {
        self.instance.alpha().weights()
    }

    fn beta(&self) -> &[f64] {
        self.instance.beta().weights()
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n() {
            return Err(OtError::DimensionMismatch {
                expected: self.n(),
                found: v.len(),
            });
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(OtError::InvalidParameter(format!(
                "component index {i} out of range for n = {}",
                self.n()
            )));
        }
        Ok(())
    }

    fn beta_dot(&self, v: &[f64]) -> f64 {
        self.beta().iter().zip(v).map(|(b, v)| b * v).sum()
    }

    /// `g_i(v)` given a precomputed `⟨β, v⟩`.
    fn component_value_with(&self, i: usize, v: &[f64], beta_dot: f64) -> f64 {
        let eta = self.eta();
        let n = self.n() as f64;
        // lse((v - c - η)/η) = lse((v - c)/η) - 1
        let lse = logsumexp_scaled(v, self.instance.cost().row(i), self.inv_eta) - 1.0;
        n * self.alpha()[i] * (eta * lse - beta_dot - eta * self.log_alpha[i] + eta)
    }

    pub fn component_value(&self, i: usize, v: &[f64]) -> Result<f64> {
        self.check_index(i)?;
        self.check_dim(v)?;
        Ok(self.component_value_with(i, v, self.beta_dot(v)))
    }

    /// `G(v) = (1/n) Σ_i g_i(v)`.
    pub fn semidual_value(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v)?;
        Ok(self.value_unchecked(v))
    }

    fn value_unchecked(&self, v: &[f64]) -> f64 {
        let dot = self.beta_dot(v);
        let total: f64 = (0..self.n())
            .map(|i| self.component_value_with(i, v, dot))
            .sum();
        total / self.n() as f64
    }

    /// Writes `∇g_i(v) = -n α_i (β - softmax((v - C_i)/η))` into `out`.
    pub fn component_gradient(&self, i: usize, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_index(i)?;
        self.check_dim(v)?;
        self.check_dim(out)?;
        self.component_gradient_unchecked(i, v, out);
        Ok(())
    }

    fn component_gradient_unchecked(&self, i: usize, v: &[f64], out: &mut [f64]) {
        softmax_scaled_into(v, self.instance.cost().row(i), self.inv_eta, out);
        let scale = self.n() as f64 * self.alpha()[i];
        for (o, b) in out.iter_mut().zip(self.beta()) {
            *o = scale * (*o - b);
        }
    }

    /// `∇G(v)`, the mean of the component gradients.
    pub fn full_gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v)?;
        let mut out = vec![0.0; self.n()];
        self.full_gradient_unchecked(v, &mut out);
        Ok(out)
    }

    fn full_gradient_unchecked(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n();
        let mut row = vec![0.0; n];
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..n {
            self.component_gradient_unchecked(i, v, &mut row);
            for (o, g) in out.iter_mut().zip(&row) {
                *o += g;
            }
        }
        let inv_n = 1.0 / n as f64;
        out.iter_mut().for_each(|o| *o *= inv_n);
    }

    fn primal_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n();
        for (i, row) in out.chunks_exact_mut(n).enumerate() {
            softmax_scaled_into(v, self.instance.cost().row(i), self.inv_eta, row);
            let a = self.alpha()[i];
            row.iter_mut().for_each(|x| *x *= a);
        }
    }

    /// The primal plan `X(v)`: row `i` is `α_i` times the softmax of
    /// `(v - C_i)/η`.
    pub fn primal_from_dual(&self, v: &[f64]) -> Result<TransportPlan> {
        self.check_dim(v)?;
        let n = self.n();
        let mut entries = vec![0.0; n * n];
        self.primal_into(v, &mut entries);
        Ok(TransportPlan::from_raw(n, entries))
    }

    /// The eliminated row potentials `u_i(v) = η ln α_i - η lse_j((v_j - c_ij - η)/η)`.
    pub fn u_from_v(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v)?;
        let eta = self.eta();
        Ok((0..self.n())
            .map(|i| {
                let lse = logsumexp_scaled(v, self.instance.cost().row(i), self.inv_eta) - 1.0;
                eta * self.log_alpha[i] - eta * lse
            })
            .collect())
    }

    /// The two-block dual `-⟨α,u⟩ - ⟨β,v⟩ + η Σ_ij exp((u_i + v_j - c_ij - η)/η)`.
    pub fn full_dual_value(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_dim(u)?;
        self.check_dim(v)?;
        let eta = self.eta();
        let alpha_dot: f64 = self.alpha().iter().zip(u).map(|(a, u)| a * u).sum();
        let mut mass = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            for (vj, cij) in v.iter().zip(self.instance.cost().row(i)) {
                mass += ((ui + vj - cij - eta) * self.inv_eta).exp();
            }
        }
        Ok(-alpha_dot - self.beta_dot(v) + eta * mass)
    }

    pub fn smoothness_constants(&self) -> Smoothness {
        let n = self.n() as f64;
        let per_component: Vec<f64> = self.alpha().iter().map(|a| n * a * self.inv_eta).collect();
        let average = per_component.iter().sum::<f64>() / n;
        Smoothness {
            per_component,
            average,
            linf: 5.0 * self.inv_eta,
        }
    }

    /// `p_i = L_i / (n L̄)`, which reduces to `α_i`.
    pub fn sampling_weights(&self) -> Result<Distribution> {
        let s = self.smoothness_constants();
        let h = self.n() as f64;
        let p: Vec<f64> = s
            .per_component
            .iter()
            .map(|l| l / (h * s.average))
            .collect();
        Distribution::new(p)
    }

    /// Entropic primal objective `⟨c, x⟩ + η Σ x ln x` on a flattened plan.
    pub fn primal_objective_flat(&self, x: &[f64]) -> f64 {
        let linear: f64 = x
            .iter()
            .zip(self.instance.cost().entries())
            .map(|(x, c)| x * c)
            .sum();
        let neg_entropy: f64 = x.iter().map(|&x| xlogx(x)).sum();
        linear + self.eta() * neg_entropy
    }

    /// `‖Ax - b‖₁` for a flattened plan: row and column marginal residuals.
    pub fn constraint_violation_flat(&self, x: &[f64]) -> f64 {
        let n = self.n();
        l1_gap(&row_sums(n, x), self.alpha()) + l1_gap(&col_sums(n, x), self.beta())
    }
}

impl FiniteSumOracle for SemiDualOracle {
    fn dual_dim(&self) -> usize {
        self.n()
    }

    fn component_count(&self) -> usize {
        self.n()
    }

    fn component_gradient(&self, i: usize, lambda: &[f64], out: &mut [f64]) {
        self.component_gradient_unchecked(i, lambda, out);
    }

    fn full_gradient(&self, lambda: &[f64], out: &mut [f64]) {
        self.full_gradient_unchecked(lambda, out);
    }

    fn sampling_weights(&self) -> Vec<f64> {
        let s = self.smoothness_constants();
        let h = self.n() as f64;
        s.per_component
            .iter()
            .map(|l| l / (h * s.average))
            .collect()
    }

    fn average_smoothness(&self) -> f64 {
        self.smoothness_constants().average
    }

    fn primal_dim(&self) -> usize {
        self.n() * self.n()
    }

    fn primal_map(&self, lambda: &[f64], out: &mut [f64]) {
        self.primal_into(lambda, out);
    }

    fn dual_value(&self, lambda: &[f64]) -> f64 {
        self.value_unchecked(lambda)
    }

    fn primal_objective(&self, x: &[f64]) -> f64 {
        self.primal_objective_flat(x)
    }

    fn constraint_violation_l1(&self, x: &[f64]) -> f64 {
        self.constraint_violation_flat(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::CostMatrix;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn symmetric() -> SemiDualOracle {
        let c = CostMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let h = Distribution::uniform(2).unwrap();
        SemiDualOracle::new(OtInstance::new(c, h.clone(), h, 1.0).unwrap()).unwrap()
    }

    fn random_oracle(rng: &mut impl Rng, n: usize, eta: f64) -> SemiDualOracle {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let c = CostMatrix::from_fn(n, |_, _| rng.random::<f64>()).unwrap();
        let inst = OtInstance::new(
            c,
            Distribution::from_mass(&a).unwrap(),
            Distribution::from_mass(&b).unwrap(),
            eta,
        )
        .unwrap();
        SemiDualOracle::new(inst).unwrap()
    }

    #[test]
    fn single_atom_value_is_zero() {
        let c = CostMatrix::new(1, vec![0.0]).unwrap();
        let one = Distribution::new(vec![1.0]).unwrap();
        let o = SemiDualOracle::new(OtInstance::new(c, one.clone(), one, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(o.component_value(0, &[0.0]).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(o.u_from_v(&[0.0]).unwrap()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_component_value() {
        // ln(e^-1 + e^-2) + ln 2 + 1 at 30 digits
        let expected = 1.006_408_868_078_168_1;
        let o = symmetric();
        assert_abs_diff_eq!(
            o.component_value(0, &[0.0, 0.0]).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            o.semidual_value(&[0.0, 0.0]).unwrap(),
            expected,
            epsilon = 1e-9
        );
    }

    #[test]
    fn symmetric_component_gradient() {
        let o = symmetric();
        let mut g = [0.0; 2];
        o.component_gradient(0, &[0.0, 0.0], &mut g).unwrap();
        assert_abs_diff_eq!(g[0], 0.231_058_578_630_004_9, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], -0.231_058_578_630_004_9, epsilon = 1e-12);
        let full = o.full_gradient(&[0.0, 0.0]).unwrap();
        assert!(full.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn rejects_zero_marginal_and_bad_index() {
        let c = CostMatrix::new(2, vec![0.0; 4]).unwrap();
        let a = Distribution::new(vec![1.0, 0.0]).unwrap();
        let b = Distribution::uniform(2).unwrap();
        let inst = OtInstance::new(c, a, b, 1.0).unwrap();
        assert!(matches!(
            SemiDualOracle::new(inst),
            Err(OtError::NonPositiveMarginal { index: 1, .. })
        ));
        let o = symmetric();
        assert!(o.component_value(2, &[0.0, 0.0]).is_err());
        assert!(o.component_value(0, &[0.0]).is_err());
    }

    #[test]
    fn translation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o = random_oracle(&mut rng, 6, 0.3);
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = 0.73;
        let w: Vec<f64> = v.iter().map(|x| x + k).collect();
        for i in 0..6 {
            assert_abs_diff_eq!(
                o.component_value(i, &v).unwrap(),
                o.component_value(i, &w).unwrap(),
                epsilon = 1e-12
            );
        }
        assert_abs_diff_eq!(
            o.semidual_value(&v).unwrap(),
            o.semidual_value(&w).unwrap(),
            epsilon = 1e-12
        );
        let (gv, gw) = (o.full_gradient(&v).unwrap(), o.full_gradient(&w).unwrap());
        for (a, b) in gv.iter().zip(&gw) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
        let (xv, xw) = (
            o.primal_from_dual(&v).unwrap(),
            o.primal_from_dual(&w).unwrap(),
        );
        assert!(xv.l1_distance(&xw).unwrap() < 1e-13);
        let (uv, uw) = (o.u_from_v(&v).unwrap(), o.u_from_v(&w).unwrap());
        for (a, b) in uv.iter().zip(&uw) {
            assert_abs_diff_eq!(a - k, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn primal_map_with_zero_cost_is_row_scaled_uniform() {
        let c = CostMatrix::new(3, vec![0.0; 9]).unwrap();
        let a = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let b = Distribution::uniform(3).unwrap();
        let o = SemiDualOracle::new(OtInstance::new(c, a.clone(), b, 0.4).unwrap()).unwrap();
        let x = o.primal_from_dual(&[0.0; 3]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(x.get(i, j), a.weights()[i] / 3.0, epsilon = 1e-16);
            }
        }
    }

    #[test]
    fn dual_consistency_with_full_dual() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = rng.random_range(2..8);
            let eta = rng.random_range(0.05..1.0);
            let o = random_oracle(&mut rng, n, eta);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let u = o.u_from_v(&v).unwrap();
            assert_abs_diff_eq!(
                o.full_dual_value(&u, &v).unwrap(),
                o.semidual_value(&v).unwrap(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn smoothness_constants_and_weights() {
        let c = CostMatrix::new(4, vec![1.0; 16]).unwrap();
        let u = Distribution::uniform(4).unwrap();
        let o = SemiDualOracle::new(OtInstance::new(c, u.clone(), u, 0.5).unwrap()).unwrap();
        let s = o.smoothness_constants();
        assert!(s.per_component.iter().all(|&l| (l - 2.0).abs() < 1e-15));
        assert_abs_diff_eq!(s.average, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.linf, 10.0, epsilon = 1e-15);
        for &p in o.sampling_weights().unwrap().weights() {
            assert_abs_diff_eq!(p, 0.25, epsilon = 1e-15);
        }

        let c = CostMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let a = Distribution::new(vec![0.2, 0.8]).unwrap();
        let o = SemiDualOracle::new(
            OtInstance::new(c, a, Distribution::uniform(2).unwrap(), 0.3).unwrap(),
        )
        .unwrap();
        let p = o.sampling_weights().unwrap();
        assert_abs_diff_eq!(p.weights()[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(p.weights()[1], 0.8, epsilon = 1e-15);
        let s = o.smoothness_constants();
        assert_abs_diff_eq!(
            s.per_component.iter().sum::<f64>() / 2.0,
            s.average,
            epsilon = 1e-14
        );
    }

    #[test]
    fn survives_tiny_eta() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let o = random_oracle(&mut rng, 16, 1e-4);
        let v: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(o.semidual_value(&v).unwrap().is_finite());
        assert!(o.full_gradient(&v).unwrap().iter().all(|g| g.is_finite()));
        let x = o.primal_from_dual(&v).unwrap();
        assert!(x.entries().iter().all(|x| x.is_finite() && *x >= 0.0));
    }
}
