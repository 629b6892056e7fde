//! Distributions, cost matrices, transport plans and the elementary
//! functionals evaluated on them.
//!
//! All matrices are square, dense and stored row-major. Entry `(i, j)` of an
//! `n x n` matrix lives at index `i * n + j`.

use crate::error::{OtError, Result};

/// Tolerance on the total mass of a [`Distribution`].
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Tolerance used when a plan is claimed to lie in the transport polytope.
pub const FEASIBILITY_TOL: f64 = 1e-10;

fn check_entries(values: &[f64]) -> Result<()> {
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(OtError::NonFinite { index });
        }
        if value < 0.0 {
            return Err(OtError::NegativeEntry { index, value });
        }
    }
    Ok(())
}

fn square_side(len: usize) -> Result<usize> {
    if len == 0 {
        return Err(OtError::Empty);
    }
    let n = (len as f64).sqrt().round() as usize;
    if n * n != len {
        return Err(OtError::DimensionMismatch {
            expected: n * n,
            found: len,
        });
    }
    Ok(n)
}

/// A probability vector on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    weights: Vec<f64>,
}

impl Distribution {
    /// Wraps `weights`, which must be nonnegative and sum to one.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(OtError::Empty);
        }
        check_entries(&weights)?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(OtError::NotNormalized { sum });
        }
        Ok(Self { weights })
    }

    /// Normalizes arbitrary nonnegative mass into a distribution.
    pub fn from_mass(mass: &[f64]) -> Result<Self> {
        if mass.is_empty() {
            return Err(OtError::Empty);
        }
        check_entries(mass)?;
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return Err(OtError::NotNormalized { sum: total });
        }
        Self::new(mass.iter().map(|m| m / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(OtError::Empty);
        }
        Ok(Self {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn min(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// True when every entry is strictly positive.
    pub fn is_strictly_positive(&self) -> bool {
        self.min() > 0.0
    }
}

/// Nonnegative square cost matrix with its cached maximum entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    entries: Vec<f64>,
    max_abs: f64,
}

impl CostMatrix {
    /// Builds an `n x n` cost matrix from row-major entries.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(OtError::Empty);
        }
        if entries.len() != n * n {
            return Err(OtError::DimensionMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        check_entries(&entries)?;
        let max_abs = entries.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            n,
            entries,
            max_abs,
        })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(f(i, j));
            }
        }
        Self::new(n, entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// `‖C‖∞`, the largest entry.
    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    /// Returns `C + shift` entrywise; `shift` may be negative as long as the
    /// result stays nonnegative.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        Self::new(self.n, self.entries.iter().map(|c| c + shift).collect())
    }
}

/// Nonnegative square matrix of transported mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    n: usize,
    entries: Vec<f64>,
}

impl TransportPlan {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(OtError::Empty);
        }
        if entries.len() != n * n {
            return Err(OtError::DimensionMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        check_entries(&entries)?;
        Ok(Self { n, entries })
    }

    /// Builds a plan from a flattened row-major vector, inferring `n`.
    pub fn from_flat(entries: Vec<f64>) -> Result<Self> {
        let n = square_side(entries.len())?;
        Self::new(n, entries)
    }

    /// The independent coupling `αβᵀ`.
    pub fn product(alpha: &Distribution, beta: &Distribution) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(OtError::DimensionMismatch {
                expected: alpha.len(),
                found: beta.len(),
            });
        }
        let n = alpha.len();
        let mut entries = Vec::with_capacity(n * n);
        for &a in alpha.weights() {
            entries.extend(beta.weights().iter().map(|&b| a * b));
        }
        Ok(Self { n, entries })
    }

    pub(crate) fn from_raw(n: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), n * n);
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        row_sums(self.n, &self.entries)
    }

    pub fn col_sums(&self) -> Vec<f64> {
        col_sums(self.n, &self.entries)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().sum()
    }

    /// Entrywise L1 distance to another plan of the same size.
    pub fn l1_distance(&self, other: &TransportPlan) -> Result<f64> {
        if self.n != other.n {
            return Err(OtError::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .sum())
    }
}

pub(crate) fn row_sums(n: usize, entries: &[f64]) -> Vec<f64> {
    entries
        .chunks_exact(n)
        .map(|row| row.iter().sum())
        .collect()
}

pub(crate) fn col_sums(n: usize, entries: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; n];
    for row in entries.chunks_exact(n) {
        for (s, x) in sums.iter_mut().zip(row) {
            *s += x;
        }
    }
    sums
}

pub(crate) fn l1_gap(values: &[f64], target: &[f64]) -> f64 {
    values.iter().zip(target).map(|(a, b)| (a - b).abs()).sum()
}

/// An entropic optimal transport problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OtInstance {
    cost: CostMatrix,
    row_marginal: Distribution,
    col_marginal: Distribution,
    eta: f64,
}

impl OtInstance {
    pub fn new(
        cost: CostMatrix,
        row_marginal: Distribution,
        col_marginal: Distribution,
        eta: f64,
    ) -> Result<Self> {
        let n = cost.n();
        for len in [row_marginal.len(), col_marginal.len()] {
            if len != n {
                return Err(OtError::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(OtError::NonPositiveEta(eta));
        }
        Ok(Self {
            cost,
            row_marginal,
            col_marginal,
            eta,
        })
    }

    pub fn n(&self) -> usize {
        self.cost.n()
    }

    pub fn cost(&self) -> &CostMatrix {
        &self.cost
    }

    pub fn alpha(&self) -> &Distribution {
        &self.row_marginal
    }

    pub fn beta(&self) -> &Distribution {
        &self.col_marginal
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

fn ensure_same(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(OtError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `⟨C, X⟩`.
pub fn transport_cost(plan: &TransportPlan, cost: &CostMatrix) -> Result<f64> {
    ensure_same(cost.n(), plan.n())?;
    Ok(plan
        .entries()
        .iter()
        .zip(cost.entries())
        .map(|(x, c)| x * c)
        .sum())
}

/// `x ln x` with `0 ln 0 = 0`.
#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

fn entropy_of(entries: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for (index, &x) in entries.iter().enumerate() {
        if x < 0.0 {
            return Err(OtError::NegativeEntry { index, value: x });
        }
        acc -= xlogx(x);
    }
    Ok(acc)
}

/// Shannon entropy `H(X) = -Σ X_ij ln X_ij`.
pub fn entropy(plan: &TransportPlan) -> Result<f64> {
    entropy_of(plan.entries())
}

/// `⟨C, X⟩ - η H(X)`, the entropic primal objective.
pub fn regularized_objective(plan: &TransportPlan, inst: &OtInstance) -> Result<f64> {
    let linear = transport_cost(plan, inst.cost())?;
    Ok(linear - inst.eta() * entropy(plan)?)
}

/// `‖r(X) - α‖₁ + ‖c(X) - β‖₁`: zero exactly on the transport polytope.
pub fn marginal_distance(
    plan: &TransportPlan,
    alpha: &Distribution,
    beta: &Distribution,
) -> Result<f64> {
    ensure_same(plan.n(), alpha.len())?;
    ensure_same(plan.n(), beta.len())?;
    Ok(l1_gap(&plan.row_sums(), alpha.weights()) + l1_gap(&plan.col_sums(), beta.weights()))
}
