//! Exact optimal transport for tiny instances by vertex enumeration.
//!
//! Every vertex of the transport polytope `U(α, β)` is a basic feasible
//! solution whose support is contained in a spanning tree of the complete
//! bipartite row/column graph, i.e. a set of `2n - 1` cells without cycles.
//! We walk all `(2n - 1)`-subsets of the `n²` cells in lexicographic order,
//! solve the marginal equations on each tree by peeling leaves, keep the
//! nonnegative solutions and return the cheapest one. Ties keep the first
//! support in lexicographic order, so the output is deterministic.

use crate::error::{OtError, Result};
use crate::ot::{CostMatrix, Distribution, TransportPlan};

/// Largest `n` the enumeration accepts.
pub const MAX_EXACT_N: usize = 5;

const NEG_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-13;

/// Solves `min ⟨C, X⟩` over `U(α, β)` exactly. Returns the plan and its cost.
pub fn exact_ot_oracle(
    cost: &CostMatrix,
    alpha: &Distribution,
    beta: &Distribution,
) -> Result<(TransportPlan, f64)> {
    let n = cost.n();
    if n > MAX_EXACT_N {
        return Err(OtError::TooLarge {
            n,
            max: MAX_EXACT_N,
        });
    }
    for len in [alpha.len(), beta.len()] {
        if len != n {
            return Err(OtError::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    let row_mass: f64 = alpha.weights().iter().sum();
    let col_mass: f64 = beta.weights().iter().sum();
    if (row_mass - col_mass).abs() > 1e-10 {
        return Err(OtError::InfeasibleMarginals {
            row: row_mass,
            col: col_mass,
        });
    }

    let cells = n * n;
    let k = 2 * n - 1;
    let mut solver = TreeSolver::new(n, alpha.weights(), beta.weights());
    let mut best: Option<(f64, Vec<f64>)> = None;

    let mut support: Vec<usize> = (0..k).collect();
    loop {
        if let Some(values) = solver.solve(&support) {
            let value: f64 = support
                .iter()
                .zip(values)
                .map(|(&cell, &x)| x * cost.entries()[cell])
                .sum();
            let better = match &best {
                None => true,
                Some((b, _)) => value < b - TIE_TOL,
            };
            if better {
                let mut plan = vec![0.0; cells];
                for (&cell, &x) in support.iter().zip(values) {
                    plan[cell] = x;
                }
                best = Some((value, plan));
            }
        }
        if !next_combination(&mut support, cells) {
            break;
        }
    }

    // A nonempty polytope always has a vertex, so `best` is set.
    let (_, entries) = best.expect("transport polytope has at least one vertex");
    let plan = TransportPlan::new(n, entries)?;
    let value = crate::ot::transport_cost(&plan, cost)?;
    Ok((plan, value))
}

/// Advances `comb` to the next `k`-subset of `0..universe` in lexicographic
/// order. Returns false after the last subset.
fn next_combination(comb: &mut [usize], universe: usize) -> bool {
    let k = comb.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if comb[i] < universe - k + i {
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Scratch space for solving the marginal equations on one support.
struct TreeSolver<'a> {
    n: usize,
    alpha: &'a [f64],
    beta: &'a [f64],
    // Nodes 0..n are rows, n..2n are columns.
    residual: Vec<f64>,
    degree: Vec<usize>,
    assigned: Vec<bool>,
    values: Vec<f64>,
    stack: Vec<usize>,
}

impl<'a> TreeSolver<'a> {
    fn new(n: usize, alpha: &'a [f64], beta: &'a [f64]) -> Self {
        Self {
            n,
            alpha,
            beta,
            residual: vec![0.0; 2 * n],
            degree: vec![0; 2 * n],
            assigned: vec![false; 2 * n - 1],
            values: vec![0.0; 2 * n - 1],
            stack: Vec::with_capacity(2 * n),
        }
    }

    /// Values on `support` satisfying the marginals, or `None` if the support
    /// contains a cycle or the solution has a negative entry.
    fn solve(&mut self, support: &[usize]) -> Option<&[f64]> {
        let n = self.n;
        self.degree.iter_mut().for_each(|d| *d = 0);
        for &cell in support {
            self.degree[cell / n] += 1;
            self.degree[n + cell % n] += 1;
        }
        // A spanning tree touches every row and every column.
        if self.degree.contains(&0) {
            return None;
        }
        self.residual[..n].copy_from_slice(self.alpha);
        self.residual[n..].copy_from_slice(self.beta);
        self.assigned.iter_mut().for_each(|a| *a = false);

        self.stack.clear();
        self.stack
            .extend((0..2 * n).filter(|&node| self.degree[node] == 1));
        let mut placed = 0;
        while let Some(node) = self.stack.pop() {
            if self.degree[node] != 1 {
                continue;
            }
            let slot = support.iter().enumerate().position(|(s, &cell)| {
                !self.assigned[s] && (cell / n == node || n + cell % n == node)
            })?;
            let cell = support[slot];
            let value = self.residual[node];
            if value < -NEG_TOL {
                return None;
            }
            let value = value.max(0.0);
            self.values[slot] = value;
            self.assigned[slot] = true;
            placed += 1;

            let (row, col) = (cell / n, n + cell % n);
            let other = if node == row { col } else { row };
            self.residual[node] = 0.0;
            self.residual[other] -= value;
            self.degree[row] -= 1;
            self.degree[col] -= 1;
            if self.degree[other] == 1 {
                self.stack.push(other);
            }
        }
        if placed < support.len() {
            // leftover edges form a cycle: singular basis
            return None;
        }
        if self.residual.iter().any(|r| r.abs() > 1e-10) {
            return None;
        }
        Some(&self.values)
    }
}
