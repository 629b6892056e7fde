//! Primal-dual accelerated stochastic gradient descent with variance
//! reduction (PDASGD).
//!
//! The solver minimizes a finite-sum dual `φ(λ) = (1/h) Σ_i φ_i(λ)` with
//! Katyusha-style momentum and an SVRG gradient estimator, and recovers a
//! primal solution by averaging `x(λ̂_s)` over outer iterations with weights
//! `1/τ₁,ₛ`. It knows nothing about transport: any [`FiniteSumOracle`] works.
//!
//! Randomness comes from [`ChaCha8Rng`] seeded with `seed_from_u64`. Each
//! outer iteration first draws the inner index whose momentum point is kept
//! for primal averaging (`random_range(0..m)`), then one component per inner
//! step by inverting the cumulative sampling weights at a uniform `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{OtError, Result};

/// Finite-sum dual problem with a primal map `x(λ)` such that
/// `∇φ(λ) = A x(λ) - b`.
pub trait FiniteSumOracle {
    /// Dimension of `λ`.
    fn dual_dim(&self) -> usize;

    /// Number of summands `h`.
    fn component_count(&self) -> usize;

    /// Writes `∇φ_i(λ)` into `out`.
    fn component_gradient(&self, i: usize, lambda: &[f64], out: &mut [f64]);

    /// Writes `∇φ(λ)` into `out`.
    fn full_gradient(&self, lambda: &[f64], out: &mut [f64]);

    /// `p_i = L_i / (h L̄)`.
    fn sampling_weights(&self) -> Vec<f64>;

    /// `L̄ = (1/h) Σ L_i`.
    fn average_smoothness(&self) -> f64;

    fn primal_dim(&self) -> usize;

    /// Writes `x(λ)` into `out`.
    fn primal_map(&self, lambda: &[f64], out: &mut [f64]);

    /// `φ(λ)`.
    fn dual_value(&self, lambda: &[f64]) -> f64;

    /// `f(x)`.
    fn primal_objective(&self, x: &[f64]) -> f64;

    /// `‖Ax - b‖₁`.
    fn constraint_violation_l1(&self, x: &[f64]) -> f64;
}

/// The momentum weight on the anchor point.
pub const TAU2: f64 = 0.5;

/// `τ₁,ₛ = 2/(s+4)`.
pub fn tau1(s: usize) -> f64 {
    2.0 / (s as f64 + 4.0)
}

/// `γₛ = 1/(9 τ₁,ₛ L̄) = (s+4)/(18 L̄)`.
pub fn gamma(s: usize, avg_smoothness: f64) -> Result<f64> {
    if !(avg_smoothness > 0.0 && avg_smoothness.is_finite()) {
        return Err(OtError::InvalidParameter(format!(
            "average smoothness must be positive, got {avg_smoothness}"
        )));
    }
    Ok(1.0 / (9.0 * tau1(s) * avg_smoothness))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Inner iterations per outer iteration (`m`).
    pub inner_iterations: usize,
    /// Maximum number of outer iterations (`S`).
    pub outer_iterations: usize,
    pub seed: u64,
    /// Multiplier on the `z` step; 1 reproduces the plain method.
    pub z_step_multiplier: f64,
    /// Outer iterations between checkpoints. The final iteration is always
    /// checkpointed.
    pub checkpoint_stride: usize,
    /// Starting dual point; zeros when `None`.
    pub initial_dual: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            inner_iterations: 1,
            outer_iterations: 1,
            seed: 0,
            z_step_multiplier: 1.0,
            checkpoint_stride: 1,
            initial_dual: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.inner_iterations == 0 {
            return Err(OtError::InvalidParameter(
                "inner_iterations must be >= 1".into(),
            ));
        }
        if self.outer_iterations == 0 {
            return Err(OtError::InvalidParameter(
                "outer_iterations must be >= 1".into(),
            ));
        }
        if self.checkpoint_stride == 0 {
            return Err(OtError::InvalidParameter(
                "checkpoint_stride must be >= 1".into(),
            ));
        }
        if !(self.z_step_multiplier > 0.0 && self.z_step_multiplier.is_finite()) {
            return Err(OtError::InvalidParameter(format!(
                "z_step_multiplier must be positive, got {}",
                self.z_step_multiplier
            )));
        }
        Ok(())
    }
}

/// Operation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    /// Component gradient evaluations; a full gradient counts `h`, an inner
    /// step's estimator pair counts one.
    pub component_gradients: u64,
    pub full_gradients: u64,
    pub inner_steps: u64,
    pub primal_maps: u64,
}

/// Telemetry captured at a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Number of completed outer iterations.
    pub outer_index: usize,
    pub cumulative_component_gradients: u64,
    pub cumulative_full_gradients: u64,
    pub inner_steps: u64,
    /// `f(x^s)`.
    pub primal_objective: f64,
    /// `‖A x^s - b‖₁`.
    pub constraint_violation_l1: f64,
    /// `f(x^s) + φ(λ̃^s)`.
    pub duality_gap: f64,
}

/// Decides after each checkpoint whether to stop.
pub trait StopCriterion {
    fn should_stop(&mut self, record: &RunRecord, primal: &[f64]) -> bool;
}

impl<F: FnMut(&RunRecord, &[f64]) -> bool> StopCriterion for F {
    fn should_stop(&mut self, record: &RunRecord, primal: &[f64]) -> bool {
        self(record, primal)
    }
}

/// Runs all outer iterations.
#[derive(Debug, Clone, Copy, Default)]
pub struct Never;

impl StopCriterion for Never {
    fn should_stop(&mut self, _: &RunRecord, _: &[f64]) -> bool {
        false
    }
}

/// Stops once the duality gap surrogate and the constraint violation are
/// both below their thresholds.
#[derive(Debug, Clone, Copy)]
pub struct GapAndViolation {
    pub gap: f64,
    pub violation: f64,
}

impl StopCriterion for GapAndViolation {
    fn should_stop(&mut self, record: &RunRecord, _: &[f64]) -> bool {
        record.duality_gap <= self.gap && record.constraint_violation_l1 <= self.violation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    StopRuleSatisfied,
    OuterLimitReached,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Averaged primal iterate `x^s = D / Ccoef`.
    pub primal: Vec<f64>,
    /// Final anchor point `λ̃`.
    pub dual: Vec<f64>,
    pub records: Vec<RunRecord>,
    pub status: RunStatus,
    pub counters: OpCounters,
}

/// Categorical sampler over fixed weights: cumulative sums plus binary search.
#[derive(Debug, Clone)]
pub struct CategoricalSampler {
    cumulative: Vec<f64>,
}

impl CategoricalSampler {
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(OtError::Empty);
        }
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(weights.len());
        for (index, &w) in weights.iter().enumerate() {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(OtError::NegativeEntry { index, value: w });
            }
            acc += w;
            cumulative.push(acc);
        }
        if acc <= 0.0 {
            return Err(OtError::NotNormalized { sum: acc });
        }
        Ok(Self { cumulative })
    }

    /// Maps `u ∈ [0, 1)` to the first index whose cumulative weight exceeds
    /// `u · total`.
    pub fn index_for(&self, u: f64) -> usize {
        let total = *self.cumulative.last().unwrap();
        let target = u * total;
        let idx = self.cumulative.partition_point(|&c| c <= target);
        idx.min(self.cumulative.len() - 1)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        self.index_for(rng.random::<f64>())
    }
}

/// The variance-reduced estimator
/// `∇̃ = u + (∇φ_i(λ) - ∇φ_i(λ̃)) / (h p_i)`.
///
/// `grad_at` and `grad_anchor` are scratch buffers; the result goes to `out`.
#[allow(clippy::too_many_arguments)]
pub fn variance_reduced_gradient<O: FiniteSumOracle + ?Sized>(
    oracle: &O,
    i: usize,
    p_i: f64,
    lambda: &[f64],
    anchor: &[f64],
    anchor_full_grad: &[f64],
    grad_at: &mut [f64],
    grad_anchor: &mut [f64],
    out: &mut [f64],
) {
    oracle.component_gradient(i, lambda, grad_at);
    oracle.component_gradient(i, anchor, grad_anchor);
    let scale = 1.0 / (oracle.component_count() as f64 * p_i);
    for (((o, u), g), ga) in out
        .iter_mut()
        .zip(anchor_full_grad)
        .zip(grad_at.iter())
        .zip(grad_anchor.iter())
    {
        *o = u + (g - ga) * scale;
    }
}

/// Iterates and accumulators of a run.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda_tilde: Vec<f64>,
    /// The most recent momentum point `λ_{k+1}`.
    pub lambda: Vec<f64>,
    /// `u^s = ∇φ(λ̃^s)`.
    pub full_grad_snapshot: Vec<f64>,
    /// Weighted primal accumulator `D`.
    pub primal_sum: Vec<f64>,
    /// `Ccoef = Σ 1/τ₁,ₜ`.
    pub weight_sum: f64,
    /// Completed outer iterations.
    pub s: usize,
    pub counters: OpCounters,
    rng: ChaCha8Rng,
    sampler: CategoricalSampler,
    weights: Vec<f64>,
    avg_smoothness: f64,
    estimator: Vec<f64>,
    grad_at: Vec<f64>,
    grad_anchor: Vec<f64>,
    y_sum: Vec<f64>,
    selected: Vec<f64>,
    primal_buf: Vec<f64>,
}

impl SolverState {
    pub fn new<O: FiniteSumOracle + ?Sized>(oracle: &O, options: &SolverOptions) -> Result<Self> {
        options.validate()?;
        let d = oracle.dual_dim();
        let start = match &options.initial_dual {
            Some(v) if v.len() != d => {
                return Err(OtError::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                })
            }
            Some(v) => v.clone(),
            None => vec![0.0; d],
        };
        let weights = oracle.sampling_weights();
        if weights.len() != oracle.component_count() {
            return Err(OtError::DimensionMismatch {
                expected: oracle.component_count(),
                found: weights.len(),
            });
        }
        let sampler = CategoricalSampler::new(&weights)?;
        let avg_smoothness = oracle.average_smoothness();
        gamma(0, avg_smoothness)?;
        Ok(Self {
            y: start.clone(),
            z: start.clone(),
            lambda_tilde: start.clone(),
            lambda: start,
            full_grad_snapshot: vec![0.0; d],
            primal_sum: vec![0.0; oracle.primal_dim()],
            weight_sum: 0.0,
            s: 0,
            counters: OpCounters::default(),
            rng: ChaCha8Rng::seed_from_u64(options.seed),
            sampler,
            weights,
            avg_smoothness,
            estimator: vec![0.0; d],
            grad_at: vec![0.0; d],
            grad_anchor: vec![0.0; d],
            y_sum: vec![0.0; d],
            selected: vec![0.0; d],
            primal_buf: vec![0.0; oracle.primal_dim()],
        })
    }

    /// The estimator formed in the most recent inner step.
    pub fn last_estimator(&self) -> &[f64] {
        &self.estimator
    }

    /// Recomputes the full-gradient snapshot `u^s = ∇φ(λ̃^s)`.
    pub fn refresh_snapshot<O: FiniteSumOracle + ?Sized>(&mut self, oracle: &O) {
        oracle.full_gradient(&self.lambda_tilde, &mut self.full_grad_snapshot);
        self.counters.component_gradients += oracle.component_count() as u64;
        self.counters.full_gradients += 1;
    }

    /// One inner iteration at the current outer index. Returns the sampled
    /// component.
    pub fn inner_step<O: FiniteSumOracle + ?Sized>(
        &mut self,
        oracle: &O,
        options: &SolverOptions,
    ) -> Result<usize> {
        let t1 = tau1(self.s);
        let g = gamma(self.s, self.avg_smoothness)?;
        let mix = 1.0 - t1 - TAU2;

        for (((l, z), lt), y) in self
            .lambda
            .iter_mut()
            .zip(&self.z)
            .zip(&self.lambda_tilde)
            .zip(&self.y)
        {
            *l = t1 * z + TAU2 * lt + mix * y;
        }

        let i = self.sampler.sample(&mut self.rng);
        variance_reduced_gradient(
            oracle,
            i,
            self.weights[i],
            &self.lambda,
            &self.lambda_tilde,
            &self.full_grad_snapshot,
            &mut self.grad_at,
            &mut self.grad_anchor,
            &mut self.estimator,
        );
        self.counters.component_gradients += 1;
        self.counters.inner_steps += 1;

        let z_step = options.z_step_multiplier * g / 2.0;
        let y_step = 1.0 / (9.0 * self.avg_smoothness);
        let mut finite = true;
        for ((((z, y), l), e), ys) in self
            .z
            .iter_mut()
            .zip(self.y.iter_mut())
            .zip(&self.lambda)
            .zip(&self.estimator)
            .zip(self.y_sum.iter_mut())
        {
            *z -= z_step * e;
            *y = l - e * y_step;
            *ys += *y;
            finite &= z.is_finite() && y.is_finite();
        }
        if !finite {
            return Err(OtError::Divergence {
                outer: self.s,
                inner: (self.counters.inner_steps - 1) as usize % options.inner_iterations,
                what: "non-finite dual iterate",
            });
        }
        Ok(i)
    }

    /// One full outer iteration: snapshot, `m` inner steps, anchor update and
    /// primal accumulation.
    pub fn outer_iteration<O: FiniteSumOracle + ?Sized>(
        &mut self,
        oracle: &O,
        options: &SolverOptions,
    ) -> Result<()> {
        let m = options.inner_iterations;
        let t1 = tau1(self.s);
        self.refresh_snapshot(oracle);

        // Index of the inner momentum point fed to the primal map; drawn up
        // front so only that point needs to be kept.
        let chosen = self.rng.random_range(0..m);
        self.y_sum.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..m {
            self.inner_step(oracle, options)?;
            if j == chosen {
                self.selected.copy_from_slice(&self.lambda);
            }
        }

        let inv_m = 1.0 / m as f64;
        for (lt, ys) in self.lambda_tilde.iter_mut().zip(&self.y_sum) {
            *lt = ys * inv_m;
        }

        oracle.primal_map(&self.selected, &mut self.primal_buf);
        self.counters.primal_maps += 1;
        let w = 1.0 / t1;
        for (d, x) in self.primal_sum.iter_mut().zip(&self.primal_buf) {
            *d += x * w;
        }
        self.weight_sum += w;
        self.s += 1;
        if !self.primal_sum.iter().all(|d| d.is_finite()) {
            return Err(OtError::Divergence {
                outer: self.s - 1,
                inner: m,
                what: "non-finite primal accumulator",
            });
        }
        Ok(())
    }

    /// `x^s = D / Ccoef`; zeros before the first outer iteration.
    pub fn averaged_primal(&self) -> Vec<f64> {
        if self.weight_sum == 0.0 {
            return vec![0.0; self.primal_sum.len()];
        }
        let inv = 1.0 / self.weight_sum;
        self.primal_sum.iter().map(|d| d * inv).collect()
    }

    pub fn record<O: FiniteSumOracle + ?Sized>(&self, oracle: &O, primal: &[f64]) -> RunRecord {
        let primal_objective = oracle.primal_objective(primal);
        RunRecord {
            outer_index: self.s,
            cumulative_component_gradients: self.counters.component_gradients,
            cumulative_full_gradients: self.counters.full_gradients,
            inner_steps: self.counters.inner_steps,
            primal_objective,
            constraint_violation_l1: oracle.constraint_violation_l1(primal),
            duality_gap: primal_objective + oracle.dual_value(&self.lambda_tilde),
        }
    }
}

/// Runs PDASGD until `options.outer_iterations` or until `stop` fires at a
/// checkpoint. Deterministic for a fixed seed.
pub fn run<O: FiniteSumOracle + ?Sized, S: StopCriterion>(
    oracle: &O,
    options: &SolverOptions,
    mut stop: S,
) -> Result<RunOutcome> {
    let mut state = SolverState::new(oracle, options)?;
    let mut records = Vec::new();
    let mut status = RunStatus::OuterLimitReached;
    let mut primal = Vec::new();

    for s in 0..options.outer_iterations {
        state.outer_iteration(oracle, options)?;
        let last = s + 1 == options.outer_iterations;
        if (s + 1) % options.checkpoint_stride == 0 || last {
            primal = state.averaged_primal();
            let record = state.record(oracle, &primal);
            let done = stop.should_stop(&record, &primal);
            records.push(record);
            if done {
                status = RunStatus::StopRuleSatisfied;
                break;
            }
        }
    }

    Ok(RunOutcome {
        primal,
        dual: state.lambda_tilde,
        records,
        status,
        counters: state.counters,
    })
}
