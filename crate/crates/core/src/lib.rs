//! Approximate optimal transport between discrete distributions.
//!
//! The main solver is a primal-dual accelerated stochastic gradient method
//! with variance reduction ([`solver`]) applied to the finite-sum semi-dual
//! of entropic optimal transport ([`semidual`]). [`approx`] wraps it into an
//! ε-approximation pipeline together with marginal smoothing and
//! [`rounding`]; [`baselines`] provides Sinkhorn and Greenkhorn behind the
//! same pipeline, and [`exact`] solves tiny instances exactly for testing.

pub mod approx;
pub mod baselines;
pub mod error;
pub mod exact;
pub mod kernels;
pub mod ot;
pub mod rounding;
pub mod semidual;
pub mod solver;

pub use approx::{
    approx_ot, derive_parameters, smooth_marginals, theoretical_iteration_cap, ApproxConfig,
    ApproxResult, EntropicParameters, Method, SolverProfile, StopReason, StopTarget,
    DEFAULT_CAP_MULTIPLIER,
};
pub use baselines::{greenkhorn, sinkhorn, ScalingOutcome};
pub use error::{OtError, Result};
pub use exact::exact_ot_oracle;
pub use ot::{
    entropy, marginal_distance, regularized_objective, transport_cost, CostMatrix, Distribution,
    OtInstance, TransportPlan,
};
pub use rounding::{round_to_polytope, RoundingReport};
pub use semidual::{DualPoint, SemiDualOracle, Smoothness};
pub use solver::{FiniteSumOracle, RunRecord, RunStatus, SolverOptions, SolverState};
