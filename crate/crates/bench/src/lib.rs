//! Fixtures for the criterion benchmarks in `benches/`.

use pdasgd_core::{CostMatrix, Distribution, OtInstance, SemiDualOracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random problem with a uniform `[0, 1)` cost and marginals bounded away
/// from zero. Deterministic in `seed`.
pub fn random_problem(n: usize, seed: u64) -> (CostMatrix, Distribution, Distribution) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = |rng: &mut ChaCha8Rng| {
        let mass: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        Distribution::from_mass(&mass).expect("positive mass")
    };
    let a = dist(&mut rng);
    let b = dist(&mut rng);
    let c = CostMatrix::from_fn(n, |_, _| rng.random::<f64>()).expect("finite cost");
    (c, a, b)
}

pub fn random_oracle(n: usize, eta: f64, seed: u64) -> SemiDualOracle {
    let (c, a, b) = random_problem(n, seed);
    SemiDualOracle::new(OtInstance::new(c, a, b, eta).expect("valid instance"))
        .expect("positive marginals")
}

/// A dual point of moderate scale.
pub fn random_dual(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
}
