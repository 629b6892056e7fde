//! Max-shifted log-sum-exp and softmax.
//!
//! Every exponential in the crate goes through these; at `η ~ 1e-4` the raw
//! exponents reach magnitudes in the thousands.

/// `ln Σ exp(x_j)`. Returns `-inf` for an empty slice or all `-inf` inputs.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `ln Σ_j exp((v_j - c_j) / η)` without materializing the logits.
pub fn logsumexp_scaled(v: &[f64], c: &[f64], inv_eta: f64) -> f64 {
    let max = v
        .iter()
        .zip(c)
        .map(|(v, c)| (v - c) * inv_eta)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v
        .iter()
        .zip(c)
        .map(|(v, c)| ((v - c) * inv_eta - max).exp())
        .sum();
    max + sum.ln()
}

/// Writes `softmax((v - c) / η)` into `out` and returns the log-normalizer.
pub fn softmax_scaled_into(v: &[f64], c: &[f64], inv_eta: f64, out: &mut [f64]) -> f64 {
    debug_assert_eq!(v.len(), out.len());
    let mut max = f64::NEG_INFINITY;
    for ((o, v), c) in out.iter_mut().zip(v).zip(c) {
        *o = (v - c) * inv_eta;
        max = max.max(*o);
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    let inv = 1.0 / sum;
    out.iter_mut().for_each(|o| *o *= inv);
    max + sum.ln()
}

/// In-place softmax of arbitrary logits. Returns the log-normalizer.
pub fn softmax_in_place(xs: &mut [f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = 1.0 / sum;
    xs.iter_mut().for_each(|x| *x *= inv);
    max + sum.ln()
}
