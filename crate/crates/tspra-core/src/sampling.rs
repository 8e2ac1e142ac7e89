//! Log-space categorical sampling shared by the trainer and the predictor.
//!
//! Gibbs conditionals here are products of many small ratios, so candidate
//! weights are carried as (unnormalized) logs and turned into probabilities
//! with a max-shift right before sampling.

use rand::Rng;

/// Normalizes log weights into probabilities with a max shift.
///
/// `-inf` entries map to probability 0. Panics if every entry is `-inf`
/// or any entry is NaN/`+inf`; conditionals never produce either.
pub fn normalize_log_weights(log_weights: &[f64]) -> Vec<f64> {
    assert!(!log_weights.is_empty(), "no candidates to normalize");
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        max.is_finite(),
        "degenerate candidate weights: max log weight {max}"
    );
    let mut probs: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Draws an index proportional to `exp(log_weights[i])`.
pub fn sample_log_weights<R: Rng>(log_weights: &[f64], rng: &mut R) -> usize {
    let probs = normalize_log_weights(log_weights);
    sample_probs(&probs, rng)
}

/// Draws an index from an already normalized probability vector.
pub fn sample_probs<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave acc slightly below 1; fall back to the last
    // candidate with nonzero mass.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .expect("at least one candidate has nonzero probability")
}

/// `ln(sum(exp(x)))` with a max shift.
pub fn log_sum_exp(log_terms: &[f64]) -> f64 {
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = log_terms.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}
