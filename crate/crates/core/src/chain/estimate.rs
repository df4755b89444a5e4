//! Chain averages of observables with batch-means error bars.

use num_complex::Complex64;
use rayon::prelude::*;

use super::{conditional_expectation, ChainError, ChainState, Observable};

pub const DEFAULT_BATCHES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: Complex64,
    /// Standard error of `value` from non-overlapping batch means.
    pub stderr: f64,
}

pub fn estimate(chain: &ChainState, obs: &Observable) -> Result<Estimate, ChainError> {
    estimate_with_batches(chain, obs, DEFAULT_BATCHES)
}

pub fn estimate_with_batches(
    chain: &ChainState,
    obs: &Observable,
    batches: usize,
) -> Result<Estimate, ChainError> {
    let values = point_values(chain, obs)?;
    let value = values.iter().sum::<Complex64>() / values.len() as f64;
    let (_, stderr) = batch_means(&values, batches);
    Ok(Estimate { value, stderr })
}

/// Per-point contributions `⟨F⟩_k · P(α(k))`.
pub(crate) fn point_values(
    chain: &ChainState,
    obs: &Observable,
) -> Result<Vec<Complex64>, ChainError> {
    if obs.operator.nrows() != chain.dim() || obs.operator.ncols() != chain.dim() {
        return Err(ChainError::Invalid(format!(
            "observable operator is {}x{} but the atomic dimension is {}",
            obs.operator.nrows(),
            obs.operator.ncols(),
            chain.dim()
        )));
    }
    if let Some(m) = obs.poly.iter().map(|m| m.max_mode()).max() {
        if m > chain.n_modes() {
            return Err(ChainError::Invalid(format!(
                "observable polynomial refers to {m} modes but the chain has {}",
                chain.n_modes()
            )));
        }
    }
    (0..chain.len())
        .into_par_iter()
        .map(|k| {
            let p = chain.point(k);
            conditional_expectation(p.phi, &obs.operator)
                .map(|e| e * obs.field_symbol(p.alpha))
                .map_err(|_| ChainError::ZeroNormConditionalState { index: Some(k) })
        })
        .collect()
}

/// Mean of the batch means and its standard error, splitting `values` into at most `batches`
/// contiguous batches whose sizes differ by at most one.
pub fn batch_means(values: &[Complex64], batches: usize) -> (Complex64, f64) {
    let n = values.len();
    let b = batches.min(n);
    if b < 2 {
        let mean = values.iter().sum::<Complex64>() / n.max(1) as f64;
        return (mean, f64::NAN);
    }
    let means: Vec<Complex64> = (0..b)
        .map(|i| {
            let (lo, hi) = (i * n / b, (i + 1) * n / b);
            values[lo..hi].iter().sum::<Complex64>() / (hi - lo) as f64
        })
        .collect();
    let grand = means.iter().sum::<Complex64>() / b as f64;
    let ss: f64 = means.iter().map(|m| (m - grand).norm_sqr()).sum();
    (grand, (ss / (b * (b - 1)) as f64).sqrt())
}
