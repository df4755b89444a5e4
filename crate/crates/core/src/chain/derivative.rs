//! Finite differences of the conditional state along the chain.

use num_complex::Complex64;

use super::{ChainError, ChainState};
use crate::hilbert::norm_sqr_slice;

pub const DEFAULT_DELTA_MIN: f64 = 1e-8;

// Two points closer than delta_min count as the same point when their states agree to this
// relative precision.
const SAME_STATE_TOL: f64 = 1e-12;

/// For every point, the nearest earlier and later points that are not exact copies of it.
///
/// Rejected Metropolis proposals leave runs of identical points in the chain; a difference
/// quotient across such a run would be `0/0`.
#[derive(Debug, Clone)]
pub(crate) struct DistinctNeighbors {
    pub forward: Vec<Option<usize>>,
    pub backward: Vec<Option<usize>>,
}

pub(crate) fn distinct_neighbors(
    alphas: &[Complex64],
    phis: &[Complex64],
    m: usize,
    d: usize,
) -> DistinctNeighbors {
    let n = alphas.len() / m;
    let same = |a: usize, b: usize| {
        alphas[a * m..(a + 1) * m] == alphas[b * m..(b + 1) * m]
            && phis[a * d..(a + 1) * d] == phis[b * d..(b + 1) * d]
    };
    let mut forward = vec![None; n];
    let mut backward = vec![None; n];
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && same(start, end + 1) {
            end += 1;
        }
        let next = (end + 1 < n).then_some(end + 1);
        let prev = start.checked_sub(1);
        for k in start..=end {
            forward[k] = next;
            backward[k] = prev;
        }
        start = end + 1;
    }
    DistinctNeighbors { forward, backward }
}

/// Writes `(φ_j - φ_k) / delta` into `out`. Below `delta_min` the quotient is zero when the two
/// states agree and an error otherwise.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn quotient_into(
    out: &mut [Complex64],
    phi_k: &[Complex64],
    phi_j: &[Complex64],
    delta: Complex64,
    delta_min: f64,
    k: usize,
    mode: usize,
) -> Result<(), ChainError> {
    if delta.norm() < delta_min {
        let gap: f64 = phi_k
            .iter()
            .zip(phi_j)
            .map(|(a, b)| (b - a).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if gap <= SAME_STATE_TOL * norm_sqr_slice(phi_k).sqrt() {
            out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            return Ok(());
        }
        return Err(ChainError::DegenerateIncrement {
            k,
            mode,
            increment: delta.norm(),
            phi_gap: gap,
        });
    }
    let inv = delta.inv();
    for ((o, a), b) in out.iter_mut().zip(phi_k).zip(phi_j) {
        *o = (b - a) * inv;
    }
    Ok(())
}

/// Derivative of `φ` with respect to `α_n*` at chain point `k`, from the next distinct point
/// along the chain, or the previous one when no later point differs.
pub fn chain_derivative(
    chain: &ChainState,
    k: usize,
    mode: usize,
    delta_min: f64,
) -> Result<Vec<Complex64>, ChainError> {
    let (m, d) = (chain.n_modes(), chain.dim());
    if k >= chain.len() || mode >= m {
        return Err(ChainError::Invalid(format!(
            "point {k} / mode {mode} out of range ({} points, {m} modes)",
            chain.len()
        )));
    }
    let runs = distinct_neighbors(chain.alphas(), chain.phis(), m, d);
    let mut out = vec![Complex64::new(0.0, 0.0); d];
    let Some(j) = runs.forward[k].or(runs.backward[k]) else {
        return Ok(out);
    };
    let delta = (chain.alpha(j)[mode] - chain.alpha(k)[mode]).conj();
    quotient_into(
        &mut out,
        chain.phi(k),
        chain.phi(j),
        delta,
        delta_min,
        k,
        mode,
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn linear_chain(slope: Complex64) -> ChainState {
        // φ(α*) = (1, slope · α*) on a line of points.
        let pts: Vec<_> = (0..4)
            .map(|k| {
                let a = c(0.1 * k as f64, -0.05 * k as f64);
                (vec![a], vec![c(1.0, 0.0), slope * a.conj()])
            })
            .collect();
        ChainState::from_points(0.0, &pts).unwrap()
    }

    #[test]
    fn linear_state_has_exact_derivative() {
        let slope = c(0.3, 2.0);
        let chain = linear_chain(slope);
        for k in 0..chain.len() {
            let d = chain_derivative(&chain, k, 0, DEFAULT_DELTA_MIN).unwrap();
            assert!(d[0].norm() < 1e-14);
            assert!((d[1] - slope).norm() < 1e-12);
        }
    }

    #[test]
    fn last_point_uses_backward_difference() {
        let pts = vec![
            (vec![c(0.0, 0.0)], vec![c(1.0, 0.0)]),
            (vec![c(0.5, 0.0)], vec![c(2.0, 0.0)]),
            (vec![c(1.0, 0.0)], vec![c(5.0, 0.0)]),
        ];
        let chain = ChainState::from_points(0.0, &pts).unwrap();
        let last = chain_derivative(&chain, 2, 0, DEFAULT_DELTA_MIN).unwrap();
        assert!((last[0] - c(6.0, 0.0)).norm() < 1e-12);
        let first = chain_derivative(&chain, 0, 0, DEFAULT_DELTA_MIN).unwrap();
        assert!((first[0] - c(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn duplicates_are_skipped() {
        let pts = vec![
            (vec![c(0.0, 0.0)], vec![c(1.0, 0.0)]),
            (vec![c(0.0, 0.0)], vec![c(1.0, 0.0)]),
            (vec![c(0.0, 0.5)], vec![c(2.0, 0.0)]),
            (vec![c(0.0, 0.5)], vec![c(2.0, 0.0)]),
        ];
        let chain = ChainState::from_points(0.0, &pts).unwrap();
        // Δα* = -0.5i, Δφ = 1.
        let expected = c(0.0, 2.0);
        for k in 0..4 {
            let d = chain_derivative(&chain, k, 0, DEFAULT_DELTA_MIN).unwrap();
            assert!((d[0] - expected).norm() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn coincident_points_with_different_states_fail() {
        let pts = vec![
            (vec![c(0.0, 0.0)], vec![c(1.0, 0.0)]),
            (vec![c(1e-10, 0.0)], vec![c(2.0, 0.0)]),
        ];
        let chain = ChainState::from_points(0.0, &pts).unwrap();
        assert!(matches!(
            chain_derivative(&chain, 0, 0, DEFAULT_DELTA_MIN),
            Err(ChainError::DegenerateIncrement { k: 0, mode: 0, .. })
        ));
    }

    #[test]
    fn all_identical_chain_has_zero_derivative() {
        let pts = vec![(vec![c(0.3, 0.0)], vec![c(1.0, 1.0)]); 3];
        let chain = ChainState::from_points(0.0, &pts).unwrap();
        let d = chain_derivative(&chain, 1, 0, DEFAULT_DELTA_MIN).unwrap();
        assert_eq!(d, vec![c(0.0, 0.0)]);
    }
}
