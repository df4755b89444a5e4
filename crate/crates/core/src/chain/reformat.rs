//! Resampling a degraded chain from its own interpolated weight.

use num_complex::Complex64;

use super::estimate::estimate_with_batches;
use super::kdtree::KdTree;
use super::sampler::{log_weight, metropolis, SamplerParams};
use super::{ChainError, ChainState, Monomial, Observable, SimRng, DEFAULT_BATCHES};
use crate::hilbert::{CMatrix, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReformatParams {
    pub sampler: SamplerParams,
    /// Allowed pre/post shift of each gate estimate, in combined standard errors.
    pub gate_sigma: f64,
    pub batches: usize,
}

impl Default for ReformatParams {
    fn default() -> Self {
        Self {
            sampler: SamplerParams::default(),
            gate_sigma: 3.0,
            batches: DEFAULT_BATCHES,
        }
    }
}

/// First moments and antinormal second moments of every mode, plus the atomic populations.
pub fn standard_observables(dim: usize, n_modes: usize) -> Vec<(String, Observable)> {
    let mut out = Vec::new();
    for n in 0..n_modes {
        let mut p = vec![0; n_modes];
        p[n] = 1;
        out.push((
            format!("alpha_{n}"),
            Observable::field(dim, vec![Monomial::new(ONE, p.clone(), vec![])]),
        ));
        out.push((
            format!("alpha_alpha_conj_{n}"),
            Observable::field(dim, vec![Monomial::new(ONE, p.clone(), p)]),
        ));
    }
    if dim > 1 {
        for i in 0..dim {
            let mut proj = CMatrix::zeros(dim, dim);
            proj[(i, i)] = ONE;
            out.push((format!("population_{i}"), Observable::atomic(proj)));
        }
    }
    out
}

/// Piecewise-linear interpolant of the stored map `α* → φ`.
struct Interpolant<'a> {
    chain: &'a ChainState,
    tree: KdTree,
    index: Vec<usize>,
}

impl<'a> Interpolant<'a> {
    fn new(chain: &'a ChainState) -> Self {
        let m = chain.n_modes();
        let mut index = Vec::with_capacity(chain.len());
        for k in 0..chain.len() {
            if k > 0 && chain.alpha(k) == chain.alpha(k - 1) && chain.phi(k) == chain.phi(k - 1) {
                continue;
            }
            index.push(k);
        }
        let coords = index
            .iter()
            .flat_map(|&k| chain.alpha(k).iter().flat_map(|a| [a.re, a.im]))
            .collect::<Vec<_>>();
        debug_assert_eq!(coords.len(), index.len() * 2 * m);
        Self {
            chain,
            tree: KdTree::new(coords, 2 * m),
            index,
        }
    }

    fn eval(&self, alpha: &[Complex64]) -> Vec<Complex64> {
        let q: Vec<f64> = alpha.iter().flat_map(|a| [a.re, a.im]).collect();
        let near = self.tree.nearest(&q, 4);
        let k1 = self.index[near[0].0];
        let a1 = self.chain.alpha(k1);
        let phi1 = self.chain.phi(k1);
        let second = near[1..]
            .iter()
            .map(|&(i, _)| self.index[i])
            .find(|&k| self.chain.alpha(k) != a1);
        let Some(k2) = second else {
            return phi1.to_vec();
        };
        let a2 = self.chain.alpha(k2);
        // Projection of the displacement onto the segment, in the conjugated coordinates.
        let mut num = ZERO;
        let mut den = 0.0;
        for n in 0..a1.len() {
            let e = (a2[n] - a1[n]).conj();
            let delta = (alpha[n] - a1[n]).conj();
            num += e.conj() * delta;
            den += e.norm_sqr();
        }
        let s = num / den;
        phi1.iter()
            .zip(self.chain.phi(k2))
            .map(|(p1, p2)| p1 + s * (p2 - p1))
            .collect()
    }
}

/// Draws a fresh chain of the same length from `e^{-|α|²} ‖φ(α*)‖²` with `φ` interpolated from
/// the current chain, and checks that every gate observable moved by less than the tolerance.
pub fn reformat(
    chain: &ChainState,
    params: &ReformatParams,
    gate: &[(String, Observable)],
    rng: &mut SimRng,
) -> Result<ChainState, ChainError> {
    let interp = Interpolant::new(chain);
    let eval = |alpha: &[Complex64]| interp.eval(alpha);
    let start = (0..chain.len())
        .max_by(|&a, &b| {
            log_weight(chain.alpha(a), chain.phi(a))
                .total_cmp(&log_weight(chain.alpha(b), chain.phi(b)))
        })
        .map(|k| chain.alpha(k).to_vec())
        .expect("chain has at least two points");
    let (alphas, phis) = metropolis(&eval, start, chain.len(), &params.sampler, rng)?;
    let mut fresh = chain.with_storage(chain.time(), alphas, phis);
    fresh.meta.reformats += 1;
    if let Some(k) = (0..fresh.len()).find(|&k| fresh.phi(k).iter().all(|z| *z == ZERO)) {
        return Err(ChainError::ZeroNormConditionalState { index: Some(k) });
    }

    for (name, obs) in gate {
        let pre = estimate_with_batches(chain, obs, params.batches)?;
        let post = estimate_with_batches(&fresh, obs, params.batches)?;
        let shift = (pre.value - post.value).norm();
        let tolerance = params.gate_sigma * pre.stderr.hypot(post.stderr);
        if shift.is_nan() || shift > tolerance.max(1e-12) {
            return Err(ChainError::InterpolationDegraded {
                observable: name.clone(),
                shift,
                tolerance,
            });
        }
        log::debug!("reformat gate {name}: shift {shift:.3e} within {tolerance:.3e}");
    }
    Ok(fresh)
}
