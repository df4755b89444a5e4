//! Deterministic time step of the whole chain.

use num_complex::Complex64;
use rayon::prelude::*;

use super::derivative::{distinct_neighbors, quotient_into, DistinctNeighbors, DEFAULT_DELTA_MIN};
use super::{sandwich, ChainError, ChainState};
use crate::hilbert::{norm_sqr_slice, CMatrix, I};
use crate::model::ModelSpec;

/// How the chain derivative enters the conditional-state update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transport {
    /// The derivative is taken along the moving point: the current's conditional mean is
    /// subtracted from its adjoint before acting on the derivative.
    #[default]
    Comoving,
    /// The derivative acts with the bare adjoint current, as if the point were held fixed.
    Fixed,
}

/// Which neighbour supplies the finite difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeighborRule {
    /// Next distinct point, or previous at the end of the chain.
    Forward,
    /// The distinct neighbour on the side the point is moving toward.
    #[default]
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Euler,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub eps: f64,
    pub transport: Transport,
    pub neighbor_rule: NeighborRule,
    pub integrator: Integrator,
    pub delta_min: f64,
}

impl StepParams {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            transport: Transport::default(),
            neighbor_rule: NeighborRule::default(),
            integrator: Integrator::default(),
            delta_min: DEFAULT_DELTA_MIN,
        }
    }
}

// A conditional state this far below the chain average is treated as lost.
const ZERO_NORM_RATIO: f64 = 1e-14;

struct Frame<'a> {
    currents: &'a [CMatrix],
    adjoints: &'a [CMatrix],
}

/// Advances every point by `eps` from a snapshot of the chain at its current time.
pub fn step(
    chain: &ChainState,
    spec: &ModelSpec,
    params: &StepParams,
) -> Result<ChainState, ChainError> {
    if !(params.eps > 0.0 && params.eps.is_finite()) {
        return Err(ChainError::Invalid(format!(
            "step size must be positive, got {}",
            params.eps
        )));
    }
    if spec.dim() != chain.dim() || spec.n_modes() != chain.n_modes() {
        return Err(ChainError::Invalid(format!(
            "model has d = {}, M = {} but chain has d = {}, M = {}",
            spec.dim(),
            spec.n_modes(),
            chain.dim(),
            chain.n_modes()
        )));
    }
    let t = chain.time();
    let eps = params.eps;
    let (alpha_rate, phi_rate) = match params.integrator {
        Integrator::Euler => rates_at(chain.alphas(), chain.phis(), chain, spec, t, params)?,
        Integrator::Midpoint => {
            let (ar, pr) = rates_at(chain.alphas(), chain.phis(), chain, spec, t, params)?;
            let half_a = advance(chain.alphas(), &ar, 0.5 * eps);
            let half_p = advance(chain.phis(), &pr, 0.5 * eps);
            rates_at(&half_a, &half_p, chain, spec, t + 0.5 * eps, params)?
        }
    };
    let alphas = advance(chain.alphas(), &alpha_rate, eps);
    let phis = advance(chain.phis(), &phi_rate, eps);
    if !phis
        .iter()
        .chain(&alphas)
        .all(|z| z.re.is_finite() && z.im.is_finite())
    {
        return Err(ChainError::Invalid(format!(
            "non-finite chain after step at t = {t}"
        )));
    }
    let mut next = chain.with_storage(t + eps, alphas, phis);
    next.meta.steps += 1;
    Ok(next)
}

fn advance(x: &[Complex64], rate: &[Complex64], h: f64) -> Vec<Complex64> {
    x.iter().zip(rate).map(|(a, r)| a + r * h).collect()
}

fn rates_at(
    alphas: &[Complex64],
    phis: &[Complex64],
    shape: &ChainState,
    spec: &ModelSpec,
    t: f64,
    params: &StepParams,
) -> Result<(Vec<Complex64>, Vec<Complex64>), ChainError> {
    let currents = spec.rotated_currents(t);
    let adjoints: Vec<CMatrix> = currents.iter().map(|j| j.adjoint()).collect();
    let frame = Frame {
        currents: &currents,
        adjoints: &adjoints,
    };
    rates(alphas, phis, shape.n_modes(), shape.dim(), &frame, params)
}

fn rates(
    alphas: &[Complex64],
    phis: &[Complex64],
    m: usize,
    d: usize,
    frame: &Frame<'_>,
    params: &StepParams,
) -> Result<(Vec<Complex64>, Vec<Complex64>), ChainError> {
    let n = alphas.len() / m;
    let norms: Vec<f64> = phis.par_chunks(d).map(norm_sqr_slice).collect();
    let mean = norms.iter().sum::<f64>() / n as f64;
    if let Some(k) = norms.iter().position(|&x| {
        x.partial_cmp(&(ZERO_NORM_RATIO * mean)) != Some(std::cmp::Ordering::Greater)
    }) {
        return Err(ChainError::ZeroNormConditionalState { index: Some(k) });
    }
    let runs = distinct_neighbors(alphas, phis, m, d);

    let mut alpha_rate = vec![Complex64::new(0.0, 0.0); n * m];
    let mut phi_rate = vec![Complex64::new(0.0, 0.0); n * d];
    let results: Vec<Result<(), ChainError>> = alpha_rate
        .par_chunks_mut(m)
        .zip(phi_rate.par_chunks_mut(d))
        .enumerate()
        .map(|(k, (ar, pr))| {
            point_rates(
                k, alphas, phis, m, d, norms[k], &runs, frame, params, ar, pr,
            )
        })
        .collect();
    results.into_iter().collect::<Result<(), _>>()?;
    Ok((alpha_rate, phi_rate))
}

fn choose_neighbor(
    k: usize,
    runs: &DistinctNeighbors,
    alphas: &[Complex64],
    m: usize,
    adjoint_means: &[Complex64],
    rule: NeighborRule,
) -> Option<usize> {
    let fwd = runs.forward[k].or(runs.backward[k]);
    let bwd = runs.backward[k].or(runs.forward[k]);
    match rule {
        NeighborRule::Forward => fwd,
        NeighborRule::Upwind => {
            let (f, b) = (fwd?, bwd?);
            let score = |j: usize| -> f64 {
                (0..m)
                    .map(|n| {
                        let delta = (alphas[j * m + n] - alphas[k * m + n]).conj();
                        if delta.norm_sqr() > 0.0 {
                            (I * adjoint_means[n] / delta).re
                        } else {
                            0.0
                        }
                    })
                    .sum()
            };
            if score(f) >= score(b) {
                Some(f)
            } else {
                Some(b)
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn point_rates(
    k: usize,
    alphas: &[Complex64],
    phis: &[Complex64],
    m: usize,
    d: usize,
    norm: f64,
    runs: &DistinctNeighbors,
    frame: &Frame<'_>,
    params: &StepParams,
    alpha_rate: &mut [Complex64],
    phi_rate: &mut [Complex64],
) -> Result<(), ChainError> {
    let alpha = &alphas[k * m..(k + 1) * m];
    let phi = &phis[k * d..(k + 1) * d];

    // ⟨j_n†⟩ at this point; the classical velocity is -i⟨j_n⟩.
    let adjoint_means: Vec<Complex64> = frame
        .currents
        .iter()
        .map(|j| (sandwich(phi, j) / norm).conj())
        .collect();
    for (r, u) in alpha_rate.iter_mut().zip(&adjoint_means) {
        *r = -I * u.conj();
    }

    // -i Σ α_n* j_n φ
    for (n, j) in frame.currents.iter().enumerate() {
        let coeff = -I * alpha[n].conj();
        for (row, out) in phi_rate.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (col, p) in phi.iter().enumerate() {
                acc += j[(row, col)] * p;
            }
            *out += coeff * acc;
        }
    }

    let Some(nb) = choose_neighbor(k, runs, alphas, m, &adjoint_means, params.neighbor_rule) else {
        return Ok(());
    };
    let phi_nb = &phis[nb * d..(nb + 1) * d];
    let mut deriv = vec![Complex64::new(0.0, 0.0); d];
    // -i Σ (j_n† - c ⟨j_n†⟩) ∂φ/∂α_n*
    for (n, jd) in frame.adjoints.iter().enumerate() {
        let delta = (alphas[nb * m + n] - alpha[n]).conj();
        quotient_into(&mut deriv, phi, phi_nb, delta, params.delta_min, k, n)?;
        let shift = match params.transport {
            Transport::Comoving => adjoint_means[n],
            Transport::Fixed => Complex64::new(0.0, 0.0),
        };
        for (row, out) in phi_rate.iter_mut().enumerate() {
            let mut acc = -shift * deriv[row];
            for (col, dv) in deriv.iter().enumerate() {
                acc += jd[(row, col)] * dv;
            }
            *out += -I * acc;
        }
    }
    Ok(())
}
