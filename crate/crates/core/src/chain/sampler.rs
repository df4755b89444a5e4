//! Metropolis sampling of phase-space points from a Q-function weight.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ChainError, ChainState, SimRng};
use crate::hilbert::norm_sqr_slice;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerParams {
    /// Upper bound on the per-mode increment `|Δα_n|` of a single proposal.
    pub step_cap: f64,
    /// Burn-in length in units of the chain length.
    pub burn_in_factor: usize,
    /// Proposals per recorded point.
    pub thin: usize,
    pub target_acceptance: f64,
    /// Production acceptance below this is reported as a stuck sampler.
    pub min_acceptance: f64,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            step_cap: 0.2,
            burn_in_factor: 10,
            thin: 1,
            target_acceptance: 0.5,
            min_acceptance: 0.02,
        }
    }
}

impl SamplerParams {
    /// Largest expected distance between consecutive recorded points.
    pub fn recorded_cap(&self) -> f64 {
        self.step_cap * self.thin.max(1) as f64
    }
}

/// Unnormalized Bargmann state of a product of coherent states, `φ(α*) = e^{Σ α*_n β_n} ψ`.
pub fn coherent_bargmann<'a>(
    atomic: &'a [Complex64],
    beta: &'a [Complex64],
) -> impl Fn(&[Complex64]) -> Vec<Complex64> + Sync + 'a {
    move |alpha_conj: &[Complex64]| {
        let exponent: Complex64 = alpha_conj.iter().zip(beta).map(|(a, b)| a * b).sum();
        let factor = exponent.exp();
        atomic.iter().map(|c| c * factor).collect()
    }
}

/// Samples `n` points from `w(α) = e^{-|α|²} ‖φ0(α*)‖²`, where `phi0` takes the conjugated
/// coordinates `α*`.
pub fn initial_chain<F>(
    phi0: F,
    n_modes: usize,
    n: usize,
    params: &SamplerParams,
    rng: &mut SimRng,
) -> Result<ChainState, ChainError>
where
    F: Fn(&[Complex64]) -> Vec<Complex64>,
{
    let eval = |alpha: &[Complex64]| {
        let conj: Vec<Complex64> = alpha.iter().map(|a| a.conj()).collect();
        phi0(&conj)
    };
    let start = find_start(&eval, n_modes, rng)?;
    let (alphas, phis) = metropolis(&eval, start, n, params, rng)?;
    let dim = phis.len() / n;
    ChainState::new(0.0, n_modes, dim, alphas, phis)
}

pub(crate) fn log_weight(alpha: &[Complex64], phi: &[Complex64]) -> f64 {
    let norm = norm_sqr_slice(phi);
    if norm > 0.0 && norm.is_finite() {
        norm.ln() - norm_sqr_slice(alpha)
    } else {
        f64::NEG_INFINITY
    }
}

fn find_start<E>(eval: &E, n_modes: usize, rng: &mut SimRng) -> Result<Vec<Complex64>, ChainError>
where
    E: Fn(&[Complex64]) -> Vec<Complex64>,
{
    let origin = vec![Complex64::new(0.0, 0.0); n_modes];
    if log_weight(&origin, &eval(&origin)).is_finite() {
        return Ok(origin);
    }
    for _ in 0..1000 {
        let trial: Vec<Complex64> = (0..n_modes).map(|_| gaussian(rng, 1.0)).collect();
        if log_weight(&trial, &eval(&trial)).is_finite() {
            return Ok(trial);
        }
    }
    Err(ChainError::SamplerStuck {
        acceptance: 0.0,
        floor: 0.0,
    })
}

/// Complex Gaussian with `E|z|² = sigma²`.
fn gaussian(rng: &mut SimRng, sigma: f64) -> Complex64 {
    let s = sigma * std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

fn capped_gaussian(rng: &mut SimRng, sigma: f64, cap: f64) -> Complex64 {
    loop {
        let z = gaussian(rng, sigma);
        if z.norm() <= cap {
            return z;
        }
    }
}

/// Random-walk Metropolis with per-mode truncated Gaussian proposals. The proposal width is
/// adapted during burn-in toward the target acceptance and frozen afterwards.
pub(crate) fn metropolis<E>(
    eval: &E,
    start: Vec<Complex64>,
    n: usize,
    params: &SamplerParams,
    rng: &mut SimRng,
) -> Result<(Vec<Complex64>, Vec<Complex64>), ChainError>
where
    E: Fn(&[Complex64]) -> Vec<Complex64>,
{
    if params.step_cap.is_nan() || params.step_cap <= 0.0 || params.thin == 0 || n < 2 {
        return Err(ChainError::Invalid(
            "sampler needs a positive step cap, thin >= 1 and at least 2 points".into(),
        ));
    }
    let m = start.len();
    let cap = params.step_cap;
    let mut alpha = start;
    let mut phi = eval(&alpha);
    let mut lw = log_weight(&alpha, &phi);
    let mut proposal = vec![Complex64::new(0.0, 0.0); m];
    let mut log_sigma = cap.ln();

    let mut propose = |alpha: &mut Vec<Complex64>,
                       phi: &mut Vec<Complex64>,
                       lw: &mut f64,
                       sigma: f64,
                       rng: &mut SimRng|
     -> bool {
        for (p, a) in proposal.iter_mut().zip(alpha.iter()) {
            *p = a + capped_gaussian(rng, sigma, cap);
        }
        let phi_new = eval(&proposal);
        let lw_new = log_weight(&proposal, &phi_new);
        let u: f64 = rng.random();
        if lw_new.is_finite() && (lw_new >= *lw || u.ln() < lw_new - *lw) {
            alpha.copy_from_slice(&proposal);
            *phi = phi_new;
            *lw = lw_new;
            true
        } else {
            false
        }
    };

    let burn_in = params.burn_in_factor * n;
    for i in 0..burn_in {
        let accepted = propose(&mut alpha, &mut phi, &mut lw, log_sigma.exp(), rng);
        let gain = 1.0 / (1.0 + i as f64).powf(0.6);
        let signal = if accepted { 1.0 } else { 0.0 };
        log_sigma = (log_sigma + gain * (signal - params.target_acceptance)).min(cap.ln());
    }

    let sigma = log_sigma.exp();
    let dim = phi.len();
    let mut alphas = Vec::with_capacity(n * m);
    let mut phis = Vec::with_capacity(n * dim);
    let mut accepted = 0usize;
    let mut proposals = 0usize;
    for _ in 0..n {
        for _ in 0..params.thin {
            accepted += propose(&mut alpha, &mut phi, &mut lw, sigma, rng) as usize;
            proposals += 1;
        }
        alphas.extend_from_slice(&alpha);
        phis.extend_from_slice(&phi);
    }
    let acceptance = accepted as f64 / proposals as f64;
    log::debug!("sampler: {n} points, sigma {sigma:.4}, acceptance {acceptance:.3}");
    if acceptance < params.min_acceptance {
        return Err(ChainError::SamplerStuck {
            acceptance,
            floor: params.min_acceptance,
        });
    }
    Ok((alphas, phis))
}
