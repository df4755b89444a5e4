//! Exact reference: the composite state in a truncated Fock basis.
//!
//! Amplitudes are stored atomic-major: index `a · F + f`, where `f` enumerates field
//! occupations `(n_1, …, n_M)` row-major with the last mode fastest and `F = Π (c_m + 1)`.

mod evolve;
mod phase_space;

use num_complex::Complex64;
use thiserror::Error;

use crate::model::{ModelError, ModelSpec};

pub use evolve::{evolve, evolve_to, STEP_TOLERANCE};
pub use phase_space::{
    antinormal_expectation, bargmann_projection, coherent_amplitude, q_function,
};

pub const DEFAULT_CUTOFF: usize = 16;
pub const DEFAULT_TAIL_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("mode {mode} holds probability {mass:.3e} in its top two Fock levels (threshold {threshold:.1e}); raise the cutoff")]
    TailMassExceeded {
        mode: usize,
        mass: f64,
        threshold: f64,
    },
    #[error("atomic initial state has squared norm {0}, expected 1")]
    NotNormalized(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("integrator failed to reach tolerance at t = {0}")]
    StepFailure(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockCompositeState {
    dim: usize,
    cutoffs: Vec<usize>,
    strides: Vec<usize>,
    time: f64,
    tail_threshold: f64,
    amplitudes: Vec<Complex64>,
}

fn strides_for(cutoffs: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; cutoffs.len()];
    for m in (0..cutoffs.len().saturating_sub(1)).rev() {
        strides[m] = strides[m + 1] * (cutoffs[m + 1] + 1);
    }
    strides
}

impl FockCompositeState {
    pub fn from_amplitudes(
        dim: usize,
        cutoffs: Vec<usize>,
        time: f64,
        tail_threshold: f64,
        amplitudes: Vec<Complex64>,
    ) -> Result<Self, OracleError> {
        if dim == 0 || cutoffs.is_empty() {
            return Err(OracleError::DimensionMismatch(
                "need d >= 1 and at least one mode".into(),
            ));
        }
        let field: usize = cutoffs.iter().map(|c| c + 1).product();
        if amplitudes.len() != dim * field {
            return Err(OracleError::DimensionMismatch(format!(
                "{} amplitudes for d = {dim} and {field} field states",
                amplitudes.len()
            )));
        }
        Ok(Self {
            dim,
            strides: strides_for(&cutoffs),
            cutoffs,
            time,
            tail_threshold,
            amplitudes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn tail_threshold(&self) -> f64 {
        self.tail_threshold
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn field_size(&self) -> usize {
        self.amplitudes.len() / self.dim
    }

    pub fn norm_sqr(&self) -> f64 {
        crate::hilbert::norm_sqr_slice(&self.amplitudes)
    }

    /// Occupation of mode `m` in field index `f`.
    #[inline]
    pub(crate) fn occupation(&self, f: usize, m: usize) -> usize {
        (f / self.strides[m]) % (self.cutoffs[m] + 1)
    }

    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Probability held in the two highest Fock levels of each mode.
    pub fn tail_mass(&self) -> Vec<f64> {
        let field = self.field_size();
        let total = self.norm_sqr();
        (0..self.cutoffs.len())
            .map(|m| {
                let top = self.cutoffs[m].saturating_sub(1);
                let mut mass = 0.0;
                for a in 0..self.dim {
                    for f in 0..field {
                        if self.occupation(f, m) >= top {
                            mass += self.amplitudes[a * field + f].norm_sqr();
                        }
                    }
                }
                mass / total
            })
            .collect()
    }

    pub(crate) fn check_tail(&self) -> Result<(), OracleError> {
        for (mode, mass) in self.tail_mass().into_iter().enumerate() {
            if mass > self.tail_threshold {
                return Err(OracleError::TailMassExceeded {
                    mode,
                    mass,
                    threshold: self.tail_threshold,
                });
            }
        }
        Ok(())
    }
}

/// Poisson mass at or above level `from` for mean occupation `x`.
fn poisson_tail(x: f64, from: usize) -> f64 {
    let mut log_term = -x;
    for n in 1..=from {
        log_term += x.ln() - (n as f64).ln();
    }
    if x == 0.0 {
        return if from == 0 { 1.0 } else { 0.0 };
    }
    let mut term = log_term.exp();
    let mut sum = 0.0;
    let mut n = from;
    while term > 1e-300 && n < from + 10_000 {
        sum += term;
        n += 1;
        term *= x / n as f64;
        if n as f64 > x && term < sum * 1e-18 {
            break;
        }
    }
    sum
}

/// Product of the atomic state and coherent states `|α0_m⟩`, truncated at `cutoffs` and
/// renormalized.
pub fn build_initial(
    spec: &ModelSpec,
    atomic: &[Complex64],
    alpha0: &[Complex64],
    cutoffs: &[usize],
    tail_threshold: f64,
) -> Result<FockCompositeState, OracleError> {
    if atomic.len() != spec.dim()
        || alpha0.len() != spec.n_modes()
        || cutoffs.len() != spec.n_modes()
    {
        return Err(OracleError::DimensionMismatch(format!(
            "model has d = {}, M = {}; got atomic {}, coherent amplitudes {}, cutoffs {}",
            spec.dim(),
            spec.n_modes(),
            atomic.len(),
            alpha0.len(),
            cutoffs.len()
        )));
    }
    let norm = crate::hilbert::norm_sqr_slice(atomic);
    if (norm - 1.0).abs() > 1e-9 {
        return Err(OracleError::NotNormalized(norm));
    }
    let mut per_mode = Vec::with_capacity(cutoffs.len());
    for (mode, (&alpha, &cutoff)) in alpha0.iter().zip(cutoffs).enumerate() {
        let mass = poisson_tail(alpha.norm_sqr(), cutoff.saturating_sub(1));
        if mass > tail_threshold {
            return Err(OracleError::TailMassExceeded {
                mode,
                mass,
                threshold: tail_threshold,
            });
        }
        let mut coeffs = Vec::with_capacity(cutoff + 1);
        let mut c = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
        for n in 0..=cutoff {
            coeffs.push(c);
            c *= alpha / ((n + 1) as f64).sqrt();
        }
        per_mode.push(coeffs);
    }
    let field: usize = cutoffs.iter().map(|c| c + 1).product();
    let strides = strides_for(cutoffs);
    let mut amplitudes = Vec::with_capacity(atomic.len() * field);
    for a in atomic {
        for f in 0..field {
            let mut amp = *a;
            for (m, coeffs) in per_mode.iter().enumerate() {
                amp *= coeffs[(f / strides[m]) % (cutoffs[m] + 1)];
            }
            amplitudes.push(amp);
        }
    }
    let scale = crate::hilbert::norm_sqr_slice(&amplitudes).sqrt().recip();
    amplitudes.iter_mut().for_each(|z| *z *= scale);
    FockCompositeState::from_amplitudes(
        atomic.len(),
        cutoffs.to_vec(),
        0.0,
        tail_threshold,
        amplitudes,
    )
}
