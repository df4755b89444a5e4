//! The semiclassical engine.
//!
//! The composite state is an ordered chain of pairs `(α(k), φ(k))`: classical phase-space
//! coordinates of every field mode, and the unnormalized conditional Bargmann state of the
//! atom at those coordinates. The chain points are distributed according to the Q-function
//! `w = e^{-|α|²} ‖φ(α*)‖²`, move deterministically with the conditional mean currents, and
//! expectation values are plain averages of conditional expectations over the chain.

mod checkpoint;
mod derivative;
mod estimate;
mod kdtree;
mod quality;
mod reformat;
mod sampler;
mod step;

use num_complex::Complex64;
use thiserror::Error;

use crate::hilbert::{self, CMatrix};
use crate::model::ModelSpec;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, CheckpointError, MAGIC, VERSION,
};
pub use derivative::{chain_derivative, DEFAULT_DELTA_MIN};
pub use estimate::{batch_means, estimate, estimate_with_batches, Estimate, DEFAULT_BATCHES};
pub use quality::{chain_quality, ChainQuality, ModeIncrements};
pub use reformat::{reformat, standard_observables, ReformatParams};
pub use sampler::{coherent_bargmann, initial_chain, SamplerParams};
pub use step::{step, Integrator, NeighborRule, StepParams, Transport};

/// Random number generator used by every stochastic component.
pub type SimRng = rand_chacha::ChaCha8Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("conditional state has zero norm{}", fmt_point(.index))]
    ZeroNormConditionalState { index: Option<usize> },
    #[error("degenerate increment at point {k}, mode {mode}: |Δα*| = {increment:.3e} with ‖Δφ‖ = {phi_gap:.3e}")]
    DegenerateIncrement {
        k: usize,
        mode: usize,
        increment: f64,
        phi_gap: f64,
    },
    #[error("sampler stuck: acceptance rate {acceptance:.4} below floor {floor:.4}")]
    SamplerStuck { acceptance: f64, floor: f64 },
    #[error("reformat shifted `{observable}` by {shift:.4e}, beyond tolerance {tolerance:.4e}")]
    InterpolationDegraded {
        observable: String,
        shift: f64,
        tolerance: f64,
    },
    #[error("invalid chain: {0}")]
    Invalid(String),
}

fn fmt_point(index: &Option<usize>) -> String {
    match index {
        Some(k) => format!(" at chain point {k}"),
        None => String::new(),
    }
}

/// Bookkeeping carried along with a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ChainMeta {
    /// Seed of the generator that sampled the chain.
    pub seed: u64,
    pub steps: u64,
    pub reformats: u64,
}

/// Borrowed view of one chain point.
#[derive(Debug, Clone, Copy)]
pub struct ChainPoint<'a> {
    pub alpha: &'a [Complex64],
    pub phi: &'a [Complex64],
}

/// The chain: `N ≥ 2` points, each with `M` phase-space coordinates and a `d`-dimensional
/// conditional state, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    time: f64,
    n_modes: usize,
    dim: usize,
    alphas: Vec<Complex64>,
    phis: Vec<Complex64>,
    pub meta: ChainMeta,
}

fn finite(z: &Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

impl ChainState {
    /// Builds a chain from flat storage (`alphas` is `N×M`, `phis` is `N×d`, row-major).
    pub fn new(
        time: f64,
        n_modes: usize,
        dim: usize,
        alphas: Vec<Complex64>,
        phis: Vec<Complex64>,
    ) -> Result<Self, ChainError> {
        if n_modes == 0 || dim == 0 {
            return Err(ChainError::Invalid(
                "mode count and atomic dimension must be positive".into(),
            ));
        }
        if !alphas.len().is_multiple_of(n_modes) || !phis.len().is_multiple_of(dim) {
            return Err(ChainError::Invalid(
                "storage is not a whole number of points".into(),
            ));
        }
        let n = alphas.len() / n_modes;
        if phis.len() / dim != n {
            return Err(ChainError::Invalid(format!(
                "{} phase-space points but {} conditional states",
                n,
                phis.len() / dim
            )));
        }
        if n < 2 {
            return Err(ChainError::Invalid(format!(
                "chain needs at least 2 points, got {n}"
            )));
        }
        if !time.is_finite() || !alphas.iter().all(finite) || !phis.iter().all(finite) {
            return Err(ChainError::Invalid("non-finite entry".into()));
        }
        let chain = Self {
            time,
            n_modes,
            dim,
            alphas,
            phis,
            meta: ChainMeta::default(),
        };
        if let Some(k) = (0..n).find(|&k| hilbert::norm_sqr_slice(chain.phi(k)) == 0.0) {
            return Err(ChainError::ZeroNormConditionalState { index: Some(k) });
        }
        Ok(chain)
    }

    /// Builds a chain from per-point `(α, φ)` pairs.
    pub fn from_points(
        time: f64,
        points: &[(Vec<Complex64>, Vec<Complex64>)],
    ) -> Result<Self, ChainError> {
        let (m, d) = points
            .first()
            .map(|(a, p)| (a.len(), p.len()))
            .ok_or_else(|| ChainError::Invalid("empty chain".into()))?;
        if points.iter().any(|(a, p)| a.len() != m || p.len() != d) {
            return Err(ChainError::Invalid(
                "points have inconsistent dimensions".into(),
            ));
        }
        let alphas = points.iter().flat_map(|(a, _)| a.iter().copied()).collect();
        let phis = points.iter().flat_map(|(_, p)| p.iter().copied()).collect();
        Self::new(time, m, d, alphas, phis)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.alphas.len() / self.n_modes
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self, k: usize) -> &[Complex64] {
        &self.alphas[k * self.n_modes..(k + 1) * self.n_modes]
    }

    pub fn phi(&self, k: usize) -> &[Complex64] {
        &self.phis[k * self.dim..(k + 1) * self.dim]
    }

    pub fn point(&self, k: usize) -> ChainPoint<'_> {
        ChainPoint {
            alpha: self.alpha(k),
            phi: self.phi(k),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = ChainPoint<'_>> + '_ {
        (0..self.len()).map(move |k| self.point(k))
    }

    pub fn alphas(&self) -> &[Complex64] {
        &self.alphas
    }

    pub fn phis(&self) -> &[Complex64] {
        &self.phis
    }

    /// Returns a copy with `φ(k)` multiplied by `factor`.
    pub fn with_scaled_phi(&self, k: usize, factor: Complex64) -> Result<Self, ChainError> {
        if factor == Complex64::new(0.0, 0.0) || !finite(&factor) {
            return Err(ChainError::Invalid(
                "scale factor must be finite and nonzero".into(),
            ));
        }
        let mut out = self.clone();
        let d = self.dim;
        out.phis[k * d..(k + 1) * d]
            .iter_mut()
            .for_each(|z| *z *= factor);
        Ok(out)
    }

    pub(crate) fn with_storage(
        &self,
        time: f64,
        alphas: Vec<Complex64>,
        phis: Vec<Complex64>,
    ) -> Self {
        Self {
            time,
            n_modes: self.n_modes,
            dim: self.dim,
            alphas,
            phis,
            meta: self.meta,
        }
    }
}

/// `c · Π_n α_n^{p_n} (α_n*)^{q_n}`; missing exponents count as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: Complex64,
    pub alpha_powers: Vec<u32>,
    pub conj_powers: Vec<u32>,
}

impl Monomial {
    pub fn new(coeff: Complex64, alpha_powers: Vec<u32>, conj_powers: Vec<u32>) -> Self {
        Self {
            coeff,
            alpha_powers,
            conj_powers,
        }
    }

    pub fn constant(coeff: Complex64) -> Self {
        Self::new(coeff, vec![], vec![])
    }

    pub fn evaluate(&self, alpha: &[Complex64]) -> Complex64 {
        let mut acc = self.coeff;
        for (n, a) in alpha.iter().enumerate() {
            let p = self.alpha_powers.get(n).copied().unwrap_or(0);
            let q = self.conj_powers.get(n).copied().unwrap_or(0);
            if p > 0 {
                acc *= a.powu(p);
            }
            if q > 0 {
                acc *= a.conj().powu(q);
            }
        }
        acc
    }

    pub fn max_mode(&self) -> usize {
        self.alpha_powers.len().max(self.conj_powers.len())
    }
}

/// An atomic operator `F` times an antinormally ordered field polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub operator: CMatrix,
    pub poly: Vec<Monomial>,
}

impl Observable {
    pub fn new(operator: CMatrix, poly: Vec<Monomial>) -> Self {
        Self { operator, poly }
    }

    /// `F` with the trivial field polynomial `1`.
    pub fn atomic(operator: CMatrix) -> Self {
        Self::new(operator, vec![Monomial::constant(hilbert::ONE)])
    }

    /// Identity on the atom times a field polynomial.
    pub fn field(dim: usize, poly: Vec<Monomial>) -> Self {
        Self::new(CMatrix::identity(dim, dim), poly)
    }

    pub fn field_symbol(&self, alpha: &[Complex64]) -> Complex64 {
        self.poly.iter().map(|m| m.evaluate(alpha)).sum()
    }
}

/// `φ† F φ / ‖φ‖²`.
pub fn conditional_expectation(phi: &[Complex64], f: &CMatrix) -> Result<Complex64, ChainError> {
    if f.nrows() != phi.len() || f.ncols() != phi.len() {
        return Err(ChainError::Invalid(format!(
            "operator is {}x{} but the conditional state has dimension {}",
            f.nrows(),
            f.ncols(),
            phi.len()
        )));
    }
    let norm = hilbert::norm_sqr_slice(phi);
    if norm == 0.0 {
        return Err(ChainError::ZeroNormConditionalState { index: None });
    }
    Ok(sandwich(phi, f) / norm)
}

/// `φ† F φ` for a dense `F`.
#[inline]
pub(crate) fn sandwich(phi: &[Complex64], f: &CMatrix) -> Complex64 {
    let d = phi.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..d {
            row += f[(i, j)] * phi[j];
        }
        acc += phi[i].conj() * row;
    }
    acc
}

/// Rank-one conditional density `φ φ†`.
pub fn conditional_density(phi: &[Complex64]) -> CMatrix {
    let d = phi.len();
    CMatrix::from_fn(d, d, |i, j| phi[i] * phi[j].conj())
}

/// Classical velocity `α̇_n = -i ⟨j_n(t)⟩` of every mode at one chain point.
pub fn drift_velocity(
    phi: &[Complex64],
    t: f64,
    spec: &ModelSpec,
) -> Result<Vec<Complex64>, ChainError> {
    let currents = spec.rotated_currents(t);
    drift_from_currents(phi, &currents)
}

pub(crate) fn drift_from_currents(
    phi: &[Complex64],
    currents: &[CMatrix],
) -> Result<Vec<Complex64>, ChainError> {
    currents
        .iter()
        .map(|j| conditional_expectation(phi, j).map(|e| -hilbert::I * e))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{pauli_z, sigma_minus, ONE, ZERO};
    use crate::model::{classical_current_model, FieldMode};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn conditional_expectation_examples() {
        assert_eq!(
            conditional_expectation(&[ONE, ZERO], &pauli_z()).unwrap(),
            ONE
        );
        assert_eq!(
            conditional_expectation(&[ONE, ONE], &pauli_z()).unwrap(),
            ZERO
        );
        assert_eq!(
            conditional_expectation(&[c(2.0, 0.0), ZERO], &pauli_z()).unwrap(),
            ONE
        );
        assert_eq!(
            conditional_expectation(&[ZERO, ZERO], &pauli_z()),
            Err(ChainError::ZeroNormConditionalState { index: None })
        );
    }

    #[test]
    fn identity_expectation_is_exactly_one() {
        let id = CMatrix::identity(3, 3);
        for phi in [
            [c(0.1, -3.7), c(1e-3, 2.2), c(-5.5, 0.25)],
            [c(1e8, 1.0), c(-1e-8, 0.0), c(0.3, 0.3)],
        ] {
            assert_eq!(conditional_expectation(&phi, &id).unwrap(), ONE);
        }
    }

    #[test]
    fn drift_examples() {
        let spec = classical_current_model(&[(c(0.5, 0.0), 1.0)]).unwrap();
        let v = drift_velocity(&[ONE], 0.0, &spec).unwrap();
        assert!((v[0] - c(0.0, -0.5)).norm() < 1e-15);

        let jc = crate::model::jaynes_cummings(1.0, 1.0, 1.0);
        let v = drift_velocity(&[ZERO, ONE], 0.3, &jc).unwrap();
        assert!(v[0].norm() < 1e-15);

        let free = ModelSpec::new(
            CMatrix::zeros(2, 2),
            vec![FieldMode::new(0.0, sigma_minus())],
        )
        .unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = drift_velocity(&[c(s, 0.0), c(s, 0.0)], 1.0, &free).unwrap();
        assert!((v[0] - c(0.0, -0.5)).norm() < 1e-12);
    }

    #[test]
    fn conditional_density_is_rank_one() {
        let rho = conditional_density(&[ONE, ZERO]);
        assert_eq!(rho, CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]));
        let phi = [c(0.3, 1.2), c(-0.7, 0.1), c(2.0, -0.5)];
        let rho = conditional_density(&phi);
        let norm = hilbert::norm_sqr_slice(&phi);
        assert!((rho.trace() - c(norm, 0.0)).norm() < 1e-12);
        let (mut ev, _) = hilbert::hermitian_eigen(&rho);
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((ev[0] - norm).abs() < 1e-12);
        assert!(ev[1].abs() < 1e-12 && ev[2].abs() < 1e-12);
    }

    #[test]
    fn chain_construction_checks() {
        assert!(ChainState::from_points(0.0, &[(vec![ZERO], vec![ONE])]).is_err());
        let err = ChainState::from_points(0.0, &[(vec![ZERO], vec![ONE]), (vec![ONE], vec![ZERO])]);
        assert_eq!(
            err,
            Err(ChainError::ZeroNormConditionalState { index: Some(1) })
        );
        let ok = ChainState::from_points(0.0, &[(vec![ZERO], vec![ONE]), (vec![ONE], vec![ONE])])
            .unwrap();
        assert_eq!((ok.len(), ok.n_modes(), ok.dim()), (2, 1, 1));
    }

    #[test]
    fn monomial_evaluation() {
        let m = Monomial::new(c(2.0, 0.0), vec![1, 0], vec![0, 2]);
        let alpha = [c(0.5, 1.0), c(0.0, 1.0)];
        // 2 · α₁ · (α₂*)² = 2 (0.5 + i) (-i)² = -(1 + 2i)
        assert!((m.evaluate(&alpha) - c(-1.0, -2.0)).norm() < 1e-15);
        assert_eq!(Monomial::constant(ONE).evaluate(&alpha), ONE);
    }
}
