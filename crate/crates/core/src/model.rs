//! The composite system: an atomic Hamiltonian plus a set of field modes, each coupled
//! linearly through a current operator `J_n` (ħ = 1):
//!
//! `H = H0 + Σ ω_n a_n† a_n + Σ (J_n a_n† + J_n† a_n)`.
//!
//! Both engines only ever see the rotated interaction-picture currents
//! `j_n(t) = e^{iω_n t} e^{iH0 t} J_n e^{-iH0 t}`.

use std::sync::OnceLock;

use num_complex::Complex64;
use thiserror::Error;

use crate::hilbert::{self, CMatrix};

const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("H0 is not Hermitian (max |H - H†| = {0:.3e})")]
    NonHermitianH0(f64),
    #[error("{what} has shape {rows}x{cols}, expected {dim}x{dim}")]
    DimensionMismatch {
        what: String,
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("model needs at least one field mode")]
    EmptyModeList,
    #[error("atomic dimension must be at least 1")]
    EmptyAtom,
    #[error("mode index {index} out of range (model has {count} modes)")]
    ModeIndexOutOfRange { index: usize, count: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldMode {
    pub omega: f64,
    /// Schrödinger-picture current coupled to `a†`.
    pub current: CMatrix,
}

impl FieldMode {
    pub fn new(omega: f64, current: CMatrix) -> Self {
        Self { omega, current }
    }
}

/// Eigenbasis of H0 with each current pre-rotated into it.
#[derive(Debug)]
struct EigenCache {
    energies: Vec<f64>,
    basis: CMatrix,
    currents_in_basis: Vec<CMatrix>,
}

#[derive(Debug)]
pub struct ModelSpec {
    h0: CMatrix,
    modes: Vec<FieldMode>,
    cache: OnceLock<EigenCache>,
}

impl Clone for ModelSpec {
    fn clone(&self) -> Self {
        Self {
            h0: self.h0.clone(),
            modes: self.modes.clone(),
            cache: OnceLock::new(),
        }
    }
}

impl PartialEq for ModelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.h0 == other.h0 && self.modes == other.modes
    }
}

fn max_hermitian_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

fn finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

impl ModelSpec {
    /// Builds and validates a model.
    pub fn new(h0: CMatrix, modes: Vec<FieldMode>) -> Result<Self, ModelError> {
        Self {
            h0,
            modes,
            cache: OnceLock::new(),
        }
        .validate()
    }

    /// Checks every invariant, returning the spec unchanged when they hold.
    pub fn validate(self) -> Result<Self, ModelError> {
        let d = self.h0.nrows();
        if d == 0 {
            return Err(ModelError::EmptyAtom);
        }
        if self.h0.ncols() != d {
            return Err(ModelError::DimensionMismatch {
                what: "H0".into(),
                rows: d,
                cols: self.h0.ncols(),
                dim: d,
            });
        }
        if !finite(&self.h0) {
            return Err(ModelError::NonFinite("H0".into()));
        }
        let defect = max_hermitian_defect(&self.h0);
        if defect > HERMITIAN_TOL {
            return Err(ModelError::NonHermitianH0(defect));
        }
        if self.modes.is_empty() {
            return Err(ModelError::EmptyModeList);
        }
        for (n, mode) in self.modes.iter().enumerate() {
            let j = &mode.current;
            if j.nrows() != d || j.ncols() != d {
                return Err(ModelError::DimensionMismatch {
                    what: format!("current J of mode {n}"),
                    rows: j.nrows(),
                    cols: j.ncols(),
                    dim: d,
                });
            }
            if !finite(j) || !mode.omega.is_finite() {
                return Err(ModelError::NonFinite(format!("mode {n}")));
            }
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn h0(&self) -> &CMatrix {
        &self.h0
    }

    pub fn modes(&self) -> &[FieldMode] {
        &self.modes
    }

    fn cache(&self) -> &EigenCache {
        self.cache.get_or_init(|| {
            let (energies, basis) = hilbert::hermitian_eigen(&self.h0);
            let currents_in_basis = self
                .modes
                .iter()
                .map(|m| basis.adjoint() * &m.current * &basis)
                .collect();
            EigenCache {
                energies,
                basis,
                currents_in_basis,
            }
        })
    }

    /// Forces the eigendecomposition cache so later concurrent calls only read it.
    pub fn warm_cache(&self) {
        let _ = self.cache();
    }

    /// `j_n(t)`, evaluated through the cached eigenbasis of H0.
    pub fn rotated_current(&self, n: usize, t: f64) -> Result<CMatrix, ModelError> {
        let mode = self.modes.get(n).ok_or(ModelError::ModeIndexOutOfRange {
            index: n,
            count: self.modes.len(),
        })?;
        if t == 0.0 {
            return Ok(mode.current.clone());
        }
        let cache = self.cache();
        let d = self.dim();
        let phase = Complex64::from_polar(1.0, mode.omega * t);
        let mut rotated = cache.currents_in_basis[n].clone();
        for a in 0..d {
            for b in 0..d {
                let de = cache.energies[a] - cache.energies[b];
                rotated[(a, b)] *= phase * Complex64::from_polar(1.0, de * t);
            }
        }
        Ok(&cache.basis * rotated * cache.basis.adjoint())
    }

    /// All currents at time `t`, in mode order.
    pub fn rotated_currents(&self, t: f64) -> Vec<CMatrix> {
        (0..self.n_modes())
            .map(|n| self.rotated_current(n, t).expect("index in range"))
            .collect()
    }

    /// Same quantity as [`rotated_current`](Self::rotated_current) but through two dense
    /// matrix exponentials, without the eigenbasis cache.
    pub fn rotated_current_direct(&self, n: usize, t: f64) -> Result<CMatrix, ModelError> {
        let mode = self.modes.get(n).ok_or(ModelError::ModeIndexOutOfRange {
            index: n,
            count: self.modes.len(),
        })?;
        let u = hilbert::expm(&(&self.h0 * hilbert::I), t)
            .map_err(|e| ModelError::NonFinite(e.to_string()))?;
        let inner = hilbert::conjugate_similarity(&mode.current, &u)
            .map_err(|e| ModelError::NonFinite(e.to_string()))?;
        Ok(inner * Complex64::from_polar(1.0, mode.omega * t))
    }
}

/// Degenerate `d = 1` model with `H0 = 0` and c-number currents `J_n = c_n`.
pub fn classical_current_model(modes: &[(Complex64, f64)]) -> Result<ModelSpec, ModelError> {
    let h0 = CMatrix::zeros(1, 1);
    let modes = modes
        .iter()
        .map(|&(c, omega)| FieldMode::new(omega, CMatrix::from_element(1, 1, c)))
        .collect();
    ModelSpec::new(h0, modes)
}

/// Two-level atom with `H0 = Ω σz / 2` and one mode coupled through `g σ₋`.
pub fn jaynes_cummings(atom_frequency: f64, omega: f64, g: f64) -> ModelSpec {
    let h0 = hilbert::pauli_z() * Complex64::new(atom_frequency / 2.0, 0.0);
    let j = hilbert::sigma_minus() * Complex64::new(g, 0.0);
    ModelSpec::new(h0, vec![FieldMode::new(omega, j)]).expect("well-formed two-level model")
}
