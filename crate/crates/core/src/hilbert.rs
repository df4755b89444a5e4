//! Dense complex linear algebra for the atomic space and the composite Fock space.
//!
//! Everything here is physics-agnostic: matrices are `nalgebra` dense matrices of
//! `Complex64`, and the only nontrivial routine is the matrix exponential.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("dimension mismatch: {context} (expected {expected}, got {found})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
}

fn check_square(a: &CMatrix, context: &'static str) -> Result<(), HilbertError> {
    if a.nrows() != a.ncols() {
        return Err(HilbertError::DimensionMismatch {
            context,
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    Ok(())
}

fn all_finite<'a>(mut it: impl Iterator<Item = &'a Complex64>) -> bool {
    it.all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Maximum absolute column sum.
pub fn norm_one(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_hermitian(a: &CMatrix, tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let n = a.nrows();
    (0..n).all(|i| (i..n).all(|j| (a[(i, j)] - a[(j, i)].conj()).norm() <= tol))
}

/// `u† v`, conjugate-linear in the first argument.
pub fn inner(u: &CVector, v: &CVector) -> Result<Complex64, HilbertError> {
    if u.len() != v.len() {
        return Err(HilbertError::DimensionMismatch {
            context: "inner product operands",
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(inner_slices(u.as_slice(), v.as_slice()))
}

#[inline]
pub(crate) fn inner_slices(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

#[inline]
pub fn norm_sqr_slice(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `U A U†`.
pub fn conjugate_similarity(a: &CMatrix, u: &CMatrix) -> Result<CMatrix, HilbertError> {
    check_square(a, "conjugated operator must be square")?;
    check_square(u, "similarity transform must be square")?;
    if a.nrows() != u.nrows() {
        return Err(HilbertError::DimensionMismatch {
            context: "similarity transform vs operator",
            expected: a.nrows(),
            found: u.nrows(),
        });
    }
    Ok(u * a * u.adjoint())
}

// Taylor terms are summed until they fall below this fraction of the partial sum.
const TAYLOR_TOL: f64 = 1e-17;
const TAYLOR_MAX_TERMS: usize = 40;

fn scaling_exponent(norm: f64) -> u32 {
    // Keep the scaled norm at or below 1/2.
    if norm <= 0.5 {
        0
    } else {
        (norm / 0.5).log2().ceil() as u32
    }
}

/// `exp(s A)` as a dense matrix, by scaling and squaring with a truncated Taylor series.
pub fn expm(a: &CMatrix, s: f64) -> Result<CMatrix, HilbertError> {
    check_square(a, "matrix exponential needs a square matrix")?;
    if !s.is_finite() || !all_finite(a.iter()) {
        return Err(HilbertError::NonFinite("matrix exponential input"));
    }
    let n = a.nrows();
    let scaled_norm = norm_one(a) * s.abs();
    let squarings = scaling_exponent(scaled_norm);
    let b = a * Complex64::new(s / f64::powi(2.0, squarings as i32), 0.0);

    let mut result = CMatrix::identity(n, n);
    let mut term = CMatrix::identity(n, n);
    for k in 1..=TAYLOR_MAX_TERMS {
        term = &term * &b * Complex64::new(1.0 / k as f64, 0.0);
        result += &term;
        if norm_one(&term) <= TAYLOR_TOL * norm_one(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// `exp(s A) v` without forming the exponential: the scaled Taylor polynomial is applied
/// to the vector `2^j` times.
pub fn mat_exp_action(a: &CMatrix, s: f64, v: &CVector) -> Result<CVector, HilbertError> {
    check_square(a, "matrix exponential needs a square matrix")?;
    if a.ncols() != v.len() {
        return Err(HilbertError::DimensionMismatch {
            context: "operator vs vector",
            expected: a.ncols(),
            found: v.len(),
        });
    }
    if !s.is_finite() || !all_finite(a.iter()) || !all_finite(v.iter()) {
        return Err(HilbertError::NonFinite("matrix exponential action input"));
    }
    let scaled_norm = norm_one(a) * s.abs();
    let squarings = scaling_exponent(scaled_norm);
    let repeats = 1u64 << squarings;
    let h = Complex64::new(s / repeats as f64, 0.0);

    let mut out = v.clone();
    for _ in 0..repeats {
        let mut term = out.clone();
        let mut acc = out.clone();
        for k in 1..=TAYLOR_MAX_TERMS {
            term = (a * &term) * (h / k as f64);
            acc += &term;
            if term.norm() <= TAYLOR_TOL * acc.norm() {
                break;
            }
        }
        out = acc;
    }
    Ok(out)
}

/// Hermitian eigendecomposition `A = V diag(λ) V†` with real eigenvalues.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = nalgebra::SymmetricEigen::new(a.clone());
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// Lowering operator `|g⟩⟨e|` with basis order (e, g).
pub fn sigma_minus() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
}

pub fn sigma_plus() -> CMatrix {
    sigma_minus().adjoint()
}
