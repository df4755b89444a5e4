//! Coherent-state projections and antinormally ordered expectations of the reference state.

use num_complex::Complex64;

use super::{FockCompositeState, OracleError};
use crate::chain::Observable;

/// `c_n = z^n / √n!` for `n = 0..=cutoff`.
fn power_table(z: Complex64, cutoff: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(cutoff + 1);
    let mut c = Complex64::new(1.0, 0.0);
    for n in 0..=cutoff {
        out.push(c);
        c *= z / ((n + 1) as f64).sqrt();
    }
    out
}

fn contract(state: &FockCompositeState, tables: &[Vec<Complex64>]) -> Vec<Complex64> {
    let field = state.field_size();
    let weights: Vec<Complex64> = (0..field)
        .map(|f| {
            tables
                .iter()
                .enumerate()
                .map(|(m, t)| t[state.occupation(f, m)])
                .product()
        })
        .collect();
    (0..state.dim())
        .map(|a| {
            state.amplitudes()[a * field..(a + 1) * field]
                .iter()
                .zip(&weights)
                .map(|(psi, w)| psi * w)
                .sum()
        })
        .collect()
}

fn check_modes(state: &FockCompositeState, len: usize) -> Result<(), OracleError> {
    if len != state.cutoffs().len() {
        return Err(OracleError::DimensionMismatch(format!(
            "{len} coordinates for {} modes",
            state.cutoffs().len()
        )));
    }
    Ok(())
}

/// Bargmann function `φ(α*) = Σ_n Π_m (α_m*)^{n_m} / √(n_m!) ψ_n`, given the conjugated
/// coordinates.
pub fn bargmann_projection(
    state: &FockCompositeState,
    alpha_conj: &[Complex64],
) -> Result<Vec<Complex64>, OracleError> {
    check_modes(state, alpha_conj.len())?;
    let tables: Vec<_> = alpha_conj
        .iter()
        .zip(state.cutoffs())
        .map(|(z, &c)| power_table(*z, c))
        .collect();
    Ok(contract(state, &tables))
}

/// Atomic vector `⟨α| Ψ⟩` for the normalized product coherent state `|α⟩`.
pub fn coherent_amplitude(
    state: &FockCompositeState,
    alpha: &[Complex64],
) -> Result<Vec<Complex64>, OracleError> {
    check_modes(state, alpha.len())?;
    let tables: Vec<_> = alpha
        .iter()
        .zip(state.cutoffs())
        .map(|(a, &c)| {
            let scale = (-0.5 * a.norm_sqr()).exp();
            power_table(a.conj(), c)
                .into_iter()
                .map(|z| z * scale)
                .collect()
        })
        .collect();
    Ok(contract(state, &tables))
}

/// `Q(α) = ‖⟨α|Ψ⟩‖²`, without the `1/π` density normalization.
pub fn q_function(state: &FockCompositeState, alpha: &[Complex64]) -> Result<f64, OracleError> {
    Ok(coherent_amplitude(state, alpha)?
        .iter()
        .map(|z| z.norm_sqr())
        .sum())
}

/// Raises every mode by `powers`, `Π_m (a_m†)^{p_m} ψ`, into a Fock space with `ext` extra
/// levels per mode.
fn raise(state: &FockCompositeState, powers: &[u32], ext: &[usize]) -> Vec<Complex64> {
    let big: Vec<usize> = state
        .cutoffs()
        .iter()
        .zip(ext)
        .map(|(c, e)| c + e)
        .collect();
    let mut big_strides = vec![1; big.len()];
    for m in (0..big.len().saturating_sub(1)).rev() {
        big_strides[m] = big_strides[m + 1] * (big[m + 1] + 1);
    }
    let big_field: usize = big.iter().map(|c| c + 1).product();
    let field = state.field_size();
    let mut out = vec![Complex64::new(0.0, 0.0); state.dim() * big_field];
    for f in 0..field {
        let mut target = 0;
        let mut factor = 1.0;
        for (m, stride) in big_strides.iter().enumerate() {
            let n = state.occupation(f, m);
            let p = powers.get(m).copied().unwrap_or(0) as usize;
            target += (n + p) * stride;
            factor *= ((n + 1)..=(n + p))
                .map(|k| (k as f64).sqrt())
                .product::<f64>();
        }
        for a in 0..state.dim() {
            out[a * big_field + target] = state.amplitudes()[a * field + f] * factor;
        }
    }
    out
}

/// `⟨Ψ| F ⊗ P |Ψ⟩ / ⟨Ψ|Ψ⟩` where each monomial `α^p α*^q` of the field polynomial stands for
/// the antinormally ordered product `a^p (a†)^q`.
pub fn antinormal_expectation(
    state: &FockCompositeState,
    obs: &Observable,
) -> Result<Complex64, OracleError> {
    let d = state.dim();
    let m_count = state.cutoffs().len();
    if obs.operator.nrows() != d || obs.operator.ncols() != d {
        return Err(OracleError::DimensionMismatch(format!(
            "operator is {}x{} for atomic dimension {d}",
            obs.operator.nrows(),
            obs.operator.ncols()
        )));
    }
    if obs.poly.iter().any(|mono| mono.max_mode() > m_count) {
        return Err(OracleError::DimensionMismatch(format!(
            "polynomial refers to more than {m_count} modes"
        )));
    }
    state.check_tail()?;
    let norm = state.norm_sqr();
    let mut total = Complex64::new(0.0, 0.0);
    for mono in &obs.poly {
        let ext: Vec<usize> = (0..m_count)
            .map(|m| {
                let p = mono.alpha_powers.get(m).copied().unwrap_or(0);
                let q = mono.conj_powers.get(m).copied().unwrap_or(0);
                p.max(q) as usize
            })
            .collect();
        let left = raise(state, &mono.alpha_powers, &ext);
        let right = raise(state, &mono.conj_powers, &ext);
        let big_field = left.len() / d;
        let mut acc = Complex64::new(0.0, 0.0);
        for f in 0..big_field {
            for a in 0..d {
                let l = left[a * big_field + f];
                if l == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let mut row = Complex64::new(0.0, 0.0);
                for b in 0..d {
                    row += obs.operator[(a, b)] * right[b * big_field + f];
                }
                acc += l.conj() * row;
            }
        }
        total += mono.coeff * acc;
    }
    Ok(total / norm)
}
