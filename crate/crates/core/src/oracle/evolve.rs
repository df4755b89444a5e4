//! Interaction-picture integration of the truncated composite state.

use num_complex::Complex64;

use super::{FockCompositeState, OracleError};
use crate::hilbert::{CMatrix, I};
use crate::model::ModelSpec;

/// Largest accepted difference between one full step and two half steps.
pub const STEP_TOLERANCE: f64 = 1e-10;

const MAX_HALVINGS: u32 = 40;

/// `-i H_I(t) ψ` with `H_I(t) = Σ_n j_n(t) ⊗ a_n† + j_n(t)† ⊗ a_n`. Amplitude pushed above the
/// cutoff is dropped; the tail guard reports when that matters.
fn derivative(
    state: &FockCompositeState,
    psi: &[Complex64],
    currents: &[CMatrix],
    out: &mut [Complex64],
) {
    let d = state.dim();
    let field = state.field_size();
    out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    for (m, j) in currents.iter().enumerate() {
        let stride = state.strides()[m];
        let cutoff = state.cutoffs()[m];
        for f in 0..field {
            let n = state.occupation(f, m);
            for b in 0..d {
                let amp = psi[b * field + f];
                if amp == Complex64::new(0.0, 0.0) {
                    continue;
                }
                if n < cutoff {
                    let up = amp * ((n + 1) as f64).sqrt();
                    for a in 0..d {
                        out[a * field + f + stride] += j[(a, b)] * up;
                    }
                }
                if n > 0 {
                    let down = amp * (n as f64).sqrt();
                    for a in 0..d {
                        out[a * field + f - stride] += j[(b, a)].conj() * down;
                    }
                }
            }
        }
    }
    out.iter_mut().for_each(|z| *z *= -I);
}

fn rk4(
    state: &FockCompositeState,
    spec: &ModelSpec,
    psi: &[Complex64],
    t: f64,
    h: f64,
) -> Vec<Complex64> {
    let len = psi.len();
    let c0 = spec.rotated_currents(t);
    let c1 = spec.rotated_currents(t + 0.5 * h);
    let c2 = spec.rotated_currents(t + h);
    let mut k1 = vec![Complex64::new(0.0, 0.0); len];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let shifted = |k: &[Complex64], s: f64| -> Vec<Complex64> {
        psi.iter().zip(k).map(|(p, k)| p + k * s).collect()
    };
    derivative(state, psi, &c0, &mut k1);
    derivative(state, &shifted(&k1, 0.5 * h), &c1, &mut k2);
    derivative(state, &shifted(&k2, 0.5 * h), &c1, &mut k3);
    derivative(state, &shifted(&k3, h), &c2, &mut k4);
    (0..len)
        .map(|i| psi[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0))
        .collect()
}

/// Advances the state by `dt`, halving the substep until a full step and two half steps
/// agree to [`STEP_TOLERANCE`].
pub fn evolve(
    state: &FockCompositeState,
    spec: &ModelSpec,
    dt: f64,
) -> Result<FockCompositeState, OracleError> {
    if spec.dim() != state.dim() || spec.n_modes() != state.cutoffs().len() {
        return Err(OracleError::DimensionMismatch(format!(
            "model has d = {}, M = {} but state has d = {}, M = {}",
            spec.dim(),
            spec.n_modes(),
            state.dim(),
            state.cutoffs().len()
        )));
    }
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(OracleError::StepFailure(state.time()));
    }
    let mut psi = state.amplitudes().to_vec();
    let mut t = state.time();
    let end = t + dt;
    let mut h = dt;
    let mut halvings = 0;
    while end - t > 1e-15 * end.abs().max(1.0) {
        h = h.min(end - t);
        let full = rk4(state, spec, &psi, t, h);
        let mid = rk4(state, spec, &psi, t, 0.5 * h);
        let two = rk4(state, spec, &mid, t + 0.5 * h, 0.5 * h);
        let diff: f64 = full
            .iter()
            .zip(&two)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if diff < STEP_TOLERANCE {
            psi = two;
            t += h;
            halvings = 0;
        } else {
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(OracleError::StepFailure(t));
            }
            h *= 0.5;
        }
    }
    let next = FockCompositeState::from_amplitudes(
        state.dim(),
        state.cutoffs().to_vec(),
        end,
        state.tail_threshold(),
        psi,
    )?;
    next.check_tail()?;
    Ok(next)
}

/// Advances in increments of at most `dt` until `t_target`.
pub fn evolve_to(
    state: &FockCompositeState,
    spec: &ModelSpec,
    t_target: f64,
    dt: f64,
) -> Result<FockCompositeState, OracleError> {
    let mut s = state.clone();
    let steps = ((t_target - state.time()) / dt).ceil().max(0.0) as u64;
    for i in 0..steps {
        let next_time = if i + 1 == steps {
            t_target
        } else {
            state.time() + (i + 1) as f64 * dt
        };
        s = evolve(&s, spec, next_time - s.time())?;
    }
    Ok(s)
}
