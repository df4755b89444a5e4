//! End-to-end acceptance checks. Runs without the libtest harness so that every criterion
//! reports one PASS/FAIL line in the normal test output; the process fails if any does.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use semiclassical::chain::{
    self, chain_derivative, coherent_bargmann, estimate, initial_chain, reformat,
    standard_observables, ChainError, ChainState, Monomial, Observable, ReformatParams,
    SamplerParams, SimRng, StepParams,
};
use semiclassical::hilbert::{norm_sqr_slice, pauli_z, sigma_minus, CMatrix, ONE, ZERO};
use semiclassical::model::{classical_current_model, jaynes_cummings};
use semiclassical::oracle::{
    antinormal_expectation, bargmann_projection, build_initial, coherent_amplitude, evolve_to,
    FockCompositeState,
};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn jc_observables() -> Vec<(&'static str, Observable)> {
    vec![
        ("sigma_z", Observable::atomic(pauli_z())),
        (
            "alpha_alpha_conj",
            Observable::field(2, vec![Monomial::new(ONE, vec![1], vec![1])]),
        ),
        (
            "sigma_minus_alpha_conj",
            Observable::new(sigma_minus(), vec![Monomial::new(ONE, vec![], vec![1])]),
        ),
    ]
}

/// Jaynes–Cummings chain against the truncated-Fock reference at t = 1..5. Returns the
/// evolved chain for the reformat check.
fn criterion_1() -> (Outcome, Option<ChainState>) {
    let spec = jaynes_cummings(1.0, 1.0, 0.2);
    let atom = [ONE, ZERO];
    let alpha0 = [ONE];
    let mut rng = SimRng::seed_from_u64(20240601);
    let sampler = SamplerParams::default();
    let mut chain = match initial_chain(
        coherent_bargmann(&atom, &alpha0),
        1,
        20_000,
        &sampler,
        &mut rng,
    ) {
        Ok(ch) => ch,
        Err(e) => return (outcome(false, format!("sampler: {e}")), None),
    };
    let mut reference =
        build_initial(&spec, &atom, &alpha0, &[16], 1e-8).expect("initial reference state");
    let params = StepParams::new(1e-3);
    let observables = jc_observables();
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for record in 1..=5 {
        for _ in 0..1000 {
            chain = match chain::step(&chain, &spec, &params) {
                Ok(ch) => ch,
                Err(e) => {
                    return (
                        outcome(
                            false,
                            format!("step failed at t = {:.3}: {e}", chain.time()),
                        ),
                        None,
                    )
                }
            };
        }
        let t = record as f64;
        reference = evolve_to(&reference, &spec, t, 1e-3).expect("reference evolution");
        for (name, obs) in &observables {
            let est = estimate(&chain, obs).expect("estimate");
            let exact = antinormal_expectation(&reference, obs).expect("reference expectation");
            let z = (est.value - exact).norm() / est.stderr;
            worst = worst.max(z);
            lines.push(format!(
                "      t={t} {name:<22} chain {:+.4}{:+.4}i  exact {:+.4}{:+.4}i  stderr {:.4}  z {z:.2}",
                est.value.re, est.value.im, exact.re, exact.im, est.stderr
            ));
        }
    }
    let quality = chain::chain_quality(&chain, params.delta_min);
    lines.push(format!(
        "      final max increment {:.3}, duplicate fraction {:.3}",
        quality.max_increment(),
        quality.duplicate_fraction
    ));
    (
        outcome(
            worst <= 5.0,
            format!(
                "worst deviation {worst:.2} stderr (limit 5)\n{}",
                lines.join("\n")
            ),
        ),
        Some(chain),
    )
}

/// Static-frequency classical current: every point follows the displaced-oscillator orbit.
fn criterion_2() -> Outcome {
    let (j, omega) = (0.5, 1.0);
    let spec = classical_current_model(&[(c(j, 0.0), omega)]).unwrap();
    let mut rng = SimRng::seed_from_u64(7);
    let mut chain = initial_chain(
        coherent_bargmann(&[ONE], &[ZERO]),
        1,
        2000,
        &SamplerParams::default(),
        &mut rng,
    )
    .unwrap();
    let start = chain.clone();
    let eps = 1e-3;
    let t_final = 2.0 * PI;
    let steps = (t_final / eps).round() as usize;
    let params = StepParams::new(eps);
    for _ in 0..steps {
        chain = chain::step(&chain, &spec, &params).unwrap();
    }
    let t = chain.time();
    // α(t) = α(0) - (J/ω)(e^{iωt} - 1)
    let shift = -(j / omega) * (Complex64::from_polar(1.0, omega * t) - ONE);
    let tol = 10.0 * eps * t_final;
    let worst_point = (0..chain.len())
        .map(|k| (chain.alpha(k)[0] - start.alpha(k)[0] - shift).norm())
        .fold(0.0, f64::max);
    let mean_obs = Observable::field(1, vec![Monomial::new(ONE, vec![1], vec![])]);
    let mean = estimate(&chain, &mean_obs).unwrap();
    let expected_mean = -(j / omega) * (Complex64::from_polar(1.0, omega * t_final) - ONE);
    let mean_err = (mean.value - expected_mean).norm();
    let mean_tol = (5.0 * mean.stderr).max(tol);
    outcome(
        worst_point <= tol && mean_err <= mean_tol,
        format!("mean error {mean_err:.2e} (limit {mean_tol:.2e}); worst point error {worst_point:.2e} (limit {tol:.2e})"),
    )
}

fn random_state(rng: &mut SimRng, cutoffs: Vec<usize>, decay: f64) -> FockCompositeState {
    let field: usize = cutoffs.iter().map(|c| c + 1).product();
    let strides: Vec<usize> = (0..cutoffs.len())
        .map(|m| cutoffs[m + 1..].iter().map(|c| c + 1).product())
        .collect();
    let mut amps = Vec::with_capacity(2 * field);
    for _ in 0..2 {
        for f in 0..field {
            let mut scale = 1.0;
            for (m, &cut) in cutoffs.iter().enumerate() {
                let n = (f / strides[m]) % (cut + 1);
                scale *= decay.powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>().sqrt();
            }
            amps.push(c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale);
        }
    }
    let norm = norm_sqr_slice(&amps).sqrt();
    amps.iter_mut().for_each(|z| *z /= norm);
    FockCompositeState::from_amplitudes(2, cutoffs, 0.0, 1e-8, amps).unwrap()
}

fn random_operator(rng: &mut SimRng) -> CMatrix {
    CMatrix::from_fn(2, 2, |_, _| {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// Phase-plane quadrature of `ψ(α)† F ψ(α)` against the antinormal expectation of `F ⊗ 1`.
fn criterion_3() -> Outcome {
    let mut rng = SimRng::seed_from_u64(3);
    let h: f64 = 0.04;
    let radius: f64 = 6.0;
    let steps = (radius / h).round() as i64;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let state = random_state(&mut rng, vec![14], 0.9);
        let f = random_operator(&mut rng);
        let mut integral = ZERO;
        for ix in -steps..=steps {
            for iy in -steps..=steps {
                let alpha = c(ix as f64 * h, iy as f64 * h);
                if alpha.norm() > radius {
                    continue;
                }
                let psi = coherent_amplitude(&state, &[alpha]).unwrap();
                let mut val = ZERO;
                for a in 0..2 {
                    for b in 0..2 {
                        val += psi[a].conj() * f[(a, b)] * psi[b];
                    }
                }
                integral += val;
            }
        }
        integral *= h * h / PI;
        let exact = antinormal_expectation(&state, &Observable::atomic(f)).unwrap();
        worst = worst.max((integral - exact).norm());
    }
    outcome(
        worst <= 1e-4,
        format!("worst |quadrature - exact| = {worst:.2e} over 5 states (limit 1e-4)"),
    )
}

/// Coherent projection equals the Gaussian-weighted Bargmann function.
fn criterion_4() -> Outcome {
    let mut rng = SimRng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let cutoffs = if i % 2 == 0 { vec![12] } else { vec![6, 5] };
        let state = random_state(&mut rng, cutoffs.clone(), 0.8);
        let alpha: Vec<Complex64> = cutoffs
            .iter()
            .map(|_| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        let conj: Vec<Complex64> = alpha.iter().map(|a| a.conj()).collect();
        let psi = coherent_amplitude(&state, &alpha).unwrap();
        let phi = bargmann_projection(&state, &conj).unwrap();
        let weight = (-0.5 * norm_sqr_slice(&alpha)).exp();
        for (x, y) in psi.iter().zip(&phi) {
            worst = worst.max((x - y * weight).norm());
        }
    }
    outcome(
        worst <= 1e-10,
        format!("worst mismatch {worst:.2e} over 100 cases (limit 1e-10)"),
    )
}

/// Finite-difference derivative along sampled chains of `e^{βα*} v`.
fn criterion_5() -> Outcome {
    let v = [c(0.6, 0.0), c(0.0, 0.8)];
    let mut details = Vec::new();
    let mut pass = true;
    for (i, beta) in [c(0.5, 0.0), c(1.0, 1.0)].into_iter().enumerate() {
        let b = [beta];
        let mut rng = SimRng::seed_from_u64(50 + i as u64);
        let chain = initial_chain(
            coherent_bargmann(&v, &b),
            1,
            2000,
            &SamplerParams::default(),
            &mut rng,
        )
        .unwrap();
        let n = chain.len();
        let mut worst_ratio = 0.0f64;
        for k in 0..n {
            let a = chain.alpha(k)[0];
            let next = (k + 1..n).find(|&l| chain.alpha(l)[0] != a);
            let prev = (0..k).rev().find(|&l| chain.alpha(l)[0] != a);
            let Some(nb) = next.or(prev) else { continue };
            let interior = next.is_some();
            let delta = (chain.alpha(nb)[0] - a).norm();
            let got = chain_derivative(&chain, k, 0, 1e-8).unwrap();
            let exact: Vec<Complex64> = v
                .iter()
                .map(|x| beta * (beta * a.conj()).exp() * x)
                .collect();
            let err = got
                .iter()
                .zip(&exact)
                .map(|(g, e)| (g - e).norm_sqr())
                .sum::<f64>()
                .sqrt()
                / norm_sqr_slice(&exact).sqrt();
            if interior {
                worst_ratio = worst_ratio.max(err / delta);
            }
        }
        // The last point differences backward against its nearest distinct predecessor.
        let last = n - 1;
        let prev = (0..last)
            .rev()
            .find(|&l| chain.alpha(l)[0] != chain.alpha(last)[0])
            .unwrap();
        let dconj = (chain.alpha(prev)[0] - chain.alpha(last)[0]).conj();
        let manual: Vec<Complex64> = (0..2)
            .map(|r| (chain.phi(prev)[r] - chain.phi(last)[r]) / dconj)
            .collect();
        let got = chain_derivative(&chain, last, 0, 1e-8).unwrap();
        let backward_ok = got
            .iter()
            .zip(&manual)
            .all(|(g, m)| (g - m).norm() <= 1e-12 * m.norm().max(1.0));
        pass &= worst_ratio <= 10.0 && backward_ok;
        details.push(format!("beta {beta}: max relative error / |Δα| = {worst_ratio:.3}, backward rule {backward_ok}"));
    }
    outcome(pass, details.join("; "))
}

/// The identity estimate is exactly one and every estimate ignores the scale of any `φ(k)`.
fn criterion_6(chain: Option<&ChainState>) -> Outcome {
    let fallback;
    let chain = match chain {
        Some(ch) => ch,
        None => {
            let mut rng = SimRng::seed_from_u64(6);
            fallback = initial_chain(
                coherent_bargmann(&[ONE, ZERO], &[ONE]),
                1,
                5000,
                &SamplerParams::default(),
                &mut rng,
            )
            .unwrap();
            &fallback
        }
    };
    let id = estimate(chain, &Observable::atomic(CMatrix::identity(2, 2))).unwrap();
    let exact_one = id.value == ONE && id.stderr == 0.0;
    let factor = Complex64::from_polar(3.0, PI / 7.0);
    let mut worst = 0.0f64;
    for k in [0, 1, chain.len() / 2, chain.len() - 1] {
        let scaled = chain.with_scaled_phi(k, factor).unwrap();
        for (_, obs) in jc_observables() {
            let before = estimate(chain, &obs).unwrap();
            let after = estimate(&scaled, &obs).unwrap();
            let rel = (before.value - after.value).norm() / before.value.norm().max(1.0);
            worst = worst.max(rel).max((before.stderr - after.stderr).abs());
        }
    }
    outcome(
        exact_one && worst <= 1e-12,
        format!(
            "identity = {} with stderr {}; largest change under rescaling {worst:.1e} (float rounding, limit 1e-12)",
            id.value, id.stderr
        ),
    )
}

/// Moments of the sampled coherent-state Q-function.
fn criterion_7() -> Outcome {
    let n = 20_000;
    let params = SamplerParams {
        step_cap: 3.0,
        thin: 16,
        ..SamplerParams::default()
    };
    let mut rng = SimRng::seed_from_u64(77);
    let chain = initial_chain(coherent_bargmann(&[ONE], &[ONE]), 1, n, &params, &mut rng).unwrap();
    let mean: Complex64 = chain.alphas().iter().sum::<Complex64>() / n as f64;
    let spread: f64 = chain
        .alphas()
        .iter()
        .map(|a| (a - ONE).norm_sqr())
        .sum::<f64>()
        / n as f64;
    let root = (n as f64).sqrt();
    let mean_err = (mean - ONE).norm();
    let spread_err = (spread - 1.0).abs();
    outcome(
        mean_err <= 4.0 / root && spread_err <= 5.0 / root,
        format!(
            "|mean α - 1| = {mean_err:.4} (limit {:.4}); |mean |α-1|² - 1| = {spread_err:.4} (limit {:.4})",
            4.0 / root,
            5.0 / root
        ),
    )
}

/// Reformatting the evolved chain either preserves the standard estimates or says it did not.
fn criterion_8(chain: Option<&ChainState>) -> Outcome {
    let Some(chain) = chain else {
        return outcome(false, "no evolved chain available");
    };
    let suite = standard_observables(chain.dim(), chain.n_modes());
    let params = ReformatParams::default();
    let mut rng = SimRng::seed_from_u64(88);
    match reformat(chain, &params, &suite, &mut rng) {
        Ok(fresh) => {
            let mut worst = 0.0f64;
            for (_, obs) in &suite {
                let pre = estimate(chain, obs).unwrap();
                let post = estimate(&fresh, obs).unwrap();
                let z = (pre.value - post.value).norm() / pre.stderr.hypot(post.stderr);
                worst = worst.max(z);
            }
            outcome(
                worst <= 3.0,
                format!("reformat accepted; worst shift {worst:.2} combined stderr (limit 3)"),
            )
        }
        Err(ChainError::InterpolationDegraded {
            observable,
            shift,
            tolerance,
        }) => outcome(
            shift > tolerance,
            format!("reformat refused: {observable} would shift by {shift:.3e} > {tolerance:.3e}"),
        ),
        Err(e) => outcome(false, format!("reformat failed: {e}")),
    }
}

fn report(index: usize, title: &str, started: Instant, out: &Outcome) -> bool {
    println!(
        "criterion {index} {title}: {} ({:.1}s) - {}",
        if out.pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64(),
        out.detail
    );
    out.pass
}

fn main() {
    let mut all = true;

    let t = Instant::now();
    let (c1, evolved) = criterion_1();
    all &= report(1, "Jaynes-Cummings chain vs Fock reference", t, &c1);

    let t = Instant::now();
    all &= report(2, "classical current closed form", t, &criterion_2());

    let t = Instant::now();
    all &= report(
        3,
        "phase-plane quadrature vs antinormal expectation",
        t,
        &criterion_3(),
    );

    let t = Instant::now();
    all &= report(4, "coherent projection factorization", t, &criterion_4());

    let t = Instant::now();
    all &= report(5, "chain derivative accuracy", t, &criterion_5());

    let t = Instant::now();
    all &= report(6, "estimator identities", t, &criterion_6(evolved.as_ref()));

    let t = Instant::now();
    all &= report(7, "sampler moments", t, &criterion_7());

    let t = Instant::now();
    all &= report(8, "reformat safety", t, &criterion_8(evolved.as_ref()));

    if !all {
        eprintln!("acceptance: at least one criterion failed");
        std::process::exit(1);
    }
}
