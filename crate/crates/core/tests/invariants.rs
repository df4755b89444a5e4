//! Structural invariants of the linear algebra, the model, the chain update and the run output.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;

use semiclassical::chain::{
    batch_means, chain_derivative, coherent_bargmann, drift_velocity, estimate, initial_chain,
    step, ChainState, Monomial, Observable, SamplerParams, SimRng, StepParams,
};
use semiclassical::config::{validate_config, Overrides};
use semiclassical::hilbert::{inner, mat_exp_action, CMatrix, CVector};
use semiclassical::model::{jaynes_cummings, FieldMode, ModelSpec};
use semiclassical::oracle::{bargmann_projection, build_initial, evolve_to};
use semiclassical::runner;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| c(a, b))
}

fn cvector(len: usize) -> impl Strategy<Value = CVector> {
    prop::collection::vec(complex(), len).prop_map(CVector::from_vec)
}

fn hermitian(d: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec(complex(), d * d).prop_map(move |v| {
        let a = CMatrix::from_vec(d, d, v);
        (&a + a.adjoint()) * c(0.5, 0.0)
    })
}

/// Singular values in decreasing order.
fn singular_values(a: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = a
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn inner_product_is_conjugate_symmetric(u in cvector(6), v in cvector(6)) {
        let uv = inner(&u, &v).unwrap();
        let vu = inner(&v, &u).unwrap();
        prop_assert!((uv - vu.conj()).norm() < 1e-14);
    }

    #[test]
    fn hermitian_evolution_preserves_norm(h in hermitian(6), v in cvector(6), t in -5.0..5.0f64) {
        let generator = h * c(0.0, -1.0);
        let out = mat_exp_action(&generator, t, &v).unwrap();
        prop_assert!((out.norm() - v.norm()).abs() < 1e-9);
    }

    #[test]
    fn exponential_action_is_a_semigroup(h in hermitian(5), v in cvector(5), s1 in -2.0..2.0f64, s2 in -2.0..2.0f64) {
        let a = h * c(0.3, -1.0);
        let joint = mat_exp_action(&a, s1 + s2, &v).unwrap();
        let split = mat_exp_action(&a, s1, &mat_exp_action(&a, s2, &v).unwrap()).unwrap();
        prop_assert!((joint - split).norm() < 1e-9 * (1.0 + v.norm()));
    }

    #[test]
    fn rotated_current_keeps_its_singular_values(
        h0 in hermitian(3),
        current in prop::collection::vec(complex(), 9),
        omega in 0.1..3.0f64,
        t in -20.0..20.0f64,
    ) {
        let current = CMatrix::from_vec(3, 3, current);
        let expected = singular_values(&current);
        let spec = ModelSpec::new(h0, vec![FieldMode::new(omega, current)]).unwrap();
        let rotated = spec.rotated_current(0, t).unwrap();
        for (a, b) in singular_values(&rotated).iter().zip(&expected) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn drift_ignores_state_scale(
        phi in prop::collection::vec(complex(), 2),
        factor in complex(),
        t in 0.0..10.0f64,
    ) {
        prop_assume!(phi.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3 && factor.norm() > 1e-3);
        let spec = jaynes_cummings(1.3, 1.0, 0.4);
        let scaled: Vec<Complex64> = phi.iter().map(|z| z * factor).collect();
        let a = drift_velocity(&phi, t, &spec).unwrap();
        let b = drift_velocity(&scaled, t, &spec).unwrap();
        prop_assert!((a[0] - b[0]).norm() < 1e-12 * (1.0 + a[0].norm()));
    }
}

fn jc_chain(seed: u64, n: usize, beta: Complex64) -> ChainState {
    let atomic = [c(1.0, 0.0), c(0.0, 0.0)];
    let mut rng = SimRng::seed_from_u64(seed);
    initial_chain(
        coherent_bargmann(&atomic, &[beta]),
        1,
        n,
        &SamplerParams::default(),
        &mut rng,
    )
    .unwrap()
}

#[test]
fn derivative_matches_entire_functions() {
    // φ(α*) = (e^{b α*}, 1 + α*² - 0.5 α*³) on a sampled chain; errors scale with the spacing.
    let chain = jc_chain(3, 2000, c(0.5, 0.2));
    let b = c(0.8, -0.3);
    let phis: Vec<Complex64> = (0..chain.len())
        .flat_map(|k| {
            let z = chain.alpha(k)[0].conj();
            [(b * z).exp(), 1.0 + z * z - 0.5 * z * z * z]
        })
        .collect();
    let chain = ChainState::new(0.0, 1, 2, chain.alphas().to_vec(), phis).unwrap();
    let mut checked = 0;
    for k in 0..chain.len() {
        let z = chain.alpha(k)[0].conj();
        let Some(spacing) = (k + 1..chain.len())
            .map(|j| (chain.alpha(j)[0] - chain.alpha(k)[0]).norm())
            .find(|d| *d > 0.0)
        else {
            continue;
        };
        let d = chain_derivative(&chain, k, 0, 1e-8).unwrap();
        let exact = [b * (b * z).exp(), 2.0 * z - 1.5 * z * z];
        for (got, want) in d.iter().zip(&exact) {
            assert!(
                (got - want).norm() <= 10.0 * spacing * want.norm().max(1.0),
                "point {k}: {got} vs {want}, spacing {spacing}"
            );
        }
        checked += 1;
    }
    assert!(checked > 1000);
}

#[test]
fn chain_states_follow_the_exact_bargmann_function() {
    // Chains sampled with different seeds visit different α*; each point must carry the exact
    // reference state's Bargmann function at its current coordinate, with one global scale.
    let beta = c(1.0, 0.0);
    let spec = jaynes_cummings(1.0, 1.0, 0.2);
    let reference =
        build_initial(&spec, &[c(1.0, 0.0), c(0.0, 0.0)], &[beta], &[20], 1e-8).unwrap();
    let t_final = 0.5;
    let reference = evolve_to(&reference, &spec, t_final, 1e-3).unwrap();
    let scale = (0.5 * beta.norm_sqr()).exp();
    let params = StepParams::new(1e-3);
    for seed in [1, 2] {
        let mut chain = jc_chain(seed, 2000, beta);
        for _ in 0..500 {
            chain = step(&chain, &spec, &params).unwrap();
        }
        let mut errors: Vec<f64> = (0..chain.len())
            .map(|k| {
                let exact = bargmann_projection(&reference, &[chain.alpha(k)[0].conj()]).unwrap();
                let phi = chain.phi(k);
                let num: f64 = phi
                    .iter()
                    .zip(&exact)
                    .map(|(p, e)| (p - e * scale).norm_sqr())
                    .sum();
                let den: f64 = exact.iter().map(|e| (e * scale).norm_sqr()).sum();
                (num / den).sqrt()
            })
            .collect();
        errors.sort_by(|a, b| a.total_cmp(b));
        let median = errors[errors.len() / 2];
        let p90 = errors[errors.len() * 9 / 10];
        eprintln!("seed {seed}: median relative error {median:.2e}, 90th percentile {p90:.2e}");
        assert!(median < 5e-3, "median {median}");
        assert!(p90 < 2e-2, "90th percentile {p90}");
    }
}

#[test]
fn mean_displacement_matches_mean_drift() {
    let spec = jaynes_cummings(1.0, 1.0, 0.2);
    let chain = jc_chain(5, 4000, c(0.7, 0.4));
    let eps = 1e-3;
    let t = chain.time();
    let drifts: Vec<Complex64> = (0..chain.len())
        .map(|k| drift_velocity(chain.phi(k), t, &spec).unwrap()[0])
        .collect();
    let (mean_drift, drift_err) = batch_means(&drifts, 32);
    let alpha = Observable::field(2, vec![Monomial::new(c(1.0, 0.0), vec![1], vec![])]);
    let before = estimate(&chain, &alpha).unwrap().value;
    let after = estimate(&step(&chain, &spec, &StepParams::new(eps)).unwrap(), &alpha)
        .unwrap()
        .value;
    let moment_rate = (after - before) / eps;
    let plain: Complex64 = drifts.iter().sum::<Complex64>() / drifts.len() as f64;
    assert!(
        (moment_rate - plain).norm() < 1e-9,
        "{moment_rate} vs {plain}"
    );
    assert!(
        (moment_rate - mean_drift).norm() <= 5.0 * drift_err,
        "{moment_rate} vs {mean_drift} ± {drift_err}"
    );
}

#[test]
fn scalar_atom_gives_identical_displacements() {
    // d = 1 with a time-dependent scalar current after many steps.
    let spec = ModelSpec::new(
        CMatrix::from_element(1, 1, c(0.7, 0.0)),
        vec![FieldMode::new(
            1.3,
            CMatrix::from_element(1, 1, c(0.4, -0.2)),
        )],
    )
    .unwrap();
    let start = jc_chain(9, 500, c(0.3, 0.0));
    let phis: Vec<Complex64> = (0..start.len()).map(|k| start.phi(k)[0]).collect();
    let mut chain = ChainState::new(0.0, 1, 1, start.alphas().to_vec(), phis).unwrap();
    let initial = chain.alphas().to_vec();
    for _ in 0..2000 {
        chain = step(&chain, &spec, &StepParams::new(1e-3)).unwrap();
    }
    let shift = chain.alpha(0)[0] - initial[0];
    assert!(shift.norm() > 0.1);
    for (k, start) in initial.iter().enumerate() {
        assert!((chain.alpha(k)[0] - start - shift).norm() < 1e-12);
    }
    let z = Observable::atomic(CMatrix::identity(1, 1));
    assert_eq!(estimate(&chain, &z).unwrap().value, c(1.0, 0.0));
}

#[test]
fn manifest_lists_every_applied_default() {
    let dir = tempfile::tempdir().unwrap();
    let raw = r#"
seed = 3
[model]
h0 = [[[0, 0]]]
[[model.modes]]
omega = 1.0
current = [[[0.5, 0]]]
[initial]
atomic = [[1, 0]]
alpha0 = [[0, 0]]
[chain]
n = 200
[schedule]
t_final = 0.01
"#;
    let overrides = Overrides {
        seed: None,
        out_dir: Some(dir.path().to_path_buf()),
    };
    let config = validate_config(raw, &overrides).unwrap();
    runner::run(&config, None).unwrap();
    let manifest: toml::Table = std::fs::read_to_string(dir.path().join(runner::MANIFEST_FILE))
        .unwrap()
        .parse()
        .unwrap();
    let written = manifest["config"].as_table().unwrap();
    let expected: toml::Table = config.to_toml().parse().unwrap();
    assert_eq!(written, &expected);
    for key in [
        "eps",
        "step_cap",
        "delta_min",
        "burn_in",
        "thin",
        "batches",
        "reformat",
        "gate_sigma",
        "transport",
    ] {
        assert!(
            written["chain"].as_table().unwrap().contains_key(key),
            "chain.{key} missing"
        );
    }
    for key in ["cutoffs", "dt", "tail_threshold"] {
        assert!(
            written["oracle"].as_table().unwrap().contains_key(key),
            "oracle.{key} missing"
        );
    }
    assert!(written["schedule"]
        .as_table()
        .unwrap()
        .contains_key("record_every"));
    assert!(!written["observables"].as_array().unwrap().is_empty());
    let reparsed =
        validate_config(&toml::to_string(written).unwrap(), &Overrides::default()).unwrap();
    assert_eq!(reparsed, config);
}
