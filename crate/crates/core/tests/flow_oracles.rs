mod common;

use common::{affine_flow, central_jacobian, v, HYGIENE_FIELDS};
use kcycle::flow::{flow_sensitivity, integrate_flow};
use kcycle::linear::LinearSystem;
use kcycle::{IntegratorConfig, VectorField};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point(rng: &mut ChaCha8Rng, n: usize, r: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-r..r))
}

fn hygiene_fields() -> Vec<VectorField> {
    HYGIENE_FIELDS
        .iter()
        .map(|&(s, n)| VectorField::parse(s, n).unwrap())
        .collect()
}

#[test]
fn relaxation_endpoint_and_sensitivity() {
    let f = VectorField::parse("1 - x1", 1).unwrap();
    let cfg = IntegratorConfig::default();
    let r = flow_sensitivity(&f, &v(&[0.0]), 0.1, &cfg).unwrap();
    let exact = 1.0 - (-0.1_f64).exp();
    assert!((r.endpoint[0] - exact).abs() < 1e-12);
    assert!((r.endpoint[0] - 0.09516258).abs() < 1e-8);
    // the sensitivity does not depend on the start point
    for x in [-3.0, 0.5, 10.0] {
        let s = flow_sensitivity(&f, &v(&[x]), 0.1, &cfg).unwrap();
        assert!((s.sensitivity.unwrap()[(0, 0)] - 0.90483742).abs() < 1e-8);
    }
}

#[test]
fn semigroup_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = IntegratorConfig::default();
    let fields = hygiene_fields();
    for trial in 0..50 {
        let f = &fields[trial % fields.len()];
        let x = random_point(&mut rng, f.dimension(), 1.0);
        let s = rng.gen_range(-0.5..0.5);
        let t = rng.gen_range(-0.5..0.5);
        let composed = integrate_flow(
            f,
            &integrate_flow(f, &x, s, &cfg).unwrap().endpoint,
            t,
            &cfg,
        )
        .unwrap()
        .endpoint;
        let direct = integrate_flow(f, &x, s + t, &cfg).unwrap().endpoint;
        let gap = (composed - direct).norm();
        assert!(gap <= 1e-8, "trial {trial}: gap {gap}");
    }
}

#[test]
fn sensitivity_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = IntegratorConfig::default();
    for f in hygiene_fields() {
        for _ in 0..5 {
            let x = random_point(&mut rng, f.dimension(), 1.0);
            let t = rng.gen_range(-0.5..0.5);
            let sens = flow_sensitivity(&f, &x, t, &cfg)
                .unwrap()
                .sensitivity
                .unwrap();
            let fd = central_jacobian(
                |p| integrate_flow(&f, p, t, &cfg).unwrap().endpoint,
                &x,
                1e-6,
            );
            let err = (&sens - &fd).amax();
            assert!(err <= 1e-6, "{} at {x}, t={t}: {err}", f.unparse());
        }
    }
}

#[test]
fn chain_rule_for_composed_legs() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = IntegratorConfig::default();
    for f in hygiene_fields() {
        let x = random_point(&mut rng, f.dimension(), 1.0);
        let (s, t) = (rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5));
        let first = flow_sensitivity(&f, &x, s, &cfg).unwrap();
        let second = flow_sensitivity(&f, &first.endpoint, t, &cfg).unwrap();
        let whole = flow_sensitivity(&f, &x, s + t, &cfg).unwrap();
        let product = second.sensitivity.unwrap() * first.sensitivity.unwrap();
        let err = (product - whole.sensitivity.unwrap()).amax();
        assert!(err <= 1e-8, "{}: {err}", f.unparse());
    }
}

#[test]
fn affine_fields_match_matrix_exponential() {
    let cfg = IntegratorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for seed in 0..24 {
        let n = 1 + seed as usize % 4;
        let sys = LinearSystem::generate(seed, n, 2);
        let field = &sys.fields()[0];
        let (a, b) = (&sys.matrices[0], &sys.offsets[0]);
        let x = random_point(&mut rng, n, 1.0);
        let t = rng.gen_range(-1.0..1.0);
        let (e, g) = affine_flow(a, b, t);
        let exact = &e * &x + g;
        let r = flow_sensitivity(field, &x, t, &cfg).unwrap();
        let rel = (&r.endpoint - &exact).amax() / exact.amax().max(1.0);
        assert!(rel <= 1e-9, "seed {seed}: relative error {rel}");
        let sens_err = (r.sensitivity.unwrap() - &e).amax() / e.amax();
        assert!(
            sens_err <= 1e-9,
            "seed {seed}: sensitivity error {sens_err}"
        );
    }
}

#[test]
fn rotation_examples() {
    let f = VectorField::parse("x2; -x1", 2).unwrap();
    let cfg = IntegratorConfig::default();
    let quarter = integrate_flow(&f, &v(&[1.0, 0.0]), std::f64::consts::FRAC_PI_2, &cfg).unwrap();
    assert!((quarter.endpoint - v(&[0.0, -1.0])).amax() < 1e-9);
    let t = 0.3_f64;
    let r = flow_sensitivity(&f, &v(&[2.0, -1.0]), t, &cfg).unwrap();
    let rot = DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
    assert!((r.sensitivity.unwrap() - rot).amax() < 1e-10);
}

#[test]
fn local_error_estimate_within_tolerance() {
    let cfg = IntegratorConfig::default();
    for f in hygiene_fields() {
        let x = DVector::from_element(f.dimension(), 0.3);
        let r = flow_sensitivity(&f, &x, 0.8, &cfg).unwrap();
        assert!(r.est_local_error <= 1.0);
        assert!(r.steps_taken >= 1);
    }
}
