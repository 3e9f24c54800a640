mod common;

use common::{affine_cycle, central_jacobian, cofactor_det, parse_all, v};
use kcycle::cycle::{
    average_velocity, check_closure, cycle_jacobian, cycle_residual, solve_cycle, sweep_delta,
    CLOSURE_FACTOR,
};
use kcycle::linear::LinearSystem;
use kcycle::{CycleError, CyclePoints, IntegratorConfig, SweepConfig, Weights};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pair() -> Vec<kcycle::VectorField> {
    parse_all(&["1 - x1", "-1 - x1"], 1)
}

#[test]
fn pair_cycle_matches_closed_form() {
    let cfg = IntegratorConfig::default();
    let half = Weights::uniform(2);
    for delta in [0.8, 0.4, 0.2, 0.1, 0.05] {
        let seed = CyclePoints::constant(&v(&[0.0]), 2).unwrap();
        let c = solve_cycle(&pair(), &half, &seed, delta, 1e-12, &cfg).unwrap();
        let a = (delta / 4.0_f64).tanh();
        assert!(
            (c.points.points()[0][0] + a).abs() <= 1e-11,
            "delta {delta}"
        );
        assert!(
            (c.points.points()[1][0] - a).abs() <= 1e-11,
            "delta {delta}"
        );
        assert_eq!(c.leg_times, vec![delta / 2.0, delta / 2.0]);
    }
}

#[test]
fn random_linear_cycles_match_dense_solve() {
    let cfg = IntegratorConfig::default();
    for seed in 0..12u64 {
        let n = 1 + seed as usize % 3;
        let k = 2 + seed as usize % 3;
        let sys = LinearSystem::generate(500 + seed, n, k);
        let fields = sys.fields();
        let start = CyclePoints::constant(&sys.x0, k).unwrap();
        let c = solve_cycle(&fields, &sys.weights, &start, 0.1, 1e-12, &cfg).unwrap();
        for (got, want) in c.points.points().iter().zip(affine_cycle(&sys, 0.1)) {
            let err = (got - &want).amax();
            assert!(err <= 1e-9, "seed {seed}: {err}");
        }
    }
}

#[test]
fn jacobian_matches_finite_differences_of_the_residual() {
    let cfg = IntegratorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let fields = parse_all(
        &[
            "x2 - 0.2*x1^3; sin(x1) - 0.5*x2",
            "1 - x1; cos(x1) - x2",
            "-1 + 0.3*x2; -x2 + x1^2",
        ],
        2,
    );
    let w = Weights::new(vec![0.25, 0.35, 0.4]).unwrap();
    for delta in [0.05, 0.3] {
        let z = DVector::from_fn(6, |_, _| rng.gen_range(-0.5..0.5));
        let pts = CyclePoints::from_stacked(&z, 3).unwrap();
        let exact = cycle_jacobian(&fields, &w, &pts, delta, &cfg).unwrap();
        let fd = central_jacobian(
            |p| {
                let q = CyclePoints::from_stacked(p, 3).unwrap();
                cycle_residual(&fields, &w, &q, delta, &cfg).unwrap()
            },
            &z,
            1e-6,
        );
        let err = (&exact - &fd).amax();
        assert!(err <= 1e-5, "delta {delta}: {err}");
    }
}

#[test]
fn small_delta_jacobian_approaches_the_analytic_matrix() {
    let cfg = IntegratorConfig::default();
    let fields = parse_all(&["1; 0", "0; 1", "-1 - x1; -1 - x2 + x1"], 2);
    let w = Weights::uniform(3);
    let pts = CyclePoints::constant(&v(&[0.0, 0.0]), 3).unwrap();
    let at_zero = cycle_jacobian(&fields, &w, &pts, 0.0, &cfg).unwrap();
    let near = cycle_jacobian(&fields, &w, &pts, 1e-6, &cfg).unwrap();
    assert!((&at_zero - &near).amax() <= 1e-5);
    // the residual limit is the weighted field sum
    let r0 = cycle_residual(&fields, &w, &pts, 0.0, &cfg).unwrap();
    assert!(r0.amax() <= 1e-15);
}

#[test]
fn block_determinant_equals_weighted_jacobian_determinant() {
    let cfg = IntegratorConfig::default();
    for seed in 0..10u64 {
        let n = 1 + seed as usize % 2;
        let k = 2 + seed as usize % 2;
        let sys = LinearSystem::generate(600 + seed, n, k);
        let pts = CyclePoints::constant(&sys.x0, k).unwrap();
        let block = cycle_jacobian(&sys.fields(), &sys.weights, &pts, 0.0, &cfg).unwrap();
        let big = cofactor_det(&block).abs();
        let small = cofactor_det(&sys.weighted_matrix()).abs();
        assert!(
            (big - small).abs() <= 1e-12 * small.max(1.0),
            "seed {seed}: {big} vs {small}"
        );
    }
}

#[test]
fn average_velocity_telescopes_to_the_closing_gap() {
    // with every chain block zero, delta * A = x_1-side closure mismatch
    let cfg = IntegratorConfig::default();
    let fields = parse_all(&["x2; -x1 + 0.5", "1 - x1; -x2", "sin(x2); -1"], 2);
    let w = Weights::new(vec![0.5, 0.3, 0.2]).unwrap();
    let delta = 0.4;
    let seed = CyclePoints::constant(&v(&[0.1, 0.2]), 3).unwrap();
    let c = solve_cycle(&fields, &w, &seed, delta, 1e-12, &cfg).unwrap();
    let a = average_velocity(&fields, &w, &c.points, delta, &cfg).unwrap();
    assert!(a.amax() <= 1e-12);
    assert!(c.closure_residual <= 1e-10);

    // an arbitrary chain: sum_j (F_j - x_j) collapses to the last endpoint
    // minus the first point once the chain blocks vanish
    let mut pts = vec![v(&[0.3, -0.1])];
    for j in 0..2 {
        let end = kcycle::flow::integrate_flow(&fields[j], &pts[j], delta * w.as_slice()[j], &cfg)
            .unwrap()
            .endpoint;
        pts.push(end);
    }
    let chain = CyclePoints::new(pts.clone()).unwrap();
    let last = kcycle::flow::integrate_flow(&fields[2], &pts[2], delta * w.as_slice()[2], &cfg)
        .unwrap()
        .endpoint;
    let a = average_velocity(&fields, &w, &chain, delta, &cfg).unwrap();
    let gap = (last - &pts[0]) / delta;
    assert!((a - gap).amax() <= 1e-10);
}

#[test]
fn pair_sweep_distance_is_tanh_quarter_delta() {
    let cfg = IntegratorConfig::default();
    let sweep = SweepConfig::geometric(0.8, 32);
    let res = sweep_delta(
        &pair(),
        &Weights::uniform(2),
        &v(&[0.0]),
        &sweep,
        1e-12,
        &cfg,
    )
    .unwrap();
    assert!(res.reached_target());
    assert_eq!(res.records.len(), 32);
    for r in &res.records {
        let exact = (r.delta / 4.0).tanh();
        assert!((r.max_distance_to_x0 - exact).abs() <= 1e-11);
    }
    let smallest = &res.records[0];
    assert!((smallest.max_distance_to_x0 / smallest.delta - 0.25).abs() <= 1e-6);
    assert!(res.tail_is_monotone(8));
    let slope = res.loglog_slope(8).unwrap();
    assert!((slope - 1.0).abs() <= 1e-4, "slope {slope}");
}

#[test]
fn oversized_sweep_reports_how_far_it_got() {
    let cfg = IntegratorConfig::default();
    let fields = parse_all(&["x2; -x1 + 0.1*x1^3", "1 - x1^2; -x2"], 2);
    let w = Weights::uniform(2);
    let x0 = kcycle::stasis::find_stasis(&fields, &w, &v(&[0.5, 0.5]), 1e-12)
        .map(|s| s.x0)
        .unwrap_or_else(|_| v(&[0.0, 0.0]));
    match sweep_delta(
        &fields,
        &w,
        &x0,
        &SweepConfig::geometric(1e3, 24),
        1e-10,
        &cfg,
    ) {
        Ok(res) => {
            assert!(res.largest_delta > 0.0 && res.largest_delta <= 1e3);
            if !res.reached_target() {
                assert!(res.largest_delta < 1e3);
            }
        }
        Err(CycleError::BranchLostAtStart { .. }) => {}
        Err(e) => panic!("unexpected {e}"),
    }
}

#[test]
fn pair_sweep_to_huge_delta_does_not_error() {
    let cfg = IntegratorConfig::default();
    let res = sweep_delta(
        &pair(),
        &Weights::uniform(2),
        &v(&[0.0]),
        &SweepConfig::geometric(1e3, 16),
        1e-10,
        &cfg,
    )
    .unwrap();
    assert!(res.largest_delta > 0.0);
    assert_eq!(res.reached_target(), res.largest_delta == 1e3);
}

#[test]
fn closure_holds_under_tighter_integration() {
    let cfg = IntegratorConfig::default();
    let sys = LinearSystem::generate(42, 3, 4);
    let fields = sys.fields();
    let seed = CyclePoints::constant(&sys.x0, 4).unwrap();
    let tol = 1e-10;
    let c = solve_cycle(&fields, &sys.weights, &seed, 0.2, tol, &cfg).unwrap();
    let check = check_closure(&fields, &sys.weights, &c, &cfg.tightened(10.0)).unwrap();
    assert!(check.closure <= CLOSURE_FACTOR * tol, "{}", check.closure);
}

#[test]
fn perturbed_chain_point_shows_in_the_residual() {
    let cfg = IntegratorConfig::default();
    let fields = pair();
    let w = Weights::uniform(2);
    let delta = 0.2;
    let seed = CyclePoints::constant(&v(&[0.0]), 2).unwrap();
    let c = solve_cycle(&fields, &w, &seed, delta, 1e-12, &cfg).unwrap();
    let mut z = c.points.stacked();
    z[1] += 1e-3;
    let bumped = CyclePoints::from_stacked(&z, 2).unwrap();
    let r = cycle_residual(&fields, &w, &bumped, delta, &cfg).unwrap();
    assert!((r[1] + 1e-3).abs() <= 1e-12);
    // leg 2 relaxes toward -1 at rate 1: its endpoint moves by e^{-delta/2} * 1e-3
    let expected_top = ((-delta / 2.0).exp() - 1.0) * 1e-3 / delta;
    assert!(
        (r[0] - expected_top).abs() <= 1e-12,
        "{} vs {expected_top}",
        r[0]
    );
}

#[test]
fn opposite_constant_fields_have_a_singular_cycle_system() {
    let cfg = IntegratorConfig::default();
    let fields = parse_all(&["1", "-1"], 1);
    let seed = CyclePoints::constant(&v(&[0.0]), 2).unwrap();
    let j = cycle_jacobian(&fields, &Weights::uniform(2), &seed, 0.0, &cfg).unwrap();
    assert_eq!(cofactor_det(&j), 0.0);
    let err = solve_cycle(&fields, &Weights::uniform(2), &seed, 0.1, 1e-10, &cfg).unwrap_err();
    assert!(matches!(err, CycleError::SingularJacobian { .. }), "{err}");
}
