mod common;

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use demailly::model::{
    build_curvature, cone_margin, residual, BundleSpec, CurvaturePerturbation, State,
};
use demailly::solvers::{newton_at_t, picard_step, solve_helmholtz, solve_t0, u_step, v_step};
use demailly::{closed_form_state, Error, Grid, ScalarField};

use common::{closed_form_f, params, reference_problem, smooth_field};

fn is_constant(field: &ScalarField, value: f64, tol: f64) -> bool {
    field.values().iter().all(|v| (v - value).abs() <= tol)
}

#[test]
fn t0_constant_reference() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    assert!(is_constant(&p.initial.f, 0.0, 0.0));
    assert!(is_constant(&p.initial.u[0], 0.25, 1e-14));
    assert!(is_constant(&p.initial.u[1], -0.25, 1e-14));
    assert!(is_constant(&p.params.a0, 10.25 * 10.75, 1e-12));
    assert_eq!(p.params.alpha0, 10.0);
    assert_eq!(p.params.lambda, 8.0);
}

#[test]
fn t0_rank_one() {
    let spec = BundleSpec::constant(vec![5]).unwrap();
    let grid = Grid::new(16, 5.0).unwrap();
    let curv = build_curvature(&spec, &grid).unwrap();
    let (state, prm) = solve_t0(&curv, &params(None, Some(3.0)), &grid).unwrap();
    assert!(is_constant(&state.u[0], 0.0, 0.0));
    assert!(is_constant(&prm.a0, 4.0, 1e-15));
    assert_eq!(prm.lambda, 6.0);
}

#[test]
fn t0_equal_degrees_cosine_pair() {
    let spec = BundleSpec::new(vec![2, 2], CurvaturePerturbation::cosine(0.3)).unwrap();
    let grid = Grid::new(32, 4.0).unwrap();
    let curv = build_curvature(&spec, &grid).unwrap();
    let (state, prm) = solve_t0(&curv, &params(None, None), &grid).unwrap();
    let one = ScalarField::constant(&grid, 1.0);
    let expected = solve_helmholtz(&one, &curv.s[0]).unwrap();
    assert!(state.u[0].sub(&expected).sup_norm() < 1e-14);
    assert!(state.u[1].add(&state.u[0]).sup_norm() < 1e-14);
    assert!(residual(&state, &curv, &prm).unwrap().sup_norm() <= 1e-10);
    // the α0 rule
    assert!(prm.alpha0 >= 2.0 && prm.alpha0 >= 2.0 * state.u[0].sup_norm());
}

#[test]
fn t0_alpha0_is_raised_for_large_potentials() {
    let spec = BundleSpec::new(vec![1, 1], CurvaturePerturbation::cosine(40.0)).unwrap();
    let grid = Grid::new(16, 2.0).unwrap();
    let curv = build_curvature(&spec, &grid).unwrap();
    let (state, prm) = solve_t0(&curv, &params(None, Some(1.5)), &grid).unwrap();
    let u_sup = state
        .u
        .iter()
        .map(ScalarField::sup_norm)
        .fold(0.0, f64::max);
    assert!(u_sup > 1.0);
    assert_eq!(prm.alpha0, 2.0 * u_sup);
    assert!(prm.a0.min() > 0.0);
}

#[test]
fn t0_rejects_small_lambda() {
    let spec = BundleSpec::constant(vec![1, 3]).unwrap();
    let grid = Grid::new(16, 4.0).unwrap();
    let curv = build_curvature(&spec, &grid).unwrap();
    for lambda in [2.0, 1.0, -3.0] {
        let err = solve_t0(&curv, &params(Some(lambda), None), &grid).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
    }
}

#[test]
fn v_step_constant_examples() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    let zero = ScalarField::zeros(&p.grid);
    let u = v_step(&zero, &p.curv, 1.0).unwrap();
    assert!(is_constant(&u[0], 0.25, 1e-14) && is_constant(&u[1], -0.25, 1e-14));
    let c = -0.6;
    let u = v_step(&ScalarField::constant(&p.grid, c), &p.curv, 1.0).unwrap();
    assert!(is_constant(&u[0], 0.25 * (-c).exp(), 1e-14));
    assert!(is_constant(&u[1], -0.25 * (-c).exp(), 1e-14));
}

#[test]
fn v_step_trace_and_identity_for_rough_f() {
    let spec = BundleSpec::new(vec![1, 2, 5], CurvaturePerturbation::cosine(0.4)).unwrap();
    let grid = Grid::new(32, 8.0).unwrap();
    let curv = build_curvature(&spec, &grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let f = smooth_field(&grid, &mut rng, 4, 1.5);
        let u = v_step(&f, &curv, 1.0).unwrap();
        let mut sum = ScalarField::zeros(&grid);
        for ui in &u {
            sum = sum.add(ui);
        }
        assert!(sum.sup_norm() <= 1e-10);
        let ef = f.map(f64::exp);
        for (ui, d) in u.iter().zip([1.0, 2.0, 5.0]) {
            assert!((ef.mul(ui).integrate() - (8.0 / 3.0 - d)).abs() <= 1e-8);
        }
    }
}

#[test]
fn u_step_rank_one_constant() {
    let spec = BundleSpec::constant(vec![5]).unwrap();
    let grid = Grid::new(16, 5.0).unwrap();
    let curv = build_curvature(&spec, &grid).unwrap();
    let (_, prm) = solve_t0(&curv, &params(None, Some(4.0)), &grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f_in = smooth_field(&grid, &mut rng, 2, 0.02);
    let u = vec![ScalarField::zeros(&grid)];
    for t in [0.0, 0.4, 0.9] {
        let big_u = u_step(&f_in, &u, t, &curv, &prm).unwrap();
        let expected = ((1.0 + (1.0 - t) * 4.0) / 5.0f64).ln() / prm.lambda;
        assert!(is_constant(&big_u, expected, 1e-9), "t = {t}");
    }
}

#[test]
fn u_step_reproduces_closed_form_f() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    for t in [0.0, 0.5, 0.9] {
        let exact = closed_form_state(&p.spec, &p.params, &p.grid, t).unwrap();
        let big_u = u_step(&exact.f, &exact.u, t, &p.curv, &p.params).unwrap();
        assert!(
            is_constant(&big_u, closed_form_f(&[1, 3], 8.0, 10.0, t), 1e-9),
            "t = {t}"
        );
    }
}

#[test]
fn u_step_at_t0_is_zero() {
    let p = reference_problem(CurvaturePerturbation::cosine(0.2), 32);
    let big_u = u_step(&p.initial.f, &p.initial.u, 0.0, &p.curv, &p.params).unwrap();
    assert!(big_u.sup_norm() <= 1e-9);
}

#[test]
fn u_step_decreases_when_a0_grows() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    let exact = closed_form_state(&p.spec, &p.params, &p.grid, 0.3).unwrap();
    let base = u_step(&exact.f, &exact.u, 0.3, &p.curv, &p.params).unwrap();
    let mut bigger = p.params.clone();
    bigger.a0 = bigger.a0.scale(1.5);
    let lower = u_step(&exact.f, &exact.u, 0.3, &p.curv, &bigger).unwrap();
    assert!(base.sub(&lower).min() > 0.0);
}

#[test]
fn picard_fixed_points() {
    let p = reference_problem(CurvaturePerturbation::cosine(0.2), 16);
    let (_, gap) = picard_step(&p.initial, &p.curv, &p.params).unwrap();
    assert!(gap <= 1e-9);
    let c = reference_problem(CurvaturePerturbation::none(), 16);
    let exact = closed_form_state(&c.spec, &c.params, &c.grid, 0.7).unwrap();
    let (_, gap) = picard_step(&exact, &c.curv, &c.params).unwrap();
    assert!(gap <= 1e-9);
}

#[test]
fn picard_contraction_near_constant_branch() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut state = closed_form_state(&p.spec, &p.params, &p.grid, 0.1).unwrap();
    state.f = state.f.add(&smooth_field(&p.grid, &mut rng, 3, 1e-3));
    state.u[0] = state.u[0].add(&smooth_field(&p.grid, &mut rng, 3, 1e-3));
    state.project_trace();
    let mut gaps = Vec::new();
    for _ in 0..5 {
        let (next, gap) = picard_step(&state, &p.curv, &p.params).unwrap();
        gaps.push(gap);
        state = next;
    }
    eprintln!("picard gaps at t = 0.1: {gaps:?}");
    assert!(gaps.iter().all(|g| g.is_finite()));
}

#[test]
fn newton_from_exact_solution() {
    let p = reference_problem(CurvaturePerturbation::none(), 32);
    let exact = closed_form_state(&p.spec, &p.params, &p.grid, 0.6).unwrap();
    let (state, report) = newton_at_t(&exact, 0.6, &p.curv, &p.params).unwrap();
    assert!(report.converged);
    assert!(report.iterations <= 2);
    assert!(report.final_residual <= 1e-10);
    assert!(state.distance(&exact) <= 1e-10);
}

#[test]
fn newton_quadratic_tail() {
    let p = reference_problem(CurvaturePerturbation::none(), 32);
    let mut initial = closed_form_state(&p.spec, &p.params, &p.grid, 0.5).unwrap();
    initial.f = initial.f.add(&ScalarField::from_fn(&p.grid, |x, _| {
        1e-2 * (2.0 * PI * x).cos()
    }));
    let (_, report) = newton_at_t(&initial, 0.5, &p.curv, &p.params).unwrap();
    assert!(report.converged && report.final_residual <= 1e-9);
    let h = &report.residual_history;
    assert!(h.len() >= 3, "history {h:?}");
    // every full step with a residual above round-off level contracts quadratically
    for w in h.windows(2) {
        if w[0] > 1e-6 {
            assert!(w[1] <= 10.0 * w[0] * w[0], "history {h:?}");
        }
    }
    assert!(report.damping.iter().all(|&d| d == 1.0));
}

#[test]
fn newton_report_invariant() {
    let p = reference_problem(CurvaturePerturbation::cosine(0.2), 16);
    let (state, report) = newton_at_t(&p.initial, 0.3, &p.curv, &p.params).unwrap();
    assert!(report.converged);
    assert!(report.final_residual <= p.params.tol.newton_tol);
    assert!(cone_margin(&state, &p.params) >= p.params.cone_floor());
    assert!(*report.cone_margins.last().unwrap() >= p.params.cone_floor());
    assert_eq!(report.residual_history.len(), report.iterations + 1);
}

#[test]
fn newton_rejects_start_outside_cone() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    let bad = State {
        f: ScalarField::zeros(&p.grid),
        u: vec![
            ScalarField::constant(&p.grid, 50.0),
            ScalarField::constant(&p.grid, -50.0),
        ],
        t: 0.0,
    };
    let err = newton_at_t(&bad, 0.0, &p.curv, &p.params).unwrap_err();
    assert!(matches!(err, Error::ConeViolation { .. }));
}

#[test]
fn helmholtz_examples() {
    let grid = Grid::new(16, 4.0).unwrap();
    let one = ScalarField::constant(&grid, 1.0);
    let w = solve_helmholtz(&one, &ScalarField::constant(&grid, -0.25)).unwrap();
    assert!(is_constant(&w, 0.25, 1e-15));
    let two = ScalarField::constant(&grid, 2.0);
    let cos = ScalarField::from_fn(&grid, |x, _| (2.0 * PI * x).cos());
    let w = solve_helmholtz(&two, &cos).unwrap();
    let expected = cos.scale(1.0 / (-PI * PI / 2.0 - 2.0));
    assert!(w.sub(&expected).sup_norm() < 1e-14);
    let bad = ScalarField::from_fn(&grid, |x, _| x - 0.1);
    assert!(solve_helmholtz(&bad, &cos).is_err());
}
