mod common;

use demailly::diagnostics::{
    check_bounds, check_integral_identity, check_uy_inequality, diagnose, integral_identity_values,
    multistart_uniqueness, MultistartOptions,
};
use demailly::homotopy::{march_problem, predicted_breakdown, Problem};
use demailly::model::{residual, BundleSpec, CurvaturePerturbation, State};
use demailly::{closed_form_state, march, Error, ScalarField, Schedule};

use common::{closed_form_f, params, reference_problem};

#[test]
fn closed_form_matches_t0_construction() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    let cf = closed_form_state(&p.spec, &p.params, &p.grid, 0.0).unwrap();
    assert!(cf.distance(&p.initial) < 1e-15);
}

#[test]
fn closed_form_values() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    for (t, f, u1) in [(0.5, -0.16185, 0.29392), (1.0, -0.79702, 0.55473)] {
        let s = closed_form_state(&p.spec, &p.params, &p.grid, t).unwrap();
        assert!((s.f.values()[0] - f).abs() < 1e-5, "t = {t}");
        assert!((s.u[0].values()[0] - u1).abs() < 1e-5, "t = {t}");
        assert!((s.f.values()[0] - closed_form_f(&[1, 3], 8.0, 10.0, t)).abs() < 1e-15);
    }
}

#[test]
fn closed_form_has_zero_residual() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let s = closed_form_state(&p.spec, &p.params, &p.grid, t).unwrap();
        assert!(
            residual(&s, &p.curv, &p.params).unwrap().sup_norm() < 1e-12,
            "t = {t}"
        );
    }
}

#[test]
fn closed_form_rejects_perturbed_data() {
    let p = reference_problem(CurvaturePerturbation::cosine(0.1), 16);
    assert!(matches!(
        closed_form_state(&p.spec, &p.params, &p.grid, 0.5),
        Err(Error::InvalidSpec(_))
    ));
}

#[test]
fn rank_one_march() {
    let spec = BundleSpec::constant(vec![5]).unwrap();
    let report = march(&spec, &params(None, Some(10.0)), 16, Schedule::default()).unwrap();
    assert!(report.reached_end());
    for (step, state) in report.steps.iter().zip(&report.states) {
        let expected = ((1.0 + (1.0 - step.t) * 10.0) / 11.0f64).ln() / 6.0;
        assert!(state
            .f
            .values()
            .iter()
            .all(|v| (v - expected).abs() < 1e-10));
        assert_eq!(state.u[0].sup_norm(), 0.0);
    }
}

#[test]
fn constant_branch_march_invariants() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    let report = march_problem(&p, Schedule::default()).unwrap();
    let ts = report.accepted_t();
    assert_eq!(ts.len(), 21);
    assert_eq!(ts[0], 0.0);
    assert_eq!(*ts.last().unwrap(), 1.0);
    assert!(ts.windows(2).all(|w| w[1] > w[0]));
    assert!(report.steps.iter().all(|s| s.diagnostics.passed));
    let f: Vec<f64> = report.states.iter().map(|s| s.f.values()[0]).collect();
    assert!(f.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    assert!((report.min_f() - f[20]).abs() < 1e-12);
    // Σ‖u_i e^f‖∞ = Σ|s_i| on the constant branch
    for step in &report.steps {
        assert!((step.diagnostics.u_ef_sum - 0.5).abs() < 1e-8);
    }
}

#[test]
fn non_ample_breakdown_within_one_floor() {
    let spec = BundleSpec::constant(vec![-1, 5]).unwrap();
    let schedule = Schedule::default();
    let report = march(&spec, &params(None, Some(10.0)), 16, schedule).unwrap();
    let predicted = predicted_breakdown(&spec, 10.0).unwrap();
    assert!((predicted - 0.975).abs() < 1e-15);
    let b = report.breakdown.as_ref().expect("breakdown recorded");
    assert!(b.t_star < predicted);
    assert!(predicted - b.t_star <= schedule.dt_floor);
    assert!(!report.ample);
    assert_eq!(*report.accepted_t().last().unwrap(), b.t_star);
}

#[test]
fn ample_data_has_no_predicted_breakdown() {
    let spec = BundleSpec::constant(vec![1, 3]).unwrap();
    assert_eq!(predicted_breakdown(&spec, 10.0), None);
}

#[test]
fn perturbed_march_passes_diagnostics() {
    let p = reference_problem(CurvaturePerturbation::cosine(0.2), 16);
    let report = march_problem(&p, Schedule::default()).unwrap();
    assert!(report.reached_end());
    for step in &report.steps {
        let d = &step.diagnostics;
        assert!(d.passed, "t = {}: {:?}", step.t, d.failures());
        assert!(d.bounds.max_point_laplacian <= 1e-6 * d.bounds.max_point_scale);
    }
}

#[test]
fn identity_values_on_reference_solution() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    for t in [0.0, 0.6, 1.0] {
        let s = closed_form_state(&p.spec, &p.params, &p.grid, t).unwrap();
        let v = integral_identity_values(&s);
        assert!((v[0] - 1.0).abs() < 1e-10 && (v[1] + 1.0).abs() < 1e-10);
        assert!(check_integral_identity(&s, &p.curv)
            .iter()
            .all(|e| *e < 1e-10));
    }
}

#[test]
fn identity_trivial_for_rank_one() {
    let spec = BundleSpec::constant(vec![5]).unwrap();
    let p = Problem::new(&spec, &params(None, None), 16).unwrap();
    assert_eq!(integral_identity_values(&p.initial), vec![0.0]);
    assert_eq!(check_integral_identity(&p.initial, &p.curv), vec![0.0]);
}

#[test]
fn uy_check_semantics() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    let exact = closed_form_state(&p.spec, &p.params, &p.grid, 0.4).unwrap();
    assert!(check_uy_inequality(&exact, &p.curv).abs() <= 1e-10);
    let zero = State {
        f: ScalarField::zeros(&p.grid),
        u: vec![ScalarField::zeros(&p.grid); 2],
        t: 0.0,
    };
    assert!(check_uy_inequality(&zero, &p.curv) <= 0.0);
    let huge = State {
        f: ScalarField::constant(&p.grid, 3.0),
        u: vec![
            ScalarField::constant(&p.grid, 5.0),
            ScalarField::constant(&p.grid, -5.0),
        ],
        t: 0.0,
    };
    assert!(check_uy_inequality(&huge, &p.curv) > 1.0);
}

#[test]
fn bounds_on_constant_branch() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    let s0 = closed_form_state(&p.spec, &p.params, &p.grid, 0.0).unwrap();
    let b0 = check_bounds(&s0, &p.params);
    assert_eq!(b0.max_exp_lambda_f, 1.0);
    assert_eq!(b0.max_point_laplacian, 0.0);
    let s1 = closed_form_state(&p.spec, &p.params, &p.grid, 1.0).unwrap();
    let b1 = check_bounds(&s1, &p.params);
    assert!((b1.min_f + 0.79702).abs() < 1e-5);
    assert!(b1.max_point_bound_gap.abs() <= 1e-8);
}

#[test]
fn diagnostics_flag_corrupted_state() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    let mut s = closed_form_state(&p.spec, &p.params, &p.grid, 0.5).unwrap();
    s.u[0] = s.u[0].map(|v| v + 0.1);
    s.u[1] = s.u[1].map(|v| v - 0.1);
    let d = diagnose(&s, &p.curv, &p.params);
    assert!(!d.passed);
    assert!(d.failures().iter().any(|c| c.name.contains("identity")));
}

#[test]
fn multistart_without_perturbation_has_zero_gap() {
    let p = reference_problem(CurvaturePerturbation::cosine(0.2), 16);
    let opts = MultistartOptions {
        starts: 2,
        max_amplitude: 0.0,
        seed: 1,
    };
    let report = multistart_uniqueness(&p.curv, &p.params, &opts).unwrap();
    assert_eq!(report.converged, 2);
    assert_eq!(report.max_gap, 0.0);
}

#[test]
fn multistart_constant_data_lands_on_t0_state() {
    let p = reference_problem(CurvaturePerturbation::none(), 16);
    let report = multistart_uniqueness(&p.curv, &p.params, &MultistartOptions::default()).unwrap();
    assert!(report.max_gap <= 1e-8);
    assert!(report.distances_to_base.iter().all(|d| *d <= 1e-8));
}
