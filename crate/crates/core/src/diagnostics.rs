//! Identities, inequalities and bounds that every solution must satisfy,
//! measured on computed states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::Result;
use crate::geometry::{Grid, ScalarField};
use crate::model::{cone_margin, CurvatureData, DemaillyParams, State};
use crate::solvers::{newton_at_t, v_step};

pub const IDENTITY_TOL: f64 = 1e-6;
pub const UY_TOL: f64 = 1e-8;
pub const TRACE_TOL: f64 = 1e-10;
pub const MAX_POINT_SLACK_TOL: f64 = 1e-6;
pub const MAX_POINT_BOUND_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `value ≤ threshold` when true, `value ≥ threshold` otherwise.
    pub upper: bool,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            upper: true,
            passed: value <= threshold,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            upper: false,
            passed: value >= threshold,
        }
    }
}

/// Quantities measured at the maximum of f.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsRecord {
    pub max_exp_lambda_f: f64,
    pub min_f: f64,
    pub max_f: f64,
    /// Location of the (interpolated) maximum of f.
    pub max_point: (f64, f64),
    /// Δf at the maximum of f.
    pub max_point_laplacian: f64,
    pub max_point_scale: f64,
    /// `(e^{λ f_max} a0 − Π_i A_i) / Π_i A_i` with `A_i = 1/r − e^{f_max} u_i + (1−t)α0`.
    pub max_point_bound_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `∫ e^f u_i ω0`
    pub identity_values: Vec<f64>,
    pub identity_errors: Vec<f64>,
    pub uy_violation: f64,
    pub cone_margin: f64,
    pub trace_sup: f64,
    /// `Σ_i ‖u_i e^f‖∞`
    pub u_ef_sum: f64,
    pub bounds: BoundsRecord,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl DiagnosticsRecord {
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// `∫ e^f u_i ω0`, which on solutions equals `−∫ s_i ω0 = deg E / r − d_i`.
pub fn integral_identity_values(state: &State) -> Vec<f64> {
    let exp_f = state.f.map(f64::exp);
    state.u.iter().map(|u| exp_f.mul(u).integrate()).collect()
}

/// Per-summand `|∫ e^f u_i ω0 − (deg E / r − d_i)|`.
pub fn check_integral_identity(state: &State, curv: &CurvatureData) -> Vec<f64> {
    integral_identity_values(state)
        .iter()
        .zip(&curv.s)
        .map(|(v, s)| (v + s.integrate()).abs())
        .collect()
}

/// Max over the grid of `e^f|u|² − ½Δ|u|² − |u|·|s|`.
pub fn check_uy_inequality(state: &State, curv: &CurvatureData) -> f64 {
    let grid = state.grid();
    let mut u2 = ScalarField::zeros(grid);
    for u in &state.u {
        u2 = u2.add(&u.mul(u));
    }
    let lap_u2 = u2.laplacian();
    let s_norm = curv.trace_free_norm();
    let exp_f = state.f.map(f64::exp);
    let mut worst = f64::NEG_INFINITY;
    for p in 0..grid.len() {
        let uu = u2.values()[p];
        let v = exp_f.values()[p] * uu - 0.5 * lap_u2.values()[p] - uu.sqrt() * s_norm.values()[p];
        worst = worst.max(v);
    }
    worst
}

/// Locates the maximum of the trigonometric interpolant of f near the grid argmax.
fn refine_max(f: &ScalarField) -> (f64, f64) {
    let grid = f.grid();
    let start = grid.point(f.argmax());
    let h = 1.0 / grid.n() as f64;
    let interp = f.interpolant();
    let mut p = start;
    for _ in 0..20 {
        let jet = interp.jet(p.0, p.1);
        let [[a, b], [_, d]] = jet.hessian;
        let det = a * d - b * b;
        // only refine at a nondegenerate local maximum
        if !(a < 0.0 && det > 0.0) {
            return start;
        }
        let dx = (d * jet.grad[0] - b * jet.grad[1]) / det;
        let dy = (a * jet.grad[1] - b * jet.grad[0]) / det;
        p = (p.0 - dx, p.1 - dy);
        if (p.0 - start.0).abs() > h || (p.1 - start.1).abs() > h {
            return start;
        }
        if dx.abs().max(dy.abs()) < 1e-15 {
            break;
        }
    }
    if interp.value(p.0, p.1) >= interp.value(start.0, start.1) {
        p
    } else {
        start
    }
}

pub fn check_bounds(state: &State, params: &DemaillyParams) -> BoundsRecord {
    let f = &state.f;
    let area = f.grid().total_area();
    let r = state.rank() as f64;
    let (x, y) = refine_max(f);
    let jet = f.interpolant().jet(x, y);
    let f_max = jet.value;
    let lap_at_max = (jet.hessian[0][0] + jet.hessian[1][1]) / (2.0 * area);
    let a0 = params.a0.interpolant().value(x, y);
    let shift = 1.0 / r + (1.0 - state.t) * params.alpha0;
    let product: f64 = state
        .u
        .iter()
        .map(|u| shift - f_max.exp() * u.interpolant().value(x, y))
        .product();
    let lhs = (params.lambda * f_max).exp() * a0;
    BoundsRecord {
        max_exp_lambda_f: (params.lambda * f.max()).exp(),
        min_f: f.min(),
        max_f: f.max(),
        max_point: (x, y),
        max_point_laplacian: lap_at_max,
        max_point_scale: 1.0 + f.laplacian().sup_norm(),
        max_point_bound_gap: (lhs - product) / product.abs(),
    }
}

/// Runs every check on a state that is expected to solve the system.
pub fn diagnose(state: &State, curv: &CurvatureData, params: &DemaillyParams) -> DiagnosticsRecord {
    let identity_values = integral_identity_values(state);
    let identity_errors = check_integral_identity(state, curv);
    let uy_violation = check_uy_inequality(state, curv);
    let margin = cone_margin(state, params);
    let trace_sup = state.trace_sup();
    let exp_f = state.f.map(f64::exp);
    let u_ef_sum = state.u.iter().map(|u| u.mul(&exp_f).sup_norm()).sum();
    let bounds = check_bounds(state, params);
    let s_sup = curv.s_sup();

    let mut checks: Vec<Check> = identity_errors
        .iter()
        .enumerate()
        .map(|(i, &e)| Check::at_most(&format!("integral_identity_{}", i + 1), e, IDENTITY_TOL))
        .collect();
    checks.push(Check::at_most(
        "uy_inequality",
        uy_violation,
        UY_TOL * (1.0 + s_sup * s_sup),
    ));
    checks.push(Check::at_most("trace", trace_sup, TRACE_TOL));
    checks.push(Check::at_least("cone_margin", margin, params.cone_floor()));
    checks.push(Check::at_most(
        "max_point_laplacian",
        bounds.max_point_laplacian,
        MAX_POINT_SLACK_TOL * bounds.max_point_scale,
    ));
    checks.push(Check::at_most(
        "max_point_bound",
        bounds.max_point_bound_gap,
        MAX_POINT_BOUND_TOL,
    ));
    let passed = checks.iter().all(|c| c.passed);
    DiagnosticsRecord {
        t: state.t,
        identity_values,
        identity_errors,
        uy_violation,
        cone_margin: margin,
        trace_sup,
        u_ef_sum,
        bounds,
        checks,
        passed,
    }
}

#[derive(Clone, Debug)]
pub struct MultistartOptions {
    pub starts: usize,
    /// Largest sup-norm of the random perturbation of f and of each u_i.
    pub max_amplitude: f64,
    pub seed: u64,
}

impl Default for MultistartOptions {
    fn default() -> Self {
        Self {
            starts: 5,
            max_amplitude: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultistartReport {
    pub max_gap: f64,
    pub converged: usize,
    /// Starts discarded because they left the cone.
    pub rejected: usize,
    pub failures: Vec<String>,
    /// Sup-distance of each converged state to the constructed t = 0 state.
    pub distances_to_base: Vec<f64>,
}

fn random_smooth_field(grid: &Grid, rng: &mut ChaCha8Rng, amplitude: f64) -> ScalarField {
    let mut field = ScalarField::zeros(grid);
    for kx in -2i64..=2 {
        for ky in -2i64..=2 {
            if kx == 0 && ky == 0 {
                continue;
            }
            let a: f64 = rng.gen_range(-1.0..1.0);
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            let mode = ScalarField::from_fn(grid, |x, y| {
                (2.0 * PI * (kx as f64 * x + ky as f64 * y) + phase).cos()
            });
            field.axpy(a, &mode);
        }
    }
    field.axpy(rng.gen_range(-1.0..1.0), &ScalarField::constant(grid, 1.0));
    let sup = field.sup_norm();
    if sup == 0.0 {
        return field;
    }
    let target = amplitude * rng.gen_range(0.25..=1.0);
    field.scale(target / sup)
}

/// Newton at t = 0 from several perturbed starts; the t = 0 solution is unique
/// in the cone, so every converged start must land on the same state.
pub fn multistart_uniqueness(
    curv: &CurvatureData,
    params: &DemaillyParams,
    opts: &MultistartOptions,
) -> Result<MultistartReport> {
    assert!(opts.starts >= 2, "multistart needs at least two starts");
    let grid = curv.grid().clone();
    let base = State {
        f: ScalarField::zeros(&grid),
        u: v_step(&ScalarField::zeros(&grid), curv, params.mu)?,
        t: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let r = curv.rank();
    let mut solutions: Vec<State> = Vec::new();
    let mut failures = Vec::new();
    let mut rejected = 0;
    for k in 0..opts.starts {
        let mut start = base.clone();
        if k > 0 && opts.max_amplitude > 0.0 {
            start.f = random_smooth_field(&grid, &mut rng, opts.max_amplitude);
            for i in 0..r.saturating_sub(1) {
                let du = random_smooth_field(&grid, &mut rng, opts.max_amplitude);
                start.u[i] = start.u[i].add(&du);
            }
            start.project_trace();
        }
        if cone_margin(&start, params) < params.cone_floor() {
            rejected += 1;
            continue;
        }
        match newton_at_t(&start, 0.0, curv, params) {
            Ok((sol, _)) => solutions.push(sol),
            Err(e) => failures.push(format!("start {k}: {e}")),
        }
    }
    let mut max_gap: f64 = 0.0;
    for i in 0..solutions.len() {
        for j in (i + 1)..solutions.len() {
            max_gap = max_gap.max(solutions[i].distance(&solutions[j]));
        }
    }
    Ok(MultistartReport {
        max_gap,
        converged: solutions.len(),
        rejected,
        failures,
        distances_to_base: solutions.iter().map(|s| s.distance(&base)).collect(),
    })
}
