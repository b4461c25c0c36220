//! Continuation in t from the t = 0 construction toward t = 1.

use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{diagnose, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::geometry::{Grid, ScalarField};
use crate::model::{
    build_curvature, BundleSpec, CurvatureData, DemaillyParams, ParamsInput, State,
};
use crate::solvers::{newton_at_t, solve_t0, NewtonReport};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub dt0: f64,
    pub dt_floor: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            dt0: 0.05,
            dt_floor: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarchStep {
    pub t: f64,
    pub newton: NewtonReport,
    pub diagnostics: DiagnosticsRecord,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Breakdown {
    /// Last accepted t.
    pub t_star: f64,
    /// The t whose corrector failed with the step at its floor.
    pub attempted_t: f64,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarchReport {
    pub lambda: f64,
    pub alpha0: f64,
    pub degrees: Vec<i64>,
    pub ample: bool,
    pub steps: Vec<MarchStep>,
    pub breakdown: Option<Breakdown>,
    pub rejected_steps: usize,
    /// Accepted states, parallel to `steps`.
    #[serde(skip)]
    pub states: Vec<State>,
}

impl MarchReport {
    pub fn accepted_t(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.t).collect()
    }

    pub fn reached_end(&self) -> bool {
        self.breakdown.is_none()
    }

    pub fn last_state(&self) -> &State {
        self.states
            .last()
            .expect("march always stores the t = 0 state")
    }

    /// Minimum of f over every accepted state.
    pub fn min_f(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.diagnostics.bounds.min_f)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Everything a march needs, built once from the bundle and parameters.
#[derive(Clone, Debug)]
pub struct Problem {
    pub spec: BundleSpec,
    pub grid: Grid,
    pub curv: CurvatureData,
    pub params: DemaillyParams,
    pub initial: State,
}

impl Problem {
    pub fn new(spec: &BundleSpec, input: &ParamsInput, n: usize) -> Result<Self> {
        spec.validate()?;
        let grid = Grid::new(n, spec.total_degree() as f64)?;
        let curv = build_curvature(spec, &grid)?;
        let (initial, params) = solve_t0(&curv, input, &grid)?;
        Ok(Self {
            spec: spec.clone(),
            grid,
            curv,
            params,
            initial,
        })
    }
}

pub fn march(
    spec: &BundleSpec,
    input: &ParamsInput,
    n: usize,
    schedule: Schedule,
) -> Result<MarchReport> {
    let problem = Problem::new(spec, input, n)?;
    march_problem(&problem, schedule)
}

/// Order-zero predictor, Newton corrector, step halving on failure.
pub fn march_problem(problem: &Problem, schedule: Schedule) -> Result<MarchReport> {
    let Problem {
        spec,
        curv,
        params,
        initial,
        ..
    } = problem;
    let started = Instant::now();
    let (state0, newton0) = newton_at_t(initial, 0.0, curv, params)?;
    let diag0 = diagnose(&state0, curv, params);
    let mut report = MarchReport {
        lambda: params.lambda,
        alpha0: params.alpha0,
        degrees: spec.degrees.clone(),
        ample: spec.is_ample(),
        steps: vec![MarchStep {
            t: 0.0,
            newton: newton0,
            diagnostics: diag0,
            wall_seconds: started.elapsed().as_secs_f64(),
        }],
        breakdown: None,
        rejected_steps: 0,
        states: vec![state0],
    };

    let mut t = 0.0;
    let mut dt = schedule.dt0;
    while t < 1.0 {
        let t_next = if 1.0 - t <= dt * (1.0 + 1e-9) {
            1.0
        } else {
            // Keeps accumulated round-off out of the recorded t values.
            ((t + dt) * 1e12).round() / 1e12
        };
        let step_start = Instant::now();
        let prev = report.states.last().expect("nonempty");
        let attempt = newton_at_t(prev, t_next, curv, params).and_then(|(state, newton)| {
            let diag = diagnose(&state, curv, params);
            if diag.passed {
                Ok((state, newton, diag))
            } else {
                let names: Vec<String> = diag.failures().iter().map(|c| c.name.clone()).collect();
                Err(Error::Diagnostics(names.join(", ")))
            }
        });
        match attempt {
            Ok((state, newton, diag)) => {
                debug!(
                    "accepted t={t_next:.6} iters={} margin={:.3e}",
                    newton.iterations, diag.cone_margin
                );
                report.steps.push(MarchStep {
                    t: t_next,
                    newton,
                    diagnostics: diag,
                    wall_seconds: step_start.elapsed().as_secs_f64(),
                });
                report.states.push(state);
                t = t_next;
            }
            Err(e) => {
                report.rejected_steps += 1;
                if dt <= schedule.dt_floor {
                    info!("breakdown after t={t}: {e}");
                    report.breakdown = Some(Breakdown {
                        t_star: t,
                        attempted_t: t_next,
                        reason: e.to_string(),
                    });
                    break;
                }
                dt = (0.5 * dt).max(schedule.dt_floor);
                debug!("rejected t={t_next:.6}: {e}; dt -> {dt:e}");
            }
        }
    }
    Ok(report)
}

/// The constant-coefficient solution for unperturbed data:
/// `f_t = (1/λ) ln(Π_i (d_i/d + (1−t)α0) / Π_i (d_i/d + α0))`, `u_i = −s_i e^{−f_t}`.
pub fn closed_form_state(
    spec: &BundleSpec,
    params: &DemaillyParams,
    grid: &Grid,
    t: f64,
) -> Result<State> {
    if !spec.perturbation.is_zero() {
        return Err(Error::InvalidSpec(
            "closed form requires unperturbed curvature".into(),
        ));
    }
    let d = spec.total_degree() as f64;
    let r = spec.rank() as f64;
    let mut num = 1.0;
    let mut den = 1.0;
    for &di in &spec.degrees {
        let share = di as f64 / d;
        let factor = share + (1.0 - t) * params.alpha0;
        if !(factor > 0.0) {
            return Err(Error::ConeViolation {
                margin: factor,
                floor: 0.0,
            });
        }
        num *= factor;
        den *= share + params.alpha0;
    }
    let f = (num / den).ln() / params.lambda;
    let u = spec
        .degrees
        .iter()
        .map(|&di| {
            let s = di as f64 / d - 1.0 / r;
            ScalarField::constant(grid, -s * (-f).exp())
        })
        .collect();
    Ok(State {
        f: ScalarField::constant(grid, f),
        u,
        t,
    })
}

/// Closed-form breakdown time `1 + min_i d_i / (d α0)` for unperturbed data.
pub fn predicted_breakdown(spec: &BundleSpec, alpha0: f64) -> Option<f64> {
    let d = spec.total_degree() as f64;
    let min_d = *spec.degrees.iter().min()? as f64;
    let t = 1.0 + min_d / (d * alpha0);
    (t < 1.0).then_some(t)
}
