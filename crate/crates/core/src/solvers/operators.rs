//! The t = 0 construction and the U/V operators of the fixed-point map.

use log::debug;

use crate::error::{Error, Result};
use crate::geometry::{Grid, ScalarField};
use crate::model::{
    l_inverse, l_inverse_log_derivative, CurvatureData, DemaillyParams, ParamsInput, State,
};
use crate::solvers::helmholtz::solve_helmholtz;

/// Builds the exact solution at `t = 0` together with α0 and a0.
///
/// `f = 0`, `u_i⁰` solves `Δu − u = s_i`, and `a0 = Π_i (1/r + α0 − u_i⁰)`.
pub fn solve_t0(
    curv: &CurvatureData,
    input: &ParamsInput,
    grid: &Grid,
) -> Result<(State, DemaillyParams)> {
    let r = curv.rank();
    let lambda = input.lambda_for_rank(r);
    if !(lambda > r as f64) {
        return Err(Error::InvalidParams(format!(
            "lambda must exceed the rank {r}, got {lambda}"
        )));
    }
    if let Some(a) = input.alpha0 {
        if !(a > 1.0) {
            return Err(Error::InvalidParams(format!(
                "alpha0 must exceed 1, got {a}"
            )));
        }
    }
    if curv.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let one = ScalarField::constant(grid, 1.0);
    let mut u = curv
        .s
        .iter()
        .map(|s| solve_helmholtz(&one, s))
        .collect::<Result<Vec<_>>>()?;

    let mut trace = ScalarField::zeros(grid);
    for ui in &u {
        trace = trace.add(ui);
    }
    let scale = 1.0 + u.iter().map(ScalarField::sup_norm).fold(0.0, f64::max);
    if trace.sup_norm() > 1e-10 * scale {
        return Err(Error::InvalidSpec(format!(
            "t = 0 potentials do not sum to zero (sup {})",
            trace.sup_norm()
        )));
    }

    let u_sup = u.iter().map(ScalarField::sup_norm).fold(0.0, f64::max);
    let alpha0 = input.alpha0.unwrap_or(0.0).max(2.0).max(2.0 * u_sup);
    let shift = 1.0 / r as f64 + alpha0;
    let mut a0 = ScalarField::constant(grid, 1.0);
    for ui in &u {
        a0 = a0.mul(&ui.map(|v| shift - v));
    }
    debug!("t=0: alpha0 = {alpha0}, a0 in [{}, {}]", a0.min(), a0.max());

    let mut state = State {
        f: ScalarField::zeros(grid),
        u: std::mem::take(&mut u),
        t: 0.0,
    };
    state.project_trace();
    let params = DemaillyParams {
        lambda,
        alpha0,
        mu: input.mu,
        a0,
        tol: input.tol.clone(),
    };
    Ok((state, params))
}

/// V operator: `u_i` solving `Δu_i = s_i + e^{μf} u_i`.
pub fn v_step(f: &ScalarField, curv: &CurvatureData, mu: f64) -> Result<Vec<ScalarField>> {
    f.check_grid(curv.grid())?;
    let c = f.map(|v| (mu * v).exp());
    curv.s.iter().map(|s| solve_helmholtz(&c, s)).collect()
}

const S_STEP0: f64 = 0.25;
const S_STEP_FLOOR: f64 = 1e-4;
const INNER_ITERS: usize = 40;
const INNER_TOL_PATH: f64 = 1e-7;
const MAX_LOG_STEP: f64 = 5.0;

/// U operator: `U` solving `ΔU = L⁻¹_A(e^{λU} a0)` with
/// `A_i = 1/r − e^f u_i + (1−t)α0` frozen from the input `(f, u)`.
///
/// Reached along `ΔU = (1−s)(U − f + Δf) + s L⁻¹_A(e^{λU} a0)` from `U = f` at `s = 0`.
pub fn u_step(
    f_in: &ScalarField,
    u: &[ScalarField],
    t: f64,
    curv: &CurvatureData,
    params: &DemaillyParams,
) -> Result<ScalarField> {
    f_in.check_grid(curv.grid())?;
    let r = u.len();
    let exp_f = f_in.map(f64::exp);
    let shift = 1.0 / r as f64 + params.alpha0 * (1.0 - t);
    let shifts: Vec<ScalarField> = u
        .iter()
        .map(|ui| exp_f.mul(ui).map(|v| shift - v))
        .collect();
    let anchor = f_in.laplacian().sub(f_in);

    let path = UPath {
        shifts: &shifts,
        anchor: &anchor,
        params,
    };
    let final_tol = 0.1 * params.tol.newton_tol;

    let mut s = 0.0;
    let mut ds = S_STEP0;
    let mut current = f_in.clone();
    while s < 1.0 {
        let s_next = (s + ds).min(1.0);
        let tol = if s_next >= 1.0 {
            final_tol
        } else {
            INNER_TOL_PATH
        };
        match path.solve_at(s_next, &current, tol) {
            Ok(next) => {
                current = next;
                s = s_next;
            }
            Err(e) => {
                debug!("u_step: s = {s_next} rejected ({e}); halving ds = {ds}");
                ds *= 0.5;
                if ds < S_STEP_FLOOR {
                    return Err(Error::PathStall { s, ds });
                }
            }
        }
    }
    Ok(current)
}

struct UPath<'a> {
    shifts: &'a [ScalarField],
    /// `Δf − f`, so the s = 0 equation reads `ΔU − U = Δf − f`.
    anchor: &'a ScalarField,
    params: &'a DemaillyParams,
}

impl UPath<'_> {
    /// Pointwise `v = L⁻¹_A(e^{λU} a0)` and `η ∂v/∂η`.
    fn determinant_target(&self, big_u: &ScalarField) -> Result<(Vec<f64>, Vec<f64>)> {
        let lambda = self.params.lambda;
        let n = big_u.values().len();
        let mut v = Vec::with_capacity(n);
        let mut dv = Vec::with_capacity(n);
        let mut a = vec![0.0; self.shifts.len()];
        for p in 0..n {
            for (ai, shift) in a.iter_mut().zip(self.shifts) {
                *ai = shift.values()[p];
            }
            let eta = (lambda * big_u.values()[p]).exp() * self.params.a0.values()[p];
            let vp = l_inverse(&a, eta)?;
            dv.push(l_inverse_log_derivative(&a, vp));
            v.push(vp);
        }
        Ok((v, dv))
    }

    fn equation(&self, s: f64, big_u: &ScalarField) -> Result<(ScalarField, ScalarField)> {
        let grid = big_u.grid();
        let (v, dv) = self.determinant_target(big_u)?;
        let lap = big_u.laplacian();
        let g = ScalarField::raw(
            grid,
            (0..v.len())
                .map(|p| {
                    let linear = big_u.values()[p] + self.anchor.values()[p];
                    lap.values()[p] - (1.0 - s) * linear - s * v[p]
                })
                .collect(),
        );
        let lambda = self.params.lambda;
        let coeff = ScalarField::raw(
            grid,
            dv.iter().map(|d| (1.0 - s) + s * lambda * d).collect(),
        );
        Ok((g, coeff))
    }

    fn solve_at(&self, s: f64, start: &ScalarField, tol: f64) -> Result<ScalarField> {
        let mut big_u = start.clone();
        let mut res = f64::NAN;
        for _ in 0..INNER_ITERS {
            let (g, coeff) = self.equation(s, &big_u)?;
            res = g.sup_norm();
            if res <= tol {
                self.check_admissible(&big_u)?;
                return Ok(big_u);
            }
            // Δδ − c δ = −G
            let mut delta = solve_helmholtz(&coeff, &g.scale(-1.0))?;
            let big = delta.sup_norm();
            if big > MAX_LOG_STEP {
                delta = delta.scale(MAX_LOG_STEP / big);
            }
            big_u.axpy(1.0, &delta);
            if !big_u.is_finite() {
                break;
            }
        }
        Err(Error::MaxIters {
            iters: INNER_ITERS,
            residual: res,
        })
    }

    fn check_admissible(&self, big_u: &ScalarField) -> Result<()> {
        let lap = big_u.laplacian();
        let margin = self
            .shifts
            .iter()
            .map(|a| lap.add(a).min())
            .fold(f64::INFINITY, f64::min);
        if margin > 0.0 {
            Ok(())
        } else {
            Err(Error::ConeViolation { margin, floor: 0.0 })
        }
    }
}

/// One application of `(f, u) ↦ (U, V)` at fixed t; returns the new state and
/// the fixed-point gap `‖(f, u) − (U, V)‖∞`.
pub fn picard_step(
    state: &State,
    curv: &CurvatureData,
    params: &DemaillyParams,
) -> Result<(State, f64)> {
    state.check_compatible(curv)?;
    let big_u = u_step(&state.f, &state.u, state.t, curv, params)?;
    let big_v = v_step(&state.f, curv, params.mu)?;
    let next = State {
        f: big_u,
        u: big_v,
        t: state.t,
    };
    let gap = state.distance(&next);
    Ok((next, gap))
}
