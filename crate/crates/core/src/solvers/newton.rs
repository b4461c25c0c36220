//! Damped Newton–Krylov solve of the system at a fixed t.
//!
//! Unknowns are `(f, u_1, …, u_{r−1})`; `u_r = −Σ_{i<r} u_i` is eliminated so
//! det g = 1 holds exactly. The equations are `R_f, R_1, …, R_{r−1}`; the last
//! trace-free equation is implied by the others when `Σ u_i = 0`.

use log::debug;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, ScalarField};
use crate::model::{
    cone_margin, residual, CurvatureData, DemaillyParams, Linearization, Perturbation, State,
    SystemResidual,
};
use crate::solvers::krylov::{gmres, GmresOptions};

const MIN_STEP: f64 = 1.0 / (1 << 20) as f64;
const MAX_DF: f64 = 5.0;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_residual: f64,
    /// Residual sup-norm before each iteration and after the last one.
    pub residual_history: Vec<f64>,
    /// Accepted step length of each iteration.
    pub damping: Vec<f64>,
    /// Cone margin before each iteration and after the last one.
    pub cone_margins: Vec<f64>,
    pub krylov_iterations: Vec<usize>,
    pub converged: bool,
}

/// Flat vector layout: `[f, u_1, …, u_{r−1}]`, one grid-sized block each.
struct Layout {
    grid: Grid,
    r: usize,
}

impl Layout {
    fn block(&self) -> usize {
        self.grid.len()
    }

    fn to_perturbation(&self, x: &[f64]) -> Perturbation {
        let n = self.block();
        let df = ScalarField::raw(&self.grid, x[..n].to_vec());
        let mut du: Vec<ScalarField> = (1..self.r)
            .map(|i| ScalarField::raw(&self.grid, x[i * n..(i + 1) * n].to_vec()))
            .collect();
        let mut last = ScalarField::zeros(&self.grid);
        for d in &du {
            last = last.sub(d);
        }
        du.push(last);
        Perturbation { df, du }
    }

    fn flatten(&self, res: &SystemResidual) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.r * self.block());
        out.extend_from_slice(res.f.values());
        for u in &res.u[..self.r - 1] {
            out.extend_from_slice(u.values());
        }
        out
    }
}

/// Per-mode inverse of the Jacobian with coefficients frozen at their means.
struct SpectralPreconditioner {
    layout_r: usize,
    grid: Grid,
    /// Row-major `r×r` inverse for each Fourier mode.
    inverses: Vec<f64>,
}

impl SpectralPreconditioner {
    fn new(lin: &Linearization, grid: &Grid) -> Self {
        let r = lin.rank();
        let inv_m: Vec<f64> = lin
            .inv_factors()
            .iter()
            .map(ScalarField::mean_value)
            .collect();
        let sum_inv_m: f64 = inv_m.iter().sum();
        let ff0: f64 = lin
            .exp_f_u()
            .iter()
            .zip(lin.inv_factors())
            .map(|(eu, im)| eu.mul(im).mean_value())
            .sum::<f64>()
            + lin.lambda();
        // coefficient of δu_i in the f-row
        let fu: Vec<f64> = lin
            .inv_factors()
            .iter()
            .map(|im| -lin.exp_f().mul(im).mean_value())
            .collect();
        let uf: Vec<f64> = lin
            .mu_exp_mu_f_u()
            .iter()
            .map(|v| -v.mean_value())
            .collect();
        let uu = lin.exp_mu_f().mean_value();

        let symbol = grid.laplacian_symbol();
        let mut inverses = vec![0.0; symbol.len() * r * r];
        for (mode, &kappa) in symbol.iter().enumerate() {
            let mut m = DMatrix::<f64>::zeros(r, r);
            m[(0, 0)] = kappa * sum_inv_m - ff0;
            for j in 1..r {
                m[(0, j)] = fu[j - 1] - fu[r - 1];
                m[(j, 0)] = uf[j - 1];
                m[(j, j)] = kappa - uu;
            }
            let inv = m
                .clone()
                .try_inverse()
                .filter(|inv| inv.iter().all(|v| v.is_finite()))
                .unwrap_or_else(|| {
                    // fall back to the diagonal
                    DMatrix::from_fn(r, r, |i, j| {
                        if i == j && m[(i, i)] != 0.0 {
                            1.0 / m[(i, i)]
                        } else {
                            0.0
                        }
                    })
                });
            for i in 0..r {
                for j in 0..r {
                    inverses[mode * r * r + i * r + j] = inv[(i, j)];
                }
            }
        }
        Self {
            layout_r: r,
            grid: grid.clone(),
            inverses,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let r = self.layout_r;
        let n = self.grid.len();
        let spectra: Vec<Vec<Complex64>> = (0..r)
            .map(|b| self.grid.fft(&x[b * n..(b + 1) * n]))
            .collect();
        let mut out_spec = vec![vec![Complex64::new(0.0, 0.0); n]; r];
        for mode in 0..n {
            let inv = &self.inverses[mode * r * r..(mode + 1) * r * r];
            for i in 0..r {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..r {
                    acc += spectra[j][mode] * inv[i * r + j];
                }
                out_spec[i][mode] = acc;
            }
        }
        let mut out = Vec::with_capacity(r * n);
        for spec in out_spec {
            out.extend(self.grid.ifft_real(spec));
        }
        out
    }
}

fn apply_step(state: &State, step: &Perturbation, alpha: f64) -> State {
    let mut next = state.clone();
    next.f.axpy(alpha, &step.df);
    let r = next.u.len();
    for i in 0..r - 1 {
        next.u[i].axpy(alpha, &step.du[i]);
    }
    next.project_trace();
    next
}

/// Damped Newton at parameter `t`, starting from `initial`.
pub fn newton_at_t(
    initial: &State,
    t: f64,
    curv: &CurvatureData,
    params: &DemaillyParams,
) -> Result<(State, NewtonReport)> {
    initial.check_compatible(curv)?;
    let floor = params.cone_floor();
    let tol = params.tol.newton_tol;
    let mut state = initial.clone();
    state.t = t;
    state.project_trace();

    let margin = cone_margin(&state, params);
    if !(margin >= floor) {
        return Err(Error::ConeViolation { margin, floor });
    }
    let layout = Layout {
        grid: state.grid().clone(),
        r: state.rank(),
    };
    let mut res = residual(&state, curv, params)?;
    let mut norm = res.sup_norm();
    let mut report = NewtonReport {
        residual_history: vec![norm],
        cone_margins: vec![margin],
        ..Default::default()
    };

    while norm > tol {
        if report.iterations >= params.tol.max_iters {
            return Err(Error::MaxIters {
                iters: report.iterations,
                residual: norm,
            });
        }
        let lin = Linearization::new(&state, params)?;
        let pre = SpectralPreconditioner::new(&lin, &layout.grid);
        let rhs: Vec<f64> = layout.flatten(&res).into_iter().map(|v| -v).collect();
        let opts = GmresOptions {
            rel_tol: norm.clamp(1e-11, 1e-3),
            ..Default::default()
        };
        let (x, stats) = gmres(
            |v| layout.flatten(&lin.apply(&layout.to_perturbation(v))),
            |v| pre.apply(v),
            &rhs,
            opts,
        )?;
        let mut step = layout.to_perturbation(&x);
        let df_max = step.df.sup_norm();
        if df_max > MAX_DF {
            let c = MAX_DF / df_max;
            step.df = step.df.scale(c);
            step.du = step.du.iter().map(|d| d.scale(c)).collect();
        }

        let mut alpha = 1.0;
        let (next, next_res, next_margin) = loop {
            let trial = apply_step(&state, &step, alpha);
            let m = cone_margin(&trial, params);
            if m >= floor {
                if let Ok(r) = residual(&trial, curv, params) {
                    let n = r.sup_norm();
                    if n < norm {
                        break (trial, r, m);
                    }
                }
            }
            alpha *= 0.5;
            if alpha < MIN_STEP {
                return Err(Error::NoDescent {
                    step: alpha,
                    residual: norm,
                });
            }
        };
        state = next;
        res = next_res;
        norm = res.sup_norm();
        report.iterations += 1;
        report.damping.push(alpha);
        report.cone_margins.push(next_margin);
        report.residual_history.push(norm);
        report.krylov_iterations.push(stats.iterations);
        debug!(
            "newton t={t:.5} it={} |R|={norm:.3e} step={alpha} krylov={}",
            report.iterations, stats.iterations
        );
    }
    report.final_residual = norm;
    report.converged = true;
    Ok((state, report))
}
