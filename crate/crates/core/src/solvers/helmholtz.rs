use crate::error::{Error, Result};
use crate::geometry::ScalarField;

const MAX_ITERS: usize = 1000;

/// Solves `Δw − c·w = rhs` for `c > 0` pointwise.
///
/// Preconditioned conjugate gradients on `−Δ + c`, with the constant-coefficient
/// operator `−Δ + mean(c)` inverted exactly in Fourier space.
pub fn solve_helmholtz(c: &ScalarField, rhs: &ScalarField) -> Result<ScalarField> {
    c.check_same_grid(rhs)?;
    let c_min = c.min();
    if !(c_min > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParams(format!(
            "helmholtz coefficient must be positive, min is {c_min}"
        )));
    }
    let grid = c.grid().clone();
    let symbol = grid.laplacian_symbol();
    let c_bar = c.mean_value();
    let cv = c.values();

    let apply = |w: &[f64]| -> Vec<f64> {
        let lap = grid.apply_symbol(w, |i| symbol[i]);
        lap.iter()
            .zip(w)
            .zip(cv)
            .map(|((l, wi), ci)| -l + ci * wi)
            .collect()
    };
    let precond = |r: &[f64]| grid.apply_symbol(r, |i| 1.0 / (c_bar - symbol[i]));
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    // (−Δ + c) w = −rhs
    let b: Vec<f64> = rhs.values().iter().map(|v| -v).collect();
    let b_norm = dot(&b, &b).sqrt();
    let mut w = vec![0.0; b.len()];
    if b_norm > 0.0 {
        let mut r = b.clone();
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..MAX_ITERS {
            let ap = apply(&p);
            let alpha = rz / dot(&p, &ap);
            for i in 0..w.len() {
                w[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if dot(&r, &r).sqrt() <= 1e-15 * b_norm {
                break;
            }
            z = precond(&r);
            let rz_next = dot(&r, &z);
            if rz_next <= 0.0 || !rz_next.is_finite() {
                break;
            }
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..p.len() {
                p[i] = z[i] + beta * p[i];
            }
        }
    }

    // PCG may stall at round-off before the l2 target; the sup-norm check decides.
    let w = ScalarField::raw(&grid, w);
    let res = w.laplacian().sub(&c.mul(&w)).sub(rhs).sup_norm();
    let max_symbol = symbol.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let allowed =
        1e-11 * (rhs.sup_norm() + w.sup_norm()) + 64.0 * f64::EPSILON * max_symbol * w.sup_norm();
    if !(res <= allowed) {
        return Err(Error::LinearSolve(format!(
            "helmholtz residual {res:e} exceeds {allowed:e}"
        )));
    }
    Ok(w)
}
