//! Restarted, right-preconditioned GMRES on flat vectors.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub rel_tol: f64,
    pub restart: usize,
    pub max_iters: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            restart: 60,
            max_iters: 600,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GmresStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from `x = 0`, where `A` is given by `apply` and
/// `precond` approximates `A⁻¹`.
pub fn gmres(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    mut precond: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    opts: GmresOptions,
) -> Result<(Vec<f64>, GmresStats)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            x,
            GmresStats {
                iterations: 0,
                rel_residual: 0.0,
            },
        ));
    }
    let target = opts.rel_tol * b_norm;
    let m = opts.restart.max(1);
    let mut total = 0;
    let mut r: Vec<f64> = b.to_vec();
    let mut r_norm = b_norm;

    while total < opts.max_iters {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut z_basis: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = r_norm;
        basis.push(r.iter().map(|v| v / r_norm).collect());

        let mut k = 0;
        while k < m && total < opts.max_iters {
            let z = precond(&basis[k]);
            let mut w = apply(&z);
            z_basis.push(z);
            for (j, vj) in basis.iter().enumerate() {
                let hjk = dot(&w, vj);
                h[j][k] = hjk;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hjk * vi;
                }
            }
            let w_norm = norm(&w);
            h[k + 1][k] = w_norm;
            for j in 0..k {
                let tmp = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = tmp;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = cs[k] * h[k][k] + sn[k] * h[k + 1][k];
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            total += 1;
            let done = g[k].abs() <= target;
            if done || w_norm == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / w_norm).collect());
        }

        // back substitution for the k×k triangular system
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in (i + 1)..k {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z_basis) {
            for (xv, zv) in x.iter_mut().zip(zi) {
                *xv += yi * zv;
            }
        }

        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        r_norm = norm(&r);
        if r_norm <= target {
            return Ok((
                x,
                GmresStats {
                    iterations: total,
                    rel_residual: r_norm / b_norm,
                },
            ));
        }
        if !r_norm.is_finite() {
            break;
        }
    }
    Err(Error::LinearSolve(format!(
        "gmres stopped after {total} iterations at relative residual {:e}",
        r_norm / b_norm
    )))
}
