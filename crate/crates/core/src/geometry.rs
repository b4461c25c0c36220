//! Calculus on the unit-square flat torus.
//!
//! Points are `(j/n, k/n)` for `j, k` in `0..n`; a field stores its samples
//! row-major with `j` (the x index) as the slow index. The area form is
//! `ω0 = total_area · dx∧dy`, and the Laplacian is normalized so that
//! `Δf = √−1∂∂̄f / ω0`, i.e. `Δ = (f_xx + f_yy) / (2 · total_area)`.
//! All derivatives are Fourier multipliers.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

struct GridInner {
    n: usize,
    total_area: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Fourier symbol of Δ, indexed like the field samples.
    lap_symbol: Vec<f64>,
}

/// A discretized flat torus. Cheap to clone; clones share FFT plans.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.inner.n)
            .field("total_area", &self.inner.total_area)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.n == other.inner.n && self.inner.total_area == other.inner.total_area)
    }
}

/// Signed wavenumber of FFT index `idx` on an `n`-point axis.
pub fn wavenumber(idx: usize, n: usize) -> i64 {
    if idx <= n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

impl Grid {
    pub fn new(n: usize, total_area: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n must be a power of two >= 8, got {n}"
            )));
        }
        if !(total_area > 0.0 && total_area.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "total_area must be positive, got {total_area}"
            )));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scale = -4.0 * PI * PI / (2.0 * total_area);
        let mut lap_symbol = vec![0.0; n * n];
        for j in 0..n {
            let kx = wavenumber(j, n) as f64;
            for k in 0..n {
                let ky = wavenumber(k, n) as f64;
                lap_symbol[j * n + k] = scale * (kx * kx + ky * ky);
            }
        }
        Ok(Self {
            inner: Arc::new(GridInner {
                n,
                total_area,
                forward,
                inverse,
                lap_symbol,
            }),
        })
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn total_area(&self) -> f64 {
        self.inner.total_area
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.inner.n * self.inner.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one grid point with respect to ω0.
    pub fn cell_weight(&self) -> f64 {
        self.inner.total_area / self.len() as f64
    }

    /// Coordinates of the flat index `idx`.
    pub fn point(&self, idx: usize) -> (f64, f64) {
        let n = self.inner.n;
        ((idx / n) as f64 / n as f64, (idx % n) as f64 / n as f64)
    }

    /// Eigenvalues of Δ in FFT ordering (all ≤ 0).
    pub fn laplacian_symbol(&self) -> &[f64] {
        &self.inner.lap_symbol
    }

    fn transpose(&self, buf: &mut [Complex64]) {
        let n = self.inner.n;
        for j in 0..n {
            for k in (j + 1)..n {
                buf.swap(j * n + k, k * n + j);
            }
        }
    }

    /// Unnormalized 2D DFT of real samples.
    pub fn fft(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.inner.forward.process(&mut buf);
        self.transpose(&mut buf);
        self.inner.forward.process(&mut buf);
        self.transpose(&mut buf);
        buf
    }

    /// Inverse of [`Grid::fft`], keeping the real part.
    pub fn ifft_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inner.inverse.process(&mut buf);
        self.transpose(&mut buf);
        self.inner.inverse.process(&mut buf);
        self.transpose(&mut buf);
        let norm = 1.0 / self.len() as f64;
        buf.into_iter().map(|c| c.re * norm).collect()
    }

    /// Applies a real, even Fourier multiplier given per flat spectral index.
    pub fn apply_symbol(&self, values: &[f64], symbol: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut spec = self.fft(values);
        for (i, c) in spec.iter_mut().enumerate() {
            *c *= symbol(i);
        }
        self.ifft_real(spec)
    }
}

/// Samples of a real function on a [`Grid`].
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite sample".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Unchecked constructor for values produced by field arithmetic.
    pub(crate) fn raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self::raw(grid, vec![c; grid.len()])
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.point(i);
                f(x, y)
            })
            .collect();
        Self::raw(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        self.check_grid(&other.grid)
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid == *grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination. Panics on grids of different size.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.values.len(), other.values.len(), "grid size mismatch");
        Self::raw(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &ScalarField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Flat index of the largest sample (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// ⨍ v ω0: the plain average of the samples.
    pub fn mean_value(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// ∫ v ω0.
    pub fn integrate(&self) -> f64 {
        self.mean_value() * self.grid.total_area()
    }

    /// Δv in the ω0 normalization, computed spectrally.
    pub fn laplacian(&self) -> Self {
        let symbol = self.grid.laplacian_symbol();
        let values = self.grid.apply_symbol(&self.values, |i| symbol[i]);
        Self::raw(&self.grid, values)
    }

    /// Trigonometric interpolant of the samples.
    pub fn interpolant(&self) -> TrigInterpolant {
        TrigInterpolant::new(self)
    }

    /// Spectral (zero-padded) interpolation onto a finer grid of the same area.
    pub fn resample(&self, target: &Grid) -> Result<Self> {
        let (nc, nf) = (self.grid.n(), target.n());
        if nf < nc || target.total_area() != self.grid.total_area() {
            return Err(Error::InvalidGrid(format!(
                "cannot resample n={nc} onto n={nf}"
            )));
        }
        let coarse = self.grid.fft(&self.values);
        let mut fine = vec![Complex64::new(0.0, 0.0); target.len()];
        let ratio = (nf * nf) as f64 / (nc * nc) as f64;
        let half = (nc / 2) as i64;
        for jc in 0..nc {
            let kx = wavenumber(jc, nc);
            for kc in 0..nc {
                let ky = wavenumber(kc, nc);
                let c = coarse[jc * nc + kc] * ratio;
                // Nyquist coefficients are split evenly between ±n/2.
                let xs: &[i64] = if kx == half && nf > nc {
                    &[half, -half]
                } else {
                    &[kx]
                };
                let ys: &[i64] = if ky == half && nf > nc {
                    &[half, -half]
                } else {
                    &[ky]
                };
                let w = 1.0 / (xs.len() * ys.len()) as f64;
                for &x in xs {
                    for &y in ys {
                        let jf = x.rem_euclid(nf as i64) as usize;
                        let kf = y.rem_euclid(nf as i64) as usize;
                        fine[jf * nf + kf] += c * w;
                    }
                }
            }
        }
        Ok(Self::raw(target, target.ifft_real(fine)))
    }
}

/// Value, gradient and Hessian of a trigonometric interpolant.
#[derive(Clone, Copy, Debug)]
pub struct PointJet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hessian: [[f64; 2]; 2],
}

/// Continuous extension of a grid field by its Fourier series.
#[derive(Clone, Debug)]
pub struct TrigInterpolant {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl TrigInterpolant {
    fn new(field: &ScalarField) -> Self {
        let norm = 1.0 / field.grid.len() as f64;
        let coeffs = field
            .grid
            .fft(&field.values)
            .into_iter()
            .map(|c| c * norm)
            .collect();
        Self {
            n: field.grid.n(),
            coeffs,
        }
    }

    /// Evaluates the series and its first two derivatives at `(x, y)`.
    pub fn jet(&self, x: f64, y: f64) -> PointJet {
        let n = self.n;
        let mut jet = PointJet {
            value: 0.0,
            grad: [0.0; 2],
            hessian: [[0.0; 2]; 2],
        };
        for j in 0..n {
            let kx = 2.0 * PI * wavenumber(j, n) as f64;
            for k in 0..n {
                let c = self.coeffs[j * n + k];
                if c.norm_sqr() == 0.0 {
                    continue;
                }
                let ky = 2.0 * PI * wavenumber(k, n) as f64;
                let phase = Complex64::from_polar(1.0, kx * x + ky * y);
                let term = c * phase;
                let i_term = Complex64::i() * term;
                jet.value += term.re;
                jet.grad[0] += kx * i_term.re;
                jet.grad[1] += ky * i_term.re;
                jet.hessian[0][0] -= kx * kx * term.re;
                jet.hessian[1][1] -= ky * ky * term.re;
                jet.hessian[0][1] -= kx * ky * term.re;
            }
        }
        jet.hessian[1][0] = jet.hessian[0][1];
        jet
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.jet(x, y).value
    }
}

/// Green kernel of Δ with respect to ω0, normalized so that `max G = 0`.
#[derive(Clone, Debug)]
pub struct GreenKernel {
    grid: Grid,
    /// `G(x, y) = values[x − y]` with indices taken mod n.
    values: Vec<f64>,
}

impl GreenKernel {
    pub fn new(grid: &Grid) -> Self {
        let symbol = grid.laplacian_symbol();
        // Δ_y G(x, ·) = δ_x − 1/area, with δ taken against the ω0 quadrature.
        let mut values = grid.apply_symbol(&delta_at_origin(grid), |i| {
            if i == 0 {
                0.0
            } else {
                1.0 / symbol[i]
            }
        });
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in &mut values {
            *v -= top;
        }
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Kernel values indexed by the displacement `x − y`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Adds a constant to every kernel value (the reconstruction is invariant).
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }

    /// G(x, y) for flat grid indices `x` and `y`.
    pub fn at(&self, x: usize, y: usize) -> f64 {
        let n = self.grid.n();
        let dj = (x / n + n - y / n) % n;
        let dk = (x % n + n - y % n) % n;
        self.values[dj * n + dk]
    }

    /// ⨍v ω0 + ∫ G(x, y) Δv(y) ω0(y), by direct quadrature.
    pub fn reconstruct(&self, v: &ScalarField) -> Result<ScalarField> {
        if v.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let n = self.grid.n();
        let w = self.grid.cell_weight();
        let lap = v.laplacian();
        let mean = v.mean_value();
        let out = (0..self.grid.len())
            .map(|x| {
                let (xj, xk) = (x / n, x % n);
                let mut acc = 0.0;
                for yj in 0..n {
                    let row = ((xj + n - yj) % n) * n;
                    for yk in 0..n {
                        acc += self.values[row + (xk + n - yk) % n] * lap.values[yj * n + yk];
                    }
                }
                mean + w * acc
            })
            .collect();
        Ok(ScalarField::raw(&self.grid, out))
    }
}

fn delta_at_origin(grid: &Grid) -> Vec<f64> {
    let mut d = vec![0.0; grid.len()];
    d[0] = 1.0 / grid.cell_weight();
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 4.0).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(7, 4.0).is_err());
        assert!(Grid::new(4, 4.0).is_err());
        assert!(Grid::new(24, 4.0).is_err());
        assert!(Grid::new(8, 0.0).is_err());
        assert!(Grid::new(8, -1.0).is_err());
    }

    #[test]
    fn integrates_constants() {
        for n in [8, 64] {
            let g = grid(n);
            assert_eq!(ScalarField::constant(&g, 1.0).integrate(), 4.0);
            assert_eq!(ScalarField::constant(&g, -0.25).integrate(), -1.0);
        }
        let g = grid(16);
        let c = ScalarField::from_fn(&g, |x, _| (2.0 * PI * x).cos());
        assert!(c.integrate().abs() < 1e-14);
        assert!((c.map(|v| 1.0 + v).mean_value() - 1.0).abs() < 1e-14);
        assert_eq!(ScalarField::constant(&g, 3.0).mean_value(), 3.0);
    }

    #[test]
    fn laplacian_of_cosine() {
        let g = grid(32);
        let v = ScalarField::from_fn(&g, |x, _| (2.0 * PI * x).cos());
        // multiplier -4π²|k|²/(2d) with k = (1, 0), d = 4
        let expected = -PI * PI / 2.0;
        assert!((expected + 4.934_802_200_544_679).abs() < 1e-12);
        let lap = v.laplacian();
        let err = lap.sub(&v.scale(expected)).sup_norm();
        assert!(err < 1e-12, "err = {err}");
        assert!(ScalarField::constant(&g, 2.5).laplacian().sup_norm() < 1e-14);
    }

    #[test]
    fn laplacian_nonpositive_at_max() {
        let g = grid(32);
        let v = ScalarField::from_fn(&g, |x, y| {
            (2.0 * PI * x).sin() + 0.3 * (4.0 * PI * y).cos() + 0.2 * (2.0 * PI * (x + y)).cos()
        });
        let i = v.argmax();
        assert!(v.laplacian().values()[i] <= 1e-10);
    }

    #[test]
    fn green_kernel_normalization_and_symmetry() {
        let g = grid(16);
        let k = GreenKernel::new(&g);
        assert_eq!(k.values().iter().copied().fold(f64::MIN, f64::max), 0.0);
        assert!(k.values().iter().all(|&v| v <= 0.0));
        assert!(k.values().iter().any(|&v| v < 0.0));
        for x in 0..g.len() {
            for y in 0..g.len() {
                assert!((k.at(x, y) - k.at(y, x)).abs() < 1e-13);
            }
        }
        let row_integral = |x: usize| (0..g.len()).map(|y| k.at(x, y)).sum::<f64>();
        let first = row_integral(0);
        for x in [1, 17, 100, 255] {
            assert!((row_integral(x) - first).abs() < 1e-10 * first.abs().max(1.0));
        }
    }

    #[test]
    fn green_reconstruction() {
        let g = grid(64);
        let k = GreenKernel::new(&g);
        let c = ScalarField::constant(&g, 1.7);
        assert!(k.reconstruct(&c).unwrap().sub(&c).sup_norm() < 1e-12);
        let v = ScalarField::from_fn(&g, |x, y| (2.0 * PI * x).cos() + (2.0 * PI * y).sin());
        let rec = k.reconstruct(&v).unwrap();
        assert!(rec.sub(&v).sup_norm() <= 1e-10);
        let rec_shift = k.shifted(-3.0).reconstruct(&v).unwrap();
        assert!(rec_shift.sub(&rec).sup_norm() <= 1e-10);
    }

    #[test]
    fn resample_is_exact_for_band_limited() {
        let coarse = grid(16);
        let fine = grid(64);
        let f = |x: f64, y: f64| (2.0 * PI * x).cos() * (4.0 * PI * y).sin() + 0.5;
        let up = ScalarField::from_fn(&coarse, f).resample(&fine).unwrap();
        assert!(up.sub(&ScalarField::from_fn(&fine, f)).sup_norm() < 1e-13);
    }

    #[test]
    fn interpolant_matches_analytic_jet() {
        let g = grid(32);
        let v = ScalarField::from_fn(&g, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        let jet = v.interpolant().jet(0.13, 0.71);
        let (sx, cx) = (2.0 * PI * 0.13f64).sin_cos();
        let (sy, cy) = (2.0 * PI * 0.71f64).sin_cos();
        let w = 2.0 * PI;
        assert!((jet.value - sx * cy).abs() < 1e-12);
        assert!((jet.grad[0] - w * cx * cy).abs() < 1e-11);
        assert!((jet.grad[1] + w * sx * sy).abs() < 1e-11);
        assert!((jet.hessian[0][0] + w * w * sx * cy).abs() < 1e-10);
        assert!((jet.hessian[0][1] + w * w * cx * sy).abs() < 1e-10);
    }
}
