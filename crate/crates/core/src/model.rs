//! Bundle data, parameters, states and the direct-sum system.
//!
//! For `E = L_1 ⊕ … ⊕ L_r` with metric `h = e^{−f} g h₀`, `g = diag(e^{u_i})`,
//! the system reads
//!
//! ```text
//! Σ u_i = 0
//! Π_i M_i = e^{λf} a0,     M_i = Δf + 1/r − e^f u_i + (1−t)α0
//! Δu_i = s_i + e^{μf} u_i
//! ```
//!
//! The determinant equation is carried in logarithmic form,
//! `R_f = Σ ln M_i − λf − ln a0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, ScalarField};

/// Zero-mean, zero-sum perturbation of the curvature densities.
///
/// Summand `i` (0-based) receives
/// `amplitude · Σ_modes cos(2π kx x + 2π i / r) · cos(2π ky y)`;
/// the phases cancel in the sum over `i` whenever `r ≥ 2`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurvaturePerturbation {
    pub amplitude: f64,
    pub modes: Vec<(i64, i64)>,
}

impl CurvaturePerturbation {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn cosine(amplitude: f64) -> Self {
        Self {
            amplitude,
            modes: vec![(1, 1)],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0 || self.modes.is_empty()
    }

    pub fn field(&self, grid: &Grid, index: usize, rank: usize) -> ScalarField {
        if self.is_zero() {
            return ScalarField::zeros(grid);
        }
        let phase = 2.0 * PI * index as f64 / rank as f64;
        ScalarField::from_fn(grid, |x, y| {
            self.modes
                .iter()
                .map(|&(kx, ky)| {
                    (2.0 * PI * kx as f64 * x + phase).cos() * (2.0 * PI * ky as f64 * y).cos()
                })
                .sum::<f64>()
                * self.amplitude
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleSpec {
    /// `d_i = c1(L_i)`.
    pub degrees: Vec<i64>,
    pub perturbation: CurvaturePerturbation,
}

impl BundleSpec {
    pub fn new(degrees: Vec<i64>, perturbation: CurvaturePerturbation) -> Result<Self> {
        let spec = Self {
            degrees,
            perturbation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn constant(degrees: Vec<i64>) -> Result<Self> {
        Self::new(degrees, CurvaturePerturbation::none())
    }

    pub fn validate(&self) -> Result<()> {
        if self.degrees.is_empty() {
            return Err(Error::InvalidSpec("rank must be at least 1".into()));
        }
        if self.total_degree() <= 0 {
            return Err(Error::InvalidSpec(format!(
                "total degree must be positive, got {}",
                self.total_degree()
            )));
        }
        if !self.perturbation.amplitude.is_finite() {
            return Err(Error::InvalidSpec(
                "non-finite perturbation amplitude".into(),
            ));
        }
        if !self.perturbation.is_zero() {
            if self.rank() == 1 {
                return Err(Error::InvalidSpec(
                    "a rank-one bundle admits no trace-free perturbation".into(),
                ));
            }
            if self.perturbation.modes.contains(&(0, 0)) {
                return Err(Error::InvalidSpec(
                    "perturbation mode (0, 0) has nonzero mean".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.degrees.len()
    }

    /// deg E = Σ d_i.
    pub fn total_degree(&self) -> i64 {
        self.degrees.iter().sum()
    }

    /// True when every summand has positive degree.
    pub fn is_ample(&self) -> bool {
        self.degrees.iter().all(|&d| d > 0)
    }
}

/// Curvature densities `ρ_i = √−1(F_0)_i / ω0` and trace-free parts `s_i = ρ_i − 1/r`.
#[derive(Clone, Debug)]
pub struct CurvatureData {
    pub rho: Vec<ScalarField>,
    pub s: Vec<ScalarField>,
}

impl CurvatureData {
    pub fn rank(&self) -> usize {
        self.rho.len()
    }

    pub fn grid(&self) -> &Grid {
        self.rho[0].grid()
    }

    /// Pointwise `(Σ s_i²)^{1/2}`.
    pub fn trace_free_norm(&self) -> ScalarField {
        let mut acc = ScalarField::zeros(self.grid());
        for s in &self.s {
            acc = acc.add(&s.mul(s));
        }
        acc.map(f64::sqrt)
    }

    pub fn s_sup(&self) -> f64 {
        self.s.iter().map(ScalarField::sup_norm).fold(0.0, f64::max)
    }
}

pub fn build_curvature(spec: &BundleSpec, grid: &Grid) -> Result<CurvatureData> {
    spec.validate()?;
    let d = spec.total_degree() as f64;
    if (grid.total_area() - d).abs() > 1e-12 * d {
        return Err(Error::InvalidSpec(format!(
            "grid area {} must equal the total degree {d}",
            grid.total_area()
        )));
    }
    let r = spec.rank();
    let phis: Vec<ScalarField> = (0..r)
        .map(|i| spec.perturbation.field(grid, i, r))
        .collect();
    for (i, phi) in phis.iter().enumerate() {
        if phi.mean_value().abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "perturbation {i} has nonzero mean {}",
                phi.mean_value()
            )));
        }
    }
    let mut total = ScalarField::zeros(grid);
    for phi in &phis {
        total = total.add(phi);
    }
    if total.sup_norm() > 1e-12 {
        return Err(Error::InvalidSpec(format!(
            "perturbations do not sum to zero (sup {})",
            total.sup_norm()
        )));
    }
    let rho: Vec<ScalarField> = spec
        .degrees
        .iter()
        .zip(&phis)
        .map(|(&di, phi)| phi.map(|p| di as f64 / d + p))
        .collect();
    let s = rho
        .iter()
        .map(|rho| rho.map(|v| v - 1.0 / r as f64))
        .collect();
    Ok(CurvatureData { rho, s })
}

/// Solver tolerances and step controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub newton_tol: f64,
    /// `None` selects `1e-6 · (1 + α0)`.
    pub cone_floor: Option<f64>,
    pub max_iters: usize,
    pub dt0: f64,
    pub dt_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_tol: 1e-9,
            cone_floor: None,
            max_iters: 50,
            dt0: 0.05,
            dt_floor: 1e-4,
        }
    }
}

/// Parameters before the t = 0 construction has fixed α0 and a0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsInput {
    /// Defaults to `2r + 4`.
    pub lambda: Option<f64>,
    /// Lower bound for α0; the construction may raise it.
    pub alpha0: Option<f64>,
    pub mu: f64,
    pub tol: Tolerances,
}

impl Default for ParamsInput {
    fn default() -> Self {
        Self {
            lambda: None,
            alpha0: None,
            mu: 1.0,
            tol: Tolerances::default(),
        }
    }
}

impl ParamsInput {
    pub fn lambda_for_rank(&self, r: usize) -> f64 {
        self.lambda.unwrap_or(2.0 * r as f64 + 4.0)
    }
}

#[derive(Clone, Debug)]
pub struct DemaillyParams {
    pub lambda: f64,
    pub alpha0: f64,
    pub mu: f64,
    /// Reference density `a0 = Π_i (1/r + α0 − u_i⁰)`.
    pub a0: ScalarField,
    pub tol: Tolerances,
}

impl DemaillyParams {
    pub fn cone_floor(&self) -> f64 {
        self.tol.cone_floor.unwrap_or(1e-6 * (1.0 + self.alpha0))
    }
}

/// `(f, u_1, …, u_r, t)`, standing for `h = e^{−f} diag(e^{u_i}) h₀`.
#[derive(Clone, Debug)]
pub struct State {
    pub f: ScalarField,
    pub u: Vec<ScalarField>,
    pub t: f64,
}

impl State {
    pub fn rank(&self) -> usize {
        self.u.len()
    }

    pub fn grid(&self) -> &Grid {
        self.f.grid()
    }

    pub fn trace(&self) -> ScalarField {
        let mut acc = ScalarField::zeros(self.grid());
        for u in &self.u {
            acc = acc.add(u);
        }
        acc
    }

    /// ‖Σ u_i‖∞, which vanishes when det g = 1.
    pub fn trace_sup(&self) -> f64 {
        self.trace().sup_norm()
    }

    /// Sup-norm distance over f and every u_i.
    pub fn distance(&self, other: &State) -> f64 {
        let mut d = self.f.sub(&other.f).sup_norm();
        for (a, b) in self.u.iter().zip(&other.u) {
            d = d.max(a.sub(b).sup_norm());
        }
        d
    }

    /// Replaces u_r by `−Σ_{i<r} u_i`.
    pub fn project_trace(&mut self) {
        let r = self.u.len();
        let mut acc = ScalarField::zeros(self.grid());
        for u in &self.u[..r - 1] {
            acc = acc.sub(u);
        }
        self.u[r - 1] = acc;
    }

    pub fn check_compatible(&self, curv: &CurvatureData) -> Result<()> {
        if self.rank() != curv.rank() {
            return Err(Error::InvalidSpec(format!(
                "state rank {} does not match curvature rank {}",
                self.rank(),
                curv.rank()
            )));
        }
        self.f.check_grid(curv.grid())?;
        for u in &self.u {
            u.check_same_grid(&self.f)?;
        }
        Ok(())
    }
}

/// Tangent vector `(δf, δu_1, …, δu_r)` with `Σ δu_i = 0`.
#[derive(Clone, Debug)]
pub struct Perturbation {
    pub df: ScalarField,
    pub du: Vec<ScalarField>,
}

impl Perturbation {
    pub fn zeros(grid: &Grid, r: usize) -> Self {
        Self {
            df: ScalarField::zeros(grid),
            du: vec![ScalarField::zeros(grid); r],
        }
    }

    pub fn trace_sup(&self) -> f64 {
        let mut acc = ScalarField::zeros(self.df.grid());
        for du in &self.du {
            acc = acc.add(du);
        }
        acc.sup_norm()
    }
}

/// Residuals `(R_f, R_1, …, R_r)`; also used for their linearization.
#[derive(Clone, Debug)]
pub struct SystemResidual {
    pub f: ScalarField,
    pub u: Vec<ScalarField>,
}

impl SystemResidual {
    pub fn sup_norm(&self) -> f64 {
        self.u
            .iter()
            .map(ScalarField::sup_norm)
            .fold(self.f.sup_norm(), f64::max)
    }
}

/// The cone factors `M_i = Δf + 1/r − e^f u_i + (1−t)α0`.
pub fn cone_factors(state: &State, params: &DemaillyParams) -> Vec<ScalarField> {
    let lap_f = state.f.laplacian();
    cone_factors_with(state, &lap_f, &state.f.map(f64::exp), params)
}

fn cone_factors_with(
    state: &State,
    lap_f: &ScalarField,
    exp_f: &ScalarField,
    params: &DemaillyParams,
) -> Vec<ScalarField> {
    let shift = 1.0 / state.rank() as f64 + (1.0 - state.t) * params.alpha0;
    state
        .u
        .iter()
        .map(|u| {
            let eu = exp_f.mul(u);
            lap_f.zip_map(&eu, |l, e| l - e + shift)
        })
        .collect()
}

/// Smallest cone factor over all summands and grid points.
pub fn cone_margin(state: &State, params: &DemaillyParams) -> f64 {
    cone_factors(state, params)
        .iter()
        .map(ScalarField::min)
        .fold(f64::INFINITY, f64::min)
}

fn check_cone(factors: &[ScalarField], floor: f64) -> Result<f64> {
    let margin = factors
        .iter()
        .map(ScalarField::min)
        .fold(f64::INFINITY, f64::min);
    if margin.is_nan() || margin <= floor {
        return Err(Error::ConeViolation { margin, floor });
    }
    Ok(margin)
}

pub fn residual(
    state: &State,
    curv: &CurvatureData,
    params: &DemaillyParams,
) -> Result<SystemResidual> {
    state.check_compatible(curv)?;
    let lap_f = state.f.laplacian();
    let exp_f = state.f.map(f64::exp);
    let factors = cone_factors_with(state, &lap_f, &exp_f, params);
    check_cone(&factors, params.cone_floor())?;

    let mut log_det = ScalarField::zeros(state.grid());
    for m in &factors {
        log_det = log_det.add(&m.map(f64::ln));
    }
    let lambda = params.lambda;
    let rf = log_det
        .zip_map(&state.f, |ld, f| ld - lambda * f)
        .zip_map(&params.a0, |v, a| v - a.ln());

    let exp_mu_f = mu_exponential(&state.f, params.mu, &exp_f);
    let ru = state
        .u
        .iter()
        .zip(&curv.s)
        .map(|(u, s)| {
            let coupling = exp_mu_f.mul(u);
            u.laplacian().sub(s).sub(&coupling)
        })
        .collect();
    Ok(SystemResidual { f: rf, u: ru })
}

fn mu_exponential(f: &ScalarField, mu: f64, exp_f: &ScalarField) -> ScalarField {
    if mu == 1.0 {
        exp_f.clone()
    } else {
        f.map(|v| (mu * v).exp())
    }
}

/// The derivative of [`residual`] frozen at one state.
#[derive(Clone, Debug)]
pub struct Linearization {
    lambda: f64,
    mu: f64,
    exp_f: ScalarField,
    exp_mu_f: ScalarField,
    /// `1 / M_i`
    inv_factors: Vec<ScalarField>,
    /// `e^f u_i`
    exp_f_u: Vec<ScalarField>,
    /// `μ e^{μf} u_i`
    mu_exp_mu_f_u: Vec<ScalarField>,
}

impl Linearization {
    pub fn new(state: &State, params: &DemaillyParams) -> Result<Self> {
        let lap_f = state.f.laplacian();
        let exp_f = state.f.map(f64::exp);
        let factors = cone_factors_with(state, &lap_f, &exp_f, params);
        check_cone(&factors, params.cone_floor())?;
        let exp_mu_f = mu_exponential(&state.f, params.mu, &exp_f);
        let mu = params.mu;
        Ok(Self {
            lambda: params.lambda,
            mu,
            inv_factors: factors.iter().map(|m| m.map(f64::recip)).collect(),
            exp_f_u: state.u.iter().map(|u| exp_f.mul(u)).collect(),
            mu_exp_mu_f_u: state.u.iter().map(|u| exp_mu_f.mul(u).scale(mu)).collect(),
            exp_f,
            exp_mu_f,
        })
    }

    pub fn rank(&self) -> usize {
        self.inv_factors.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn exp_f(&self) -> &ScalarField {
        &self.exp_f
    }

    pub fn exp_mu_f(&self) -> &ScalarField {
        &self.exp_mu_f
    }

    pub fn inv_factors(&self) -> &[ScalarField] {
        &self.inv_factors
    }

    pub fn exp_f_u(&self) -> &[ScalarField] {
        &self.exp_f_u
    }

    pub fn mu_exp_mu_f_u(&self) -> &[ScalarField] {
        &self.mu_exp_mu_f_u
    }

    /// δR_f = Σ_i (Δδf − e^f u_i δf − e^f δu_i)/M_i − λδf,
    /// δR_i = Δδu_i − μ e^{μf} u_i δf − e^{μf} δu_i.
    pub fn apply(&self, p: &Perturbation) -> SystemResidual {
        let lap_df = p.df.laplacian();
        let mut rf = p.df.scale(-self.lambda);
        for i in 0..self.rank() {
            let dm = lap_df
                .sub(&self.exp_f_u[i].mul(&p.df))
                .sub(&self.exp_f.mul(&p.du[i]));
            rf = rf.add(&dm.mul(&self.inv_factors[i]));
        }
        let ru = (0..self.rank())
            .map(|i| {
                p.du[i]
                    .laplacian()
                    .sub(&self.mu_exp_mu_f_u[i].mul(&p.df))
                    .sub(&self.exp_mu_f.mul(&p.du[i]))
            })
            .collect();
        SystemResidual { f: rf, u: ru }
    }
}

pub fn apply_linearization(
    state: &State,
    curv: &CurvatureData,
    params: &DemaillyParams,
    p: &Perturbation,
) -> Result<SystemResidual> {
    state.check_compatible(curv)?;
    Ok(Linearization::new(state, params)?.apply(p))
}

/// The unique `v` with `v + A_i > 0` and `Π_i (v + A_i) = η`.
pub fn l_inverse(a: &[f64], eta: f64) -> Result<f64> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::NonPositiveTarget(eta));
    }
    assert!(!a.is_empty(), "l_inverse needs at least one shift");
    if a.len() == 1 {
        return Ok(eta - a[0]);
    }
    let a_min = a.iter().copied().fold(f64::INFINITY, f64::min);
    // Solve for x = v + min A > 0 so the tolerance is relative near the pole.
    let b: Vec<f64> = a.iter().map(|ai| ai - a_min).collect();
    let target = eta.ln();
    // φ(x) = Σ ln(x + b_i) − ln η is increasing and concave on (0, ∞).
    let phi = |x: f64| -> (f64, f64) {
        let mut val = -target;
        let mut der = 0.0;
        for &bi in &b {
            let y = x + bi;
            val += y.ln();
            der += 1.0 / y;
        }
        (val, der)
    };
    let mut lo = 0.0_f64;
    // Π(x + b_i) ≥ x^r bounds the root by η^{1/r}.
    let mut hi = eta.powf(1.0 / a.len() as f64);
    let mut x = hi;
    for _ in 0..200 {
        let (val, der) = phi(x);
        if val == 0.0 {
            break;
        }
        if val > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let mut next = x - val / der;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let done = (next - x).abs() <= 2.0 * f64::EPSILON * next;
        x = next;
        if done {
            break;
        }
    }
    Ok(x - a_min)
}

/// Pointwise `∂v/∂η · η = 1 / Σ_i 1/(v + A_i)` at a solution of `L_A(v) = η`.
pub fn l_inverse_log_derivative(a: &[f64], v: f64) -> f64 {
    1.0 / a.iter().map(|ai| 1.0 / (v + ai)).sum::<f64>()
}
