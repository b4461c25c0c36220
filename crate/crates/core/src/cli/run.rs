//! Batch orchestration: solve, verify and sweep.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 recorded
//! breakdown before t = 1, 3 failed verification.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cli::config::{parse_degrees, ConfigError, RunConfig};
use crate::cli::snapshot::{load_snapshot, save_snapshot, SnapshotMeta};
use crate::diagnostics::{diagnose, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::homotopy::{closed_form_state, march_problem, MarchReport, Problem};
use crate::model::residual;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_BREAKDOWN: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

pub struct SolveOutcome {
    pub exit_code: i32,
    pub reason: Option<String>,
    pub report: Option<MarchReport>,
    /// Largest sup-distance to the closed form over accepted states (unperturbed data only).
    pub closed_form_error: Option<f64>,
}

pub fn summary_header(r: usize) -> String {
    let mut h = String::from("t,min_f,max_f,cone_margin,newton_iterations,residual");
    for i in 1..=r {
        let _ = write!(h, ",identity_err_{i}");
    }
    h.push_str(",uy_violation");
    h
}

pub fn summary_csv(report: &MarchReport) -> String {
    let r = report.degrees.len();
    let mut out = summary_header(r);
    out.push('\n');
    for step in &report.steps {
        let d = &step.diagnostics;
        let _ = write!(
            out,
            "{},{:e},{:e},{:e},{},{:e}",
            step.t,
            d.bounds.min_f,
            d.bounds.max_f,
            d.cone_margin,
            step.newton.iterations,
            step.newton.final_residual
        );
        for e in &d.identity_errors {
            let _ = write!(out, ",{e:e}");
        }
        let _ = writeln!(out, ",{:e}", d.uy_violation);
    }
    out
}

fn snapshot_name(index: usize, t: f64) -> String {
    format!("step_{index:04}_t{t:.6}.snap")
}

fn error_document(code: i32, reason: &str) -> serde_json::Value {
    json!({ "status": "error", "exit_code": code, "reason": reason })
}

fn write_json(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    std::fs::write(path, text + "\n")
}

/// Runs the t = 0 construction and the march, writing artifacts into `out`.
pub fn run_solve(cfg: &RunConfig, out: &Path) -> SolveOutcome {
    let fail = |code: i32, reason: String| {
        let _ = std::fs::create_dir_all(out);
        let _ = write_json(&out.join("report.json"), &error_document(code, &reason));
        SolveOutcome {
            exit_code: code,
            reason: Some(reason),
            report: None,
            closed_form_error: None,
        }
    };
    if let Err(e) = cfg.validate() {
        return fail(EXIT_CONFIG, e.to_string());
    }
    let spec = cfg.bundle_spec();
    let problem = match Problem::new(&spec, &cfg.params_input(), cfg.n) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_CONFIG, format!("t=0 construction failed: {e}")),
    };
    let report = match march_problem(&problem, cfg.schedule()) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, format!("march failed at t=0: {e}")),
    };
    let closed_form_error = spec.perturbation.is_zero().then(|| {
        report
            .states
            .iter()
            .filter_map(|s| {
                closed_form_state(&spec, &problem.params, &problem.grid, s.t)
                    .ok()
                    .map(|c| c.distance(s))
            })
            .fold(0.0, f64::max)
    });

    let write = || -> std::io::Result<()> {
        std::fs::create_dir_all(out.join("snapshots"))?;
        std::fs::write(out.join("summary.csv"), summary_csv(&report))?;
        std::fs::write(out.join("config.txt"), cfg.to_text())?;
        for (i, state) in report.states.iter().enumerate() {
            let meta = SnapshotMeta {
                n: cfg.n,
                r: cfg.r,
                t: state.t,
                lambda: problem.params.lambda,
                alpha0: problem.params.alpha0,
                degrees: cfg.degrees.clone(),
            };
            save_snapshot(
                &out.join("snapshots").join(snapshot_name(i, state.t)),
                state,
                &meta,
            )
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        let (status, code) = if report.reached_end() {
            ("completed", EXIT_OK)
        } else {
            ("breakdown", EXIT_BREAKDOWN)
        };
        let doc = json!({
            "status": status,
            "exit_code": code,
            "t_star": report.breakdown.as_ref().map(|b| b.t_star),
            "closed_form_max_error": closed_form_error,
            "min_f": report.min_f(),
            "config": cfg,
            "march": &report,
        });
        write_json(&out.join("report.json"), &doc)
    };
    if let Err(e) = write() {
        return fail(EXIT_CONFIG, format!("cannot write artifacts: {e}"));
    }
    let (exit_code, reason) = match &report.breakdown {
        None => (EXIT_OK, None),
        Some(b) => (
            EXIT_BREAKDOWN,
            Some(format!("breakdown at t* = {}: {}", b.t_star, b.reason)),
        ),
    };
    SolveOutcome {
        exit_code,
        reason,
        report: Some(report),
        closed_form_error,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub exit_code: i32,
    pub residual: Option<f64>,
    pub diagnostics: Option<DiagnosticsRecord>,
    pub reasons: Vec<String>,
}

impl VerifyOutcome {
    fn error(code: i32, reason: String) -> Self {
        Self {
            exit_code: code,
            residual: None,
            diagnostics: None,
            reasons: vec![reason],
        }
    }
}

/// Reloads a snapshot and recomputes the residual and every diagnostic.
pub fn run_verify(snapshot: &Path, cfg: &RunConfig) -> VerifyOutcome {
    let (state, meta) = match load_snapshot(snapshot) {
        Ok(x) => x,
        Err(e) => return VerifyOutcome::error(EXIT_CONFIG, e.to_string()),
    };
    if let Err(e) = cfg.validate() {
        return VerifyOutcome::error(EXIT_CONFIG, e.to_string());
    }
    if meta.n != cfg.n || meta.r != cfg.r || meta.degrees != cfg.degrees {
        return VerifyOutcome::error(
            EXIT_CONFIG,
            format!(
                "snapshot (n={}, degrees={:?}) does not match config (n={}, degrees={:?})",
                meta.n, meta.degrees, cfg.n, cfg.degrees
            ),
        );
    }
    let problem = match Problem::new(&cfg.bundle_spec(), &cfg.params_input(), cfg.n) {
        Ok(p) => p,
        Err(e) => return VerifyOutcome::error(EXIT_CONFIG, e.to_string()),
    };
    let params = &problem.params;
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    if !rel(meta.lambda, params.lambda) || !rel(meta.alpha0, params.alpha0) {
        return VerifyOutcome::error(
            EXIT_CONFIG,
            format!(
                "snapshot parameters (lambda={}, alpha0={}) differ from config (lambda={}, alpha0={})",
                meta.lambda, meta.alpha0, params.lambda, params.alpha0
            ),
        );
    }
    // rebind onto the problem grid so fields share FFT plans
    let state = crate::model::State {
        f: crate::geometry::ScalarField::from_values(&problem.grid, state.f.into_values())
            .expect("dimensions checked"),
        u: state
            .u
            .into_iter()
            .map(|u| {
                crate::geometry::ScalarField::from_values(&problem.grid, u.into_values())
                    .expect("dimensions checked")
            })
            .collect(),
        t: state.t,
    };

    let mut reasons = Vec::new();
    let res = match residual(&state, &problem.curv, params) {
        Ok(r) => Some(r.sup_norm()),
        Err(e) => {
            reasons.push(format!("residual: {e}"));
            None
        }
    };
    if let Some(r) = res {
        if r > params.tol.newton_tol {
            reasons.push(format!(
                "residual {r:e} exceeds tolerance {:e}",
                params.tol.newton_tol
            ));
        }
    }
    let diag = diagnose(&state, &problem.curv, params);
    for c in diag.failures() {
        reasons.push(format!(
            "{}: {:e} {} {:e}",
            c.name,
            c.value,
            if c.upper { ">" } else { "<" },
            c.threshold
        ));
    }
    VerifyOutcome {
        exit_code: if reasons.is_empty() {
            EXIT_OK
        } else {
            EXIT_VERIFY
        },
        residual: res,
        diagnostics: Some(diag),
        reasons,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Alpha0,
    Lambda,
    N,
    Degrees,
}

impl std::str::FromStr for SweepAxis {
    type Err = ConfigError;

    fn from_str(s: &str) -> std::result::Result<Self, ConfigError> {
        match s {
            "alpha0" => Ok(Self::Alpha0),
            "lambda" => Ok(Self::Lambda),
            "n" => Ok(Self::N),
            "degrees" => Ok(Self::Degrees),
            other => Err(ConfigError::InvalidValue {
                key: "axis".into(),
                msg: format!("unknown sweep axis `{other}`"),
            }),
        }
    }
}

/// Splits a `--values` list: `;`-separated tuples for degrees, commas otherwise.
pub fn parse_sweep_values(
    axis: SweepAxis,
    values: &str,
) -> std::result::Result<Vec<String>, ConfigError> {
    let sep = if axis == SweepAxis::Degrees { ';' } else { ',' };
    let items: Vec<String> = values
        .split(sep)
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if items.is_empty() {
        return Err(ConfigError::InvalidValue {
            key: "values".into(),
            msg: "sweep needs at least one value".into(),
        });
    }
    let bad = |v: &str| ConfigError::InvalidValue {
        key: "values".into(),
        msg: format!("`{v}` is not a valid {axis:?} value"),
    };
    for v in &items {
        let ok = match axis {
            SweepAxis::Alpha0 | SweepAxis::Lambda => v.parse::<f64>().is_ok(),
            SweepAxis::N => v.parse::<usize>().is_ok(),
            SweepAxis::Degrees => parse_degrees("values", v).is_ok(),
        };
        if !ok {
            return Err(bad(v));
        }
    }
    Ok(items)
}

fn apply_axis(
    template: &RunConfig,
    axis: SweepAxis,
    value: &str,
) -> std::result::Result<RunConfig, ConfigError> {
    let bad = |msg: String| ConfigError::InvalidValue {
        key: "values".into(),
        msg,
    };
    let mut cfg = template.clone();
    match axis {
        SweepAxis::Alpha0 => {
            cfg.alpha0 = Some(
                value
                    .parse()
                    .map_err(|_| bad(format!("bad alpha0 `{value}`")))?,
            )
        }
        SweepAxis::Lambda => {
            cfg.lambda = Some(
                value
                    .parse()
                    .map_err(|_| bad(format!("bad lambda `{value}`")))?,
            )
        }
        SweepAxis::N => cfg.n = value.parse().map_err(|_| bad(format!("bad n `{value}`")))?,
        SweepAxis::Degrees => {
            cfg.degrees = parse_degrees("values", value)?;
            cfg.r = cfg.degrees.len();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub exit_code: i32,
    pub reason: Option<String>,
    pub breakdown_t: Option<f64>,
    pub final_t: Option<f64>,
    pub final_min_f: Option<f64>,
    pub final_max_f: Option<f64>,
    pub closed_form_error: Option<f64>,
    /// Sup-distance between this run's final state and the next finer grid's
    /// final state, after spectral interpolation onto the finer grid (axis `n`).
    pub diff_to_next: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepSummary {
    pub fn exit_codes(&self) -> Vec<i32> {
        self.rows.iter().map(|r| r.exit_code).collect()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut out = String::from(
            "value,exit_code,breakdown_t,final_t,final_min_f,final_max_f,closed_form_error,diff_to_next\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "\"{}\",{},{},{},{},{},{},{}",
                r.value,
                r.exit_code,
                r.breakdown_t.map(|t| t.to_string()).unwrap_or_default(),
                r.final_t.map(|t| t.to_string()).unwrap_or_default(),
                opt(r.final_min_f),
                opt(r.final_max_f),
                opt(r.closed_form_error),
                opt(r.diff_to_next)
            );
        }
        out
    }
}

fn member_dir(out: &Path, axis: SweepAxis, value: &str) -> PathBuf {
    let tag: String = value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    out.join(format!("{axis:?}_{tag}").to_lowercase())
}

/// Runs one solve per axis value (in parallel) and tabulates the outcomes.
pub fn run_sweep(
    template: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    out: &Path,
) -> Result<SweepSummary> {
    if values.is_empty() {
        return Err(Error::Config(ConfigError::InvalidValue {
            key: "values".into(),
            msg: "sweep needs at least one value".into(),
        }));
    }
    std::fs::create_dir_all(out)?;
    let outcomes: Vec<(String, std::result::Result<SolveOutcome, ConfigError>)> = values
        .par_iter()
        .map(|v| {
            let outcome =
                apply_axis(template, axis, v).map(|cfg| run_solve(&cfg, &member_dir(out, axis, v)));
            (v.clone(), outcome)
        })
        .collect();

    let mut rows: Vec<SweepRow> = outcomes
        .iter()
        .map(|(value, outcome)| match outcome {
            Err(e) => SweepRow {
                value: value.clone(),
                exit_code: EXIT_CONFIG,
                reason: Some(e.to_string()),
                breakdown_t: None,
                final_t: None,
                final_min_f: None,
                final_max_f: None,
                closed_form_error: None,
                diff_to_next: None,
            },
            Ok(o) => {
                let last = o.report.as_ref().and_then(|r| r.steps.last());
                SweepRow {
                    value: value.clone(),
                    exit_code: o.exit_code,
                    reason: o.reason.clone(),
                    breakdown_t: o
                        .report
                        .as_ref()
                        .and_then(|r| r.breakdown.as_ref().map(|b| b.t_star)),
                    final_t: last.map(|s| s.t),
                    final_min_f: last.map(|s| s.diagnostics.bounds.min_f),
                    final_max_f: last.map(|s| s.diagnostics.bounds.max_f),
                    closed_form_error: o.closed_form_error,
                    diff_to_next: None,
                }
            }
        })
        .collect();

    if axis == SweepAxis::N {
        // self-convergence between successive grids, in the order given
        for k in 0..outcomes.len().saturating_sub(1) {
            let coarse = outcomes[k].1.as_ref().ok().and_then(|o| o.report.as_ref());
            let fine = outcomes[k + 1]
                .1
                .as_ref()
                .ok()
                .and_then(|o| o.report.as_ref());
            if let (Some(c), Some(f)) = (coarse, fine) {
                if c.reached_end() && f.reached_end() {
                    rows[k].diff_to_next = self_convergence_gap(c, f);
                }
            }
        }
    }

    let summary = SweepSummary { axis, rows };
    std::fs::write(out.join("sweep.csv"), summary.to_csv())?;
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(out.join("sweep.json"), text + "\n")?;
    Ok(summary)
}

/// Sup-distance between two final states after interpolating the coarse one onto the fine grid.
pub fn self_convergence_gap(coarse: &MarchReport, fine: &MarchReport) -> Option<f64> {
    let c = coarse.last_state();
    let f = fine.last_state();
    let grid = f.grid();
    let mut gap = c.f.resample(grid).ok()?.sub(&f.f).sup_norm();
    for (cu, fu) in c.u.iter().zip(&f.u) {
        gap = gap.max(cu.resample(grid).ok()?.sub(fu).sup_norm());
    }
    Some(gap)
}
