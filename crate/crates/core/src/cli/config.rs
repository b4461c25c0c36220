//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! grid.n = 64
//! bundle.r = 2
//! bundle.degrees = 1,3
//! bundle.perturbation = cosine 0.2 1,1
//! params.lambda = 8
//! params.alpha0 = 10
//! ```
//!
//! `bundle.perturbation` is `none` or `cosine <amplitude> [kx,ky ...]`
//! (modes default to `1,1`). Unknown and repeated keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homotopy::Schedule;
use crate::model::{BundleSpec, CurvaturePerturbation, ParamsInput, Tolerances};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    DuplicateKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid value for `{key}`: {msg}")]
    InvalidValue { key: String, msg: String },
    #[error("inconsistent config: {0}")]
    Inconsistent(String),
}

pub const KEYS: [&str; 13] = [
    "grid.n",
    "bundle.r",
    "bundle.degrees",
    "bundle.perturbation",
    "params.lambda",
    "params.alpha0",
    "params.mu",
    "march.dt0",
    "march.dt_floor",
    "tol.newton",
    "tol.cone_floor",
    "output.dir",
    "seed",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: usize,
    pub r: usize,
    pub degrees: Vec<i64>,
    pub perturbation: CurvaturePerturbation,
    pub lambda: Option<f64>,
    pub alpha0: Option<f64>,
    pub mu: f64,
    pub dt0: f64,
    pub dt_floor: f64,
    pub newton_tol: f64,
    pub cone_floor: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse::<T>()
        .map_err(|_| invalid(key, format!("cannot parse `{v}`")))
}

pub fn parse_degrees(key: &str, v: &str) -> Result<Vec<i64>, ConfigError> {
    let v = v.trim().trim_start_matches('(').trim_end_matches(')');
    v.split(',')
        .map(|d| parse_num::<i64>(key, d.trim()))
        .collect()
}

fn parse_perturbation(key: &str, v: &str) -> Result<CurvaturePerturbation, ConfigError> {
    let mut tokens = v.split_whitespace();
    match tokens.next() {
        None | Some("none") => {
            if tokens.next().is_some() {
                return Err(invalid(key, "`none` takes no arguments"));
            }
            Ok(CurvaturePerturbation::none())
        }
        Some("cosine") => {
            let amplitude: f64 = match tokens.next() {
                Some(a) => parse_num(key, a)?,
                None => return Err(invalid(key, "`cosine` needs an amplitude")),
            };
            let mut modes = Vec::new();
            for tok in tokens {
                let (kx, ky) = tok
                    .split_once(',')
                    .ok_or_else(|| invalid(key, format!("mode `{tok}` is not kx,ky")))?;
                modes.push((parse_num(key, kx)?, parse_num(key, ky)?));
            }
            if modes.is_empty() {
                modes.push((1, 1));
            }
            Ok(CurvaturePerturbation { amplitude, modes })
        }
        Some(other) => Err(invalid(key, format!("unknown preset `{other}`"))),
    }
}

fn format_perturbation(p: &CurvaturePerturbation) -> String {
    if p.is_zero() {
        return "none".into();
    }
    let mut s = format!("cosine {}", p.amplitude);
    for (kx, ky) in &p.modes {
        let _ = write!(s, " {kx},{ky}");
    }
    s
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                msg: format!("expected key = value, got `{line}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey(k.into()));
            }
            if map.insert(k.into(), v.into()).is_some() {
                return Err(ConfigError::DuplicateKey(k.into()));
            }
        }
        Self::from_map(&map)
    }

    fn from_map(map: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let get = |k: &str| map.get(k).map(String::as_str);
        let opt_f64 = |k: &str| get(k).map(|v| parse_num::<f64>(k, v)).transpose();
        let r: usize = parse_num(
            "bundle.r",
            get("bundle.r").ok_or(ConfigError::MissingKey("bundle.r"))?,
        )?;
        let degrees = parse_degrees(
            "bundle.degrees",
            get("bundle.degrees").ok_or(ConfigError::MissingKey("bundle.degrees"))?,
        )?;
        let cfg = Self {
            n: get("grid.n")
                .map(|v| parse_num("grid.n", v))
                .transpose()?
                .unwrap_or(64),
            r,
            degrees,
            perturbation: get("bundle.perturbation")
                .map(|v| parse_perturbation("bundle.perturbation", v))
                .transpose()?
                .unwrap_or_default(),
            lambda: opt_f64("params.lambda")?,
            alpha0: opt_f64("params.alpha0")?,
            mu: opt_f64("params.mu")?.unwrap_or(1.0),
            dt0: opt_f64("march.dt0")?.unwrap_or(0.05),
            dt_floor: opt_f64("march.dt_floor")?.unwrap_or(1e-4),
            newton_tol: opt_f64("tol.newton")?.unwrap_or(1e-9),
            cone_floor: opt_f64("tol.cone_floor")?,
            output_dir: get("output.dir").map(PathBuf::from),
            seed: get("seed")
                .map(|v| parse_num("seed", v))
                .transpose()?
                .unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.degrees.len() != self.r {
            return Err(ConfigError::Inconsistent(format!(
                "bundle.degrees has {} entries but bundle.r = {}",
                self.degrees.len(),
                self.r
            )));
        }
        if self.r == 0 {
            return Err(invalid("bundle.r", "rank must be at least 1"));
        }
        if self.n < 8 || !self.n.is_power_of_two() {
            return Err(invalid("grid.n", "must be a power of two >= 8"));
        }
        if self.degrees.iter().sum::<i64>() <= 0 {
            return Err(invalid("bundle.degrees", "total degree must be positive"));
        }
        let lambda = self.lambda.unwrap_or(2.0 * self.r as f64 + 4.0);
        if !(lambda > self.r as f64) {
            return Err(invalid(
                "params.lambda",
                format!("must exceed r = {}", self.r),
            ));
        }
        if let Some(a) = self.alpha0 {
            if !(a > 1.0) {
                return Err(invalid("params.alpha0", "must exceed 1"));
            }
        }
        if !(self.dt0 > 0.0 && self.dt0 <= 1.0) {
            return Err(invalid("march.dt0", "must lie in (0, 1]"));
        }
        if !(self.dt_floor > 0.0 && self.dt_floor <= self.dt0) {
            return Err(invalid("march.dt_floor", "must lie in (0, dt0]"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(invalid("tol.newton", "must be positive"));
        }
        if let Some(c) = self.cone_floor {
            if !(c > 0.0) {
                return Err(invalid("tol.cone_floor", "must be positive"));
            }
        }
        if !self.mu.is_finite() {
            return Err(invalid("params.mu", "must be finite"));
        }
        Ok(())
    }

    pub fn bundle_spec(&self) -> BundleSpec {
        BundleSpec {
            degrees: self.degrees.clone(),
            perturbation: self.perturbation.clone(),
        }
    }

    pub fn params_input(&self) -> ParamsInput {
        ParamsInput {
            lambda: self.lambda,
            alpha0: self.alpha0,
            mu: self.mu,
            tol: Tolerances {
                newton_tol: self.newton_tol,
                cone_floor: self.cone_floor,
                dt0: self.dt0,
                dt_floor: self.dt_floor,
                ..Tolerances::default()
            },
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            dt0: self.dt0,
            dt_floor: self.dt_floor,
        }
    }

    /// Renders the config back to its text form; `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "grid.n = {}", self.n);
        let _ = writeln!(s, "bundle.r = {}", self.r);
        let degrees: Vec<String> = self.degrees.iter().map(i64::to_string).collect();
        let _ = writeln!(s, "bundle.degrees = {}", degrees.join(","));
        let _ = writeln!(
            s,
            "bundle.perturbation = {}",
            format_perturbation(&self.perturbation)
        );
        if let Some(l) = self.lambda {
            let _ = writeln!(s, "params.lambda = {l}");
        }
        if let Some(a) = self.alpha0 {
            let _ = writeln!(s, "params.alpha0 = {a}");
        }
        let _ = writeln!(s, "params.mu = {}", self.mu);
        let _ = writeln!(s, "march.dt0 = {}", self.dt0);
        let _ = writeln!(s, "march.dt_floor = {}", self.dt_floor);
        let _ = writeln!(s, "tol.newton = {}", self.newton_tol);
        if let Some(c) = self.cone_floor {
            let _ = writeln!(s, "tol.cone_floor = {c}");
        }
        if let Some(d) = &self.output_dir {
            let _ = writeln!(s, "output.dir = {}", d.display());
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}
