//! Plain-text field snapshots.
//!
//! ```text
//! DEMAILLY-FIELD v1 n=<n> r=<r> t=<t> lambda=<λ> alpha0=<α0> degrees=<d1,...,dr>
//! ```
//!
//! followed by `r + 1` blocks (f, then u_1..u_r) of `n` lines with `n`
//! space-separated values each, printed with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Grid, ScalarField};
use crate::model::State;

pub const MAGIC: &str = "DEMAILLY-FIELD";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported snapshot version {found} (reader supports v{VERSION})")]
    Version { found: String },
    #[error("snapshot dimension mismatch: {0}")]
    Dimension(String),
    #[error("snapshot parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub n: usize,
    pub r: usize,
    pub t: f64,
    pub lambda: f64,
    pub alpha0: f64,
    pub degrees: Vec<i64>,
}

pub fn render_snapshot(state: &State, meta: &SnapshotMeta) -> String {
    let n = meta.n;
    let degrees: Vec<String> = meta.degrees.iter().map(i64::to_string).collect();
    let mut out = String::with_capacity((meta.r + 1) * n * n * 25 + 128);
    let _ = writeln!(
        out,
        "{MAGIC} v{VERSION} n={} r={} t={} lambda={} alpha0={} degrees={}",
        n,
        meta.r,
        meta.t,
        meta.lambda,
        meta.alpha0,
        degrees.join(",")
    );
    for field in std::iter::once(&state.f).chain(&state.u) {
        for row in field.values().chunks(n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn save_snapshot(path: &Path, state: &State, meta: &SnapshotMeta) -> Result<(), SnapshotError> {
    std::fs::write(path, render_snapshot(state, meta))?;
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> SnapshotError {
    SnapshotError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_header(line: &str) -> Result<SnapshotMeta, SnapshotError> {
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some(MAGIC) {
        return Err(parse_err(1, "missing DEMAILLY-FIELD magic"));
    }
    let version = tokens
        .next()
        .ok_or_else(|| parse_err(1, "missing version"))?;
    if version != format!("v{VERSION}") {
        return Err(SnapshotError::Version {
            found: version.into(),
        });
    }
    let mut fields = std::collections::HashMap::new();
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header token `{tok}`")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| parse_err(1, format!("header lacks `{k}`")))
    };
    let num = |k: &str| -> Result<f64, SnapshotError> {
        get(k)?
            .parse()
            .map_err(|_| parse_err(1, format!("bad `{k}`")))
    };
    let int = |k: &str| -> Result<usize, SnapshotError> {
        get(k)?
            .parse()
            .map_err(|_| parse_err(1, format!("bad `{k}`")))
    };
    let degrees = get("degrees")?
        .split(',')
        .map(|d| d.parse::<i64>().map_err(|_| parse_err(1, "bad `degrees`")))
        .collect::<Result<Vec<_>, _>>()?;
    let meta = SnapshotMeta {
        n: int("n")?,
        r: int("r")?,
        t: num("t")?,
        lambda: num("lambda")?,
        alpha0: num("alpha0")?,
        degrees,
    };
    if meta.degrees.len() != meta.r {
        return Err(SnapshotError::Dimension(format!(
            "{} degrees for r = {}",
            meta.degrees.len(),
            meta.r
        )));
    }
    Ok(meta)
}

pub fn parse_snapshot(text: &str) -> Result<(State, SnapshotMeta), SnapshotError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty snapshot"))?;
    let meta = parse_header(header)?;
    let n = meta.n;
    let total_area = meta.degrees.iter().sum::<i64>() as f64;
    let grid = Grid::new(n, total_area)
        .map_err(|e| SnapshotError::Dimension(format!("header describes no valid grid: {e}")))?;

    let rows: Vec<(usize, &str)> = lines
        .enumerate()
        .map(|(i, l)| (i + 2, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let expected_rows = (meta.r + 1) * n;
    if rows.len() != expected_rows {
        return Err(SnapshotError::Dimension(format!(
            "expected {expected_rows} payload rows for n = {n}, r = {}, found {}",
            meta.r,
            rows.len()
        )));
    }
    let mut blocks: Vec<Vec<f64>> = Vec::with_capacity(meta.r + 1);
    for block in rows.chunks(n) {
        let mut values = Vec::with_capacity(n * n);
        for &(lineno, line) in block {
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad number `{tok}`")))?;
                if !v.is_finite() {
                    return Err(parse_err(lineno, "non-finite value"));
                }
                values.push(v);
            }
            if values.len() - before != n {
                return Err(SnapshotError::Dimension(format!(
                    "line {lineno} has {} values, expected {n}",
                    values.len() - before
                )));
            }
        }
        blocks.push(values);
    }
    let mut fields = blocks
        .into_iter()
        .map(|v| ScalarField::from_values(&grid, v).expect("dimensions checked"));
    let f = fields.next().expect("r + 1 blocks");
    let state = State {
        f,
        u: fields.collect(),
        t: meta.t,
    };
    Ok((state, meta))
}

pub fn load_snapshot(path: &Path) -> Result<(State, SnapshotMeta), SnapshotError> {
    let text = std::fs::read_to_string(path)?;
    parse_snapshot(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sample() -> (State, SnapshotMeta) {
        let g = Grid::new(8, 4.0).unwrap();
        let u1 = ScalarField::from_fn(&g, |x, y| (2.0 * PI * x).sin() / 3.0 + y * 1e-7);
        let state = State {
            f: ScalarField::from_fn(&g, |x, y| -0.1 * (x + y).exp()),
            u: vec![u1.clone(), u1.scale(-1.0)],
            t: 0.35,
        };
        let meta = SnapshotMeta {
            n: 8,
            r: 2,
            t: 0.35,
            lambda: 8.0,
            alpha0: 10.0,
            degrees: vec![1, 3],
        };
        (state, meta)
    }

    #[test]
    fn round_trip_is_exact() {
        let (state, meta) = sample();
        let (back, meta_back) = parse_snapshot(&render_snapshot(&state, &meta)).unwrap();
        assert_eq!(meta, meta_back);
        assert_eq!(back.f.values(), state.f.values());
        for (a, b) in back.u.iter().zip(&state.u) {
            assert_eq!(a.values(), b.values());
        }
        assert_eq!(back.t, 0.35);
    }

    #[test]
    fn header_format() {
        let (state, meta) = sample();
        let text = render_snapshot(&state, &meta);
        assert_eq!(
            text.lines().next().unwrap(),
            "DEMAILLY-FIELD v1 n=8 r=2 t=0.35 lambda=8 alpha0=10 degrees=1,3"
        );
        assert_eq!(text.lines().count(), 1 + 3 * 8);
    }

    #[test]
    fn distinct_errors() {
        let (state, meta) = sample();
        let text = render_snapshot(&state, &meta);
        let v2 = text.replacen("v1", "v2", 1);
        assert!(matches!(
            parse_snapshot(&v2),
            Err(SnapshotError::Version { .. })
        ));
        let wrong_n = text.replacen("n=8", "n=16", 1);
        assert!(matches!(
            parse_snapshot(&wrong_n),
            Err(SnapshotError::Dimension(_))
        ));
        let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            parse_snapshot(&truncated),
            Err(SnapshotError::Dimension(_))
        ));
        let garbage = text.replacen("e-1", "e-1x", 1);
        assert!(matches!(
            parse_snapshot(&garbage),
            Err(SnapshotError::Parse { .. })
        ));
        assert!(matches!(
            parse_snapshot(""),
            Err(SnapshotError::Parse { .. })
        ));
    }
}
