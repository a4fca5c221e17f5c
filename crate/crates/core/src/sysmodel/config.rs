//! TOML problem files.
//!
//! ```toml
//! alpha = 0.75
//! horizon = 1.0
//! dim_state = 2
//! dim_control = 1
//! A = [0.0, 1.0, -2.0, -0.5]   # row-major
//! B = [0.0, 1.0]
//! x0 = [1.0, 0.0]
//!
//! [[impulses]]
//! time = 0.5
//! D = [0.1, 0.0, 0.0, 0.1]
//! E = [0.0, 1.0]
//!
//! [[mask]]
//! channel = 1          # 1-based
//! start = 0.25
//! end = 1.0
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::{validate, ChannelWindow, ControlBundle, ImpulseEvent, SystemSpec, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImpulse {
    time: f64,
    #[serde(rename = "D")]
    d: Vec<f64>,
    #[serde(rename = "E")]
    e: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindow {
    channel: usize,
    start: f64,
    end: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    alpha: f64,
    horizon: f64,
    #[serde(default = "one")]
    semigroup_bound: f64,
    dim_state: usize,
    dim_control: usize,
    #[serde(rename = "A")]
    a: Vec<f64>,
    #[serde(rename = "B")]
    b: Vec<f64>,
    #[serde(default)]
    impulses: Vec<RawImpulse>,
    #[serde(default)]
    mask: Vec<RawWindow>,
    terminal_input: Option<Vec<f64>>,
    x0: Option<Vec<f64>>,
    target: Option<Vec<f64>>,
}

/// A system together with its initial state and an optional steering target.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub spec: SystemSpec,
    pub x0: DVector<f64>,
    pub target: Option<DVector<f64>>,
}

fn matrix(field: &str, data: &[f64], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::validation(field, format!("expected {} entries ({rows}x{cols}), got {}", rows * cols, data.len())));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

fn vector(field: &str, data: &[f64], len: usize) -> Result<DVector<f64>> {
    if data.len() != len {
        return Err(Error::validation(field, format!("expected {len} entries, got {}", data.len())));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation(field, "contains a non-finite entry"));
    }
    Ok(DVector::from_column_slice(data))
}

/// Parse and validate a problem file's contents.
pub fn parse_config(text: &str) -> Result<ProblemConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let (n, m) = (raw.dim_state, raw.dim_control);
    if n == 0 {
        return Err(Error::validation("dim_state", "must be at least 1"));
    }
    if m == 0 {
        return Err(Error::validation("dim_control", "must be at least 1"));
    }
    let mut spec = SystemSpec::new(raw.alpha, raw.horizon, matrix("A", &raw.a, n, n)?, matrix("B", &raw.b, n, m)?);
    spec.semigroup_bound = raw.semigroup_bound;
    for (k, imp) in raw.impulses.iter().enumerate() {
        spec.impulses.push(ImpulseEvent {
            time: imp.time,
            jump: matrix(&format!("impulses[{k}].D"), &imp.d, n, n)?,
            input: matrix(&format!("impulses[{k}].E"), &imp.e, n, m)?,
        });
    }
    for (k, w) in raw.mask.iter().enumerate() {
        if w.channel == 0 || w.channel > m {
            return Err(Error::validation(format!("mask[{k}].channel"), format!("{} is not in 1..={m}", w.channel)));
        }
        spec.mask.push(ChannelWindow { channel: w.channel - 1, start: w.start, end: w.end });
    }
    if let Some(e) = &raw.terminal_input {
        spec.terminal_input = Some(matrix("terminal_input", e, n, m)?);
    }
    let spec = validate(&spec)?;
    let x0 = match &raw.x0 {
        Some(x) => vector("x0", x, n)?,
        None => DVector::zeros(n),
    };
    let target = raw.target.as_deref().map(|t| vector("target", t, n)).transpose()?;
    Ok(ProblemConfig { spec, x0, target })
}

pub fn read_config(path: &Path) -> Result<ProblemConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// 17 significant digits: enough to round-trip every binary64 value.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn list<'a>(it: impl IntoIterator<Item = &'a f64>) -> String {
    let parts: Vec<String> = it.into_iter().map(|&x| num(x)).collect();
    format!("[{}]", parts.join(", "))
}

fn row_major(m: &DMatrix<f64>) -> String {
    let t = m.transpose();
    list(t.as_slice())
}

/// Serialize a problem to the file format read by [`parse_config`].
pub fn format_config(cfg: &ProblemConfig) -> String {
    let s = &cfg.spec;
    let mut out = String::new();
    let _ = writeln!(out, "alpha = {}", num(s.alpha));
    let _ = writeln!(out, "horizon = {}", num(s.horizon));
    let _ = writeln!(out, "semigroup_bound = {}", num(s.semigroup_bound));
    let _ = writeln!(out, "dim_state = {}", s.n());
    let _ = writeln!(out, "dim_control = {}", s.m());
    let _ = writeln!(out, "A = {}", row_major(&s.a));
    let _ = writeln!(out, "B = {}", row_major(&s.b));
    if let Some(e) = &s.terminal_input {
        let _ = writeln!(out, "terminal_input = {}", row_major(e));
    }
    let _ = writeln!(out, "x0 = {}", list(cfg.x0.iter()));
    if let Some(t) = &cfg.target {
        let _ = writeln!(out, "target = {}", list(t.iter()));
    }
    for imp in &s.impulses {
        let _ = writeln!(out, "\n[[impulses]]");
        let _ = writeln!(out, "time = {}", num(imp.time));
        let _ = writeln!(out, "D = {}", row_major(&imp.jump));
        let _ = writeln!(out, "E = {}", row_major(&imp.input));
    }
    for w in &s.mask {
        let _ = writeln!(out, "\n[[mask]]");
        let _ = writeln!(out, "channel = {}", w.channel + 1);
        let _ = writeln!(out, "start = {}", num(w.start));
        let _ = writeln!(out, "end = {}", num(w.end));
    }
    out
}

pub fn write_config(path: &Path, cfg: &ProblemConfig) -> Result<()> {
    Ok(std::fs::write(path, format_config(cfg))?)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBundle {
    grid: Option<Vec<f64>>,
    cells_per_interval: Option<usize>,
    u: Option<Vec<Vec<f64>>>,
    u_constant: Option<Vec<f64>>,
    #[serde(default)]
    v: Vec<Vec<f64>>,
    v_terminal: Option<Vec<f64>>,
}

/// Parse a control file for `spec`:
///
/// ```toml
/// cells_per_interval = 64      # or: grid = [0.0, ..., b]
/// u_constant = [1.0]           # or: u = [[...], ...] one row per node
/// v = [[0.5]]                  # one row per impulse (default zeros)
/// v_terminal = [0.0]           # optional
/// ```
pub fn parse_bundle(text: &str, spec: &SystemSpec) -> Result<ControlBundle> {
    let raw: RawBundle = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let grid = match (&raw.grid, raw.cells_per_interval) {
        (Some(_), Some(_)) => return Err(Error::validation("grid", "give either grid or cells_per_interval")),
        (Some(g), None) => TimeGrid::from_nodes(spec, g.clone())?,
        (None, Some(c)) => TimeGrid::uniform(spec, c).map_err(|_| Error::validation("cells_per_interval", "must be at least 1"))?,
        (None, None) => TimeGrid::uniform(spec, 64)?,
    };
    let m = spec.m();
    let mut b = ControlBundle::zeros(spec, grid);
    match (&raw.u, &raw.u_constant) {
        (Some(_), Some(_)) => return Err(Error::validation("u", "give either u or u_constant")),
        (Some(rows), None) => {
            if rows.len() != b.grid.len() {
                return Err(Error::validation("u", format!("expected {} rows, got {}", b.grid.len(), rows.len())));
            }
            for (j, r) in rows.iter().enumerate() {
                b.u[j] = vector(&format!("u[{j}]"), r, m)?;
            }
        }
        (None, Some(c)) => {
            let c = vector("u_constant", c, m)?;
            b.u.iter_mut().for_each(|x| *x = c.clone());
        }
        (None, None) => {}
    }
    if !raw.v.is_empty() {
        if raw.v.len() != spec.impulses.len() {
            return Err(Error::validation("v", format!("expected {} rows, got {}", spec.impulses.len(), raw.v.len())));
        }
        for (k, r) in raw.v.iter().enumerate() {
            b.v[k] = vector(&format!("v[{k}]"), r, m)?;
        }
    }
    if let Some(vt) = &raw.v_terminal {
        b.v_terminal = Some(vector("v_terminal", vt, m)?);
    }
    Ok(b)
}

pub fn read_bundle(path: &Path, spec: &SystemSpec) -> Result<ControlBundle> {
    parse_bundle(&std::fs::read_to_string(path)?, spec)
}

/// Serialize the sampled part of a bundle. Kernel-form parts have no file representation.
pub fn format_bundle(b: &ControlBundle) -> Result<String> {
    if b.kernel.is_some() {
        return Err(Error::Unsupported("kernel-form controls cannot be written to a control file".into()));
    }
    let mut out = String::new();
    let _ = writeln!(out, "grid = {}", list(b.grid.nodes()));
    let rows: Vec<String> = b.u.iter().map(|x| list(x.iter())).collect();
    let _ = writeln!(out, "u = [\n  {},\n]", rows.join(",\n  "));
    let rows: Vec<String> = b.v.iter().map(|x| list(x.iter())).collect();
    let _ = writeln!(out, "v = [{}]", rows.join(", "));
    if let Some(vt) = &b.v_terminal {
        let _ = writeln!(out, "v_terminal = {}", list(vt.iter()));
    }
    Ok(out)
}

pub fn write_bundle(path: &Path, b: &ControlBundle) -> Result<()> {
    Ok(std::fs::write(path, format_bundle(b)?)?)
}
