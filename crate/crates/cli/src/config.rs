//! Run configuration: flat `key = value` lines plus `[coeff <deg> <r>x<c>]`
//! matrix blocks.
//!
//! ```text
//! # comment
//! n = 2
//! d = 2
//! rule = simple
//! initial = random
//! seed = 7
//! grid_start = 0 0
//! grid_end = 2*pi 2*pi
//! grid_spacing = pi/50 pi/50
//! period = 2*pi 0
//! [coeff 1 4x4]
//! 0 1 0.5 0
//! ...
//! ```
//!
//! Reals accept `pi` products and quotients such as `-3*pi/2`. Serialization
//! writes plain shortest-round-trip decimals, so parse → serialize → parse is
//! the identity.

use std::fmt::{self, Write as _};
use std::path::PathBuf;

use aks_core::flow::PathSegment;
use aks_core::frame::FrameStepper;
use aks_core::linalg::RMat;
use aks_core::loop_algebra::DecompositionRule;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, field `{field}`: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

fn err<T>(line: usize, field: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, field: field.to_string(), message: message.into() })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Initial {
    /// Seeded uniform sample with degrees `-d..=1`; the seed is
    /// [`RunConfig::seed`].
    Random,
    Clifford { a: f64, b: f64 },
    /// `(degree, matrix)` blocks in ascending degree.
    Explicit(Vec<(i32, RMat)>),
}

/// Grid from `start` to `end` (inclusive) in steps of `spacing` per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub spacing: Vec<f64>,
}

/// Relative slack allowed when `(end - start) / spacing` should be an
/// integer.
const GRID_SLACK: f64 = 1e-9;

impl GridSpec {
    pub fn counts(&self) -> Vec<usize> {
        self.start
            .iter()
            .zip(&self.end)
            .zip(&self.spacing)
            .map(|((s, e), h)| ((e - s) / h).round() as usize + 1)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    /// Number of negative degrees; `lo = -d`.
    pub d: u32,
    pub rule: DecompositionRule,
    pub z0: f64,
    pub h: f64,
    pub seed: u64,
    pub initial: Initial,
    pub grid: Option<GridSpec>,
    pub path: Vec<PathSegment>,
    pub periods: Vec<Vec<f64>>,
    pub out: PathBuf,
    /// Charpoly drift allowed per unit time before a warning.
    pub drift_budget: f64,
    /// Period detection threshold.
    pub tol: f64,
    /// Frame structure threshold (orthogonality, determinant, sphere).
    pub orth_tol: f64,
    /// 1-based frame column used as the immersion.
    pub column: Option<usize>,
    pub stepper: FrameStepper,
    /// Number of unit-circle samples for the regularity check.
    pub z_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 2,
            d: 0,
            rule: DecompositionRule::Simple,
            z0: 1.0,
            h: 1e-3,
            seed: 0,
            initial: Initial::Random,
            grid: None,
            path: Vec::new(),
            periods: Vec::new(),
            out: PathBuf::from("out"),
            drift_budget: 1e-7,
            tol: 1e-6,
            orth_tol: 1e-8,
            column: None,
            stepper: FrameStepper::Magnus4,
            z_samples: 64,
        }
    }
}

impl RunConfig {
    /// The Clifford golden case: `a = 0.6, b = 0.8` over `[0, 2π]²` with
    /// spacing `π/50`.
    pub fn clifford_default() -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        let sp = std::f64::consts::PI / 50.0;
        RunConfig {
            initial: Initial::Clifford { a: 0.6, b: 0.8 },
            grid: Some(GridSpec { start: vec![0.0, 0.0], end: vec![two_pi, two_pi], spacing: vec![sp, sp] }),
            ..RunConfig::default()
        }
    }

    /// Lowest degree of the initial condition.
    pub fn lo(&self) -> i32 {
        match self.initial {
            Initial::Clifford { .. } => 1,
            _ => -(self.d as i32),
        }
    }
}

/// Parse a real: a `*` / `/` chain of decimals and `pi`, optionally negated.
pub fn parse_real(s: &str) -> Option<f64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    if body.is_empty() {
        return None;
    }
    let mut value = 1.0;
    let mut divide = false;
    let mut rest = body;
    loop {
        let cut = rest.find(['*', '/']).unwrap_or(rest.len());
        let tok = rest[..cut].trim();
        let f = match tok {
            "pi" => std::f64::consts::PI,
            _ => tok.parse::<f64>().ok()?,
        };
        value = if divide { value / f } else { value * f };
        if cut == rest.len() {
            break;
        }
        divide = rest.as_bytes()[cut] == b'/';
        rest = &rest[cut + 1..];
    }
    let v = if neg { -value } else { value };
    v.is_finite().then_some(v)
}

fn reals(line: usize, field: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split_whitespace().map(|t| parse_real(t).map_or_else(|| err(line, field, format!("`{t}` is not a real number")), Ok)).collect()
}

fn real(line: usize, field: &str, v: &str) -> Result<f64, ConfigError> {
    match reals(line, field, v)?.as_slice() {
        [x] => Ok(*x),
        _ => err(line, field, "expected one real number"),
    }
}

fn positive(line: usize, field: &str, v: &str) -> Result<f64, ConfigError> {
    let x = real(line, field, v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        err(line, field, "must be positive")
    }
}

fn integer<T: std::str::FromStr>(line: usize, field: &str, v: &str, what: &str) -> Result<T, ConfigError> {
    v.trim().parse::<T>().map_or_else(|_| err(line, field, format!("must be {what}")), Ok)
}

fn parse_initial(line: usize, v: &str) -> Result<Initial, ConfigError> {
    let v = v.trim();
    if v == "random" {
        return Ok(Initial::Random);
    }
    if v == "explicit" {
        return Ok(Initial::Explicit(Vec::new()));
    }
    if let Some(args) = v.strip_prefix("clifford(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = args.split(',').collect();
        if let [a, b] = parts.as_slice() {
            if let (Some(a), Some(b)) = (parse_real(a), parse_real(b)) {
                return Ok(Initial::Clifford { a, b });
            }
        }
        return err(line, "initial", "expected clifford(a, b) with two reals");
    }
    err(line, "initial", "expected random, explicit or clifford(a, b)")
}

fn parse_path(line: usize, v: &str) -> Result<Vec<PathSegment>, ConfigError> {
    v.split_whitespace()
        .map(|tok| {
            let (dir, len) = tok.split_once(':').map_or_else(|| err(line, "path", format!("`{tok}` is not direction:length")), Ok)?;
            let direction = integer::<usize>(line, "path", dir, "a positive direction index")?;
            let length = parse_real(len).map_or_else(|| err(line, "path", format!("`{len}` is not a real number")), Ok)?;
            Ok(PathSegment { direction, length })
        })
        .collect()
}

/// Pending matrix block while its rows are read.
struct Block {
    line: usize,
    deg: i32,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn parse_block_header(line: usize, s: &str) -> Result<Block, ConfigError> {
    let inner = s.trim_start_matches('[').trim_end_matches(']');
    let parts: Vec<&str> = inner.split_whitespace().collect();
    let [kind, deg, dims] = parts.as_slice() else {
        return err(line, "coeff", "expected [coeff <degree> <rows>x<cols>]");
    };
    if *kind != "coeff" {
        return err(line, kind, "unknown section");
    }
    let deg = integer::<i32>(line, "coeff", deg, "an integer degree")?;
    let Some((r, c)) = dims.split_once('x') else {
        return err(line, "coeff", "dimensions must look like 4x4");
    };
    let rows = integer::<usize>(line, "coeff", r, "a row count")?;
    let cols = integer::<usize>(line, "coeff", c, "a column count")?;
    Ok(Block { line, deg, rows, cols, data: Vec::new() })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let mut key_lines: Vec<(String, usize)> = Vec::new();
        let (mut start, mut end, mut spacing) = (None, None, None);
        let mut blocks: Vec<Block> = Vec::new();
        let mut open: Option<Block> = None;
        let mut explicit_line = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            if let Some(b) = open.as_mut() {
                if b.data.len() < b.rows * b.cols {
                    let row = reals(line, "coeff", s)?;
                    if row.len() != b.cols {
                        return err(line, "coeff", format!("expected {} entries, found {}", b.cols, row.len()));
                    }
                    b.data.extend(row);
                    if b.data.len() == b.rows * b.cols {
                        blocks.push(open.take().expect("open block"));
                    }
                    continue;
                }
            }
            if s.starts_with('[') {
                open = Some(parse_block_header(line, s)?);
                continue;
            }
            let Some((key, value)) = s.split_once('=') else {
                return err(line, s, "expected `key = value`");
            };
            let (key, value) = (key.trim(), value.trim());
            if key != "period" {
                if seen.iter().any(|k| k == key) {
                    return err(line, key, "duplicate key");
                }
                seen.push(key.to_string());
            }
            key_lines.push((key.to_string(), line));
            match key {
                "n" => {
                    cfg.n = integer(line, key, value, "an integer ≥ 2")?;
                    if cfg.n < 2 {
                        return err(line, key, "must be an integer ≥ 2");
                    }
                }
                "d" => cfg.d = integer(line, key, value, "a non-negative integer")?,
                "rule" => cfg.rule = DecompositionRule::parse(value).map_or_else(|| err(line, key, "expected admissible, simple or curved_flat"), Ok)?,
                "z0" => {
                    cfg.z0 = real(line, key, value)?;
                    if cfg.z0 == 0.0 {
                        return err(line, key, "must be nonzero");
                    }
                }
                "h" => cfg.h = positive(line, key, value)?,
                "seed" => cfg.seed = integer(line, key, value, "a non-negative integer")?,
                "initial" => {
                    cfg.initial = parse_initial(line, value)?;
                    if matches!(cfg.initial, Initial::Explicit(_)) {
                        explicit_line = Some(line);
                    }
                }
                "grid_start" => start = Some((line, reals(line, key, value)?)),
                "grid_end" => end = Some((line, reals(line, key, value)?)),
                "grid_spacing" => spacing = Some((line, reals(line, key, value)?)),
                "path" => cfg.path = parse_path(line, value)?,
                "period" => cfg.periods.push(reals(line, key, value)?),
                "out" => {
                    if value.is_empty() {
                        return err(line, key, "must not be empty");
                    }
                    cfg.out = PathBuf::from(value);
                }
                "drift_budget" => cfg.drift_budget = positive(line, key, value)?,
                "tol" => cfg.tol = positive(line, key, value)?,
                "orth_tol" => cfg.orth_tol = positive(line, key, value)?,
                "column" => cfg.column = Some(integer(line, key, value, "a column index")?),
                "stepper" => {
                    cfg.stepper = match value {
                        "magnus4" => FrameStepper::Magnus4,
                        "midpoint" => FrameStepper::Midpoint,
                        _ => return err(line, key, "expected magnus4 or midpoint"),
                    }
                }
                "z_samples" => {
                    cfg.z_samples = integer(line, key, value, "a positive integer")?;
                    if cfg.z_samples < 8 {
                        return err(line, key, "must be at least 8");
                    }
                }
                _ => return err(line, key, "unknown key"),
            }
        }
        if let Some(b) = open {
            return err(b.line, "coeff", format!("block ends after {} of {} entries", b.data.len(), b.rows * b.cols));
        }
        let line_of = |key: &str| key_lines.iter().rev().find(|(k, _)| k == key).map_or(0, |(_, l)| *l);

        cfg.grid = match (start, end, spacing) {
            (None, None, None) => None,
            (Some((_, start)), Some((_, end)), Some((ls, spacing))) => Some(check_grid(ls, cfg.n, start, end, spacing)?),
            _ => {
                let l = line_of("grid_start").max(line_of("grid_end")).max(line_of("grid_spacing"));
                return err(l, "grid_spacing", "grid_start, grid_end and grid_spacing must be given together");
            }
        };
        for seg in &cfg.path {
            if seg.direction == 0 || seg.direction > cfg.n {
                return err(line_of("path"), "path", format!("direction {} outside 1..={}", seg.direction, cfg.n));
            }
        }
        for (k, p) in cfg.periods.iter().enumerate() {
            if p.len() != cfg.n {
                let l = key_lines.iter().filter(|(key, _)| key == "period").nth(k).map_or(0, |(_, l)| *l);
                return err(l, "period", format!("expected {} components", cfg.n));
            }
        }
        if let Some(c) = cfg.column {
            if c <= cfg.n || c > 2 * cfg.n {
                return err(line_of("column"), "column", format!("must lie in {}..={}", cfg.n + 1, 2 * cfg.n));
            }
        }
        match &mut cfg.initial {
            Initial::Clifford { a, b } => {
                let l = line_of("initial");
                if ((*a * *a + *b * *b) - 1.0).abs() > 1e-12 {
                    return err(l, "initial", format!("clifford preset needs a² + b² = 1, got {}", *a * *a + *b * *b));
                }
                if cfg.n != 2 {
                    return err(line_of("n").max(l), "n", "clifford preset needs n = 2");
                }
                if cfg.rule != DecompositionRule::Simple {
                    return err(line_of("rule").max(l), "rule", "clifford preset needs the simple rule");
                }
                if !blocks.is_empty() {
                    return err(blocks[0].line, "coeff", "coefficient blocks need initial = explicit");
                }
            }
            Initial::Random => {
                if !blocks.is_empty() {
                    return err(blocks[0].line, "coeff", "coefficient blocks need initial = explicit");
                }
            }
            Initial::Explicit(coeffs) => {
                let m = 2 * cfg.n;
                if blocks.is_empty() {
                    return err(explicit_line.unwrap_or(0), "initial", "explicit initial condition without [coeff] blocks");
                }
                blocks.sort_by_key(|b| b.deg);
                for w in blocks.windows(2) {
                    if w[0].deg == w[1].deg {
                        return err(w[1].line, "coeff", format!("degree {} given twice", w[1].deg));
                    }
                }
                for b in &blocks {
                    if b.rows != m || b.cols != m {
                        return err(b.line, "coeff", format!("expected {m}x{m} for n = {}", cfg.n));
                    }
                    if b.deg < -(cfg.d as i32) || b.deg > 1 {
                        return err(b.line, "coeff", format!("degree {} outside {}..=1", b.deg, -(cfg.d as i32)));
                    }
                    coeffs.push((b.deg, RMat::from_row_slice(m, m, &b.data)));
                }
            }
        }
        Ok(cfg)
    }

    /// Canonical text form; every field is written explicitly.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let v = |x: &[f64]| x.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "rule = {}", self.rule.name());
        let _ = writeln!(s, "z0 = {:?}", self.z0);
        let _ = writeln!(s, "h = {:?}", self.h);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = match &self.initial {
            Initial::Random => writeln!(s, "initial = random"),
            Initial::Clifford { a, b } => writeln!(s, "initial = clifford({a:?}, {b:?})"),
            Initial::Explicit(_) => writeln!(s, "initial = explicit"),
        };
        if let Some(g) = &self.grid {
            let _ = writeln!(s, "grid_start = {}", v(&g.start));
            let _ = writeln!(s, "grid_end = {}", v(&g.end));
            let _ = writeln!(s, "grid_spacing = {}", v(&g.spacing));
        }
        if !self.path.is_empty() {
            let p: Vec<String> = self.path.iter().map(|p| format!("{}:{:?}", p.direction, p.length)).collect();
            let _ = writeln!(s, "path = {}", p.join(" "));
        }
        for p in &self.periods {
            let _ = writeln!(s, "period = {}", v(p));
        }
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "drift_budget = {:?}", self.drift_budget);
        let _ = writeln!(s, "tol = {:?}", self.tol);
        let _ = writeln!(s, "orth_tol = {:?}", self.orth_tol);
        if let Some(c) = self.column {
            let _ = writeln!(s, "column = {c}");
        }
        let _ = writeln!(
            s,
            "stepper = {}",
            match self.stepper {
                FrameStepper::Magnus4 => "magnus4",
                FrameStepper::Midpoint => "midpoint",
            }
        );
        let _ = writeln!(s, "z_samples = {}", self.z_samples);
        if let Initial::Explicit(coeffs) = &self.initial {
            for (deg, m) in coeffs {
                let _ = writeln!(s, "[coeff {deg} {}x{}]", m.nrows(), m.ncols());
                for r in 0..m.nrows() {
                    let row: Vec<f64> = m.row(r).iter().copied().collect();
                    let _ = writeln!(s, "{}", v(&row));
                }
            }
        }
        s
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

fn check_grid(line: usize, n: usize, start: Vec<f64>, end: Vec<f64>, spacing: Vec<f64>) -> Result<GridSpec, ConfigError> {
    if start.len() != n || end.len() != n || spacing.len() != n {
        return err(line, "grid_spacing", format!("grid_start, grid_end and grid_spacing need {n} components each"));
    }
    for i in 0..n {
        if !(spacing[i] > 0.0) {
            return err(line, "grid_spacing", "spacing must be positive");
        }
        let steps = (end[i] - start[i]) / spacing[i];
        if steps < -GRID_SLACK || (steps - steps.round()).abs() > GRID_SLACK * steps.abs().max(1.0) {
            return err(line, "grid_spacing", format!("axis {}: (end - start) / spacing = {steps} is not a non-negative integer", i + 1));
        }
    }
    Ok(GridSpec { start, end, spacing })
}
