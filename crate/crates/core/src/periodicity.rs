//! Periods of the Killing field, recovery of the conjugator `B` and checks
//! of type I / type II quasiperiodicity of frames.
//!
//! All frame identities are evaluated on `G(t) = F0ᵀ F(t)`, the frame
//! normalized to `G(0) = I`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::flow::{integrate_flow, FlowError, FlowResult, Grid};
use crate::frame::{integrate_frame, FrameError, FrameGrid, FrameOptions};
use crate::linalg::{condition_number, max_abs_real, smallest_singular_vector_real, RMat};
use crate::loop_algebra::{DecompositionRule, LoopElement};

/// Default detection threshold; consequences are checked at 10× this.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Relative singular-value threshold for the null space of the conjugacy
/// system.
pub const NULLITY_TOL: f64 = 1e-7;
/// Grid-point matching tolerance, relative to the spacing.
const LOCATE_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeriodError {
    #[error("grid does not contain t = {0:?}")]
    MissingPoint(Vec<f64>),
    #[error("no grid point t with t + P on the grid")]
    NoTestPoints,
    #[error("flow has no grid")]
    NoGrid,
    #[error("conjugator is not unique: null space of dimension {nullity}")]
    NonUnique { nullity: usize },
    #[error("conjugator is singular (condition number {0:e})")]
    Singular(f64),
    #[error("elements must be real, of equal size")]
    Shape,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeriodKind {
    /// `X(P) = X(0)` for a non-simple rule: an `X`-period only.
    ExactPeriod,
    TypeI,
    TypeII,
    None,
}

impl PeriodKind {
    pub fn name(self) -> &'static str {
        match self {
            PeriodKind::ExactPeriod => "exact_period",
            PeriodKind::TypeI => "type_I",
            PeriodKind::TypeII => "type_II",
            PeriodKind::None => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodReport {
    pub p: Vec<f64>,
    pub kind: PeriodKind,
    /// `|X(P) - X(0)|`, or `|X(P) - B^-1 X(0) B|` for type II.
    pub x_residual: f64,
    pub b: RMat,
    pub condition_number: f64,
    /// Largest quasiperiodicity defect over the test points (0 when not
    /// checked).
    pub f_residual: f64,
    /// Largest `|X(t+P) - B^-1 X(t) B|` over the test points.
    pub x_test_residual: f64,
    pub test_points: usize,
    pub diagnostics: Vec<String>,
}

impl PeriodReport {
    /// Flat `key = value` block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p: Vec<String> = self.p.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(s, "kind = {}", self.kind.name());
        let _ = writeln!(s, "P = {}", p.join(" "));
        let _ = writeln!(s, "x_residual = {:.16e}", self.x_residual);
        let _ = writeln!(s, "x_test_residual = {:.16e}", self.x_test_residual);
        let _ = writeln!(s, "f_residual = {:.16e}", self.f_residual);
        let _ = writeln!(s, "test_points = {}", self.test_points);
        let _ = writeln!(s, "condition_number = {:.16e}", self.condition_number);
        for r in 0..self.b.nrows() {
            let row: Vec<String> = self.b.row(r).iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "B{} = {}", r + 1, row.join(" "));
        }
        for d in &self.diagnostics {
            let _ = writeln!(s, "diagnostic = {d}");
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conjugator {
    /// `B` with `|det B| = 1` (and `det B = 1` when the sign permits).
    pub b: RMat,
    pub b_inv: RMat,
    /// `max |X(P) - B^-1 X(0) B|` over coefficients.
    pub residual: f64,
    /// Whether the conjugacy system has a one-dimensional null space.
    pub conjugate: bool,
    pub singular_values: Vec<f64>,
    pub condition_number: f64,
}

fn real_coeffs(x: &LoopElement, lo: i32, hi: i32) -> Vec<RMat> {
    (lo..=hi).map(|d| x.coeff_or_zero(d).map(|v| v.re)).collect()
}

fn conj_residual(xs0: &[RMat], xsp: &[RMat], b: &RMat, b_inv: &RMat) -> f64 {
    xs0.iter().zip(xsp).map(|(a, p)| max_abs_real(&(p - b_inv * a * b))).fold(0.0, f64::max)
}

/// Solve `X_i(0) B = B X_i(P)` for every degree `i` as one homogeneous
/// system in the `m²` entries of `B`; `B` is the right singular vector of
/// the smallest singular value.
///
/// A trivial null space (smallest singular value above
/// `NULLITY_TOL · σ_max`) is reported with `conjugate = false` and the
/// best-fit residual; a null space of dimension two or more is an error.
pub fn solve_conjugator(x_at_0: &LoopElement, x_at_p: &LoopElement) -> Result<Conjugator, PeriodError> {
    if x_at_0.m() != x_at_p.m() || !x_at_0.is_real() || !x_at_p.is_real() {
        return Err(PeriodError::Shape);
    }
    let m = x_at_0.m();
    let (a, p) = (x_at_0.trimmed(), x_at_p.trimmed());
    let lo = a.lo().min(p.lo());
    let hi = a.hi().max(p.hi());
    let xs0 = real_coeffs(&a, lo, hi);
    let xsp = real_coeffs(&p, lo, hi);
    let id = RMat::identity(m, m);
    let blocks = xs0.len().max(1);
    let mut sys = RMat::zeros(blocks * m * m, m * m);
    for (k, (x0, xp)) in xs0.iter().zip(xsp.iter()).enumerate() {
        // vec(X0 B) = (I ⊗ X0) vec B, vec(B XP) = (XPᵀ ⊗ I) vec B.
        let block = id.kronecker(x0) - xp.transpose().kronecker(&id);
        sys.view_mut((k * m * m, 0), (m * m, m * m)).copy_from(&block);
    }
    let (v, sv) = smallest_singular_vector_real(&sys);
    let smax = sv.first().copied().unwrap_or(0.0);
    let nullity = sv.iter().filter(|&&s| s <= NULLITY_TOL * smax).count();
    if smax == 0.0 || nullity >= 2 {
        return Err(PeriodError::NonUnique { nullity: if smax == 0.0 { m * m } else { nullity } });
    }
    let mut b = RMat::from_column_slice(m, m, v.as_slice());
    let cond = condition_number(&b);
    if !(cond < 1e12) {
        return Err(PeriodError::Singular(cond));
    }
    let det = b.determinant();
    let mut scale = det.abs().powf(-1.0 / m as f64);
    if det < 0.0 && m % 2 == 1 {
        scale = -scale;
    }
    b *= scale;
    let b_inv = b.clone().try_inverse().ok_or(PeriodError::Singular(cond))?;
    let residual = conj_residual(&xs0, &xsp, &b, &b_inv);
    Ok(Conjugator { b, b_inv, residual, conjugate: nullity == 1, singular_values: sv, condition_number: cond })
}

fn normalized(frames: &FrameGrid, fr: &RMat) -> RMat {
    frames.initial.transpose() * fr
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| u + v).collect()
}

/// Grid points `t` with `t + P` also on the grid, as index pairs.
pub fn translate_pairs(grid: &Grid, p: &[f64]) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..grid.len())
        .filter_map(|flat| {
            let idx = grid.multi_index(flat);
            let t = grid.point(&idx);
            grid.locate(&add(&t, p), LOCATE_TOL).map(|j| (idx, j))
        })
        .collect()
}

/// `max ‖G(t+P) - G(P) B^-1 G(t) B‖` over the given test pairs
/// `(t, t + P)`.
pub fn verify_type_ii(frames: &FrameGrid, b: &RMat, p: &[f64], pairs: &[(Vec<usize>, Vec<usize>)]) -> Result<f64, PeriodError> {
    let b_inv = b.clone().try_inverse().ok_or(PeriodError::Singular(f64::INFINITY))?;
    let gp = normalized(frames, &frames.frame_at(p, LOCATE_TOL).ok_or_else(|| PeriodError::MissingPoint(p.to_vec()))?.f);
    let left = &gp * &b_inv;
    let mut worst = 0.0_f64;
    for (i, j) in pairs {
        let gt = normalized(frames, &frames.frame(i).f);
        let gtp = normalized(frames, &frames.frame(j).f);
        worst = worst.max(max_abs_real(&(gtp - &left * gt * b)));
    }
    Ok(worst)
}

/// Classify `P` from the flow (and frames, when given).
///
/// `|X(P) - X(0)| < tol` gives `type_I` for the simple rule (`exact_period`
/// otherwise), confirmed on every test pair by `|X(t+P) - X(t)| < 10 tol`
/// and, with frames, `|G(t+P) - G(P) G(t)| < 10 tol`. Otherwise the
/// conjugator is solved for; a residual below `tol` gives `type_II`,
/// confirmed the same way. Any failed confirmation downgrades to `none`.
pub fn detect_period(flow: &FlowResult, frames: Option<&FrameGrid>, p: &[f64], tol: f64) -> Result<PeriodReport, PeriodError> {
    let grid = flow.grid().ok_or(PeriodError::NoGrid)?;
    let m = flow.x0.m();
    let xp = &flow.sample_at(p, LOCATE_TOL).ok_or_else(|| PeriodError::MissingPoint(p.to_vec()))?.x;
    let pairs = translate_pairs(grid, p);
    if pairs.is_empty() {
        return Err(PeriodError::NoTestPoints);
    }
    let simple = flow.config.rule == DecompositionRule::Simple;
    let mut report = PeriodReport {
        p: p.to_vec(),
        kind: PeriodKind::None,
        x_residual: xp.max_abs_diff(&flow.x0),
        b: RMat::identity(m, m),
        condition_number: 1.0,
        f_residual: 0.0,
        x_test_residual: 0.0,
        test_points: pairs.len(),
        diagnostics: Vec::new(),
    };
    let candidate = if report.x_residual < tol {
        if simple { PeriodKind::TypeI } else { PeriodKind::ExactPeriod }
    } else {
        match solve_conjugator(&flow.x0, xp) {
            Ok(c) if c.conjugate && c.residual < tol => {
                report.x_residual = c.residual;
                report.b = c.b;
                report.condition_number = c.condition_number;
                PeriodKind::TypeII
            }
            Ok(c) => {
                report.diagnostics.push(format!("not conjugate: best-fit residual {:.3e}", c.residual));
                return Ok(report);
            }
            Err(e) => {
                report.diagnostics.push(format!("conjugator: {e}"));
                return Ok(report);
            }
        }
    };
    let b = report.b.clone();
    let b_inv = b.clone().try_inverse().ok_or(PeriodError::Singular(report.condition_number))?;
    for (i, j) in &pairs {
        let xt = &flow.grid_samples[grid.index(i)].x;
        let xtp = &flow.grid_samples[grid.index(j)].x;
        let pred = xt.to_real_conjugate(&b, &b_inv);
        report.x_test_residual = report.x_test_residual.max(xtp.max_abs_diff(&pred));
    }
    if report.x_test_residual >= 10.0 * tol {
        report.diagnostics.push(format!("X(t+P) check failed: {:.3e}", report.x_test_residual));
        return Ok(report);
    }
    if let Some(frames) = frames {
        if candidate != PeriodKind::ExactPeriod {
            report.f_residual = verify_type_ii(frames, &b, p, &pairs)?;
            if report.f_residual >= 10.0 * tol {
                report.diagnostics.push(format!("frame quasiperiodicity check failed: {:.3e}", report.f_residual));
                return Ok(report);
            }
        }
    }
    if candidate == PeriodKind::TypeII && !simple {
        report.diagnostics.push("type II frame identity assumes the simple rule".into());
    }
    report.kind = candidate;
    Ok(report)
}

impl LoopElement {
    /// `B^-1 X B` for a real `B`.
    fn to_real_conjugate(&self, b: &RMat, b_inv: &RMat) -> LoopElement {
        self.conjugate_by(&crate::linalg::to_complex(b), &crate::linalg::to_complex(b_inv))
    }
}

/// Translation check `max ‖G(t+Q) - G(Q) Ĝ(t)‖`, where `Ĝ` is
/// integrated independently from `X̂(0) = X(Q)` over the grid shifted by
/// `-Q` (so that `t + Q` runs over the original grid).
pub fn translation_residual(flow: &FlowResult, frames: &FrameGrid, q: &[f64]) -> Result<f64, PeriodError> {
    let grid = flow.grid().ok_or(PeriodError::NoGrid)?;
    let xq = flow.sample_at(q, LOCATE_TOL).ok_or_else(|| PeriodError::MissingPoint(q.to_vec()))?.x.clone();
    let gq = normalized(frames, &frames.frame_at(q, LOCATE_TOL).expect("same grid").f);
    let shifted = Grid::new(grid.start.iter().zip(q).map(|(s, v)| s - v).collect(), grid.spacing.clone(), grid.counts.clone())?;
    let mut cfg = flow.config.clone();
    cfg.path.clear();
    cfg.grid = Some(shifted);
    let hat_flow = integrate_flow(&xq, &cfg)?;
    let hat = integrate_frame(&hat_flow, &FrameOptions::new(frames.z0))?;
    let mut worst = 0.0_f64;
    for (k, fr) in frames.frames.iter().enumerate() {
        let g = normalized(frames, &fr.f);
        worst = worst.max(max_abs_real(&(g - &gq * &hat.frames[k].f)));
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReturnCheck {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    /// `‖G(a) - G(b)‖`.
    pub match_residual: f64,
    /// `max ‖G(t + (b - a)) - G(t)‖` over test pairs.
    pub period_residual: f64,
    pub test_points: usize,
}

/// Grid points `b ≠ a` with `‖G(a) - G(b)‖ < tol`, each checked as a frame
/// period `b - a`. Pairs without test points are skipped.
pub fn frame_returns(frames: &FrameGrid, a: &[usize], tol: f64) -> Vec<ReturnCheck> {
    let g = &frames.grid;
    let ga = normalized(frames, &frames.frame(a).f);
    let ta = g.point(a);
    let mut out = Vec::new();
    for flat in 0..g.len() {
        let b = g.multi_index(flat);
        if b == a {
            continue;
        }
        let r = max_abs_real(&(normalized(frames, &frames.frames[flat].f) - &ga));
        if r >= tol {
            continue;
        }
        let p: Vec<f64> = g.point(&b).iter().zip(&ta).map(|(u, v)| u - v).collect();
        let pairs = translate_pairs(g, &p);
        if pairs.is_empty() {
            continue;
        }
        let period_residual = pairs
            .iter()
            .map(|(i, j)| max_abs_real(&(&frames.frame(j).f - &frames.frame(i).f)))
            .fold(0.0, f64::max);
        out.push(ReturnCheck { a: a.to_vec(), b, match_residual: r, period_residual, test_points: pairs.len() });
    }
    out
}
