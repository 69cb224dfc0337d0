//! The ad-equivariant fields `V_i(X) = z^(2-2i) X^(2i-1)`, the Lax
//! right-hand side `[X, π_P V_i(X)]` and RK4 integration over multi-time.

use std::fmt::Write as _;

use thiserror::Error;

use crate::laurent::LaurentPoly;
use crate::linalg::RMat;
use crate::loop_algebra::{
    bracket, invariant_inner_product, project, DecompositionRule, LoopElement, LoopError,
};
use crate::spectral::{char_poly, charpoly_drift};
use crate::stencil::derivative_stencil;

/// Per-step bound on the structural correction and on trimmed coefficients
/// (relative to `max(1, |X|_max)`).
pub const STEP_DEFECT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("step size must be positive, got {0}")]
    StepSize(f64),
    #[error("field index {i} outside 1..={n}")]
    FieldIndex { i: usize, n: usize },
    #[error("direction {direction} outside 1..={n}")]
    Direction { direction: usize, n: usize },
    #[error("initial condition invalid: {0}")]
    Invalid(String),
    #[error("top degree {0} exceeds 1")]
    TopDegree(i32),
    #[error("non-finite value at t = {t:?}")]
    NonFinite { t: Vec<f64> },
    #[error("{what} of {magnitude:e} at t = {t:?} exceeds {STEP_DEFECT_TOL:e}")]
    StepDefect { what: &'static str, magnitude: f64, t: Vec<f64> },
    #[error("grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Loop(#[from] LoopError),
}

fn check_index(i: usize, n: usize) -> Result<(), FlowError> {
    if i == 0 || i > n {
        Err(FlowError::FieldIndex { i, n })
    } else {
        Ok(())
    }
}

/// `V_i(X) = z^(2-2i) X^(2i-1)`, `1 <= i <= n`.
pub fn v_field(x: &LoopElement, i: usize) -> Result<LoopElement, FlowError> {
    check_index(i, x.n())?;
    let x = x.trimmed();
    if i == 1 {
        return Ok(x);
    }
    let sq = x.mul(&x)?.trimmed();
    let mut p = x.clone();
    for _ in 1..i {
        p = p.mul(&sq)?.trimmed();
    }
    Ok(p.shift(2 - 2 * i as i32)?)
}

/// All fields `V_1..V_n` sharing the powers of `X`.
pub fn v_fields(x: &LoopElement) -> Result<Vec<LoopElement>, FlowError> {
    let n = x.n();
    let x = x.trimmed();
    let sq = x.mul(&x)?.trimmed();
    let mut out = Vec::with_capacity(n);
    let mut p = x.clone();
    out.push(x);
    for i in 2..=n {
        p = p.mul(&sq)?.trimmed();
        out.push(p.shift(2 - 2 * i as i32)?);
    }
    Ok(out)
}

fn lax_component(x: &LoopElement, v: &LoopElement, rule: DecompositionRule, lo: i32) -> Result<(LoopElement, f64), FlowError> {
    let b = bracket(x, &project(v, rule))?;
    Ok(b.restrict(lo, 1))
}

/// Lax right-hand side: component `i` is `[X, π_P V_i(X)]`, restricted to
/// the degree window `[X.lo, 1]`. The second value is the largest
/// coefficient modulus removed by the restriction (zero in exact
/// arithmetic).
pub fn lax_rhs_with_trim(x: &LoopElement, rule: DecompositionRule) -> Result<(Vec<LoopElement>, f64), FlowError> {
    let report = x.validate();
    if !report.passed() {
        return Err(FlowError::Invalid(report.to_string()));
    }
    let t = x.trimmed();
    if t.hi() > 1 {
        return Err(FlowError::TopDegree(t.hi()));
    }
    let lo = if t.is_empty() { 1 } else { t.lo() };
    let mut dropped = 0.0_f64;
    let mut out = Vec::new();
    for v in v_fields(&t)? {
        let (c, d) = lax_component(&t, &v, rule, lo)?;
        dropped = dropped.max(d);
        out.push(c);
    }
    Ok((out, dropped))
}

pub fn lax_rhs(x: &LoopElement, rule: DecompositionRule) -> Result<Vec<LoopElement>, FlowError> {
    Ok(lax_rhs_with_trim(x, rule)?.0)
}

/// Linear change of time coordinates `s = B t`. Directions of the flow are
/// then `∂/∂s_j = Σ_i (B^-1)_ij ∂/∂t_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateChange {
    pub b: RMat,
    pub b_inv: RMat,
}

impl CoordinateChange {
    pub fn new(b: RMat) -> Result<Self, FlowError> {
        if !b.is_square() {
            return Err(FlowError::Grid("coordinate change must be square".into()));
        }
        let b_inv = b.clone().try_inverse().ok_or_else(|| FlowError::Grid("coordinate change is singular".into()))?;
        Ok(CoordinateChange { b, b_inv })
    }

    /// Combine per-`t_i` components into the component along `s_j`.
    pub fn combine(&self, comps: &[LoopElement], j: usize) -> Result<LoopElement, FlowError> {
        let mut acc = comps[0].scale(self.b_inv[(0, j)]);
        for (i, a) in comps.iter().enumerate().skip(1) {
            acc = acc.add_scaled(a, self.b_inv[(i, j)])?;
        }
        Ok(acc)
    }
}

/// A straight segment of a path through multi-time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSegment {
    /// 1-based direction index.
    pub direction: usize,
    /// Signed length.
    pub length: f64,
}

/// Rectangular sample grid. Points are stored row-major with axis 0 slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub start: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Grid {
    pub fn new(start: Vec<f64>, spacing: Vec<f64>, counts: Vec<usize>) -> Result<Self, FlowError> {
        if start.len() != spacing.len() || start.len() != counts.len() || start.is_empty() {
            return Err(FlowError::Grid("start, spacing and counts must have equal nonzero length".into()));
        }
        if let Some(s) = spacing.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(FlowError::Grid(format!("spacing must be positive, got {s}")));
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(FlowError::Grid("counts must be positive".into()));
        }
        if start.iter().any(|s| !s.is_finite()) {
            return Err(FlowError::Grid("start must be finite".into()));
        }
        Ok(Grid { start, spacing, counts })
    }

    /// Same start, spacing and count along every axis.
    pub fn uniform(n: usize, start: f64, spacing: f64, count: usize) -> Result<Self, FlowError> {
        Grid::new(vec![start; n], vec![spacing; n], vec![count; n])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.counts.iter()).fold(0, |acc, (&i, &c)| acc * c + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.counts[a];
            flat /= self.counts[a];
        }
        idx
    }

    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().enumerate().map(|(a, &i)| self.start[a] + i as f64 * self.spacing[a]).collect()
    }

    /// Multi-index of the grid point within `tol` (per axis, relative to the
    /// spacing) of `t`.
    pub fn locate(&self, t: &[f64], tol: f64) -> Option<Vec<usize>> {
        if t.len() != self.dim() {
            return None;
        }
        let mut idx = Vec::with_capacity(t.len());
        for a in 0..self.dim() {
            let r = (t[a] - self.start[a]) / self.spacing[a];
            let k = r.round();
            if (r - k).abs() > tol || k < 0.0 || k as usize >= self.counts[a] {
                return None;
            }
            idx.push(k as usize);
        }
        Some(idx)
    }

    /// Whether every axis is interior (not first or last) at `idx`.
    pub fn is_interior(&self, idx: &[usize]) -> bool {
        idx.iter().zip(self.counts.iter()).all(|(&i, &c)| i > 0 && i + 1 < c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub rule: DecompositionRule,
    /// Maximal step; each segment is split into equal steps no longer than this.
    pub h: f64,
    pub path: Vec<PathSegment>,
    pub grid: Option<Grid>,
    pub coords: Option<CoordinateChange>,
}

impl FlowConfig {
    pub fn new(rule: DecompositionRule, h: f64) -> Self {
        FlowConfig { rule, h, path: Vec::new(), grid: None, coords: None }
    }

    pub fn with_path(mut self, path: Vec<PathSegment>) -> Self {
        self.path = path;
        self
    }

    pub fn with_grid(mut self, grid: Grid) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn with_coords(mut self, coords: CoordinateChange) -> Self {
        self.coords = Some(coords);
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SampleResidual {
    /// `|⟨X,X⟩ - ⟨X0,X0⟩|` for the invariant form.
    pub norm_drift: f64,
    /// Same for the coefficient form `Σ tr(X_i X_iᵀ)`; not a conserved
    /// quantity, reported for reference.
    pub coefficient_norm_drift: f64,
    /// Largest coefficient deviation of `det(wI - X(z))` from `t = 0`.
    pub max_charpoly_drift: f64,
    /// Largest coefficient removed by degree restriction on the way here.
    pub trimmed: f64,
    /// Largest post-step structural correction on the way here.
    pub correction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub t: Vec<f64>,
    pub x: LoopElement,
    pub residual: SampleResidual,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub config: FlowConfig,
    /// Initial condition on the sample window `[lo, 1]`.
    pub x0: LoopElement,
    /// `t = 0` followed by the end point of each path segment.
    pub path_samples: Vec<FlowSample>,
    /// Grid samples in grid order (empty without a grid).
    pub grid_samples: Vec<FlowSample>,
}

impl FlowResult {
    pub fn n(&self) -> usize {
        self.x0.n()
    }

    pub fn all_samples(&self) -> impl Iterator<Item = &FlowSample> {
        self.path_samples.iter().chain(self.grid_samples.iter())
    }

    pub fn grid(&self) -> Option<&Grid> {
        self.config.grid.as_ref()
    }

    pub fn grid_sample(&self, idx: &[usize]) -> Option<&FlowSample> {
        let g = self.grid()?;
        self.grid_samples.get(g.index(idx))
    }

    /// Grid sample within `tol` of `t`.
    pub fn sample_at(&self, t: &[f64], tol: f64) -> Option<&FlowSample> {
        let idx = self.grid()?.locate(t, tol)?;
        self.grid_sample(&idx)
    }

    pub fn final_path_x(&self) -> &LoopElement {
        &self.path_samples.last().expect("t = 0 sample").x
    }

    /// Residual table: `t1..tn,norm_drift,max_charpoly_drift`, path samples
    /// first, then grid samples.
    pub fn residual_csv(&self) -> String {
        let n = self.n();
        let mut s = String::new();
        let head: Vec<String> = (1..=n).map(|i| format!("t{i}")).collect();
        let _ = writeln!(s, "{},norm_drift,max_charpoly_drift", head.join(","));
        for smp in self.all_samples() {
            let t: Vec<String> = smp.t.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "{},{:.16e},{:.16e}", t.join(","), smp.residual.norm_drift, smp.residual.max_charpoly_drift);
        }
        s
    }

    /// All grid samples as serialized loop elements, each preceded by a
    /// `sample` line carrying its multi-time.
    pub fn grid_elements_text(&self) -> String {
        let mut s = String::new();
        for smp in &self.grid_samples {
            let t: Vec<String> = smp.t.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(s, "sample t={}", t.join(","));
            s.push_str(&smp.x.to_text());
        }
        s
    }
}

/// One RK4 step together with the field at both ends, enough for cubic
/// Hermite dense output.
#[derive(Clone, Debug)]
pub struct StepData {
    pub x0: LoopElement,
    pub f0: LoopElement,
    pub x1: LoopElement,
    pub f1: LoopElement,
    pub h: f64,
}

impl StepData {
    /// Cubic Hermite interpolant at `x0 + θ h`, `θ ∈ [0, 1]`.
    pub fn interpolate(&self, theta: f64) -> Result<LoopElement, FlowError> {
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + theta;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(self
            .x0
            .scale(h00)
            .add_scaled(&self.f0, h10 * self.h)?
            .add_scaled(&self.x1, h01)?
            .add_scaled(&self.f1, h11 * self.h)?)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SegmentStats {
    pub trimmed: f64,
    pub correction: f64,
}

/// RK4 integrator for one flow instance on the fixed window `[lo, 1]`.
#[derive(Clone, Debug)]
pub struct LaxStepper {
    pub rule: DecompositionRule,
    pub coords: Option<CoordinateChange>,
    pub h: f64,
    lo: i32,
}

impl LaxStepper {
    /// Checks `x0` and returns the stepper with `x0` on the window `[lo, 1]`.
    pub fn new(config: &FlowConfig, x0: &LoopElement) -> Result<(Self, LoopElement), FlowError> {
        if !(config.h.is_finite() && config.h > 0.0) {
            return Err(FlowError::StepSize(config.h));
        }
        let report = x0.validate();
        if !report.passed() {
            return Err(FlowError::Invalid(report.to_string()));
        }
        let t = x0.trimmed();
        if t.hi() > 1 {
            return Err(FlowError::TopDegree(t.hi()));
        }
        let n = x0.n();
        if let Some(c) = &config.coords {
            if c.b.nrows() != n {
                return Err(FlowError::Grid(format!("coordinate change must be {n}x{n}")));
            }
        }
        let lo = if t.is_empty() { 1 } else { t.lo() };
        let (x, _) = x0.restrict(lo, 1);
        Ok((LaxStepper { rule: config.rule, coords: config.coords.clone(), h: config.h, lo }, x))
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    /// Field along 0-based direction `dir` and the restriction defect.
    pub fn field(&self, x: &LoopElement, dir: usize) -> Result<(LoopElement, f64), FlowError> {
        match &self.coords {
            None => {
                let v = v_field(x, dir + 1)?;
                lax_component(x, &v, self.rule, self.lo)
            }
            Some(c) => {
                // The bracket is linear in V, so combine the fields first.
                let v = c.combine(&v_fields(x)?, dir)?;
                lax_component(x, &v, self.rule, self.lo)
            }
        }
    }

    /// One classical RK4 step of length `h` along `dir`, followed by the
    /// structural projection. `fx` is the field at `x`.
    pub fn step(&self, x: &LoopElement, fx: &LoopElement, dir: usize, h: f64) -> Result<(StepData, SegmentStats), FlowError> {
        let (k2, d2) = self.field(&x.add_scaled(fx, 0.5 * h)?, dir)?;
        let (k3, d3) = self.field(&x.add_scaled(&k2, 0.5 * h)?, dir)?;
        let (k4, d4) = self.field(&x.add_scaled(&k3, h)?, dir)?;
        let incr = fx.add_scaled(&k2, 2.0)?.add_scaled(&k3, 2.0)?.add(&k4)?;
        let raw = x.add_scaled(&incr, h / 6.0)?;
        let (x1, correction) = raw.structural_projection();
        let (f1, d1) = self.field(&x1, dir)?;
        let stats = SegmentStats { trimmed: d1.max(d2).max(d3).max(d4), correction };
        Ok((StepData { x0: x.clone(), f0: fx.clone(), x1, f1, h }, stats))
    }

    /// Integrate `length` along `dir` (0-based) starting at multi-time `t`,
    /// calling `on_step` after every step. `t` is advanced in place.
    pub fn segment<E, F>(&self, x: &LoopElement, dir: usize, length: f64, t: &mut [f64], mut on_step: F) -> Result<(LoopElement, SegmentStats), E>
    where
        E: From<FlowError>,
        F: FnMut(&StepData) -> Result<(), E>,
    {
        let mut stats = SegmentStats::default();
        if length == 0.0 {
            return Ok((x.clone(), stats));
        }
        // The tolerance keeps ratios like 0.1 / 0.01 from rounding up.
        let steps = (length.abs() / self.h * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = length / steps as f64;
        let t_start = t[dir];
        let mut cur = x.clone();
        let (mut f, d) = self.field(&cur, dir)?;
        stats.trimmed = d;
        for k in 0..steps {
            let (data, s) = self.step(&cur, &f, dir, h)?;
            t[dir] = t_start + (k + 1) as f64 * h;
            if !data.x1.coeffs().iter().all(|c| c.iter().all(|v| v.re.is_finite() && v.im.is_finite())) {
                return Err(FlowError::NonFinite { t: t.to_vec() }.into());
            }
            let scale = data.x1.max_abs().max(1.0);
            if s.correction > STEP_DEFECT_TOL * scale {
                return Err(FlowError::StepDefect { what: "structural correction", magnitude: s.correction, t: t.to_vec() }.into());
            }
            if s.trimmed > STEP_DEFECT_TOL * scale {
                return Err(FlowError::StepDefect { what: "trimmed coefficient", magnitude: s.trimmed, t: t.to_vec() }.into());
            }
            stats.trimmed = stats.trimmed.max(s.trimmed);
            stats.correction = stats.correction.max(s.correction);
            on_step(&data)?;
            cur = data.x1;
            f = data.f1;
        }
        // Land exactly on the requested end point.
        t[dir] = t_start + length;
        Ok((cur, stats))
    }
}

fn no_op(_: &StepData) -> Result<(), FlowError> {
    Ok(())
}

struct Baseline {
    norm: f64,
    coeff_norm: f64,
    charpoly: Vec<LaurentPoly>,
}

impl Baseline {
    fn new(x0: &LoopElement) -> Result<Self, FlowError> {
        Ok(Baseline {
            norm: invariant_inner_product(x0, x0)?,
            coeff_norm: crate::loop_algebra::inner_product(x0, x0)?,
            charpoly: char_poly(x0),
        })
    }

    fn sample(&self, t: Vec<f64>, x: LoopElement, stats: SegmentStats) -> Result<FlowSample, FlowError> {
        let residual = SampleResidual {
            norm_drift: (invariant_inner_product(&x, &x)? - self.norm).abs(),
            coefficient_norm_drift: (crate::loop_algebra::inner_product(&x, &x)? - self.coeff_norm).abs(),
            max_charpoly_drift: charpoly_drift(&self.charpoly, &char_poly(&x)),
            trimmed: stats.trimmed,
            correction: stats.correction,
        };
        Ok(FlowSample { t, x, residual })
    }
}

fn merge(a: SegmentStats, b: SegmentStats) -> SegmentStats {
    SegmentStats { trimmed: a.trimmed.max(b.trimmed), correction: a.correction.max(b.correction) }
}

/// Integrate the commuting Lax flows from `x0`.
///
/// The path segments are followed in order from `t = 0`. The grid is filled
/// independently: from `t = 0` along axes `1..n` to the grid start, then
/// along axis 1 to produce the row seeds, and recursively along the
/// remaining axes.
pub fn integrate_flow(x0: &LoopElement, config: &FlowConfig) -> Result<FlowResult, FlowError> {
    let (stepper, x0w) = LaxStepper::new(config, x0)?;
    let n = x0.n();
    for seg in &config.path {
        if seg.direction == 0 || seg.direction > n {
            return Err(FlowError::Direction { direction: seg.direction, n });
        }
        if !seg.length.is_finite() {
            return Err(FlowError::Grid("path length must be finite".into()));
        }
    }
    if let Some(g) = &config.grid {
        if g.dim() != n {
            return Err(FlowError::Grid(format!("grid has {} axes, expected {n}", g.dim())));
        }
    }
    let base = Baseline::new(&x0w)?;
    let origin = vec![0.0; n];

    let mut path_samples = vec![base.sample(origin.clone(), x0w.clone(), SegmentStats::default())?];
    let mut t = origin.clone();
    let mut x = x0w.clone();
    for seg in &config.path {
        let (next, stats) = stepper.segment(&x, seg.direction - 1, seg.length, &mut t, no_op)?;
        x = next;
        path_samples.push(base.sample(t.clone(), x.clone(), stats)?);
    }

    let mut grid_samples = Vec::new();
    if let Some(g) = &config.grid {
        let mut t = origin;
        let mut x = x0w.clone();
        let mut stats = SegmentStats::default();
        for a in 0..n {
            let (next, s) = stepper.segment(&x, a, g.start[a], &mut t, no_op)?;
            x = next;
            stats = merge(stats, s);
        }
        let mut slots: Vec<Option<FlowSample>> = vec![None; g.len()];
        fill_axis(&stepper, &base, g, 0, vec![0; n], t, x, stats, &mut slots)?;
        grid_samples = slots.into_iter().map(|s| s.expect("every grid point visited")).collect();
    }

    Ok(FlowResult { config: config.clone(), x0: x0w, path_samples, grid_samples })
}

/// March along `axis` from the point `idx` (whose `axis..` entries are 0),
/// recursing into the next axis at every point.
#[allow(clippy::too_many_arguments)]
fn fill_axis(
    stepper: &LaxStepper,
    base: &Baseline,
    g: &Grid,
    axis: usize,
    mut idx: Vec<usize>,
    mut t: Vec<f64>,
    mut x: LoopElement,
    mut stats: SegmentStats,
    slots: &mut [Option<FlowSample>],
) -> Result<(), FlowError> {
    // Row seeds along this axis first, then the sub-rows.
    let mut seeds = Vec::with_capacity(g.counts[axis]);
    for k in 0..g.counts[axis] {
        if k > 0 {
            let (next, s) = stepper.segment(&x, axis, g.spacing[axis], &mut t, no_op)?;
            x = next;
            stats = merge(stats, s);
            // Snap to the exact grid coordinate.
            t[axis] = g.start[axis] + k as f64 * g.spacing[axis];
        }
        seeds.push((t.clone(), x.clone(), stats));
    }
    for (k, (t, x, stats)) in seeds.into_iter().enumerate() {
        idx[axis] = k;
        if axis + 1 < g.dim() {
            fill_axis(stepper, base, g, axis + 1, idx.clone(), t, x, stats, slots)?;
        } else {
            slots[g.index(&idx)] = Some(base.sample(t, x, stats)?);
        }
    }
    Ok(())
}

/// Central-difference check of `dV_i|_X([X, Y]) = [V_i(X), Y]`:
/// `|(V(X + s[X,Y]) - V(X - s[X,Y])) / 2s - [V(X), Y]|_max`.
///
/// `V_1` is linear, so its difference quotient is replaced by the exact
/// directional derivative.
pub fn ad_equivariance_residual(i: usize, x: &LoopElement, y: &LoopElement, fd_step: f64) -> Result<f64, FlowError> {
    if !(fd_step > 0.0) {
        return Err(FlowError::StepSize(fd_step));
    }
    check_index(i, x.n())?;
    let xy = bracket(x, y)?;
    let rhs = bracket(&v_field(x, i)?, y)?;
    let lhs = if i == 1 {
        xy
    } else {
        let plus = v_field(&x.add_scaled(&xy, fd_step)?, i)?;
        let minus = v_field(&x.add_scaled(&xy, -fd_step)?, i)?;
        plus.sub(&minus)?.scale(0.5 / fd_step)
    };
    Ok(lhs.max_abs_diff(&rhs))
}

/// Commutation of the Lax fields `L_i(X) = [X, π_P V_i(X)]`: central
/// difference estimate of `|dL_j|_X(L_i(X)) - dL_i|_X(L_j(X))|_max`.
pub fn lax_commutator_residual(x: &LoopElement, rule: DecompositionRule, i: usize, j: usize, fd_step: f64) -> Result<f64, FlowError> {
    let n = x.n();
    check_index(i, n)?;
    check_index(j, n)?;
    let lax = |y: &LoopElement, k: usize| -> Result<LoopElement, FlowError> {
        Ok(bracket(y, &project(&v_field(y, k)?, rule))?)
    };
    let li = lax(x, i)?;
    let lj = lax(x, j)?;
    let dir = |k: usize, w: &LoopElement| -> Result<LoopElement, FlowError> {
        let p = lax(&x.add_scaled(w, fd_step)?, k)?;
        let m = lax(&x.add_scaled(w, -fd_step)?, k)?;
        Ok(p.sub(&m)?.scale(0.5 / fd_step))
    };
    Ok(dir(j, &li)?.max_abs_diff(&dir(i, &lj)?))
}

/// Connection components `π_P V_i(X)` along the flow's time directions
/// (combined through the coordinate change when present).
pub fn connection_components(x: &LoopElement, rule: DecompositionRule, coords: Option<&CoordinateChange>) -> Result<Vec<LoopElement>, FlowError> {
    let comps: Vec<LoopElement> = v_fields(x)?.iter().map(|v| project(v, rule)).collect();
    match coords {
        None => Ok(comps),
        Some(c) => (0..comps.len()).map(|j| c.combine(&comps, j)).collect(),
    }
}

/// Finite-difference partial derivative along `axis` at `idx` of a grid
/// field (up to 5-point stencils, one-sided at the edges).
pub(crate) fn grid_partial<T, F>(g: &Grid, idx: &[usize], axis: usize, zero: T, mut value: F) -> T
where
    T: Clone + std::ops::AddAssign + std::ops::Mul<f64, Output = T>,
    F: FnMut(&[usize]) -> T,
{
    let (start, w) = derivative_stencil(idx[axis], g.counts[axis], g.spacing[axis]);
    let mut j = idx.to_vec();
    let mut acc = zero;
    for (k, wk) in w.iter().enumerate() {
        j[axis] = start + k;
        acc += value(&j) * *wk;
    }
    acc
}

fn diff_loop(g: &Grid, comps: &[Vec<LoopElement>], idx: &[usize], axis: usize, comp: usize) -> Result<LoopElement, FlowError> {
    let (start, w) = derivative_stencil(idx[axis], g.counts[axis], g.spacing[axis]);
    let mut j = idx.to_vec();
    let mut acc = LoopElement::zero(comps[0][0].m(), true)?;
    for (k, wk) in w.iter().enumerate() {
        j[axis] = start + k;
        acc = acc.add_scaled(&comps[g.index(&j)][comp], *wk)?;
    }
    Ok(acc)
}

/// Discrete Maurer–Cartan residual `max |∂_i A_j - ∂_j A_i + [A_i, A_j]|`
/// over interior grid points and direction pairs, with `A` built from the
/// grid samples.
pub fn maurer_cartan_residual(flow: &FlowResult) -> Result<f64, FlowError> {
    let g = flow.grid().ok_or_else(|| FlowError::Grid("flow has no grid".into()))?;
    if g.counts.iter().any(|&c| c < 3) {
        return Err(FlowError::Grid("need at least 3 points per direction".into()));
    }
    let rule = flow.config.rule;
    let coords = flow.config.coords.as_ref();
    let comps: Vec<Vec<LoopElement>> = flow
        .grid_samples
        .iter()
        .map(|s| connection_components(&s.x, rule, coords))
        .collect::<Result<_, _>>()?;
    let n = g.dim();
    let mut worst = 0.0_f64;
    for flat in 0..g.len() {
        let idx = g.multi_index(flat);
        if !g.is_interior(&idx) {
            continue;
        }
        let a = &comps[flat];
        for i in 0..n {
            for j in i + 1..n {
                let di_aj = diff_loop(g, &comps, &idx, i, j)?;
                let dj_ai = diff_loop(g, &comps, &idx, j, i)?;
                let r = di_aj.sub(&dj_ai)?.add(&bracket(&a[i], &a[j])?)?;
                worst = worst.max(r.max_abs());
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RMat;
    use crate::loop_algebra::twist_allows;
    use crate::random::{random_initial, random_loop_element};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v1_from_k(k: &RMat) -> RMat {
        let n = k.nrows();
        let mut x = RMat::zeros(2 * n, 2 * n);
        x.view_mut((0, n), (n, n)).copy_from(k);
        x.view_mut((n, 0), (n, n)).copy_from(&(-k.transpose()));
        x
    }

    #[test]
    fn v1_is_identity_and_v2_of_monomial() {
        let x = random_initial(2, 2, 1);
        assert_eq!(v_field(&x, 1).unwrap(), x.trimmed());
        let k = RMat::from_row_slice(2, 2, &[0.3, -0.7, 1.1, 0.2]);
        let x1 = v1_from_k(&k);
        let x = LoopElement::from_real(4, 1, vec![x1.clone()]).unwrap();
        let v2 = v_field(&x, 2).unwrap();
        assert_eq!((v2.lo(), v2.hi()), (1, 1));
        let cube = &x1 * &x1 * &x1;
        assert!(v2.coeff(1).unwrap().map(|v| v.re).iter().zip(cube.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(matches!(v_field(&x, 3), Err(FlowError::FieldIndex { i: 3, n: 2 })));
        assert!(matches!(v_field(&x, 0), Err(FlowError::FieldIndex { .. })));
    }

    #[test]
    fn odd_powers_stay_valid() {
        for seed in 0..100 {
            let x = random_initial(3, 2, seed);
            for i in 1..=3 {
                let v = v_field(&x, i).unwrap();
                assert!(v.validate().passed(), "seed {seed} i {i}");
                assert!(v.trimmed().hi() <= 1);
            }
        }
    }

    #[test]
    fn simple_rule_monomial_is_stationary() {
        let x = LoopElement::from_real(4, 1, vec![v1_from_k(&RMat::identity(2, 2))]).unwrap();
        for c in lax_rhs(&x, DecompositionRule::Simple).unwrap() {
            assert!(c.is_zero());
        }
    }

    #[test]
    fn rhs_degrees_stay_in_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = random_loop_element(&mut rng, 2, -2, 1);
            for rule in DecompositionRule::ALL {
                let (comps, dropped) = lax_rhs_with_trim(&x, rule).unwrap();
                assert!(dropped < 1e-12);
                for c in comps {
                    assert_eq!((c.lo(), c.hi()), (-2, 1));
                    assert!(c.validate().passed());
                }
            }
        }
    }

    #[test]
    fn simple_rule_freezes_lowest_coefficient() {
        let x = random_initial(2, 1, 5);
        for c in lax_rhs(&x, DecompositionRule::Simple).unwrap() {
            assert_eq!(c.coeff(-1).unwrap().iter().fold(0.0_f64, |a, v| a.max(v.norm())), 0.0);
        }
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = Grid::new(vec![0.0, 1.0, -1.0], vec![0.5, 0.25, 1.0], vec![3, 4, 2]).unwrap();
        for flat in 0..g.len() {
            assert_eq!(g.index(&g.multi_index(flat)), flat);
        }
        assert_eq!(g.index(&[1, 0, 0]), 8);
        assert_eq!(g.locate(&[0.5, 1.5, 0.0], 1e-9), Some(vec![1, 2, 1]));
        assert_eq!(g.locate(&[0.6, 1.5, 0.0], 1e-9), None);
        assert!(Grid::new(vec![0.0], vec![-1.0], vec![3]).is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let x = random_initial(2, 1, 2);
        let cfg = FlowConfig::new(DecompositionRule::Simple, 0.0);
        assert!(matches!(integrate_flow(&x, &cfg), Err(FlowError::StepSize(_))));
        let cfg = FlowConfig::new(DecompositionRule::Simple, 1e-2).with_path(vec![PathSegment { direction: 3, length: 1.0 }]);
        assert!(matches!(integrate_flow(&x, &cfg), Err(FlowError::Direction { .. })));
        let mut bad = RMat::zeros(4, 4);
        bad[(0, 1)] = 1.0;
        bad[(1, 0)] = 1.0;
        let y = LoopElement::from_real(4, 0, vec![bad]).unwrap();
        assert!(matches!(integrate_flow(&y, &FlowConfig::new(DecompositionRule::Simple, 1e-2)), Err(FlowError::Invalid(_))));
    }

    #[test]
    fn grid_fill_matches_direct_path() {
        let x = random_initial(2, 1, 11);
        let g = Grid::new(vec![0.1, -0.1], vec![0.05, 0.05], vec![3, 3]).unwrap();
        let cfg = FlowConfig::new(DecompositionRule::Admissible, 1e-2)
            .with_grid(g)
            .with_path(vec![PathSegment { direction: 1, length: 0.2 }, PathSegment { direction: 2, length: 0.0 }]);
        let flow = integrate_flow(&x, &cfg).unwrap();
        let smp = flow.sample_at(&[0.2, -0.1], 1e-9).unwrap();
        // The fill reaches the grid start along axes 1, 2 and then steps
        // along axis 1; the same path reproduces the sample.
        let direct = integrate_flow(
            &x,
            &FlowConfig::new(DecompositionRule::Admissible, 1e-2).with_path(vec![
                PathSegment { direction: 1, length: 0.1 },
                PathSegment { direction: 2, length: -0.1 },
                PathSegment { direction: 1, length: 0.05 },
                PathSegment { direction: 1, length: 0.05 },
            ]),
        )
        .unwrap();
        assert!(smp.x.max_abs_diff(direct.final_path_x()) < 1e-15);
        assert_eq!(flow.path_samples.len(), 3);
        for s in flow.all_samples() {
            assert!(s.x.validate().passed());
            assert_eq!((s.x.lo(), s.x.hi()), (-1, 1));
        }
    }

    #[test]
    fn twist_blocks_stay_zero_along_flow() {
        let x = random_initial(3, 1, 4);
        let cfg = FlowConfig::new(DecompositionRule::CurvedFlat, 1e-2)
            .with_path(vec![PathSegment { direction: 2, length: 0.3 }, PathSegment { direction: 3, length: -0.2 }]);
        let flow = integrate_flow(&x, &cfg).unwrap();
        let y = flow.final_path_x();
        for (d, c) in y.terms() {
            for r in 0..6 {
                for col in 0..6 {
                    if !twist_allows(d, r, col, 3) {
                        assert_eq!(c[(r, col)].norm(), 0.0);
                    }
                    assert_eq!(c[(r, col)].im, 0.0);
                }
            }
        }
    }

    #[test]
    fn equivariance_and_commutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = random_loop_element(&mut rng, 2, -2, 1);
        let y = random_loop_element(&mut rng, 2, -1, 1);
        assert_eq!(ad_equivariance_residual(1, &x, &y, 1e-5).unwrap(), 0.0);
        assert!(ad_equivariance_residual(2, &x, &y, 1e-5).unwrap() < 1e-7);
        for rule in DecompositionRule::ALL {
            assert!(lax_commutator_residual(&x, rule, 1, 2, 1e-5).unwrap() < 1e-6);
        }
    }

    #[test]
    fn hermite_interpolant_hits_end_points() {
        let x = random_initial(2, 1, 3);
        let cfg = FlowConfig::new(DecompositionRule::Simple, 0.1);
        let (st, xw) = LaxStepper::new(&cfg, &x).unwrap();
        let (f, _) = st.field(&xw, 0).unwrap();
        let (data, _) = st.step(&xw, &f, 0, 0.1).unwrap();
        assert!(data.interpolate(0.0).unwrap().max_abs_diff(&data.x0) < 1e-15);
        assert!(data.interpolate(1.0).unwrap().max_abs_diff(&data.x1) < 1e-15);
    }
}
