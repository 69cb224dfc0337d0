//! Frames `F: R^n → SO(2n)` with `F^-1 dF = A(X(t))` at a fixed real `z0`,
//! the sphere map `f` (a designated column of `F`), the immersion
//! determinant and flatness residuals.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::flow::{connection_components, grid_partial, CoordinateChange, FlowError, FlowResult, Grid, LaxStepper, StepData};
use crate::linalg::{c, commutator_real, expm, max_abs_real, orthogonality_defect, split_real, RMat};
use crate::loop_algebra::{project, DecompositionRule, LoopElement};

/// Orthogonality drift that aborts frame integration.
pub const ORTHOGONALITY_ABORT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("z0 must be a nonzero real number")]
    ZeroZ0,
    #[error("connection requires a real-flagged element")]
    NotReal,
    #[error("connection at z0 has imaginary part {0:e}")]
    Imaginary(f64),
    #[error("frame integration needs a flow grid")]
    NoGrid,
    #[error("orthogonality drift {defect:e} at t = {t:?}")]
    Orthogonality { t: Vec<f64>, defect: f64 },
    #[error("non-finite frame entry at t = {t:?}")]
    NonFinite { t: Vec<f64> },
    #[error("initial frame: {0}")]
    InitialFrame(String),
    #[error("column {column} outside {lo}..={hi}")]
    Column { column: usize, lo: usize, hi: usize },
    #[error("grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Connection `[π_P V_i(X)](z0)`, `i = 1..n`, as real skew matrices.
pub fn connection_at(x: &LoopElement, rule: DecompositionRule, z0: f64) -> Result<Vec<RMat>, FrameError> {
    connection_at_coords(x, rule, z0, None)
}

/// [`connection_at`] along the directions of a coordinate change.
pub fn connection_at_coords(x: &LoopElement, rule: DecompositionRule, z0: f64, coords: Option<&CoordinateChange>) -> Result<Vec<RMat>, FrameError> {
    check_z0(z0)?;
    if !x.is_real() {
        return Err(FrameError::NotReal);
    }
    connection_components(x, rule, coords)?.iter().map(|a| eval_real(a, z0)).collect()
}

fn check_z0(z0: f64) -> Result<(), FrameError> {
    if z0 == 0.0 || !z0.is_finite() {
        Err(FrameError::ZeroZ0)
    } else {
        Ok(())
    }
}

fn eval_real(a: &LoopElement, z0: f64) -> Result<RMat, FrameError> {
    let (m, imag) = split_real(&a.eval(c(z0, 0.0)));
    if imag > 1e-10 * max_abs_real(&m).max(1.0) {
        return Err(FrameError::Imaginary(imag));
    }
    Ok(m)
}

/// Connection along one 0-based direction.
fn direction_connection(x: &LoopElement, rule: DecompositionRule, coords: Option<&CoordinateChange>, dir: usize, z0: f64) -> Result<RMat, FrameError> {
    match coords {
        None => eval_real(&project(&crate::flow::v_field(x, dir + 1)?, rule), z0),
        Some(c) => {
            let m = x.m();
            let mut acc = RMat::zeros(m, m);
            for (i, v) in crate::flow::v_fields(x)?.iter().enumerate() {
                acc += eval_real(&project(v, rule), z0)? * c.b_inv[(i, dir)];
            }
            Ok(acc)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameStepper {
    /// `F ← F exp(h A(X(t + h/2)))`; second order.
    Midpoint,
    /// Two-point Gauss Magnus step,
    /// `Ω = h(A_1 + A_2)/2 + (√3/12) h² [A_1, A_2]`; fourth order.
    Magnus4,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOptions {
    pub z0: f64,
    /// Frame at `t = 0`; identity when absent.
    pub initial: Option<RMat>,
    pub stepper: FrameStepper,
    /// 1-based column holding the sphere map, in `n+1..=2n`.
    pub column: Option<usize>,
}

impl FrameOptions {
    pub fn new(z0: f64) -> Self {
        FrameOptions { z0, initial: None, stepper: FrameStepper::Magnus4, column: None }
    }

    pub fn with_initial(mut self, f0: RMat) -> Self {
        self.initial = Some(f0);
        self
    }

    pub fn with_stepper(mut self, stepper: FrameStepper) -> Self {
        self.stepper = stepper;
        self
    }

    pub fn with_column(mut self, column: usize) -> Self {
        self.column = Some(column);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub t: Vec<f64>,
    pub z0: f64,
    pub f: RMat,
    /// `A_i(X(t))` at `z0` along the flow's directions.
    pub connection: Vec<RMat>,
}

impl Frame {
    /// 1-based column of `F`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.f.column(k - 1).iter().copied().collect()
    }

    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.f)
    }

    pub fn det(&self) -> f64 {
        self.f.determinant()
    }
}

#[derive(Clone, Debug)]
pub struct FrameGrid {
    pub grid: Grid,
    /// Frames in grid order.
    pub frames: Vec<Frame>,
    pub z0: f64,
    pub rule: DecompositionRule,
    pub initial: RMat,
    /// 1-based sphere-map column.
    pub column: usize,
}

impl FrameGrid {
    pub fn n(&self) -> usize {
        self.initial.nrows() / 2
    }

    pub fn frame(&self, idx: &[usize]) -> &Frame {
        &self.frames[self.grid.index(idx)]
    }

    pub fn frame_at(&self, t: &[f64], tol: f64) -> Option<&Frame> {
        self.grid.locate(t, tol).map(|idx| self.frame(&idx))
    }

    /// Sphere map `f` at every grid point.
    pub fn sphere_map(&self) -> Vec<Vec<f64>> {
        self.frames.iter().map(|fr| fr.column(self.column)).collect()
    }

    /// Largest `|FᵀF - I|`, `|det F - 1|` and `|‖f‖ - 1|` over the grid.
    pub fn structure_defects(&self) -> (f64, f64, f64) {
        let mut orth = 0.0_f64;
        let mut det = 0.0_f64;
        let mut sphere = 0.0_f64;
        for fr in &self.frames {
            orth = orth.max(fr.orthogonality_defect());
            det = det.max((fr.det() - 1.0).abs());
            let f = fr.column(self.column);
            sphere = sphere.max((f.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs());
        }
        (orth, det, sphere)
    }

    /// Companion export for plotting: a `mesh` header line with the grid
    /// counts and column, then one line of `f` coordinates per grid point in
    /// grid order.
    pub fn mesh_text(&self) -> String {
        let mut s = String::new();
        let dims: Vec<String> = self.grid.counts.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "mesh dims={} column={}", dims.join("x"), self.column);
        for f in self.sphere_map() {
            let row: Vec<String> = f.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

struct FrameIntegrator<'a> {
    stepper: LaxStepper,
    rule: DecompositionRule,
    coords: Option<&'a CoordinateChange>,
    z0: f64,
    kind: FrameStepper,
}

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // √3 / 6

impl FrameIntegrator<'_> {
    fn a(&self, x: &LoopElement, dir: usize) -> Result<RMat, FrameError> {
        direction_connection(x, self.rule, self.coords, dir, self.z0)
    }

    fn factor(&self, data: &StepData, dir: usize) -> Result<RMat, FrameError> {
        let h = data.h;
        let omega = match self.kind {
            FrameStepper::Midpoint => self.a(&data.interpolate(0.5)?, dir)? * h,
            FrameStepper::Magnus4 => {
                let a1 = self.a(&data.interpolate(0.5 - GAUSS_OFFSET)?, dir)?;
                let a2 = self.a(&data.interpolate(0.5 + GAUSS_OFFSET)?, dir)?;
                let comm = commutator_real(&a1, &a2);
                (&a1 + &a2) * (0.5 * h) + comm * (3.0_f64.sqrt() / 12.0 * h * h)
            }
        };
        Ok(expm(&omega))
    }

    /// Advance `(X, F)` by `length` along `dir`.
    fn advance(&self, x: &LoopElement, f: &RMat, dir: usize, length: f64, t: &mut [f64]) -> Result<(LoopElement, RMat), FrameError> {
        let mut frame = f.clone();
        let (x1, _) = self.stepper.segment::<FrameError, _>(x, dir, length, t, |data| {
            frame = &frame * self.factor(data, dir)?;
            Ok(())
        })?;
        if !frame.iter().all(|v| v.is_finite()) {
            return Err(FrameError::NonFinite { t: t.to_vec() });
        }
        let defect = orthogonality_defect(&frame);
        if defect > ORTHOGONALITY_ABORT {
            return Err(FrameError::Orthogonality { t: t.to_vec(), defect });
        }
        Ok((x1, frame))
    }

    fn frame(&self, t: &[f64], x: &LoopElement, f: RMat) -> Result<Frame, FrameError> {
        Ok(Frame {
            t: t.to_vec(),
            z0: self.z0,
            f,
            connection: connection_at_coords(x, self.rule, self.z0, self.coords)?,
        })
    }

    /// Fill the sub-grid spanned by axes `axis..` from a seed point.
    fn fill(&self, g: &Grid, axis: usize, t: Vec<f64>, x: LoopElement, f: RMat, out: &mut Vec<Frame>) -> Result<(), FrameError> {
        let mut t = t;
        let mut x = x;
        let mut f = f;
        for k in 0..g.counts[axis] {
            if k > 0 {
                let (nx, nf) = self.advance(&x, &f, axis, g.spacing[axis], &mut t)?;
                x = nx;
                f = nf;
                t[axis] = g.start[axis] + k as f64 * g.spacing[axis];
            }
            if axis + 1 < g.dim() {
                self.fill(g, axis + 1, t.clone(), x.clone(), f.clone(), out)?;
            } else {
                out.push(self.frame(&t, &x, f.clone())?);
            }
        }
        Ok(())
    }
}

/// Integrate frames over the flow's grid, co-integrating `X` with the flow's
/// own RK4 steps (so `X` at grid points reproduces the flow samples) and
/// evaluating `A` between steps from the cubic Hermite interpolant.
///
/// Seeds along axis 1 are computed sequentially; the sub-grids they span are
/// integrated in parallel.
pub fn integrate_frame(flow: &FlowResult, options: &FrameOptions) -> Result<FrameGrid, FrameError> {
    check_z0(options.z0)?;
    if !flow.x0.is_real() {
        return Err(FrameError::NotReal);
    }
    let g = flow.grid().ok_or(FrameError::NoGrid)?.clone();
    let n = flow.n();
    let m = 2 * n;
    let column = options.column.unwrap_or(n + 1);
    if column <= n || column > m {
        return Err(FrameError::Column { column, lo: n + 1, hi: m });
    }
    let f0 = match &options.initial {
        None => RMat::identity(m, m),
        Some(f0) => {
            if f0.shape() != (m, m) {
                return Err(FrameError::InitialFrame(format!("expected {m}x{m}")));
            }
            let defect = orthogonality_defect(f0);
            if defect > 1e-10 || (f0.determinant() - 1.0).abs() > 1e-10 {
                return Err(FrameError::InitialFrame(format!("not in SO({m}) (orthogonality defect {defect:e})")));
            }
            f0.clone()
        }
    };
    let (stepper, x0) = LaxStepper::new(&flow.config, &flow.x0)?;
    let integ = FrameIntegrator {
        stepper,
        rule: flow.config.rule,
        coords: flow.config.coords.as_ref(),
        z0: options.z0,
        kind: options.stepper,
    };

    let mut t = vec![0.0; n];
    let mut x = x0;
    let mut f = f0.clone();
    for a in 0..n {
        let (nx, nf) = integ.advance(&x, &f, a, g.start[a], &mut t)?;
        x = nx;
        f = nf;
    }
    let mut seeds = Vec::with_capacity(g.counts[0]);
    for k in 0..g.counts[0] {
        if k > 0 {
            let (nx, nf) = integ.advance(&x, &f, 0, g.spacing[0], &mut t)?;
            x = nx;
            f = nf;
            t[0] = g.start[0] + k as f64 * g.spacing[0];
        }
        seeds.push((t.clone(), x.clone(), f.clone()));
    }
    let blocks: Vec<Result<Vec<Frame>, FrameError>> = seeds
        .into_par_iter()
        .map(|(t, x, f)| {
            let mut out = Vec::new();
            if n > 1 {
                integ.fill(&g, 1, t, x, f, &mut out)?;
            } else {
                out.push(integ.frame(&t, &x, f)?);
            }
            Ok(out)
        })
        .collect();
    let mut frames = Vec::with_capacity(g.len());
    for b in blocks {
        frames.extend(b?);
    }
    Ok(FrameGrid { grid: g, frames, z0: options.z0, rule: flow.config.rule, initial: f0, column })
}

/// `max |X(t)(z0) - F(t)^-1 Y0 F(t)|` with `Y0 = F0 X(0)(z0) F0^-1`.
pub fn killing_residual(flow: &FlowResult, frames: &FrameGrid, idx: &[usize]) -> Result<f64, FrameError> {
    let g = &frames.grid;
    let x0 = eval_real(&flow.x0, frames.z0)?;
    let y0 = &frames.initial * x0 * frames.initial.transpose();
    let fr = frames.frame(idx);
    let xt = eval_real(&flow.grid_samples[g.index(idx)].x, frames.z0)?;
    let predicted = fr.f.transpose() * y0 * &fr.f;
    Ok(max_abs_real(&(xt - predicted)))
}

/// The `n×n` matrix whose row `i` is `(-1)^i` times entries `(n+1, 1..n)` of
/// `X_1^(2i-1)`. The sign makes row `i` the first row of
/// `(KᵀK)^(i-1) Kᵀ` for `X_1 = [[0, K], [-Kᵀ, 0]]`; it changes the
/// determinant by `(-1)^(n(n+1)/2)` and leaves its zero set alone.
pub fn immersion_matrix(x: &LoopElement) -> RMat {
    let n = x.n();
    let Some(x1) = x.coeff(1) else {
        return RMat::zeros(n, n);
    };
    let x1 = x1.map(|v| v.re);
    let sq = &x1 * &x1;
    let mut p = x1.clone();
    let mut m = RMat::zeros(n, n);
    for i in 1..=n {
        if i > 1 {
            p = &p * &sq;
        }
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        for j in 0..n {
            m[(i - 1, j)] = sign * p[(n, j)];
        }
    }
    m
}

/// `det M(X)`; zero when `X` has no `z^1` coefficient.
pub fn immersion_det(x: &LoopElement) -> f64 {
    immersion_matrix(x).determinant()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatnessResidual {
    pub idx: Vec<usize>,
    pub interior: bool,
    pub omega: f64,
    pub eta: f64,
}

fn curvature(g: &Grid, frames: &[Frame], idx: &[usize], n: usize, lower: bool) -> f64 {
    let block = |fr: &Frame, i: usize| -> RMat {
        let off = if lower { n } else { 0 };
        fr.connection[i].view((off, off), (n, n)).into_owned()
    };
    let here = &frames[g.index(idx)];
    let mut worst = 0.0_f64;
    for i in 0..g.dim() {
        for j in i + 1..g.dim() {
            let di_bj = grid_partial(g, idx, i, RMat::zeros(n, n), |k| block(&frames[g.index(k)], j));
            let dj_bi = grid_partial(g, idx, j, RMat::zeros(n, n), |k| block(&frames[g.index(k)], i));
            let r = di_bj - dj_bi + commutator_real(&block(here, i), &block(here, j));
            worst = worst.max(max_abs_real(&r));
        }
    }
    worst
}

/// Curvature residuals `|∂_i B_j - ∂_j B_i + [B_i, B_j]|_max` for
/// `B = ω` (upper-left block) and `B = η` (lower-right block) of the frame
/// connections, at every grid point. Derivatives use up to 5-point stencils,
/// one-sided near the boundary; `interior` marks points where every axis is
/// interior.
pub fn flatness_residuals(frames: &FrameGrid) -> Result<Vec<FlatnessResidual>, FrameError> {
    let g = &frames.grid;
    if g.counts.iter().any(|&c| c < 3) {
        return Err(FrameError::Grid("need at least 3 points per direction".into()));
    }
    let n = frames.n();
    Ok((0..g.len())
        .map(|flat| {
            let idx = g.multi_index(flat);
            FlatnessResidual {
                interior: g.is_interior(&idx),
                omega: curvature(g, &frames.frames, &idx, n, false),
                eta: curvature(g, &frames.frames, &idx, n, true),
                idx,
            }
        })
        .collect())
}

/// Largest deviation over interior points between the stored connection and
/// the finite-difference estimate of `F^-1 ∂_i F = Fᵀ ∂_i F`.
pub fn connection_fd_residual(frames: &FrameGrid) -> Result<f64, FrameError> {
    let g = &frames.grid;
    if g.counts.iter().any(|&c| c < 3) {
        return Err(FrameError::Grid("need at least 3 points per direction".into()));
    }
    let m = frames.initial.nrows();
    let mut worst = 0.0_f64;
    for flat in 0..g.len() {
        let idx = g.multi_index(flat);
        if !g.is_interior(&idx) {
            continue;
        }
        let fr = &frames.frames[flat];
        for i in 0..g.dim() {
            let df = grid_partial(g, &idx, i, RMat::zeros(m, m), |k| frames.frame(k).f.clone());
            let est = fr.f.transpose() * df;
            worst = worst.max(max_abs_real(&(est - &fr.connection[i])));
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImmersionSample {
    pub t: Vec<f64>,
    pub f: Vec<f64>,
    pub imm_det: f64,
    pub omega_residual: f64,
    pub eta_residual: f64,
}

/// One sample per grid point. Residuals at boundary points come from
/// one-sided stencils.
pub fn immersion_samples(flow: &FlowResult, frames: &FrameGrid) -> Result<Vec<ImmersionSample>, FrameError> {
    let flat = if frames.grid.counts.iter().all(|&c| c >= 3) { Some(flatness_residuals(frames)?) } else { None };
    Ok(frames
        .frames
        .iter()
        .enumerate()
        .map(|(k, fr)| ImmersionSample {
            t: fr.t.clone(),
            f: fr.column(frames.column),
            imm_det: immersion_det(&flow.grid_samples[k].x),
            omega_residual: flat.as_ref().map_or(f64::NAN, |r| r[k].omega),
            eta_residual: flat.as_ref().map_or(f64::NAN, |r| r[k].eta),
        })
        .collect())
}

/// CSV columns `t1..tn,f1..f2n,imm_det,omega_residual,eta_residual`.
pub fn immersion_csv(samples: &[ImmersionSample], n: usize) -> String {
    let mut s = String::new();
    let mut head: Vec<String> = (1..=n).map(|i| format!("t{i}")).collect();
    head.extend((1..=2 * n).map(|i| format!("f{i}")));
    head.extend(["imm_det", "omega_residual", "eta_residual"].map(String::from));
    let _ = writeln!(s, "{}", head.join(","));
    for smp in samples {
        let mut row: Vec<String> = smp.t.iter().chain(smp.f.iter()).map(|v| format!("{v:.16e}")).collect();
        row.extend([smp.imm_det, smp.omega_residual, smp.eta_residual].map(|v| format!("{v:.16e}")));
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}
