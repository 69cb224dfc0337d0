//! Subcommand orchestration and artifact export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use aks_core::clifford::{self, CliffordParams};
use aks_core::flow::{integrate_flow, CoordinateChange, FlowConfig, FlowError, FlowResult, Grid};
use aks_core::frame::{immersion_csv, immersion_samples, integrate_frame, FrameError, FrameGrid, FrameOptions};
use aks_core::linalg::RMat;
use aks_core::loop_algebra::LoopElement;
use aks_core::periodicity::detect_period;
use aks_core::random::random_initial;
use aks_core::spectral::{drift_table, drift_table_csv, spectral_record};
use thiserror::Error;

use crate::config::{ConfigError, Initial, RunConfig};

/// Largest allowed deviation from the Clifford closed form.
pub const CLIFFORD_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Flow,
    Frame,
    Spectral,
    Period,
    Clifford,
    ValidateConfig,
    /// Flow, frame (with a grid), spectral and period (with candidates).
    Run,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("config error: {0}")]
    Setup(String),
    #[error("invariant failure in {module}: {message}")]
    Invariant { module: &'static str, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invariant { .. } => 1,
            _ => 2,
        }
    }
}

fn setup_err(field: &str, message: impl Into<String>) -> RunError {
    RunError::Config(ConfigError { line: 0, field: field.into(), message: message.into() })
}

fn flow_err(e: FlowError) -> RunError {
    match e {
        FlowError::NonFinite { .. } | FlowError::StepDefect { .. } | FlowError::Invalid(_) => RunError::Invariant { module: "aks_flow", message: e.to_string() },
        other => RunError::Setup(other.to_string()),
    }
}

fn frame_err(e: FrameError) -> RunError {
    match e {
        FrameError::Flow(f) => flow_err(f),
        FrameError::Orthogonality { .. } | FrameError::NonFinite { .. } | FrameError::Imaginary(_) => RunError::Invariant { module: "frame_builder", message: e.to_string() },
        other => RunError::Setup(other.to_string()),
    }
}

/// Command-line overrides applied on top of the parsed config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub h: Option<f64>,
    pub z0: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), RunError> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(setup_err("--h", "must be positive"));
            }
            cfg.h = h;
        }
        if let Some(z0) = self.z0 {
            if z0 == 0.0 || !z0.is_finite() {
                return Err(setup_err("--z0", "must be finite and nonzero"));
            }
            cfg.z0 = z0;
        }
        Ok(())
    }
}

/// Result of a successful run: summary lines, files written and the hard
/// invariant failures found (exit status 1 when nonempty).
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            1
        }
    }

    fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.summary, "{key}: {value}");
    }

    fn fail(&mut self, module: &str, message: String) {
        let _ = writeln!(self.summary, "FAIL {module}: {message}");
        self.failures.push(format!("{module}: {message}"));
    }

    fn write(&mut self, dir: &Path, name: &str, contents: &str) -> Result<(), RunError> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| RunError::Io { path: path.clone(), message: e.to_string() })?;
        self.artifacts.push(path);
        Ok(())
    }
}

/// Initial condition, plus the coordinate change and initial frame of the
/// Clifford preset.
pub struct Prepared {
    pub x0: LoopElement,
    pub coords: Option<CoordinateChange>,
    pub initial_frame: Option<RMat>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, RunError> {
    match &cfg.initial {
        Initial::Random => Ok(Prepared { x0: random_initial(cfg.n, cfg.d, cfg.seed), coords: None, initial_frame: None }),
        Initial::Clifford { a, b } => {
            let params = CliffordParams::new(*a, *b).map_err(|e| setup_err("initial", e.to_string()))?;
            let s = clifford::setup(params, cfg.z0).map_err(|e| setup_err("initial", e.to_string()))?;
            Ok(Prepared { x0: s.x0, coords: Some(s.coords), initial_frame: Some(s.initial_frame) })
        }
        Initial::Explicit(coeffs) => {
            let m = 2 * cfg.n;
            let lo = cfg.lo();
            let mats = (lo..=1).map(|d| coeffs.iter().find(|(k, _)| *k == d).map_or_else(|| RMat::zeros(m, m), |(_, x)| x.clone())).collect();
            let x0 = LoopElement::from_real(m, lo, mats).map_err(|e| setup_err("coeff", e.to_string()))?;
            let report = x0.validate();
            if !report.passed() {
                return Err(RunError::Invariant { module: "loop_algebra", message: format!("initial condition fails validate: {report}") });
            }
            Ok(Prepared { x0, coords: None, initial_frame: None })
        }
    }
}

fn grid_of(cfg: &RunConfig) -> Result<Option<Grid>, RunError> {
    cfg.grid.as_ref().map(|g| Grid::new(g.start.clone(), g.spacing.clone(), g.counts()).map_err(|e| setup_err("grid_spacing", e.to_string()))).transpose()
}

fn flow_config(cfg: &RunConfig, prep: &Prepared) -> Result<FlowConfig, RunError> {
    let mut fc = FlowConfig::new(cfg.rule, cfg.h).with_path(cfg.path.clone());
    if let Some(g) = grid_of(cfg)? {
        fc = fc.with_grid(g);
    }
    if let Some(c) = &prep.coords {
        fc = fc.with_coords(c.clone());
    }
    Ok(fc)
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    prep: Prepared,
    flow: Option<FlowResult>,
    frames: Option<FrameGrid>,
}

impl Ctx<'_> {
    fn flow(&mut self) -> Result<&FlowResult, RunError> {
        if self.flow.is_none() {
            if self.cfg.grid.is_none() && self.cfg.path.is_empty() {
                return Err(setup_err("grid_spacing", "flow needs a grid or a path"));
            }
            let fc = flow_config(self.cfg, &self.prep)?;
            self.flow = Some(integrate_flow(&self.prep.x0, &fc).map_err(flow_err)?);
        }
        Ok(self.flow.as_ref().expect("flow computed"))
    }

    fn frames(&mut self) -> Result<(&FlowResult, &FrameGrid), RunError> {
        if self.cfg.grid.is_none() {
            return Err(setup_err("grid_spacing", "frames need a grid"));
        }
        self.flow()?;
        if self.frames.is_none() {
            let mut opts = FrameOptions::new(self.cfg.z0).with_stepper(self.cfg.stepper);
            if let Some(f0) = &self.prep.initial_frame {
                opts = opts.with_initial(f0.clone());
            }
            if let Some(c) = self.cfg.column {
                opts = opts.with_column(c);
            }
            let flow = self.flow.as_ref().expect("flow computed");
            self.frames = Some(integrate_frame(flow, &opts).map_err(frame_err)?);
        }
        Ok((self.flow.as_ref().expect("flow computed"), self.frames.as_ref().expect("frames computed")))
    }
}

fn elapsed(t: &[f64]) -> f64 {
    t.iter().map(|v| v.abs()).sum()
}

fn flow_stage(ctx: &mut Ctx, out: &mut Outcome) -> Result<(), RunError> {
    let budget = ctx.cfg.drift_budget;
    let dir = ctx.cfg.out.clone();
    let flow = ctx.flow()?;
    let mut invalid = Vec::new();
    let mut rate = 0.0_f64;
    let mut norm = 0.0_f64;
    for s in flow.all_samples() {
        let report = s.x.validate();
        if !report.passed() {
            invalid.push(format!("sample at t = {:?} fails validate: {report}", s.t));
        }
        let e = elapsed(&s.t);
        if e > 0.0 {
            rate = rate.max(s.residual.max_charpoly_drift / e);
            norm = norm.max(s.residual.norm_drift / e);
        }
    }
    let samples = flow.path_samples.len() + flow.grid_samples.len();
    let csv = flow.residual_csv();
    let text = (!flow.grid_samples.is_empty()).then(|| flow.grid_elements_text());
    out.line("flow_samples", samples);
    out.line("max_charpoly_drift_per_unit_time", format!("{rate:.3e}"));
    out.line("max_norm_drift_per_unit_time", format!("{norm:.3e}"));
    if rate > budget {
        out.line("warning", format!("charpoly drift {rate:.3e} per unit time exceeds budget {budget:.3e}"));
    }
    for m in invalid {
        out.fail("aks_flow", m);
    }
    out.write(&dir, "flow.csv", &csv)?;
    if let Some(t) = text {
        out.write(&dir, "flow_samples.txt", &t)?;
    }
    Ok(())
}

fn frame_stage(ctx: &mut Ctx, out: &mut Outcome) -> Result<(), RunError> {
    let (orth_tol, dir) = (ctx.cfg.orth_tol, ctx.cfg.out.clone());
    let clifford = match ctx.cfg.initial {
        Initial::Clifford { a, b } => Some((a, b)),
        _ => None,
    };
    let (flow, frames) = ctx.frames()?;
    let (orth, det, sphere) = frames.structure_defects();
    let samples = immersion_samples(flow, frames).map_err(frame_err)?;
    let csv = immersion_csv(&samples, flow.n());
    let mesh = frames.mesh_text();
    let imm_min = samples.iter().map(|s| s.imm_det.abs()).fold(f64::INFINITY, f64::min);
    let omega = samples.iter().map(|s| s.omega_residual).filter(|v| !v.is_nan()).fold(0.0, f64::max);
    let eta = samples.iter().map(|s| s.eta_residual).filter(|v| !v.is_nan()).fold(0.0, f64::max);
    let cliff_dev = clifford.map(|(a, b)| {
        let col = frames.column;
        frames
            .frames
            .iter()
            .map(|fr| {
                let full = clifford::closed_form_frame(a, b, [fr.t[0], fr.t[1]]);
                fr.column(col).iter().zip(full.column(col - 1).iter()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    });
    out.line("frame_points", frames.frames.len());
    out.line("immersion_column", frames.column);
    out.line("orthogonality_defect", format!("{orth:.3e}"));
    out.line("det_defect", format!("{det:.3e}"));
    out.line("sphere_defect", format!("{sphere:.3e}"));
    out.line("min_abs_imm_det", format!("{imm_min:.3e}"));
    out.line("max_omega_residual", format!("{omega:.3e}"));
    out.line("max_eta_residual", format!("{eta:.3e}"));
    for (name, v) in [("orthogonality", orth), ("determinant", det), ("sphere", sphere)] {
        if !(v < orth_tol) {
            out.fail("frame_builder", format!("{name} defect {v:.3e} exceeds {orth_tol:.3e}"));
        }
    }
    if let Some(dev) = cliff_dev {
        out.line("clifford_max_deviation", format!("{dev:.3e}"));
        if !(dev < CLIFFORD_TOL) {
            out.fail("frame_builder", format!("Clifford closed-form deviation {dev:.3e} exceeds {CLIFFORD_TOL:.0e}"));
        }
    }
    out.write(&dir, "immersion.csv", &csv)?;
    out.write(&dir, "mesh.txt", &mesh)?;
    Ok(())
}

fn spectral_stage(ctx: &mut Ctx, out: &mut Outcome) -> Result<(), RunError> {
    let dir = ctx.cfg.out.clone();
    let rec = spectral_record(&ctx.prep.x0, ctx.cfg.z_samples);
    out.line("regular", rec.regular.verdict.label());
    out.write(&dir, "spectral.txt", &rec.report())?;
    if ctx.cfg.grid.is_some() || !ctx.cfg.path.is_empty() {
        let flow = ctx.flow()?;
        let rows = drift_table(flow);
        let worst = rows.iter().map(|r| r.drift).fold(0.0, f64::max);
        let csv = drift_table_csv(&rows, flow.n());
        out.line("max_trace_drift", format!("{worst:.3e}"));
        out.write(&dir, "drift.csv", &csv)?;
    }
    Ok(())
}

fn period_stage(ctx: &mut Ctx, out: &mut Outcome) -> Result<(), RunError> {
    if ctx.cfg.periods.is_empty() {
        return Err(setup_err("period", "no candidate periods given"));
    }
    let (tol, dir, periods) = (ctx.cfg.tol, ctx.cfg.out.clone(), ctx.cfg.periods.clone());
    let (flow, frames) = ctx.frames()?;
    let mut text = String::new();
    let mut kinds = Vec::new();
    for p in &periods {
        let rep = detect_period(flow, Some(frames), p, tol).map_err(|e| RunError::Setup(format!("period {p:?}: {e}")))?;
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&rep.to_text());
        kinds.push(rep.kind.name());
    }
    out.line("periods", kinds.join(" "));
    out.write(&dir, "periods.txt", &text)?;
    Ok(())
}

/// Run `cmd` with a parsed config. Configuration problems are errors; hard
/// invariant violations found along the way are collected in
/// [`Outcome::failures`].
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Outcome, RunError> {
    let mut out = Outcome::default();
    if cmd == Command::ValidateConfig {
        out.summary = cfg.serialize();
        return Ok(out);
    }
    if cmd == Command::Clifford && !matches!(cfg.initial, Initial::Clifford { .. }) {
        return Err(setup_err("initial", "the clifford command needs initial = clifford(a, b)"));
    }
    let prep = prepare(cfg)?;
    fs::create_dir_all(&cfg.out).map_err(|e| RunError::Io { path: cfg.out.clone(), message: e.to_string() })?;
    let mut ctx = Ctx { cfg, prep, flow: None, frames: None };
    match cmd {
        Command::Flow => flow_stage(&mut ctx, &mut out)?,
        Command::Frame | Command::Clifford => frame_stage(&mut ctx, &mut out)?,
        Command::Spectral => spectral_stage(&mut ctx, &mut out)?,
        Command::Period => period_stage(&mut ctx, &mut out)?,
        Command::Run => {
            flow_stage(&mut ctx, &mut out)?;
            if cfg.grid.is_some() {
                frame_stage(&mut ctx, &mut out)?;
            }
            spectral_stage(&mut ctx, &mut out)?;
            if !cfg.periods.is_empty() {
                period_stage(&mut ctx, &mut out)?;
            }
        }
        Command::ValidateConfig => unreachable!("handled above"),
    }
    out.line("status", if out.failures.is_empty() { "ok" } else { "invariant failure" });
    let summary = out.summary.clone();
    out.write(&cfg.out, "summary.txt", &summary)?;
    Ok(out)
}

/// Read and parse a config file, then apply overrides.
pub fn load(path: Option<&Path>, default: RunConfig, over: &Overrides) -> Result<RunConfig, RunError> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| RunError::Io { path: p.to_path_buf(), message: e.to_string() })?;
            RunConfig::parse(&text)?
        }
        None => default,
    };
    over.apply(&mut cfg)?;
    Ok(cfg)
}
