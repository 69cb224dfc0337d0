//! Numerical toolkit for k-symmetric AKS systems on the twisted loop algebra
//! of `so(2n, C)`.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`loop_algebra`]: matrix-valued Laurent polynomials `X(z) = Σ X_i z^i`
//!    with the order-2 twist `σ = Ad(diag(I, -I))`, the three subalgebra
//!    splittings and their projections.
//! 2. [`flow`]: the ad-equivariant fields `V_i(X) = z^(2-2i) X^(2i-1)` and
//!    classical RK4 integration of the commuting Lax flows
//!    `dX = [X, Σ π_P V_i(X) dt_i]` over a rectangular multi-time grid.
//! 3. [`frame`]: integration of `F^-1 dF = A(X(t))` at a fixed real `z0` into
//!    `SO(2n)` with exponential stepping, extraction of the sphere map and the
//!    immersion / flatness diagnostics. [`clifford`] holds the closed-form
//!    Clifford torus used as a golden case.
//! 4. [`spectral`] and [`periodicity`]: characteristic polynomials, drift
//!    monitors, regularity and eigenvalue functions, plus period and
//!    quasiperiod detection.

pub mod clifford;
pub mod flow;
pub mod frame;
pub mod laurent;
pub mod linalg;
pub mod loop_algebra;
pub mod periodicity;
pub mod random;
pub mod spectral;
mod stencil;

pub use flow::{integrate_flow, FlowConfig, FlowResult, Grid};
pub use frame::{integrate_frame, FrameGrid, FrameOptions};
pub use loop_algebra::{DecompositionRule, LoopElement};
