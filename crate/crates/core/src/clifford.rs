//! The Clifford torus `f(s) = [a cos s1, a sin s1, b cos s2, b sin s2]` as a
//! constant solution `X = X_1 z` of the simple scheme for `n = 2`.
//!
//! In the adapted frame the connection is `Ê_1 ds_1 + Ê_2 ds_2` with
//! constant commuting `Ê_k`. Taking `K = [[αa, αb], [βb, -βa]]` gives
//! `KKᵀ = diag(α², β²)`, so the scheme's connection `A_1 dt_1 + A_2 dt_2` is a
//! constant linear combination of the `Ê_k` and `s = B t` for an invertible
//! `B` whenever `α ≠ β`.

use thiserror::Error;

use crate::flow::{CoordinateChange, FlowError};
use crate::frame::{connection_at, FrameError};
use crate::linalg::{expm, RMat};
use crate::loop_algebra::{DecompositionRule, LoopElement};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliffordError {
    #[error("need a² + b² = 1, got {0}")]
    NotUnit(f64),
    #[error("scales α and β must be distinct and nonzero")]
    Scales,
    #[error("coordinate change residual {0:e}")]
    Residual(f64),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CliffordParams {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl CliffordParams {
    pub fn new(a: f64, b: f64) -> Result<Self, CliffordError> {
        CliffordParams { a, b, alpha: 1.0, beta: 2.0 }.checked()
    }

    pub fn checked(self) -> Result<Self, CliffordError> {
        let r = self.a * self.a + self.b * self.b;
        if !((r - 1.0).abs() <= 1e-12) {
            return Err(CliffordError::NotUnit(r));
        }
        if self.alpha == 0.0 || self.beta == 0.0 || self.alpha == self.beta || !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(CliffordError::Scales);
        }
        Ok(self)
    }

    pub fn k(&self) -> RMat {
        let (a, b, al, be) = (self.a, self.b, self.alpha, self.beta);
        RMat::from_row_slice(2, 2, &[al * a, al * b, be * b, -be * a])
    }
}

fn off_diagonal(ur: &RMat) -> RMat {
    let mut x = RMat::zeros(4, 4);
    x.view_mut((0, 2), (2, 2)).copy_from(ur);
    x.view_mut((2, 0), (2, 2)).copy_from(&(-ur.transpose()));
    x
}

/// The adapted-frame connection matrices `Ê_1`, `Ê_2`.
pub fn e_hat(a: f64, b: f64) -> [RMat; 2] {
    [
        off_diagonal(&RMat::from_row_slice(2, 2, &[a, b, 0.0, 0.0])),
        off_diagonal(&RMat::from_row_slice(2, 2, &[0.0, 0.0, b, -a])),
    ]
}

/// `X(0) = X_1 z` with upper-right block `K`.
pub fn initial_condition(p: &CliffordParams) -> LoopElement {
    LoopElement::from_real(4, 1, vec![off_diagonal(&p.k())]).expect("4x4 coefficient")
}

/// Closed-form adapted frame at `s = (s1, s2)`.
pub fn closed_form_frame(a: f64, b: f64, s: [f64; 2]) -> RMat {
    let (s1, c1) = s[0].sin_cos();
    let (s2, c2) = s[1].sin_cos();
    RMat::from_row_slice(
        4,
        4,
        &[
            -s1, 0.0, a * c1, b * c1, //
            c1, 0.0, a * s1, b * s1, //
            0.0, -s2, b * c2, -a * c2, //
            0.0, c2, b * s2, -a * s2,
        ],
    )
}

/// `f(s) = [a cos s1, a sin s1, b cos s2, b sin s2]`.
pub fn closed_form_f(a: f64, b: f64, s: [f64; 2]) -> [f64; 4] {
    [a * s[0].cos(), a * s[0].sin(), b * s[1].cos(), b * s[1].sin()]
}

/// Least-squares `B` with `A_i = Σ_k B_ki Ê_k`, and the largest entry of
/// the fit residual.
pub fn solve_coordinate_change(conn: &[RMat], basis: &[RMat]) -> (RMat, f64) {
    let k = basis.len();
    let entries = basis[0].len();
    let design = RMat::from_fn(entries, k, |r, c| basis[c][r]);
    let svd = design.clone().svd(true, true);
    let mut b = RMat::zeros(k, conn.len());
    let mut residual = 0.0_f64;
    for (i, a) in conn.iter().enumerate() {
        let rhs = RMat::from_column_slice(entries, 1, a.as_slice());
        let sol = svd.solve(&rhs, 1e-14).expect("SVD computed with U and V");
        let fit = &design * &sol - &rhs;
        residual = residual.max(fit.amax());
        for r in 0..k {
            b[(r, i)] = sol[(r, 0)];
        }
    }
    (b, residual)
}

#[derive(Clone, Debug)]
pub struct CliffordSetup {
    pub params: CliffordParams,
    pub x0: LoopElement,
    pub coords: CoordinateChange,
    /// Closed-form frame at `s = 0`.
    pub initial_frame: RMat,
    pub fit_residual: f64,
    pub z0: f64,
}

/// Initial condition, coordinate change `s = B t` and initial frame for the
/// simple scheme at `z0`.
pub fn setup(params: CliffordParams, z0: f64) -> Result<CliffordSetup, CliffordError> {
    let params = params.checked()?;
    let x0 = initial_condition(&params);
    let conn = connection_at(&x0, DecompositionRule::Simple, z0)?;
    let basis = e_hat(params.a, params.b);
    let (b, fit_residual) = solve_coordinate_change(&conn, &basis);
    if fit_residual > 1e-10 {
        return Err(CliffordError::Residual(fit_residual));
    }
    let coords = CoordinateChange::new(b)?;
    Ok(CliffordSetup { params, x0, coords, initial_frame: closed_form_frame(params.a, params.b, [0.0, 0.0]), fit_residual, z0 })
}

/// `F0 exp(s1 Ê_1) exp(s2 Ê_2)`; equals [`closed_form_frame`].
pub fn exponential_frame(a: f64, b: f64, s: [f64; 2]) -> RMat {
    let [e1, e2] = e_hat(a, b);
    closed_form_frame(a, b, [0.0, 0.0]) * expm(&(e1 * s[0])) * expm(&(e2 * s[1]))
}
