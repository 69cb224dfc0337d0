//! The twisted loop algebra `G̃_σ ⊂ so(2n, C)[z, z^-1]` for the involution
//! `σ = Ad(Q)`, `Q = diag(I_n, -I_n)`.
//!
//! A degree-`i` coefficient lives in `V_(i mod 2)`: block-diagonal for even
//! `i`, block-off-diagonal for odd `i`. Values are immutable; every operation
//! returns a new element.

use std::fmt::Write as _;

use thiserror::Error;

use crate::laurent::LaurentPoly;
use crate::linalg::{c, max_abs, CMat, RMat, C64};

/// Coefficients with modulus at or below this are dropped when trimming.
pub const ZERO_TOL: f64 = 1e-14;
/// Degrees outside `[-MAX_DEGREE, MAX_DEGREE]` are rejected.
pub const MAX_DEGREE: i32 = 64;
/// Tolerance for skew/twist/reality checks, relative to `max(1, |X|_max)`.
pub const INVARIANT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoopError {
    #[error("matrix size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("matrix size {0} must be even and at least 4")]
    InvalidSize(usize),
    #[error("degree {0} outside [-{MAX_DEGREE}, {MAX_DEGREE}]")]
    DegreeOutOfRange(i32),
    #[error("coefficient of degree {deg} has shape {rows}x{cols}, expected {m}x{m}")]
    CoefficientShape { deg: i32, rows: usize, cols: usize, m: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A matrix-valued Laurent polynomial `Σ_{i=lo}^{hi} X_i z^i` with `m×m`
/// complex coefficients.
///
/// The type admits any coefficients so that diagnostics can inspect invalid
/// input; [`LoopElement::validate`] reports skew-symmetry, the twist condition
/// and (for real-flagged elements) the reality condition.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopElement {
    m: usize,
    lo: i32,
    coeffs: Vec<CMat>,
    real: bool,
}

fn check_degree(d: i32) -> Result<(), LoopError> {
    if d.abs() > MAX_DEGREE {
        Err(LoopError::DegreeOutOfRange(d))
    } else {
        Ok(())
    }
}

impl LoopElement {
    pub fn zero(m: usize, real: bool) -> Result<Self, LoopError> {
        if m < 4 || m % 2 != 0 {
            return Err(LoopError::InvalidSize(m));
        }
        Ok(LoopElement { m, lo: 0, coeffs: Vec::new(), real })
    }

    /// Element with coefficients `coeffs[j]` at degree `lo + j`. The window
    /// is kept as given (no trimming).
    pub fn new(m: usize, lo: i32, coeffs: Vec<CMat>, real: bool) -> Result<Self, LoopError> {
        if m < 4 || m % 2 != 0 {
            return Err(LoopError::InvalidSize(m));
        }
        if !coeffs.is_empty() {
            check_degree(lo)?;
            check_degree(lo + coeffs.len() as i32 - 1)?;
        }
        for (j, x) in coeffs.iter().enumerate() {
            if x.nrows() != m || x.ncols() != m {
                return Err(LoopError::CoefficientShape {
                    deg: lo + j as i32,
                    rows: x.nrows(),
                    cols: x.ncols(),
                    m,
                });
            }
        }
        Ok(LoopElement { m, lo, coeffs, real })
    }

    pub fn from_real(m: usize, lo: i32, coeffs: Vec<RMat>) -> Result<Self, LoopError> {
        let cs = coeffs.iter().map(crate::linalg::to_complex).collect();
        Self::new(m, lo, cs, true)
    }

    /// Single term `x z^deg`.
    pub fn monomial(deg: i32, x: CMat, real: bool) -> Result<Self, LoopError> {
        let m = x.nrows();
        Self::new(m, deg, vec![x], real)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Half the matrix size: the number of flow directions.
    pub fn n(&self) -> usize {
        self.m / 2
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    /// Highest stored degree; `lo - 1` when no coefficient is stored.
    pub fn hi(&self) -> i32 {
        self.lo + self.coeffs.len() as i32 - 1
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn coeffs(&self) -> &[CMat] {
        &self.coeffs
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `(degree, coefficient)` pairs over the stored window.
    pub fn terms(&self) -> impl Iterator<Item = (i32, &CMat)> + '_ {
        self.coeffs.iter().enumerate().map(move |(j, x)| (self.lo + j as i32, x))
    }

    pub fn coeff(&self, deg: i32) -> Option<&CMat> {
        let j = deg - self.lo;
        if j < 0 {
            None
        } else {
            self.coeffs.get(j as usize)
        }
    }

    pub fn coeff_or_zero(&self, deg: i32) -> CMat {
        self.coeff(deg).cloned().unwrap_or_else(|| CMat::zeros(self.m, self.m))
    }

    /// Whether every stored coefficient is (numerically) zero.
    pub fn is_zero(&self) -> bool {
        self.max_abs() <= ZERO_TOL
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(max_abs).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other` over the union of windows.
    pub fn max_abs_diff(&self, other: &LoopElement) -> f64 {
        let (lo, hi) = union_window(self, other);
        (lo..=hi)
            .map(|d| match (self.coeff(d), other.coeff(d)) {
                (Some(a), Some(b)) => max_abs(&(a - b)),
                (Some(a), None) | (None, Some(a)) => max_abs(a),
                (None, None) => 0.0,
            })
            .fold(0.0, f64::max)
    }

    pub fn with_real_flag(mut self, real: bool) -> Self {
        self.real = real;
        self
    }

    /// Drop end coefficients whose entries are all `<= ZERO_TOL`.
    pub fn trimmed(&self) -> Self {
        let nonzero = |x: &CMat| x.iter().any(|v| v.norm_sqr() > ZERO_TOL * ZERO_TOL);
        let first = self.coeffs.iter().position(nonzero);
        let Some(first) = first else {
            return LoopElement { m: self.m, lo: 0, coeffs: Vec::new(), real: self.real };
        };
        let last = self.coeffs.iter().rposition(nonzero).unwrap();
        if first == 0 && last + 1 == self.coeffs.len() {
            return self.clone();
        }
        LoopElement {
            m: self.m,
            lo: self.lo + first as i32,
            coeffs: self.coeffs[first..=last].to_vec(),
            real: self.real,
        }
    }

    /// Re-express on the window `[lo, hi]`, zero-padding as needed; the
    /// second value is the largest modulus of the coefficients cut off.
    pub fn restrict(&self, lo: i32, hi: i32) -> (Self, f64) {
        let mut dropped = 0.0_f64;
        for (d, x) in self.terms() {
            if d < lo || d > hi {
                dropped = dropped.max(max_abs(x));
            }
        }
        let coeffs = (lo..=hi).map(|d| self.coeff_or_zero(d)).collect();
        (LoopElement { m: self.m, lo, coeffs, real: self.real }, dropped)
    }

    /// Multiply by `z^k`.
    pub fn shift(&self, k: i32) -> Result<Self, LoopError> {
        if !self.coeffs.is_empty() {
            check_degree(self.lo + k)?;
            check_degree(self.hi() + k)?;
        }
        Ok(LoopElement { m: self.m, lo: self.lo + k, coeffs: self.coeffs.clone(), real: self.real })
    }

    pub fn scale(&self, s: f64) -> Self {
        LoopElement {
            m: self.m,
            lo: self.lo,
            coeffs: self.coeffs.iter().map(|x| x * c(s, 0.0)).collect(),
            real: self.real,
        }
    }

    /// `self + s * other` on the union of windows.
    pub fn add_scaled(&self, other: &LoopElement, s: f64) -> Result<Self, LoopError> {
        same_size(self, other)?;
        if other.coeffs.is_empty() {
            return Ok(self.clone());
        }
        if self.coeffs.is_empty() {
            return Ok(other.scale(s).with_real_flag(self.real && other.real));
        }
        let (lo, hi) = union_window(self, other);
        let sc = c(s, 0.0);
        let coeffs = (lo..=hi)
            .map(|d| match (self.coeff(d), other.coeff(d)) {
                (Some(a), Some(b)) => a + b * sc,
                (Some(a), None) => a.clone(),
                (None, Some(b)) => b * sc,
                (None, None) => CMat::zeros(self.m, self.m),
            })
            .collect();
        Ok(LoopElement { m: self.m, lo, coeffs, real: self.real && other.real })
    }

    pub fn add(&self, other: &LoopElement) -> Result<Self, LoopError> {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &LoopElement) -> Result<Self, LoopError> {
        self.add_scaled(other, -1.0)
    }

    /// Matrix product of Laurent polynomials: `(XY)_k = Σ_{i+j=k} X_i Y_j`.
    pub fn mul(&self, other: &LoopElement) -> Result<Self, LoopError> {
        same_size(self, other)?;
        let real = self.real && other.real;
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Ok(LoopElement { m: self.m, lo: 0, coeffs: Vec::new(), real });
        }
        let lo = self.lo + other.lo;
        let len = self.coeffs.len() + other.coeffs.len() - 1;
        check_degree(lo)?;
        check_degree(lo + len as i32 - 1)?;
        let mut coeffs = vec![CMat::zeros(self.m, self.m); len];
        let one = c(1.0, 0.0);
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j].gemm(one, a, b, one);
            }
        }
        Ok(LoopElement { m: self.m, lo, coeffs, real })
    }

    pub fn transpose(&self) -> Self {
        LoopElement {
            m: self.m,
            lo: self.lo,
            coeffs: self.coeffs.iter().map(|x| x.transpose()).collect(),
            real: self.real,
        }
    }

    /// Conjugation `B^-1 X B` by a z-independent matrix.
    pub fn conjugate_by(&self, b: &CMat, b_inv: &CMat) -> Self {
        LoopElement {
            m: self.m,
            lo: self.lo,
            coeffs: self.coeffs.iter().map(|x| b_inv * x * b).collect(),
            real: self.real,
        }
    }

    /// Evaluate `X(z)`.
    pub fn eval(&self, z: C64) -> CMat {
        let mut out = CMat::zeros(self.m, self.m);
        for (d, x) in self.terms() {
            out += x * z.powi(d);
        }
        out
    }

    /// Entrywise trace polynomial `tr X(z)`.
    pub fn trace(&self) -> LaurentPoly {
        LaurentPoly::new(self.lo, self.coeffs.iter().map(|x| x.trace()).collect())
    }

    /// Skew-symmetrize every coefficient, zero twist-forbidden blocks and,
    /// for real-flagged elements, imaginary parts. Returns the projected
    /// element and the largest entry change.
    pub fn structural_projection(&self) -> (Self, f64) {
        let n = self.n();
        let mut correction = 0.0_f64;
        let coeffs = self
            .terms()
            .map(|(d, x)| {
                let mut y = (x - x.transpose()) * c(0.5, 0.0);
                for r in 0..self.m {
                    for col in 0..self.m {
                        if !twist_allows(d, r, col, n) {
                            y[(r, col)] = c(0.0, 0.0);
                        }
                        if self.real {
                            y[(r, col)].im = 0.0;
                        }
                    }
                }
                correction = correction.max(max_abs(&(&y - x)));
                y
            })
            .collect();
        (LoopElement { m: self.m, lo: self.lo, coeffs, real: self.real }, correction)
    }

    /// Per-invariant diagnostics.
    pub fn validate(&self) -> ValidationReport {
        let n = self.n();
        let scale = self.max_abs().max(1.0);
        let tol = INVARIANT_TOL * scale;
        let mut skew = 0.0_f64;
        let mut twist = 0.0_f64;
        let mut imag = 0.0_f64;
        let mut finite = true;
        for (d, x) in self.terms() {
            for r in 0..self.m {
                for col in 0..self.m {
                    let v = x[(r, col)];
                    if !v.re.is_finite() || !v.im.is_finite() {
                        finite = false;
                    }
                    skew = skew.max((v + x[(col, r)]).norm_sqr());
                    if !twist_allows(d, r, col, n) {
                        twist = twist.max(v.norm_sqr());
                    }
                    imag = imag.max(v.im.abs());
                }
            }
        }
        let (skew, twist) = (skew.sqrt(), twist.sqrt());
        let mut checks = vec![
            InvariantCheck { name: "finite", passed: finite, max_violation: if finite { 0.0 } else { f64::INFINITY } },
            InvariantCheck { name: "skew", passed: finite && skew <= tol, max_violation: skew },
            InvariantCheck { name: "twist", passed: finite && twist <= tol, max_violation: twist },
        ];
        if self.real {
            checks.push(InvariantCheck { name: "reality", passed: finite && imag <= tol, max_violation: imag });
        }
        ValidationReport { checks }
    }

    /// Textual form: a header line `loop_element m=<m> lo=<lo> hi=<hi> real=<0|1>`
    /// followed, per degree, by `degree <i>` and `m` rows of `m`
    /// space-separated `re,im` pairs. Floats use the shortest representation
    /// that parses back to the same bits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "loop_element m={} lo={} hi={} real={}", self.m, self.lo, self.hi(), self.real as u8);
        for (d, x) in self.terms() {
            let _ = writeln!(s, "degree {d}");
            for r in 0..self.m {
                let row: Vec<String> =
                    (0..self.m).map(|col| format!("{:e},{:e}", x[(r, col)].re, x[(r, col)].im)).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, LoopError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let perr = |line: usize, msg: &str| LoopError::Parse { line: line + 1, msg: msg.to_string() };
        let (hl, header) = lines.next().ok_or_else(|| perr(0, "empty input"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("loop_element") {
            return Err(perr(hl, "expected 'loop_element' header"));
        }
        let mut field = |name: &str| -> Result<i64, LoopError> {
            let tok = parts.next().ok_or_else(|| perr(hl, &format!("missing {name}")))?;
            let v = tok
                .strip_prefix(name)
                .and_then(|t| t.strip_prefix('='))
                .ok_or_else(|| perr(hl, &format!("expected {name}=...")))?;
            v.parse::<i64>().map_err(|_| perr(hl, &format!("bad {name} value '{v}'")))
        };
        let m = field("m")? as usize;
        let lo = field("lo")? as i32;
        let hi = field("hi")? as i32;
        let real = field("real")? != 0;
        let mut coeffs = Vec::new();
        for d in lo..=hi {
            let (dl, dline) = lines.next().ok_or_else(|| perr(hl, &format!("missing degree {d}")))?;
            if dline.split_whitespace().collect::<Vec<_>>() != ["degree", &d.to_string()] {
                return Err(perr(dl, &format!("expected 'degree {d}'")));
            }
            let mut x = CMat::zeros(m, m);
            for r in 0..m {
                let (rl, row) = lines.next().ok_or_else(|| perr(dl, "truncated matrix"))?;
                let entries: Vec<&str> = row.split_whitespace().collect();
                if entries.len() != m {
                    return Err(perr(rl, &format!("expected {m} entries, found {}", entries.len())));
                }
                for (col, e) in entries.iter().enumerate() {
                    let (re, im) = e.split_once(',').ok_or_else(|| perr(rl, "entry must be 're,im'"))?;
                    let re: f64 = re.parse().map_err(|_| perr(rl, &format!("bad number '{re}'")))?;
                    let im: f64 = im.parse().map_err(|_| perr(rl, &format!("bad number '{im}'")))?;
                    x[(r, col)] = c(re, im);
                }
            }
            coeffs.push(x);
        }
        if let Some((l, _)) = lines.next() {
            return Err(perr(l, "trailing content"));
        }
        LoopElement::new(m, lo, coeffs, real)
    }
}

fn same_size(a: &LoopElement, b: &LoopElement) -> Result<(), LoopError> {
    if a.m != b.m {
        Err(LoopError::SizeMismatch(a.m, b.m))
    } else {
        Ok(())
    }
}

fn union_window(a: &LoopElement, b: &LoopElement) -> (i32, i32) {
    match (a.coeffs.is_empty(), b.coeffs.is_empty()) {
        (true, true) => (0, -1),
        (true, false) => (b.lo, b.hi()),
        (false, true) => (a.lo, a.hi()),
        (false, false) => (a.lo.min(b.lo), a.hi().max(b.hi())),
    }
}

/// Whether entry `(r, c)` may be nonzero in a coefficient of degree `deg`.
pub fn twist_allows(deg: i32, r: usize, col: usize, n: usize) -> bool {
    let diagonal_block = (r < n) == (col < n);
    if deg.rem_euclid(2) == 0 {
        diagonal_block
    } else {
        !diagonal_block
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    pub max_violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(f, "{}: {} (max violation {:e})", c.name, if c.passed { "pass" } else { "FAIL" }, c.max_violation)?;
        }
        Ok(())
    }
}

/// `[X, Y] = Σ [X_i, Y_j] z^(i+j)`, trimmed.
pub fn bracket(x: &LoopElement, y: &LoopElement) -> Result<LoopElement, LoopError> {
    same_size(x, y)?;
    let real = x.real && y.real;
    if x.coeffs.is_empty() || y.coeffs.is_empty() {
        return Ok(LoopElement { m: x.m, lo: 0, coeffs: Vec::new(), real });
    }
    let lo = x.lo + y.lo;
    let len = x.coeffs.len() + y.coeffs.len() - 1;
    check_degree(lo)?;
    check_degree(lo + len as i32 - 1)?;
    let mut coeffs = vec![CMat::zeros(x.m, x.m); len];
    let (one, minus) = (c(1.0, 0.0), c(-1.0, 0.0));
    for (i, a) in x.coeffs.iter().enumerate() {
        for (j, b) in y.coeffs.iter().enumerate() {
            coeffs[i + j].gemm(one, a, b, one);
            coeffs[i + j].gemm(minus, b, a, one);
        }
    }
    Ok(LoopElement { m: x.m, lo, coeffs, real }.trimmed())
}

/// The three splittings `G̃_σ = P ⊕ N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecompositionRule {
    /// `P = { X_0 ∈ V_0^U, X_i = 0 for i < 0 }`; yields admissible
    /// connections with vanishing normal block.
    Admissible,
    /// `P_a = { X_i = 0 for i < 1 }`; parallel frames.
    Simple,
    /// `P = { X_i = 0 for i < 0 }`; curved flats.
    CurvedFlat,
}

impl DecompositionRule {
    pub const ALL: [DecompositionRule; 3] =
        [DecompositionRule::Admissible, DecompositionRule::Simple, DecompositionRule::CurvedFlat];

    pub fn name(self) -> &'static str {
        match self {
            DecompositionRule::Admissible => "admissible",
            DecompositionRule::Simple => "simple",
            DecompositionRule::CurvedFlat => "curved_flat",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "admissible" => Some(DecompositionRule::Admissible),
            "simple" => Some(DecompositionRule::Simple),
            "curved_flat" | "curvedflat" => Some(DecompositionRule::CurvedFlat),
            _ => None,
        }
    }

    /// Whether entry `(r, c)` of the degree-`deg` coefficient belongs to `P`.
    fn keeps(self, deg: i32, r: usize, col: usize, n: usize) -> bool {
        match self {
            DecompositionRule::Simple => deg >= 1,
            DecompositionRule::CurvedFlat => deg >= 0,
            DecompositionRule::Admissible => deg >= 1 || (deg == 0 && r < n && col < n),
        }
    }
}

fn split(x: &LoopElement, rule: DecompositionRule, keep_p: bool) -> LoopElement {
    let n = x.n();
    let coeffs = x
        .terms()
        .map(|(d, a)| {
            let mut out = a.clone();
            for r in 0..x.m {
                for col in 0..x.m {
                    if rule.keeps(d, r, col, n) != keep_p {
                        out[(r, col)] = c(0.0, 0.0);
                    }
                }
            }
            out
        })
        .collect();
    LoopElement { m: x.m, lo: x.lo, coeffs, real: x.real }
}

/// `π_P X` on the same degree window as `X`.
pub fn project(x: &LoopElement, rule: DecompositionRule) -> LoopElement {
    split(x, rule, true)
}

/// `π_N X = X - π_P X` on the same degree window as `X`.
pub fn complement(x: &LoopElement, rule: DecompositionRule) -> LoopElement {
    split(x, rule, false)
}

/// Membership in `P` up to `tol` (entries outside `P` must be `<= tol`).
pub fn in_p(x: &LoopElement, rule: DecompositionRule, tol: f64) -> bool {
    complement(x, rule).max_abs() <= tol
}

/// Membership in `N` up to `tol`.
pub fn in_n(x: &LoopElement, rule: DecompositionRule, tol: f64) -> bool {
    project(x, rule).max_abs() <= tol
}

/// `⟨X, Y⟩ = Σ_i Re tr(X_i Y_iᴴ)`; equals `Σ_i tr(X_i Y_iᵀ)` on real elements.
///
/// Positive definite and invariant under brackets with degree-0 elements.
pub fn inner_product(x: &LoopElement, y: &LoopElement) -> Result<f64, LoopError> {
    same_size(x, y)?;
    let mut acc = 0.0;
    for (d, a) in x.terms() {
        if let Some(b) = y.coeff(d) {
            acc += a.iter().zip(b.iter()).map(|(u, v)| (u * v.conj()).re).sum::<f64>();
        }
    }
    Ok(acc)
}

/// Interval of the real `z`-axis used by [`invariant_inner_product`].
pub const INVARIANT_INTERVAL: (f64, f64) = (0.5, 2.0);

/// `∫ tr(X(z) Y(z)ᵀ) dz` over [`INVARIANT_INTERVAL`], evaluated exactly
/// from the coefficients.
///
/// On real elements `X(z)` is a real skew matrix for real `z`, so pointwise
/// `tr(X(z)Y(z)ᵀ) = -tr(X(z)Y(z))` is ad-invariant; integrating over an
/// interval keeps invariance for arbitrary degree triples and makes the form
/// positive definite. The Lax flow preserves `⟨X, X⟩` in this form.
pub fn invariant_inner_product(x: &LoopElement, y: &LoopElement) -> Result<f64, LoopError> {
    same_size(x, y)?;
    let (a, b) = INVARIANT_INTERVAL;
    let moment = |k: i32| -> f64 {
        if k == -1 {
            (b / a).ln()
        } else {
            let p = (k + 1) as f64;
            (b.powf(p) - a.powf(p)) / p
        }
    };
    let mut acc = 0.0;
    for (i, xi) in x.terms() {
        for (j, yj) in y.terms() {
            let t: f64 = xi.iter().zip(yj.iter()).map(|(u, v)| (u * v.conj()).re).sum();
            acc += t * moment(i + j);
        }
    }
    Ok(acc)
}

/// The 1-form `A = Σ A_i dt_i` produced by the AKS scheme for a given rule.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionForm {
    pub rule: DecompositionRule,
    pub comps: Vec<LoopElement>,
}

impl ConnectionForm {
    /// Fails if some component is not in `P` (tolerance `1e-12`) or has top
    /// degree above 1.
    pub fn new(rule: DecompositionRule, comps: Vec<LoopElement>) -> Result<Self, String> {
        for (i, a) in comps.iter().enumerate() {
            if !in_p(a, rule, 1e-12 * a.max_abs().max(1.0)) {
                return Err(format!("component {} not in P for rule {}", i + 1, rule.name()));
            }
            if a.trimmed().hi() > 1 {
                return Err(format!("component {} has top degree {}", i + 1, a.trimmed().hi()));
            }
        }
        Ok(ConnectionForm { rule, comps })
    }

    /// Extract `(ω, β, η)` from component `i` at real `z`: `ω` and `η` are
    /// the upper-left and lower-right blocks of the `z^0` coefficient, `β`
    /// is `z` times the lower-left block of the `z^1` coefficient.
    pub fn blocks(&self, i: usize, z: f64) -> (RMat, RMat, RMat) {
        let a = &self.comps[i];
        let n = a.n();
        let a0 = a.coeff_or_zero(0).map(|v| v.re);
        let a1 = a.coeff_or_zero(1).map(|v| v.re);
        let omega = a0.view((0, 0), (n, n)).into_owned();
        let eta = a0.view((n, n), (n, n)).into_owned();
        let beta = a1.view((n, 0), (n, n)).into_owned() * z;
        (omega, beta, eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
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
    fn bracket_with_self_is_zero() {
        let x = random_initial(2, 2, 3);
        let b = bracket(&x, &x).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn bracket_of_degree_one_lands_in_degree_two() {
        let k = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let l = RMat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let x1 = v1_from_k(&k);
        let y1 = v1_from_k(&l);
        let x = LoopElement::from_real(4, 1, vec![x1.clone()]).unwrap();
        let y = LoopElement::from_real(4, 1, vec![y1.clone()]).unwrap();
        let b = bracket(&x, &y).unwrap();
        assert_eq!((b.lo(), b.hi()), (2, 2));
        // Direct 4x4 product oracle.
        let expected = &x1 * &y1 - &y1 * &x1;
        let got = b.coeff(2).unwrap().map(|v| v.re);
        assert_eq!(got, expected);
        // [K-block, L-block] is block diagonal: diag(-K Lᵀ + L Kᵀ, -Kᵀ L + Lᵀ K).
        assert_eq!(expected[(0, 0)], 0.0);
        assert_eq!(expected[(2, 3)], -1.0);
        assert_eq!(expected[(3, 2)], 1.0);
        assert!(b.validate().passed());
    }

    #[test]
    fn simple_projection_keeps_top_degree() {
        let x = random_initial(2, 1, 11);
        let p = project(&x, DecompositionRule::Simple);
        assert_eq!(p.trimmed().lo(), 1);
        assert_eq!(p.coeff(1), x.coeff(1));
    }

    #[test]
    fn admissible_projection_keeps_upper_left_block() {
        let x = random_initial(2, 1, 5);
        let p = project(&x, DecompositionRule::Admissible);
        let x0 = x.coeff(0).unwrap();
        let p0 = p.coeff(0).unwrap();
        for r in 0..4 {
            for col in 0..4 {
                let expected = if r < 2 && col < 2 { x0[(r, col)] } else { c(0.0, 0.0) };
                assert_eq!(p0[(r, col)], expected);
            }
        }
        assert!(p.coeff(-1).unwrap().iter().all(|v| *v == c(0.0, 0.0)));
    }

    #[test]
    fn projection_is_idempotent_and_splits_exactly() {
        for rule in DecompositionRule::ALL {
            let x = random_initial(3, 2, 21);
            let p = project(&x, rule);
            assert_eq!(project(&p, rule), p);
            let sum = p.add(&complement(&x, rule)).unwrap();
            assert_eq!(sum, x);
        }
    }

    #[test]
    fn inner_product_examples() {
        let y = random_initial(2, 2, 1);
        let zero = LoopElement::zero(4, true).unwrap();
        assert_eq!(inner_product(&zero, &y).unwrap(), 0.0);
        let x = LoopElement::from_real(4, 1, vec![v1_from_k(&RMat::identity(2, 2))]).unwrap();
        // K = I has four nonzero entries ±1 in X_1.
        assert_eq!(inner_product(&x, &x).unwrap(), 4.0);
        let ones = LoopElement::from_real(4, 1, vec![v1_from_k(&RMat::from_element(2, 2, 1.0))]).unwrap();
        assert_eq!(inner_product(&ones, &ones).unwrap(), 8.0);
    }

    #[test]
    fn validate_flags_constructed_violations() {
        assert!(LoopElement::zero(4, true).unwrap().validate().passed());
        let mut sym = RMat::zeros(4, 4);
        sym[(0, 2)] = 1.0;
        sym[(2, 0)] = 1.0;
        let x = LoopElement::from_real(4, 1, vec![sym]).unwrap();
        let rep = x.validate();
        let skew = rep.check("skew").unwrap();
        assert!(!skew.passed);
        assert_eq!(skew.max_violation, 2.0);
        assert!(rep.check("twist").unwrap().passed);

        let mut diag = RMat::zeros(4, 4);
        diag[(0, 1)] = 1.0;
        diag[(1, 0)] = -1.0;
        let y = LoopElement::from_real(4, 1, vec![diag]).unwrap();
        let rep = y.validate();
        assert!(rep.check("skew").unwrap().passed);
        assert!(!rep.check("twist").unwrap().passed);
    }

    #[test]
    fn construction_guards() {
        assert_eq!(LoopElement::zero(3, true), Err(LoopError::InvalidSize(3)));
        assert_eq!(LoopElement::zero(2, true), Err(LoopError::InvalidSize(2)));
        let z = CMat::zeros(4, 4);
        assert_eq!(LoopElement::new(4, 65, vec![z.clone()], true), Err(LoopError::DegreeOutOfRange(65)));
        let x = LoopElement::new(4, 40, vec![z.clone()], true).unwrap();
        assert!(x.mul(&x).is_err());
        let a = LoopElement::zero(4, true).unwrap();
        let b = LoopElement::zero(6, true).unwrap();
        assert_eq!(bracket(&a, &b), Err(LoopError::SizeMismatch(4, 6)));
    }

    #[test]
    fn invariant_form_is_ad_invariant_for_all_degrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = random_loop_element(&mut rng, 2, -2, 1);
            let b = random_loop_element(&mut rng, 2, -1, 1);
            let cc = random_loop_element(&mut rng, 2, -2, 0);
            let lhs = invariant_inner_product(&bracket(&a, &b).unwrap(), &cc).unwrap();
            let rhs = invariant_inner_product(&bracket(&cc, &a).unwrap(), &b).unwrap();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let x = random_initial(2, 3, 77).scale(1.0 / 3.0);
        let back = LoopElement::from_text(&x.to_text()).unwrap();
        assert_eq!(back, x);
        let zero = LoopElement::zero(6, false).unwrap();
        assert_eq!(LoopElement::from_text(&zero.to_text()).unwrap(), zero);
    }

    #[test]
    fn text_parse_errors_carry_line_numbers() {
        let bad = "loop_element m=4 lo=0 hi=0 real=1\ndegree 0\n0,0 0,0 0,0 0,0\n0,0 0,0 x,0 0,0\n";
        match LoopElement::from_text(bad) {
            Err(LoopError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
