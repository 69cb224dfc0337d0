//! Scalar Laurent polynomials `Σ a_k z^k` with complex coefficients.

use std::ops::{Add, Mul, Neg, Sub};

use crate::linalg::{c, C64};

/// Dense Laurent polynomial; `coeffs[j]` multiplies `z^(lo + j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentPoly {
    lo: i32,
    coeffs: Vec<C64>,
}

impl LaurentPoly {
    pub fn zero() -> Self {
        LaurentPoly { lo: 0, coeffs: Vec::new() }
    }

    pub fn constant(v: C64) -> Self {
        LaurentPoly { lo: 0, coeffs: vec![v] }
    }

    pub fn new(lo: i32, coeffs: Vec<C64>) -> Self {
        LaurentPoly { lo, coeffs }
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    /// Highest stored degree (`lo - 1` for the empty polynomial).
    pub fn hi(&self) -> i32 {
        self.lo + self.coeffs.len() as i32 - 1
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, deg: i32) -> C64 {
        let j = deg - self.lo;
        if j < 0 || j as usize >= self.coeffs.len() {
            c(0.0, 0.0)
        } else {
            self.coeffs[j as usize]
        }
    }

    /// Iterate `(degree, coefficient)` pairs over the stored window.
    pub fn terms(&self) -> impl Iterator<Item = (i32, C64)> + '_ {
        self.coeffs.iter().enumerate().map(move |(j, v)| (self.lo + j as i32, *v))
    }

    pub fn eval(&self, z: C64) -> C64 {
        if self.coeffs.is_empty() {
            return c(0.0, 0.0);
        }
        // Horner on the polynomial part, then scale by z^lo.
        let mut acc = c(0.0, 0.0);
        for v in self.coeffs.iter().rev() {
            acc = acc * z + v;
        }
        acc * z.powi(self.lo)
    }

    pub fn scale(&self, s: C64) -> Self {
        LaurentPoly { lo: self.lo, coeffs: self.coeffs.iter().map(|v| v * s).collect() }
    }

    /// Drop end coefficients with modulus `<= tol`.
    pub fn trimmed(&self, tol: f64) -> Self {
        let first = self.coeffs.iter().position(|v| v.norm() > tol);
        let Some(first) = first else {
            return LaurentPoly::zero();
        };
        let last = self.coeffs.iter().rposition(|v| v.norm() > tol).unwrap();
        LaurentPoly { lo: self.lo + first as i32, coeffs: self.coeffs[first..=last].to_vec() }
    }

    /// Set every coefficient outside `[lo, hi]` to zero and return the
    /// largest modulus removed.
    pub fn restrict(&self, lo: i32, hi: i32) -> (Self, f64) {
        let mut dropped = 0.0_f64;
        let mut kept = Vec::new();
        let mut new_lo = None;
        for (d, v) in self.terms() {
            if d < lo || d > hi {
                dropped = dropped.max(v.norm());
            } else {
                if new_lo.is_none() {
                    new_lo = Some(d);
                }
                kept.push(v);
            }
        }
        (LaurentPoly { lo: new_lo.unwrap_or(0), coeffs: kept }, dropped)
    }

    /// Largest coefficient-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &LaurentPoly) -> f64 {
        let lo = self.lo.min(other.lo);
        let hi = self.hi().max(other.hi());
        (lo..=hi).map(|d| (self.coeff(d) - other.coeff(d)).norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    fn combine(&self, other: &LaurentPoly, sign: f64) -> LaurentPoly {
        if self.is_empty() {
            return other.scale(c(sign, 0.0));
        }
        if other.is_empty() {
            return self.clone();
        }
        let lo = self.lo.min(other.lo);
        let hi = self.hi().max(other.hi());
        let coeffs = (lo..=hi).map(|d| self.coeff(d) + other.coeff(d) * sign).collect();
        LaurentPoly { lo, coeffs }
    }
}

impl Add for &LaurentPoly {
    type Output = LaurentPoly;
    fn add(self, rhs: &LaurentPoly) -> LaurentPoly {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &LaurentPoly {
    type Output = LaurentPoly;
    fn sub(self, rhs: &LaurentPoly) -> LaurentPoly {
        self.combine(rhs, -1.0)
    }
}

impl Neg for &LaurentPoly {
    type Output = LaurentPoly;
    fn neg(self) -> LaurentPoly {
        self.scale(c(-1.0, 0.0))
    }
}

impl Mul for &LaurentPoly {
    type Output = LaurentPoly;
    fn mul(self, rhs: &LaurentPoly) -> LaurentPoly {
        if self.is_empty() || rhs.is_empty() {
            return LaurentPoly::zero();
        }
        let mut coeffs = vec![c(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        LaurentPoly { lo: self.lo + rhs.lo, coeffs }
    }
}
