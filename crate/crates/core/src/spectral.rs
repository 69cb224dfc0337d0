//! Spectral invariants of `X(z)`: the characteristic polynomial
//! `det(wI - X(z))` with Laurent-polynomial coefficients, drift monitors,
//! sampled regularity diagnostics and the eigenvalue functions of
//! `V_i(X_0(z))`.

use std::fmt::Write as _;
use std::f64::consts::PI;

use thiserror::Error;

use crate::flow::{v_field, FlowError, FlowResult, FlowSample};
use crate::laurent::LaurentPoly;
use crate::linalg::{c, eigenvalues, smallest_singular_vector, CMat, C64};
use crate::loop_algebra::LoopElement;

/// Pairwise eigenvalue distance below which two eigenvalues count as equal
/// (relative to `max(1, |w|)`).
pub const COLLISION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("sample point z = 0")]
    ZeroSample,
    #[error("eigen-decomposition failed at z = {0}")]
    EigenFailure(C64),
    #[error("X0(z) is not diagonalizable at z = {z} (eigenvalue gap {gap:e})")]
    NonDiagonalizable { z: C64, gap: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Dense matrix Laurent polynomial as raw coefficients, without the degree
/// guards of `LoopElement` (powers up to `X^m` may exceed them).
struct RawPoly {
    lo: i32,
    coeffs: Vec<CMat>,
}

impl RawPoly {
    fn mul(&self, other: &RawPoly) -> RawPoly {
        let m = self.coeffs[0].nrows();
        let mut out = vec![CMat::zeros(m, m); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        RawPoly { lo: self.lo + other.lo, coeffs: out }
    }

    fn trace(&self) -> LaurentPoly {
        LaurentPoly::new(self.lo, self.coeffs.iter().map(|x| x.trace()).collect())
    }
}

/// Coefficients `c_k(z)` of `det(wI - X(z)) = Σ_k c_k(z) w^k`, `k = 0..=m`.
///
/// Computed exactly in Laurent-polynomial arithmetic from the power sums
/// `tr X^k` via Newton's identities. For skew-symmetric input the odd power
/// sums vanish identically and are taken as exact zeros, which makes
/// `c_k ≡ 0` exactly whenever `m - k` is odd. Each `c_k` is restricted to its
/// degree window `[(m-k) lo, (m-k) hi]`.
pub fn char_poly(x: &LoopElement) -> Vec<LaurentPoly> {
    let m = x.m();
    let skew = x.validate().check("skew").map(|c| c.passed).unwrap_or(false);
    let x = x.trimmed();
    let mut out = vec![LaurentPoly::zero(); m + 1];
    out[m] = LaurentPoly::constant(c(1.0, 0.0));
    if x.is_empty() {
        return out;
    }
    let base = RawPoly { lo: x.lo(), coeffs: x.coeffs().to_vec() };
    let mut power = RawPoly { lo: base.lo, coeffs: base.coeffs.clone() };
    let mut sums = vec![LaurentPoly::zero(); m + 1];
    for k in 1..=m {
        if k > 1 {
            power = power.mul(&base);
        }
        if !(skew && k % 2 == 1) {
            sums[k] = power.trace();
        }
    }
    // e_k = (1/k) Σ_{i=1}^{k} (-1)^(i-1) e_{k-i} p_i
    let mut e = vec![LaurentPoly::constant(c(1.0, 0.0))];
    for k in 1..=m {
        let mut acc = LaurentPoly::zero();
        for i in 1..=k {
            let term = &e[k - i] * &sums[i];
            acc = if i % 2 == 1 { &acc + &term } else { &acc - &term };
        }
        e.push(acc.scale(c(1.0 / k as f64, 0.0)));
    }
    let (lo, hi) = (x.lo(), x.hi());
    for k in 1..=m {
        let coeff = if k % 2 == 0 { e[k].clone() } else { -&e[k] };
        let w = k as i32;
        let (restricted, _) = coeff.restrict(w * lo, w * hi);
        out[m - k] = if restricted.max_abs() == 0.0 { LaurentPoly::zero() } else { restricted };
    }
    out
}

/// Largest coefficient-level deviation between two characteristic
/// polynomials.
pub fn charpoly_drift(a: &[LaurentPoly], b: &[LaurentPoly]) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| p.max_abs_diff(q)).fold(0.0, f64::max)
}

/// One line per `c_k`, listing `(degree, re, im)` triples.
pub fn charpoly_report(cp: &[LaurentPoly]) -> String {
    let mut s = String::new();
    for (k, p) in cp.iter().enumerate() {
        let terms: Vec<String> = p.terms().map(|(d, v)| format!("({d}, {:.16e}, {:.16e})", v.re, v.im)).collect();
        let _ = writeln!(s, "c{k}: {}", terms.join(" "));
    }
    s
}

/// The fixed sample set used by [`isospectral_drift`]: eight points on the
/// unit circle at odd multiples of `π/8`.
pub fn drift_z_samples() -> Vec<C64> {
    (0..8).map(|j| C64::from_polar(1.0, PI * (2 * j + 1) as f64 / 8.0)).collect()
}

fn even_power_traces(x: &LoopElement, z: C64) -> Vec<C64> {
    let m = x.m();
    let xz = x.eval(z);
    let sq = &xz * &xz;
    let mut p = sq.clone();
    let mut out = Vec::new();
    for k in (2..=m).step_by(2) {
        if k > 2 {
            p = &p * &sq;
        }
        out.push(p.trace());
    }
    out
}

/// Per sample (path samples first, then grid samples):
/// `max_{k even, z} |tr X(z,t)^k - tr X(z,0)^k|` over [`drift_z_samples`].
pub fn isospectral_drift(flow: &FlowResult) -> Vec<f64> {
    let zs = drift_z_samples();
    let base: Vec<Vec<C64>> = zs.iter().map(|&z| even_power_traces(&flow.x0, z)).collect();
    flow.all_samples()
        .map(|s| {
            zs.iter()
                .zip(base.iter())
                .map(|(&z, b)| {
                    even_power_traces(&s.x, z).iter().zip(b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftRow {
    pub t: Vec<f64>,
    pub k: usize,
    pub z: C64,
    pub drift: f64,
}

/// Full drift table over samples, even `k` and the fixed z set.
pub fn drift_table(flow: &FlowResult) -> Vec<DriftRow> {
    let zs = drift_z_samples();
    let base: Vec<Vec<C64>> = zs.iter().map(|&z| even_power_traces(&flow.x0, z)).collect();
    let mut rows = Vec::new();
    for s in flow.all_samples() {
        for (&z, b) in zs.iter().zip(base.iter()) {
            for (j, (u, v)) in even_power_traces(&s.x, z).iter().zip(b).enumerate() {
                rows.push(DriftRow { t: s.t.clone(), k: 2 * (j + 1), z, drift: (u - v).norm() });
            }
        }
    }
    rows
}

/// CSV with columns `t1..tn,k,z_re,z_im,drift`.
pub fn drift_table_csv(rows: &[DriftRow], n: usize) -> String {
    let mut s = String::new();
    let head: Vec<String> = (1..=n).map(|i| format!("t{i}")).collect();
    let _ = writeln!(s, "{},k,z_re,z_im,drift", head.join(","));
    for r in rows {
        let t: Vec<String> = r.t.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(s, "{},{},{:.16e},{:.16e},{:.16e}", t.join(","), r.k, r.z.re, r.z.im, r.drift);
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regularity {
    /// No defect found on the sample set; a probabilistic certificate.
    YesSampled,
    No,
    Undetermined,
}

impl Regularity {
    pub fn label(self) -> &'static str {
        match self {
            Regularity::YesSampled => "yes (sampled)",
            Regularity::No => "no",
            Regularity::Undetermined => "undetermined",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RegularityReport {
    pub verdict: Regularity,
    pub reasons: Vec<String>,
    /// Zeros of the (reduced) discriminant in `C*`.
    pub branch_points: Vec<C64>,
    /// Riemann–Hurwitz genus from the branch-point count; an estimate.
    pub genus_estimate: Option<f64>,
    pub disc_samples: Vec<(C64, C64)>,
}

impl RegularityReport {
    fn undetermined(reason: &str) -> Self {
        RegularityReport {
            verdict: Regularity::Undetermined,
            reasons: vec![reason.to_string()],
            branch_points: Vec::new(),
            genus_estimate: None,
            disc_samples: Vec::new(),
        }
    }
}

fn min_pairwise_gap(vals: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..vals.len() {
        for j in i + 1..vals.len() {
            let scale = vals[i].norm().max(vals[j].norm()).max(1.0);
            gap = gap.min((vals[i] - vals[j]).norm() / scale);
        }
    }
    gap
}

/// Discriminant of the monic polynomial `Σ a_j v^j` (`a` ascending, last
/// entry 1) via the Sylvester resultant with its derivative.
fn discriminant(a: &[C64]) -> C64 {
    let deg = a.len() - 1;
    if deg < 1 {
        return c(1.0, 0.0);
    }
    let da: Vec<C64> = (1..=deg).map(|j| a[j] * j as f64).collect();
    let size = 2 * deg - 1;
    let mut s = CMat::zeros(size, size);
    // deg-1 rows of f, deg rows of f'; coefficients in descending order.
    for r in 0..deg - 1 {
        for j in 0..=deg {
            s[(r, r + j)] = a[deg - j];
        }
    }
    for r in 0..deg {
        for j in 0..deg {
            s[(deg - 1 + r, r + j)] = da[deg - 1 - j];
        }
    }
    let res = s.determinant();
    let sign = if (deg * (deg - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    res * sign / a[deg]
}

/// Roots of `Σ q_j z^j` (ascending) from the companion matrix.
fn poly_roots(q: &[C64]) -> Option<Vec<C64>> {
    let deg = q.len() - 1;
    if deg == 0 {
        return Some(Vec::new());
    }
    let lead = q[deg];
    let mut comp = CMat::zeros(deg, deg);
    for j in 0..deg {
        comp[(0, j)] = -q[deg - 1 - j] / lead;
    }
    for r in 1..deg {
        comp[(r, r - 1)] = c(1.0, 0.0);
    }
    eigenvalues(&comp)
}

/// Sampled regularity diagnostic.
///
/// `no` if the extreme coefficients `X_lo`, `X_hi` have a repeated
/// eigenvalue, or if the discriminant has a repeated zero. For
/// skew-symmetric input the spectrum is symmetric under `w → -w` and
/// `det X(z)` is a Pfaffian square, so the full `w`-discriminant is
/// structurally degenerate; the test then runs on the reduced polynomial
/// `f(v) = det(√v I - X(z))` in `v = w²`.
///
/// The discriminant is sampled at `z_samples` (or more, if its degree range
/// requires) points of the unit circle, interpolated to Laurent coefficients
/// and its zeros clustered: gaps below `1e-5` are repeated zeros, gaps below
/// `1e-3` are reported as undetermined.
pub fn regularity_check(x: &LoopElement, z_samples: usize) -> RegularityReport {
    let x = x.trimmed();
    if x.is_empty() || x.lo() >= 0 {
        return RegularityReport::undetermined("no z⁻ coefficients");
    }
    if x.hi() <= 0 {
        return RegularityReport::undetermined("no z⁺ coefficients");
    }
    let mut reasons = Vec::new();
    for (label, deg) in [("X_lo", x.lo()), ("X_hi", x.hi())] {
        match eigenvalues(x.coeff(deg).unwrap()) {
            Some(ev) => {
                let gap = min_pairwise_gap(&ev);
                if gap < COLLISION_TOL {
                    reasons.push(format!("{label} (degree {deg}) has a repeated eigenvalue (gap {gap:.3e})"));
                }
            }
            None => return RegularityReport::undetermined(&format!("eigenvalues of {label} did not converge")),
        }
    }
    if !reasons.is_empty() {
        return RegularityReport {
            verdict: Regularity::No,
            reasons,
            branch_points: Vec::new(),
            genus_estimate: None,
            disc_samples: Vec::new(),
        };
    }

    let m = x.m();
    let cp = char_poly(&x);
    let skew = x.validate().check("skew").map(|c| c.passed).unwrap_or(false);
    // a_j(z): coefficients of the polynomial whose discriminant is tested.
    let (sheets, stride) = if skew { (m / 2, 2) } else { (m, 1) };
    let poly_at = |z: C64| -> Vec<C64> { (0..=sheets).map(|j| cp[stride * j].eval(z)).collect() };
    let weight = (sheets * (sheets - 1)) as i32 * stride as i32;
    let (dlo, dhi) = (weight * x.lo(), weight * x.hi());
    let span = (dhi - dlo) as usize + 1;
    let q = z_samples.max(span + 1);
    let zs: Vec<C64> = (0..q).map(|j| C64::from_polar(1.0, 2.0 * PI * j as f64 / q as f64)).collect();
    let disc_samples: Vec<(C64, C64)> = zs.iter().map(|&z| (z, discriminant(&poly_at(z)))).collect();
    let coeffs: Vec<C64> = (dlo..=dhi)
        .map(|k| disc_samples.iter().map(|(z, d)| d * z.powi(-k)).sum::<C64>() / q as f64)
        .collect();
    let scale = coeffs.iter().fold(0.0_f64, |a, v| a.max(v.norm()));
    if scale == 0.0 {
        reasons.push("discriminant vanishes identically (repeated sheets)".into());
        return RegularityReport {
            verdict: Regularity::No,
            reasons,
            branch_points: Vec::new(),
            genus_estimate: None,
            disc_samples,
        };
    }
    let negligible = |v: &C64| v.norm() <= 1e-10 * scale;
    if negligible(&coeffs[0]) {
        reasons.push("discriminant vanishes at z = 0 (branch point over 0)".into());
    }
    if negligible(coeffs.last().unwrap()) {
        reasons.push("discriminant vanishes at z = ∞ (branch point over ∞)".into());
    }
    let first = coeffs.iter().position(|v| !negligible(v)).unwrap();
    let last = coeffs.iter().rposition(|v| !negligible(v)).unwrap();
    let Some(roots) = poly_roots(&coeffs[first..=last]) else {
        return RegularityReport::undetermined("root finding for the discriminant did not converge");
    };
    let gap = min_pairwise_gap(&roots);
    let verdict = if !reasons.is_empty() {
        Regularity::No
    } else if gap < 1e-5 {
        reasons.push(format!("discriminant has a repeated zero (root gap {gap:.3e}): non-simple branch point"));
        Regularity::No
    } else if gap < 1e-3 {
        reasons.push(format!("near-collision of branch points (root gap {gap:.3e})"));
        Regularity::Undetermined
    } else {
        reasons.push(format!("{} simple branch points on the sample set", roots.len()));
        Regularity::YesSampled
    };
    let genus_estimate = Some(roots.len() as f64 / 2.0 - sheets as f64 + 1.0);
    RegularityReport { verdict, reasons, branch_points: roots, genus_estimate, disc_samples }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuPair {
    /// Eigenvalue of `X_0(z)`.
    pub w: C64,
    /// Eigenvalue of `V_i(X_0(z))` on the same eigenvector.
    pub mu: C64,
    /// `|V_i s - μ s|` for the unit eigenvector `s`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuSample {
    pub z: C64,
    pub pairs: Vec<MuPair>,
}

/// Eigenvalue functions `μ_i` of `V_i(X_0(z))` at one sample point, matched
/// to the eigenvalues `w` of `X_0(z)` through shared eigenvectors. Pairs are
/// sorted by `w` (real part, then imaginary part, with a `1e-9` tie band).
pub fn mu_eigenvalues(x0: &LoopElement, i: usize, z: C64) -> Result<MuSample, SpectralError> {
    if z.norm() == 0.0 {
        return Err(SpectralError::ZeroSample);
    }
    let xz = x0.eval(z);
    let vz = v_field(x0, i)?.eval(z);
    let ev = eigenvalues(&xz).ok_or(SpectralError::EigenFailure(z))?;
    let gap = min_pairwise_gap(&ev);
    if gap < COLLISION_TOL {
        return Err(SpectralError::NonDiagonalizable { z, gap });
    }
    let m = x0.m();
    let mut pairs: Vec<MuPair> = ev
        .iter()
        .map(|&w| {
            let shifted = &xz - CMat::identity(m, m) * w;
            let (s, _) = smallest_singular_vector(&shifted);
            let vs = &vz * &s;
            let norm2 = s.iter().map(|v| v.norm_sqr()).sum::<f64>();
            let mu = s.iter().zip(vs.iter()).map(|(a, b)| a.conj() * b).sum::<C64>() / norm2;
            let residual = (&vs - &s * mu).norm() / norm2.sqrt();
            MuPair { w, mu, residual }
        })
        .collect();
    pairs.sort_by(|a, b| {
        if (a.w.re - b.w.re).abs() > 1e-9 {
            a.w.re.total_cmp(&b.w.re)
        } else {
            a.w.im.total_cmp(&b.w.im)
        }
    });
    Ok(MuSample { z, pairs })
}

/// Characteristic polynomial plus sampled discriminant and regularity.
#[derive(Clone, Debug)]
pub struct SpectralRecord {
    pub charpoly: Vec<LaurentPoly>,
    pub disc_samples: Vec<(C64, C64)>,
    pub regular: RegularityReport,
}

pub fn spectral_record(x: &LoopElement, z_samples: usize) -> SpectralRecord {
    let regular = regularity_check(x, z_samples);
    SpectralRecord { charpoly: char_poly(x), disc_samples: regular.disc_samples.clone(), regular }
}

impl SpectralRecord {
    /// Text report: charpoly lines, then regularity verdict and reasons.
    pub fn report(&self) -> String {
        let mut s = charpoly_report(&self.charpoly);
        let _ = writeln!(s, "regular: {}", self.regular.verdict.label());
        for r in &self.regular.reasons {
            let _ = writeln!(s, "reason: {r}");
        }
        if let Some(g) = self.regular.genus_estimate {
            let _ = writeln!(s, "genus_estimate: {g}");
        }
        let _ = writeln!(s, "branch_points: {}", self.regular.branch_points.len());
        s
    }
}

/// Charpoly drift of each sample against `t = 0`.
pub fn sample_charpoly_drift(base: &[LaurentPoly], sample: &FlowSample) -> f64 {
    charpoly_drift(base, &char_poly(&sample.x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RMat;
    use crate::random::{random_initial, random_loop_element};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clifford_like(k: &RMat) -> LoopElement {
        let mut x = RMat::zeros(4, 4);
        x.view_mut((0, 2), (2, 2)).copy_from(k);
        x.view_mut((2, 0), (2, 2)).copy_from(&(-k.transpose()));
        LoopElement::from_real(4, 1, vec![x]).unwrap()
    }

    fn numeric_det(x: &LoopElement, z: C64, w: C64) -> C64 {
        let m = x.m();
        (CMat::identity(m, m) * w - x.eval(z)).determinant()
    }

    fn eval_charpoly(cp: &[LaurentPoly], z: C64, w: C64) -> C64 {
        cp.iter().enumerate().map(|(k, p)| p.eval(z) * w.powi(k as i32)).sum()
    }

    #[test]
    fn identity_block_gives_w2_plus_z2_squared() {
        let x = clifford_like(&RMat::identity(2, 2));
        let cp = char_poly(&x);
        // (w² + z²)² = w⁴ + 2 z² w² + z⁴
        assert_eq!(cp[4], LaurentPoly::constant(c(1.0, 0.0)));
        assert!(cp[3].is_empty() && cp[1].is_empty());
        assert!((cp[2].coeff(2) - c(2.0, 0.0)).norm() < 1e-15);
        assert!((cp[0].coeff(4) - c(1.0, 0.0)).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let z = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let w = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let oracle = numeric_det(&x, z, w);
            let expected = (w * w + z * z).powi(2);
            assert!((oracle - expected).norm() < 1e-12 * expected.norm().max(1.0));
            assert!((eval_charpoly(&cp, z, w) - oracle).norm() < 1e-12 * oracle.norm().max(1.0));
        }
    }

    #[test]
    fn agrees_with_numeric_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in [2usize, 3] {
            let x = random_loop_element(&mut rng, n, -2, 1);
            let cp = char_poly(&x);
            assert_eq!(cp[2 * n - 1], LaurentPoly::zero());
            for _ in 0..20 {
                let z = C64::from_polar(rng.gen_range(0.5..1.5), rng.gen_range(0.0..6.28));
                let w = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                let oracle = numeric_det(&x, z, w);
                let got = eval_charpoly(&cp, z, w);
                assert!((got - oracle).norm() <= 1e-9 * oracle.norm().max(1.0), "{got} vs {oracle}");
            }
        }
    }

    #[test]
    fn odd_coefficients_vanish_exactly_and_degree_bounds_hold() {
        for seed in 0..20 {
            let x = random_initial(3, 2, seed);
            let cp = char_poly(&x);
            let m = 6;
            for (k, p) in cp.iter().enumerate() {
                if (m - k) % 2 == 1 {
                    assert!(p.is_empty(), "c{k} not exactly zero");
                } else if !p.is_empty() {
                    let w = (m - k) as i32;
                    assert!(p.lo() >= w * x.lo() && p.hi() <= w * x.hi());
                }
            }
        }
    }

    #[test]
    fn regularity_verdicts() {
        // K singular: X_1 has eigenvalue 0 twice.
        let k = RMat::from_row_slice(2, 2, &[1.0, 2.0, 0.5, 1.0]);
        let mut x1 = RMat::zeros(4, 4);
        x1.view_mut((0, 2), (2, 2)).copy_from(&k);
        x1.view_mut((2, 0), (2, 2)).copy_from(&(-k.transpose()));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lower = random_loop_element(&mut rng, 2, -1, 0);
        let mut coeffs: Vec<RMat> = lower.coeffs().iter().map(|c| c.map(|v| v.re)).collect();
        coeffs.push(x1.clone());
        let x = LoopElement::from_real(4, -1, coeffs).unwrap();
        assert_eq!(regularity_check(&x, 64).verdict, Regularity::No);

        let generic = random_initial(2, 1, 8);
        let rep = regularity_check(&generic, 64);
        assert_eq!(rep.verdict, Regularity::YesSampled, "{:?}", rep.reasons);
        assert_eq!(rep.branch_points.len(), 8);

        let only_top = LoopElement::from_real(4, 1, vec![x1]).unwrap();
        let rep = regularity_check(&only_top, 64);
        assert_eq!(rep.verdict, Regularity::Undetermined);
        assert_eq!(rep.reasons, vec!["no z⁻ coefficients".to_string()]);
    }

    #[test]
    fn mu_matches_power_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x0 = random_initial(2, 2, 4);
        for _ in 0..20 {
            let z = C64::from_polar(rng.gen_range(0.6..1.4), rng.gen_range(0.0..6.28));
            let s1 = mu_eigenvalues(&x0, 1, z).unwrap();
            for p in &s1.pairs {
                assert!((p.mu - p.w).norm() < 1e-10);
            }
            let s2 = mu_eigenvalues(&x0, 2, z).unwrap();
            for p in &s2.pairs {
                let expected = z.powi(-2) * p.w.powi(3);
                assert!((p.mu - expected).norm() < 1e-8, "{} vs {}", p.mu, expected);
                assert!(p.residual < 1e-8);
            }
        }
    }

    #[test]
    fn mu_rejects_zero_and_degenerate_samples() {
        let x0 = random_initial(2, 1, 4);
        assert!(matches!(mu_eigenvalues(&x0, 1, c(0.0, 0.0)), Err(SpectralError::ZeroSample)));
        let x = clifford_like(&RMat::identity(2, 2));
        assert!(matches!(mu_eigenvalues(&x, 1, c(1.0, 0.0)), Err(SpectralError::NonDiagonalizable { .. })));
    }
}
