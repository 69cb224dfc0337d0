//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest entry modulus; zero for empty matrices.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.norm_sqr())).sqrt()
}

pub fn max_abs_real(m: &RMat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn commutator_real(a: &RMat, b: &RMat) -> RMat {
    a * b - b * a
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|v| c(v, 0.0))
}

/// Real part plus the largest imaginary magnitude that was discarded.
pub fn split_real(m: &CMat) -> (RMat, f64) {
    let re = m.map(|v| v.re);
    let im = m.iter().fold(0.0_f64, |acc, v| acc.max(v.im.abs()));
    (re, im)
}

/// `max |FᵀF - I|`.
pub fn orthogonality_defect(f: &RMat) -> f64 {
    let n = f.nrows();
    let g = f.transpose() * f - RMat::identity(n, n);
    max_abs_real(&g)
}

/// Matrix exponential. For skew-symmetric input the diagonal Padé
/// approximant used by nalgebra is orthogonal up to roundoff.
pub fn expm(a: &RMat) -> RMat {
    a.exp()
}

/// Eigenvalues of a general complex matrix from its complex Schur form.
pub fn eigenvalues(m: &CMat) -> Option<Vec<C64>> {
    let n = m.nrows();
    if n == 0 {
        return Some(Vec::new());
    }
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-15, 10_000)?;
    let (_, t) = schur.unpack();
    Some((0..n).map(|i| t[(i, i)]).collect())
}

/// Right singular vector for the smallest singular value, together with the
/// sorted (descending) singular values.
pub fn smallest_singular_vector(m: &CMat) -> (DVector<C64>, Vec<f64>) {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let last = *order.last().expect("nonempty matrix");
    // Row `last` of Vᴴ is the conjugated singular vector.
    let v = v_t.row(last).transpose().map(|x| x.conj());
    (v, sv)
}

pub fn smallest_singular_vector_real(m: &RMat) -> (DVector<f64>, Vec<f64>) {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let last = *order.last().expect("nonempty matrix");
    (v_t.row(last).transpose(), sv)
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(m: &RMat) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Upper-left, upper-right, lower-left and lower-right `n×n` blocks.
pub fn blocks(m: &RMat, n: usize) -> [RMat; 4] {
    [
        m.view((0, 0), (n, n)).into_owned(),
        m.view((0, n), (n, n)).into_owned(),
        m.view((n, 0), (n, n)).into_owned(),
        m.view((n, n), (n, n)).into_owned(),
    ]
}
