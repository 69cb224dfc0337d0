//! Finite-difference stencils on uniform grids.

/// Weights `w_j` with `f'(x0) ≈ Σ w_j f(x0 + offsets[j])` (Fornberg's
/// recursion, first derivative only).
pub fn first_derivative_weights(offsets: &[f64]) -> Vec<f64> {
    let n = offsets.len();
    // c[k][j]: weight of node j for derivative order k (k = 0, 1).
    let mut w = vec![[0.0_f64; 2]; n];
    w[0][0] = 1.0;
    let mut c1 = 1.0;
    for i in 1..n {
        let mut c2 = 1.0;
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                w[i][1] = c1 * (w[i - 1][0] - offsets[i - 1] * w[i - 1][1]) / c2;
                w[i][0] = -c1 * offsets[i - 1] * w[i - 1][0] / c2;
            }
            w[j][1] = (offsets[i] * w[j][1] - w[j][0]) / c3;
            w[j][0] = offsets[i] * w[j][0] / c3;
        }
        c1 = c2;
    }
    w.iter().map(|p| p[1]).collect()
}

/// Stencil for the derivative at index `k` of a line with `count` points and
/// spacing `h`: up to 5 nodes, centred where possible. Returns
/// `(first_index, weights)`.
pub fn derivative_stencil(k: usize, count: usize, h: f64) -> (usize, Vec<f64>) {
    let width = count.min(5);
    let half = width / 2;
    let start = k.saturating_sub(half).min(count - width);
    let offsets: Vec<f64> = (start..start + width).map(|j| j as f64 - k as f64).collect();
    let w = first_derivative_weights(&offsets).into_iter().map(|v| v / h).collect();
    (start, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_five_point() {
        let w = first_derivative_weights(&[-2.0, -1.0, 0.0, 1.0, 2.0]);
        let expected = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn one_sided_is_exact_on_quartics() {
        let f = |x: f64| 1.0 + x - 2.0 * x * x + 0.5 * x.powi(3) + 0.25 * x.powi(4);
        let df = |x: f64| 1.0 - 4.0 * x + 1.5 * x * x + x.powi(3);
        let h = 0.1;
        for count in [3usize, 4, 5, 9] {
            for k in 0..count {
                let (start, w) = derivative_stencil(k, count, h);
                let approx: f64 = w.iter().enumerate().map(|(j, wj)| wj * f((start + j) as f64 * h)).sum();
                let tol = if count >= 5 { 1e-10 } else { 0.1 };
                assert!((approx - df(k as f64 * h)).abs() < tol, "count {count} k {k}");
            }
        }
    }
}
