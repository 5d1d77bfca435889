//! Small real-polynomial toolbox for the lag operators `1 + c_1 z + ... +
//! c_k z^k`. Coefficient slices exclude the constant term, which is always 1.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Roots of `1 + c[0] z + ... + c[k-1] z^k` via the companion matrix of the
/// reversed (monic) polynomial. Leading zero coefficients are trimmed.
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let mut k = coeffs.len();
    while k > 0 && coeffs[k - 1] == 0.0 {
        k -= 1;
    }
    if k == 0 {
        return Vec::new();
    }
    // z^k + (c_{k-1}/c_k) z^{k-1} + ... + 1/c_k has the same roots.
    let lead = coeffs[k - 1];
    let mut m = DMatrix::<f64>::zeros(k, k);
    for i in 1..k {
        m[(i, i - 1)] = 1.0;
    }
    m[(0, k - 1)] = -1.0 / lead;
    for i in 1..k {
        m[(i, k - 1)] = -coeffs[i - 1] / lead;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Smallest modulus among the roots of `1 + sum c_j z^j`; `None` for the
/// constant polynomial.
pub fn min_root_modulus(coeffs: &[f64]) -> Option<f64> {
    let r = roots(coeffs);
    r.iter().map(|z| z.norm()).min_by(f64::total_cmp)
}

/// Product of `1 + sum a_j z^j` and `1 + sum b_j z^j`, again without the
/// constant term.
pub fn multiply(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut full = vec![0.0; a.len() + b.len() + 1];
    full[0] = 1.0;
    let av: Vec<f64> = std::iter::once(1.0).chain(a.iter().copied()).collect();
    let bv: Vec<f64> = std::iter::once(1.0).chain(b.iter().copied()).collect();
    for (i, &x) in av.iter().enumerate() {
        for (j, &y) in bv.iter().enumerate() {
            if i + j > 0 {
                full[i + j] += x * y;
            }
        }
    }
    full.remove(0);
    full
}

/// First `len` power-series coefficients of `(1 + sum a_j z^j)/(1 + sum b_j z^j)`.
/// The constant coefficient (always 1) is included.
pub fn divide_series(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut c = vec![0.0; len];
    for j in 0..len {
        let mut v = if j == 0 {
            1.0
        } else if j <= a.len() {
            a[j - 1]
        } else {
            0.0
        };
        for s in 1..=j.min(b.len()) {
            v -= b[s - 1] * c[j - s];
        }
        c[j] = v;
    }
    c
}

/// Autocorrelation-style weights of `|P(e^{i lambda})|^2` where
/// `P(z) = 1 + sum c_j z^j`: returns `w` with
/// `|P(e^{i lambda})|^2 = w[0] + 2 sum_{l>=1} w[l] cos(l lambda)`.
pub fn modulus_sq_weights(coeffs: &[f64]) -> Vec<f64> {
    let full: Vec<f64> = std::iter::once(1.0).chain(coeffs.iter().copied()).collect();
    let k = full.len();
    let mut w = vec![0.0; k];
    for l in 0..k {
        let mut s = 0.0;
        for i in 0..k - l {
            s += full[i] * full[i + l];
        }
        w[l] = s;
    }
    w
}

/// Evaluate `|P(e^{i lambda})|^2` from the weights of [`modulus_sq_weights`].
pub fn eval_modulus_sq(weights: &[f64], lambda: f64) -> f64 {
    let mut v = weights[0];
    for (l, &wl) in weights.iter().enumerate().skip(1) {
        v += 2.0 * wl * (l as f64 * lambda).cos();
    }
    v
}
