//! Exact ARFIMA autocovariances via Sowell's hypergeometric decomposition
//! over distinct AR roots, evaluated with recursion-based tables so a whole
//! lag range costs O(p * max_lag) after the root finding.
//!
//! Returns `None` whenever the decomposition is unsafe (repeated or
//! near-repeated AR roots, |d| in a degenerate band around zero with ARMA
//! dynamics that decay too slowly); callers then fall back to numeric
//! spectral integration.

use crate::model::{ArfimaSpec, REPEATED_ROOT_TOL};
use crate::{poly, special};
use num_complex::Complex64;

/// gamma(0..=max_lag), or `None` when the caller should integrate numerically.
pub(crate) fn autocovariance(spec: &ArfimaSpec, max_lag: usize) -> Option<Vec<f64>> {
    let p = spec.p();
    let q = spec.q();
    if spec.d.abs() < 1e-12 {
        return arma_autocovariance(spec, max_lag);
    }
    if spec.d.abs() < 1e-8 {
        // gamma-ratio forms lose all precision this close to d = 0
        return None;
    }
    let psi = poly::modulus_sq_weights(&spec.theta);
    let d = spec.d;
    let kappa = (special::ln_gamma(1.0 - 2.0 * d)
        - special::ln_gamma(1.0 - d))
    .exp()
        / special::gamma(d);

    if p == 0 {
        // gamma(s) = sigma^2 sum_l psi(|l|) kappa R_{|s-l|}
        let r = ratio_table_nonneg(d, max_lag + q);
        let mut out = Vec::with_capacity(max_lag + 1);
        for s in 0..=max_lag as isize {
            let mut acc = 0.0;
            for l in -(q as isize)..=(q as isize) {
                acc += psi[l.unsigned_abs()] * r[(s - l).unsigned_abs()];
            }
            out.push(spec.sigma2 * kappa * acc);
        }
        return Some(out);
    }

    // inverse AR roots, |mu| < 1
    let mu: Vec<Complex64> = poly::roots(&spec.phi).iter().map(|z| 1.0 / z).collect();
    for i in 0..p {
        for j in 0..p {
            if i != j && (mu[i] - mu[j]).norm() < REPEATED_ROOT_TOL {
                return None;
            }
        }
    }
    // xi_j = [mu_j prod_i (1 - mu_i mu_j) prod_{m != j} (mu_j - mu_m)]^{-1}
    let mut xi = Vec::with_capacity(p);
    for j in 0..p {
        let mut den = mu[j];
        for i in 0..p {
            den *= Complex64::new(1.0, 0.0) - mu[i] * mu[j];
        }
        for m in 0..p {
            if m != j {
                den *= mu[j] - mu[m];
            }
        }
        xi.push(den.inv());
    }

    // h ranges over p + l - s for s in 0..=max_lag, |l| <= q; the mirrored
    // argument -h is needed as well, so the tables span both signs.
    let h_hi = (p + q) as isize;
    let h_lo = p as isize - q as isize - max_lag as isize;
    let h_min = h_lo.min(-h_hi);
    let h_max = h_hi.max(-h_lo);
    let r = ratio_table(d, h_min, h_max);
    let f_tables: Option<Vec<Vec<Complex64>>> =
        mu.iter().map(|&m| hyp_table(d, h_min, h_max, m)).collect();
    let f_tables = f_tables?;

    // C(d, h, mu_j) = kappa R_h [mu^{2p} F(d+h,1;1-d+h;mu) + F(d-h,1;1-d-h;mu) - 1]
    let at = |h: isize| -> Complex64 {
        let idx = (h - h_min) as usize;
        let rh = r[idx];
        let mut acc = Complex64::default();
        for j in 0..p {
            let fwd = f_tables[j][idx];
            let f_neg = f_at(&f_tables[j], h_min, -h);
            let mu2p = mu[j].powu(2 * p as u32);
            acc += xi[j] * (mu2p * fwd + f_neg - Complex64::new(1.0, 0.0));
        }
        kappa * rh * acc
    };

    let mut out = Vec::with_capacity(max_lag + 1);
    for s in 0..=max_lag as isize {
        let mut acc = Complex64::default();
        for l in -(q as isize)..=(q as isize) {
            let h = p as isize + l - s;
            acc += psi[l.unsigned_abs()] * at(h);
        }
        let v = spec.sigma2 * acc;
        if v.im.abs() > 1e-6 * (1.0 + v.re.abs()) {
            return None;
        }
        out.push(v.re);
    }
    Some(out)
}

fn f_at(table: &[Complex64], h_min: isize, h: isize) -> Complex64 {
    table[(h - h_min) as usize]
}

/// R_h = Gamma(d+h)/Gamma(1+h-d) for h in [h_min, h_max], by ratio recursion
/// from R_0 = Gamma(d)/Gamma(1-d).
fn ratio_table(d: f64, h_min: isize, h_max: isize) -> Vec<f64> {
    let len = (h_max - h_min + 1) as usize;
    let mut r = vec![0.0; len];
    let zero_idx = (-h_min) as usize;
    r[zero_idx] = special::gamma(d) / special::gamma(1.0 - d);
    for h in 1..=h_max {
        let idx = (h - h_min) as usize;
        let hf = h as f64;
        r[idx] = r[idx - 1] * (d + hf - 1.0) / (hf - d);
    }
    for h in (h_min..0).rev() {
        let idx = (h - h_min) as usize;
        let hf = h as f64;
        // R_h = R_{h+1} (1+h-d) / (d+h)
        r[idx] = r[idx + 1] * (1.0 + hf - d) / (d + hf);
    }
    r
}

/// R_{|h|} for h in 0..=h_max (pure fractional-noise case uses evenness).
fn ratio_table_nonneg(d: f64, h_max: usize) -> Vec<f64> {
    let mut r = vec![0.0; h_max + 1];
    r[0] = special::gamma(d) / special::gamma(1.0 - d);
    for h in 1..=h_max {
        let hf = h as f64;
        r[h] = r[h - 1] * (d + hf - 1.0) / (hf - d);
    }
    r
}

/// F_h = 2F1(d+h, 1; 1-d+h; mu) for h in [h_min, h_max]: direct series at
/// h_max, then the downward recursion F_{h-1} = 1 + mu (d+h-1)/(h-d) F_h.
fn hyp_table(d: f64, h_min: isize, h_max: isize, mu: Complex64) -> Option<Vec<Complex64>> {
    let len = (h_max - h_min + 1) as usize;
    let mut f = vec![Complex64::default(); len];
    let top = hyp2f1_series(d + h_max as f64, 1.0 - d + h_max as f64, mu)?;
    f[len - 1] = top;
    for h in (h_min..h_max).rev() {
        let idx = (h - h_min) as usize;
        let hf = (h + 1) as f64;
        f[idx] = Complex64::new(1.0, 0.0) + mu * ((d + hf - 1.0) / (hf - d)) * f[idx + 1];
    }
    Some(f)
}

/// 2F1(a, 1; c; x) = sum_k (a)_k/(c)_k x^k by direct term recursion.
fn hyp2f1_series(a: f64, c: f64, x: Complex64) -> Option<Complex64> {
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for k in 0..200_000 {
        let kf = k as f64;
        term *= x * ((a + kf) / (c + kf));
        sum += term;
        if term.norm() < 1e-17 * sum.norm().max(1.0) {
            return Some(sum);
        }
    }
    None
}

/// Exact pure-ARMA (d = 0) autocovariances from the MA(infinity) expansion,
/// truncated where the geometric tail falls below machine precision.
fn arma_autocovariance(spec: &ArfimaSpec, max_lag: usize) -> Option<Vec<f64>> {
    if spec.p() == 0 {
        let w = poly::modulus_sq_weights(&spec.theta);
        return Some(
            (0..=max_lag)
                .map(|s| if s < w.len() { spec.sigma2 * w[s] } else { 0.0 })
                .collect(),
        );
    }
    let rho = poly::roots(&spec.phi)
        .iter()
        .map(|z| 1.0 / z.norm())
        .fold(0.0f64, f64::max);
    let tail_len = (-40.0 / rho.ln()).ceil();
    if !(tail_len.is_finite() && tail_len < 2e5) {
        return None;
    }
    let len = max_lag + tail_len as usize + spec.q() + 2;
    let psi = poly::divide_series(&spec.theta, &spec.phi, len);
    let mut out = Vec::with_capacity(max_lag + 1);
    for s in 0..=max_lag {
        let mut acc = 0.0;
        for j in 0..len - s {
            acc += psi[j] * psi[j + s];
        }
        out.push(spec.sigma2 * acc);
    }
    Some(out)
}
