//! Closed-form limiting objective of the four criteria under ARFIMA
//! mis-specification, its gradient, and the Newton solver for the
//! pseudo-true parameters.
//!
//! With `A(z) = theta_0(z) phi(z)`, `B(z) = phi_0(z) theta(z)` and
//! `C(z) = A(z)/B(z) = sum c_j z^j`, the limiting objective factises as
//! `Q = pi (s0^2/s^2) Gamma(1-2 dstar)/Gamma^2(1-dstar) * K(eta)` where
//! `dstar = d0 - d` and
//! `K = sum c_j^2 + 2 sum_{k<j} c_j c_k rho(j-k)`.

use crate::model::{ArfimaSpec, EtaVector, FamilySpec};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::special::{digamma, ln_gamma};
use crate::{poly, quadrature};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PseudoTrueError {
    #[error("d0 - d = {0} outside (-0.5, 0.5)")]
    DStarOutOfRange(f64),
    #[error("no admissible first-order root found ({0})")]
    NoRoot(String),
    #[error("pseudo-true d converged to the boundary of the search box (d = {0})")]
    BoundaryRoot(f64),
}

/// A true process paired with the (possibly mis-specified) family fitted to
/// it. Correctly specified pairs are legal and reproduce eta1 = eta0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MisSpecPair {
    pub tdgp: ArfimaSpec,
    pub family: FamilySpec,
}

impl MisSpecPair {
    pub fn new(tdgp: ArfimaSpec, family: FamilySpec) -> Self {
        MisSpecPair { tdgp, family }
    }
}

/// Solved pseudo-true parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PseudoTrueSolution {
    pub eta1: EtaVector,
    /// d* = d0 - d1
    pub d_star: f64,
    /// K(eta1)
    pub k: f64,
    pub grad_norm: f64,
    pub truncation_n: usize,
    pub newton_iters: usize,
    /// whether d1 landed inside the (0, 0.5) region assumed by the theory
    pub a7_interior: bool,
}

/// `rho(h) = prod_{i=1..h} (dstar + i - 1)/(i - dstar)`.
pub fn rho(h: usize, dstar: f64) -> f64 {
    assert!(h >= 1 && dstar.abs() < 0.5);
    let mut v = 1.0;
    for i in 1..=h {
        let i = i as f64;
        v *= (dstar + i - 1.0) / (i - dstar);
    }
    v
}

/// Power-series coefficients c_0..c_n of `A_beta(z)/B_beta(z)`.
pub fn c_coefficients(pair: &MisSpecPair, beta: &[f64], n: usize) -> Vec<f64> {
    let (a, b) = ab_polys(pair, beta);
    poly::divide_series(&a, &b, n + 1)
}

/// (A, B) coefficient arrays (constant term 1 implicit).
fn ab_polys(pair: &MisSpecPair, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (phi, theta) = beta.split_at(pair.family.p);
    let a = poly::multiply(&pair.tdgp.theta, phi);
    let b = poly::multiply(&pair.tdgp.phi, theta);
    (a, b)
}

/// Truncation order: with `zeta` the largest reciprocal root modulus of
/// `B_beta`, the remainder after N terms is below
/// `(sum |c_j|) zeta^{N+1}/(1-zeta)`; returns the smallest N meeting `tol`
/// (exactly `deg A` when B is trivial). Capped at 1e5.
pub fn choose_truncation(pair: &MisSpecPair, beta: &[f64], tol: f64) -> usize {
    let (a, b) = ab_polys(pair, beta);
    let zeta = match poly::min_root_modulus(&b) {
        None => return a.len(),
        Some(m) => 1.0 / m,
    };
    if zeta <= 0.0 {
        return a.len();
    }
    let pilot = poly::divide_series(&a, &b, 200);
    let c_sum: f64 = pilot.iter().map(|v| v.abs()).sum();
    let mut n = a.len().max(1);
    while c_sum * zeta.powi(n as i32 + 1) / (1.0 - zeta) >= tol && n < 100_000 {
        n += 1;
    }
    n
}

/// Truncated `K_N(eta)`.
pub fn k_value(pair: &MisSpecPair, eta: &EtaVector, n: usize) -> Result<f64, PseudoTrueError> {
    let dstar = check_dstar(pair, eta)?;
    let c = c_coefficients(pair, &eta.beta, n);
    Ok(k_from_c(&c, dstar))
}

fn check_dstar(pair: &MisSpecPair, eta: &EtaVector) -> Result<f64, PseudoTrueError> {
    let dstar = pair.tdgp.d - eta.d;
    if dstar.abs() >= 0.5 {
        return Err(PseudoTrueError::DStarOutOfRange(dstar));
    }
    Ok(dstar)
}

fn k_from_c(c: &[f64], dstar: f64) -> f64 {
    let n = c.len();
    let s0: f64 = c.iter().map(|v| v * v).sum();
    let mut acc = 0.0;
    let mut rho_h = 1.0;
    for h in 1..n {
        let hf = h as f64;
        rho_h *= (dstar + hf - 1.0) / (hf - dstar);
        let mut r_h = 0.0;
        for k in 0..n - h {
            r_h += c[k + h] * c[k];
        }
        acc += rho_h * r_h;
    }
    s0 + 2.0 * acc
}

/// Gradient (dK/dd, dK/dbeta_1..l) of the truncated K.
pub fn k_gradient(
    pair: &MisSpecPair,
    eta: &EtaVector,
    n: usize,
) -> Result<Vec<f64>, PseudoTrueError> {
    let dstar = check_dstar(pair, eta)?;
    let l = pair.family.l();
    let c = c_coefficients(pair, &eta.beta, n);
    let dc = c_derivatives(pair, &eta.beta, n);

    let mut grad = vec![0.0; l + 1];
    // dK/dd: c_j do not depend on d, only rho does. Joint product-rule
    // recursion keeps the derivative finite when a rho factor vanishes.
    {
        let mut rho_h = 1.0;
        let mut drho_h = 0.0; // d rho / d d
        let mut acc = 0.0;
        for h in 1..c.len() {
            let hf = h as f64;
            let g = (dstar + hf - 1.0) / (hf - dstar);
            let dg = -(2.0 * hf - 1.0) / ((hf - dstar) * (hf - dstar));
            drho_h = drho_h * g + rho_h * dg;
            rho_h *= g;
            let mut r_h = 0.0;
            for k in 0..c.len() - h {
                r_h += c[k + h] * c[k];
            }
            acc += r_h * drho_h;
        }
        grad[0] = 2.0 * acc;
    }
    for r in 0..l {
        let dcr = &dc[r];
        let mut acc: f64 = c.iter().zip(dcr).map(|(a, b)| a * b).sum();
        let mut rho_h = 1.0;
        for h in 1..c.len() {
            let hf = h as f64;
            rho_h *= (dstar + hf - 1.0) / (hf - dstar);
            let mut cross = 0.0;
            for k in 0..c.len() - h {
                cross += c[k + h] * dcr[k] + dcr[k + h] * c[k];
            }
            acc += rho_h * cross;
        }
        grad[r + 1] = 2.0 * acc;
    }
    Ok(grad)
}

/// dc_j/dbeta_r for r = 1..l, each a series of the same length as c.
fn c_derivatives(pair: &MisSpecPair, beta: &[f64], n: usize) -> Vec<Vec<f64>> {
    let (a, b) = ab_polys(pair, beta);
    let c = poly::divide_series(&a, &b, n + 1);
    let mut out = Vec::with_capacity(beta.len());
    // dC/dphi_r = z^r theta_0 / B
    let theta0_over_b = series_div(&one_plus(&pair.tdgp.theta), &b, n + 1);
    for r in 1..=pair.family.p {
        let mut dcr = vec![0.0; n + 1];
        for j in r..=n {
            dcr[j] = theta0_over_b[j - r];
        }
        out.push(dcr);
    }
    // dC/dtheta_r = -z^r A phi_0 / B^2 = -z^r (C phi_0)/B
    let c_phi0 = convolve(&c, &one_plus(&pair.tdgp.phi), n + 1);
    let w = series_div(&c_phi0, &b, n + 1);
    for r in 1..=pair.family.q {
        let mut dcr = vec![0.0; n + 1];
        for j in r..=n {
            dcr[j] = -w[j - r];
        }
        out.push(dcr);
    }
    out
}

fn one_plus(coeffs: &[f64]) -> Vec<f64> {
    std::iter::once(1.0).chain(coeffs.iter().copied()).collect()
}

/// s(z) / (1 + sum b_j z^j) for an arbitrary numerator series s.
fn series_div(s: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut u = vec![0.0; len];
    for j in 0..len {
        let mut v = if j < s.len() { s[j] } else { 0.0 };
        for k in 1..=j.min(b.len()) {
            v -= b[k - 1] * u[j - k];
        }
        u[j] = v;
    }
    u
}

fn convolve(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut c = vec![0.0; len];
    for (i, &x) in a.iter().enumerate() {
        if i >= len {
            break;
        }
        for (j, &y) in b.iter().enumerate() {
            if i + j < len {
                c[i + j] += x * y;
            }
        }
    }
    c
}

/// The limiting objective
/// `Q(psi) = pi (s0^2/s^2) Gamma(1-2 dstar)/Gamma^2(1-dstar) K_N(eta)`.
pub fn limiting_q(
    pair: &MisSpecPair,
    sigma2: f64,
    eta: &EtaVector,
    n: usize,
) -> Result<f64, PseudoTrueError> {
    let dstar = check_dstar(pair, eta)?;
    Ok(q_prefactor(pair.tdgp.sigma2 / sigma2, dstar) * k_value(pair, eta, n)?)
}

/// `pi ratio Gamma(1-2 dstar)/Gamma^2(1-dstar)`.
pub fn q_prefactor(sigma_ratio: f64, dstar: f64) -> f64 {
    PI * sigma_ratio * (ln_gamma(1.0 - 2.0 * dstar) - 2.0 * ln_gamma(1.0 - dstar)).exp()
}

/// Direct singular-quadrature evaluation of
/// `(s0^2/s^2) integral_0^pi |A/B|^2 (2 sin(l/2))^(-2 dstar) dl`,
/// the independent oracle for [`limiting_q`].
pub fn limiting_q_by_quadrature(
    pair: &MisSpecPair,
    sigma2: f64,
    eta: &EtaVector,
) -> Result<f64, PseudoTrueError> {
    let dstar = check_dstar(pair, eta)?;
    let (a, b) = ab_polys(pair, eta.beta.as_slice());
    let aw = poly::modulus_sq_weights(&a);
    let bw = poly::modulus_sq_weights(&b);
    let integrand = move |lam: f64| {
        poly::eval_modulus_sq(&aw, lam) / poly::eval_modulus_sq(&bw, lam)
            * (2.0 * (0.5 * lam).sin()).powf(-2.0 * dstar)
    };
    let v = quadrature::integrate_left_singular(integrand, PI, 2.0 * dstar, 1e-11, 1e-11)
        .expect("limiting-objective quadrature failed");
    Ok(pair.tdgp.sigma2 / sigma2 * v)
}

/// First-order-condition system: `[2(psi(1-2d*) - psi(1-d*)) K + dK/dd,
/// dK/dbeta_r]`, the gradient of `log Q` up to the removed positive factor.
fn foc_system(pair: &MisSpecPair, eta: &EtaVector, tol: f64) -> Option<Vec<f64>> {
    let dstar = pair.tdgp.d - eta.d;
    if dstar.abs() >= 0.4999 {
        return None;
    }
    if !beta_admissible(pair.family, &eta.beta) {
        return None;
    }
    let n = choose_truncation(pair, &eta.beta, tol);
    let k = k_value(pair, eta, n).ok()?;
    let grad = k_gradient(pair, eta, n).ok()?;
    let mut g = vec![0.0; grad.len()];
    g[0] = 2.0 * (digamma(1.0 - 2.0 * dstar) - digamma(1.0 - dstar)) * k + grad[0];
    g[1..].copy_from_slice(&grad[1..]);
    Some(g)
}

fn beta_admissible(family: FamilySpec, beta: &[f64]) -> bool {
    let (phi, theta) = beta.split_at(family.p);
    let ok = |c: &[f64]| poly::min_root_modulus(c).map_or(true, |m| m > 1.0 + 1e-6);
    ok(phi) && ok(theta)
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// truncation tolerance for the series
    pub series_tol: f64,
    /// terminal infinity-norm of the first-order system
    pub grad_tol: f64,
    pub max_newton: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { series_tol: 1e-12, grad_tol: 1e-10, max_newton: 200 }
    }
}

/// Solve the first-order conditions for the pseudo-true parameters by damped
/// Newton with a finite-difference Jacobian of the analytic gradient,
/// multi-started from a coarse grid over (d, beta).
pub fn solve_pseudo_true(
    pair: &MisSpecPair,
    opts: &SolveOptions,
) -> Result<PseudoTrueSolution, PseudoTrueError> {
    let l = pair.family.l();
    let d0 = pair.tdgp.d;
    // admissible d: |d0 - d| < 0.5 and the MM itself stationary (|d| < 0.5)
    let d_lo = (d0 - 0.5).max(-0.5) + 1e-3;
    let d_hi = (d0 + 0.5).min(0.5) - 1e-3;

    let mut d_starts = Vec::new();
    for i in 0..10 {
        d_starts.push(d_lo + (d_hi - d_lo) * (0.5 + i as f64) / 10.0);
    }
    let pacf_grid = [-0.6, 0.0, 0.6];
    let mut beta_starts: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..l {
        let mut next = Vec::new();
        for b in &beta_starts {
            for &g in &pacf_grid {
                let mut nb = b.clone();
                nb.push(g);
                next.push(nb);
            }
        }
        beta_starts = next;
    }

    let mut total_iters = 0;
    let mut roots: Vec<(EtaVector, f64)> = Vec::new(); // (eta, grad_norm)
    for d_start in &d_starts {
        for pacfs in &beta_starts {
            let beta = pacf_beta(pair.family, pacfs);
            let eta0 = EtaVector { d: *d_start, beta };
            if let Some((eta, gnorm, iters)) =
                newton_from(pair, &eta0, d_lo, d_hi, opts)
            {
                total_iters += iters;
                if gnorm < 1e-9 {
                    roots.push((eta, gnorm));
                }
            }
        }
    }
    if roots.is_empty() {
        return Err(PseudoTrueError::NoRoot("no start converged".into()));
    }

    // keep local minima of Q only, then cluster distinct solutions
    let q_at = |eta: &EtaVector| -> f64 {
        let n = choose_truncation(pair, &eta.beta, opts.series_tol);
        limiting_q(pair, pair.tdgp.sigma2, eta, n).unwrap_or(f64::INFINITY)
    };
    let mut minima: Vec<(EtaVector, f64, f64)> = Vec::new(); // eta, gnorm, q
    'root: for (eta, gnorm) in roots {
        let q0 = q_at(&eta);
        let h = 1e-4;
        for coord in 0..=l {
            for sgn in [-1.0, 1.0] {
                let mut probe = eta.clone();
                if coord == 0 {
                    probe.d += sgn * h;
                } else {
                    probe.beta[coord - 1] += sgn * h;
                }
                let qp = q_at(&probe);
                if qp < q0 - 1e-10 * q0.abs().max(1.0) {
                    continue 'root; // saddle or maximum along this coordinate
                }
            }
        }
        let dup = minima.iter().any(|(e, _, _)| {
            (e.d - eta.d).abs() < 1e-6
                && e.beta.iter().zip(&eta.beta).all(|(a, b)| (a - b).abs() < 1e-6)
        });
        if !dup {
            minima.push((eta, gnorm, q0));
        }
    }
    if minima.is_empty() {
        return Err(PseudoTrueError::NoRoot("roots found but none is a minimum".into()));
    }
    minima.sort_by(|a, b| a.2.total_cmp(&b.2));
    if minima.len() > 1 {
        let (q_best, q_next) = (minima[0].2, minima[1].2);
        if (q_next - q_best).abs() < 1e-9 * q_best.abs().max(1.0) {
            let list: Vec<String> = minima
                .iter()
                .map(|(e, _, q)| format!("(d={:.6}, beta={:?}, Q={q:.9})", e.d, e.beta))
                .collect();
            return Err(PseudoTrueError::NoRoot(format!(
                "multiple distinct minimisers: {}",
                list.join(", ")
            )));
        }
    }
    let (eta1, grad_norm, _) = minima.swap_remove(0);
    if eta1.d <= d_lo + 1e-6 || eta1.d >= d_hi - 1e-6 {
        return Err(PseudoTrueError::BoundaryRoot(eta1.d));
    }
    let truncation_n = choose_truncation(pair, &eta1.beta, opts.series_tol);
    let k = k_value(pair, &eta1, truncation_n)?;
    let d_star = d0 - eta1.d;
    Ok(PseudoTrueSolution {
        a7_interior: eta1.d > 0.0 && eta1.d < 0.5,
        eta1,
        d_star,
        k,
        grad_norm,
        truncation_n,
        newton_iters: total_iters,
    })
}

fn pacf_beta(family: FamilySpec, pacfs: &[f64]) -> Vec<f64> {
    let mut beta = crate::estimators::pacf_to_coeffs(&pacfs[..family.p]);
    beta.extend(crate::estimators::pacf_to_coeffs(&pacfs[family.p..]));
    beta
}

/// Damped Newton from one start; falls back to derivative-free minimisation
/// of the squared residual norm if Newton stalls.
fn newton_from(
    pair: &MisSpecPair,
    start: &EtaVector,
    d_lo: f64,
    d_hi: f64,
    opts: &SolveOptions,
) -> Option<(EtaVector, f64, usize)> {
    let l = pair.family.l();
    let dim = l + 1;
    let pack = |eta: &EtaVector| -> Vec<f64> {
        std::iter::once(eta.d).chain(eta.beta.iter().copied()).collect()
    };
    let unpack = |x: &[f64]| EtaVector { d: x[0], beta: x[1..].to_vec() };
    let g_of = |x: &[f64]| -> Option<Vec<f64>> {
        if x[0] < d_lo || x[0] > d_hi {
            return None;
        }
        foc_system(pair, &unpack(x), opts.series_tol)
    };

    let mut x = pack(start);
    let mut g = g_of(&x)?;
    let mut iters = 0;
    let mut stalled = 0;
    while iters < opts.max_newton {
        iters += 1;
        let gnorm = inf_norm(&g);
        if gnorm < opts.grad_tol {
            return Some((unpack(&x), gnorm, iters));
        }
        // finite-difference Jacobian of the analytic gradient
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        let mut ok = true;
        for c in 0..dim {
            let h = 1e-6 * x[c].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            match (g_of(&xp), g_of(&xm)) {
                (Some(gp), Some(gm)) => {
                    for r in 0..dim {
                        jac[(r, c)] = (gp[r] - gm[r]) / (2.0 * h);
                    }
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let rhs = DVector::from_iterator(dim, g.iter().map(|v| -v));
        let Some(step) = jac.lu().solve(&rhs) else { break };
        // damping: halve until the residual norm decreases
        let mut t = 1.0;
        let mut advanced = false;
        for _ in 0..25 {
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            if let Some(gn) = g_of(&xn) {
                if inf_norm(&gn) < gnorm {
                    x = xn;
                    g = gn;
                    advanced = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !advanced {
            stalled += 1;
            if stalled >= 50 {
                break;
            }
            // nudge via a tiny gradient-direction step and retry
            let xn: Vec<f64> =
                x.iter().zip(g.iter()).map(|(a, s)| a - 1e-4 * s.signum()).collect();
            if let Some(gn) = g_of(&xn) {
                if inf_norm(&gn) < gnorm {
                    x = xn;
                    g = gn;
                }
            }
        }
    }
    // derivative-free fallback on ||G||^2
    let obj = |x: &[f64]| -> f64 {
        match g_of(x) {
            Some(g) => g.iter().map(|v| v * v).sum(),
            None => f64::INFINITY,
        }
    };
    let out = nelder_mead(
        obj,
        &x,
        &NelderMeadOptions { max_iter: 2000, x_tol: 1e-12, f_tol: 1e-24, step: 0.02 },
    );
    let eta = unpack(&out.x);
    let g = g_of(&out.x)?;
    Some((eta, inf_norm(&g), iters + out.iterations))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Q evaluated (with sigma^2 = sigma0^2) over a (d, beta) grid; rows follow
/// `d_grid`, columns follow `beta_grid`.
pub fn q_contour_grid(
    pair: &MisSpecPair,
    d_grid: &[f64],
    beta_grid: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    d_grid
        .par_iter()
        .map(|&d| {
            beta_grid
                .iter()
                .map(|beta| {
                    let eta = EtaVector { d, beta: beta.clone() };
                    let n = choose_truncation(pair, beta, 1e-12);
                    limiting_q(pair, pair.tdgp.sigma2, &eta, n).unwrap_or(f64::NAN)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ma1_pair(theta0: f64, d0: f64, family: FamilySpec) -> MisSpecPair {
        MisSpecPair::new(ArfimaSpec::tdgp(d0, vec![], vec![theta0], 1.0).unwrap(), family)
    }

    /// closed form for the ARFIMA(0,d0,1)/ARFIMA(1,d,0) special case
    fn k_closed_form(dt: f64, phi: f64, theta0: f64) -> f64 {
        1.0 + (theta0 + phi).powi(2)
            + (theta0 * phi).powi(2)
            + 2.0 * (theta0 * phi * (dt + 1.0) - (1.0 + theta0 * phi) * (theta0 + phi) * (dt - 2.0))
                * dt
                / ((dt - 1.0) * (dt - 2.0))
    }

    fn k_closed_form_ddt(dt: f64, phi: f64, theta0: f64) -> f64 {
        let a = theta0 * phi;
        let bc = (1.0 + theta0 * phi) * (theta0 + phi);
        let n = 2.0 * (a * (dt * dt + dt) - bc * (dt * dt - 2.0 * dt));
        let npr = 2.0 * (a * (2.0 * dt + 1.0) - bc * (2.0 * dt - 2.0));
        let d = dt * dt - 3.0 * dt + 2.0;
        let dpr = 2.0 * dt - 3.0;
        (npr * d - n * dpr) / (d * d)
    }

    #[test]
    fn rho_examples() {
        assert!((rho(1, 0.25) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(rho(5, 0.0), 0.0);
        let expect = (0.3 / 0.7) * (1.3 / 1.7) * (2.3 / 2.7);
        assert!((rho(3, 0.3) - expect).abs() < 1e-15);
    }

    #[test]
    fn c_coefficients_examples() {
        // (0,d0,1) truth vs (1,d,0) family: c1 = theta0 + phi, c2 = theta0 phi
        let pair = ma1_pair(-0.7, 0.3, FamilySpec::new(1, 0));
        let c = c_coefficients(&pair, &[0.4], 5);
        assert!((c[0] - 1.0).abs() < 1e-15);
        assert!((c[1] - (-0.7 + 0.4)).abs() < 1e-14);
        assert!((c[2] - (-0.7 * 0.4)).abs() < 1e-14);
        assert!(c[3].abs() < 1e-15 && c[4].abs() < 1e-15);
        // trivial A = B = 1
        let pair =
            MisSpecPair::new(ArfimaSpec::tdgp(0.2, vec![], vec![], 1.0).unwrap(), FamilySpec::new(0, 0));
        let c = c_coefficients(&pair, &[], 4);
        assert_eq!(c[0], 1.0);
        assert!(c[1..].iter().all(|&v| v == 0.0));
        // random rational pair: B * c = A as formal series
        let pair = MisSpecPair::new(
            ArfimaSpec::tdgp(0.3, vec![0.5], vec![-0.3], 1.0).unwrap(),
            FamilySpec::new(1, 1),
        );
        let beta = [0.25, 0.4];
        let n = 60;
        let c = c_coefficients(&pair, &beta, n);
        let (a, b) = ab_polys(&pair, &beta);
        let bc = convolve(&c, &one_plus(&b), n + 1);
        let af = one_plus(&a);
        for j in 0..=n {
            let aj = if j < af.len() { af[j] } else { 0.0 };
            assert!((bc[j] - aj).abs() < 1e-12, "j={j}");
        }
    }

    #[test]
    fn k_value_examples() {
        // correctly specified dynamics: C = 1 so K = 1 at any dstar
        let pair =
            MisSpecPair::new(ArfimaSpec::tdgp(0.2, vec![], vec![], 1.0).unwrap(), FamilySpec::new(0, 0));
        let eta = EtaVector { d: 0.05, beta: vec![] };
        assert!((k_value(&pair, &eta, 10).unwrap() - 1.0).abs() < 1e-15);

        // closed form for the (0,d0,1)/(1,d,0) case, randomized
        let mut state = 0x3cafe5u64;
        let mut unif = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..25 {
            let theta0 = -0.9 + 1.8 * unif();
            let phi = -0.9 + 1.8 * unif();
            let d0 = 0.05 + 0.4 * unif();
            let dt = -0.45 + 0.9 * unif();
            let d = d0 - dt;
            let pair = ma1_pair(theta0, d0, FamilySpec::new(1, 0));
            let eta = EtaVector { d, beta: vec![phi] };
            let k = k_value(&pair, &eta, 2).unwrap();
            let closed = k_closed_form(dt, phi, theta0);
            assert!((k - closed).abs() < 1e-12 * closed.abs().max(1.0), "{k} vs {closed}");
        }
    }

    #[test]
    fn k_rational_c_matches_quadrature() {
        // q0 > 0 and q > 0 so C is a genuine rational series
        let pair = MisSpecPair::new(
            ArfimaSpec::tdgp(0.3, vec![0.4], vec![-0.5], 1.0).unwrap(),
            FamilySpec::new(1, 1),
        );
        let eta = EtaVector { d: 0.18, beta: vec![0.3, 0.45] };
        let n = choose_truncation(&pair, &eta.beta, 1e-13);
        let q_series = limiting_q(&pair, 1.0, &eta, n).unwrap();
        let q_quad = limiting_q_by_quadrature(&pair, 1.0, &eta).unwrap();
        assert!(
            (q_series - q_quad).abs() < 1e-8 * q_quad.abs(),
            "{q_series} vs {q_quad}"
        );
    }

    #[test]
    fn k_gradient_matches_finite_differences() {
        let pair = MisSpecPair::new(
            ArfimaSpec::tdgp(0.25, vec![0.3], vec![-0.4], 1.0).unwrap(),
            FamilySpec::new(1, 1),
        );
        let eta = EtaVector { d: 0.15, beta: vec![0.2, 0.35] };
        let n = 80;
        let g = k_gradient(&pair, &eta, n).unwrap();
        let h = 1e-5;
        for coord in 0..3 {
            let mut up = eta.clone();
            let mut dn = eta.clone();
            match coord {
                0 => {
                    up.d += h;
                    dn.d -= h;
                }
                c => {
                    up.beta[c - 1] += h;
                    dn.beta[c - 1] -= h;
                }
            }
            let fd =
                (k_value(&pair, &up, n).unwrap() - k_value(&pair, &dn, n).unwrap()) / (2.0 * h);
            let denom = g[coord].abs().max(1e-3);
            assert!(
                ((fd - g[coord]) / denom).abs() < 1e-6,
                "coord {coord}: fd {fd} vs {}",
                g[coord]
            );
        }
    }

    #[test]
    fn k_gradient_closed_form_oracle() {
        let theta0 = -0.7;
        let pair = ma1_pair(theta0, 0.3, FamilySpec::new(1, 0));
        let phi = 0.31;
        let d = 0.12;
        let dt = 0.3 - d;
        let eta = EtaVector { d, beta: vec![phi] };
        let g = k_gradient(&pair, &eta, 2).unwrap();
        // dK/dd = -dK/ddt
        let expect_dd = -k_closed_form_ddt(dt, phi, theta0);
        assert!((g[0] - expect_dd).abs() < 1e-10, "{} vs {expect_dd}", g[0]);
        // dK/dphi by symbolic differentiation of the closed form
        let expect_dphi = 2.0 * (theta0 + phi)
            + 2.0 * theta0 * theta0 * phi
            + 2.0 * (theta0 * (dt + 1.0)
                - (theta0 * (theta0 + phi) + (1.0 + theta0 * phi)) * (dt - 2.0))
                * dt
                / ((dt - 1.0) * (dt - 2.0));
        assert!((g[1] - expect_dphi).abs() < 1e-10, "{} vs {expect_dphi}", g[1]);
    }

    #[test]
    fn k_gradient_zero_at_correct_specification() {
        // TDGP (1, d0, 0) fitted with family (1, d, 0): C = 1 at phi = phi0
        let pair = MisSpecPair::new(
            ArfimaSpec::tdgp(0.2, vec![0.45], vec![], 1.0).unwrap(),
            FamilySpec::new(1, 0),
        );
        let eta = EtaVector { d: 0.2, beta: vec![0.45] };
        let n = choose_truncation(&pair, &eta.beta, 1e-12);
        let g = k_gradient(&pair, &eta, n).unwrap();
        let k = k_value(&pair, &eta, n).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
        // full first-order system including the digamma prefactor term
        let foc = foc_system(&pair, &eta, 1e-12).unwrap();
        for v in foc {
            assert!(v.abs() < 1e-9, "{v}");
        }
        let _ = g;
    }

    #[test]
    fn limiting_q_examples() {
        // d = d0 and C = 1 and sigma^2 = sigma0^2 gives exactly pi
        let pair =
            MisSpecPair::new(ArfimaSpec::tdgp(0.3, vec![], vec![], 2.5).unwrap(), FamilySpec::new(0, 0));
        let eta = EtaVector { d: 0.3, beta: vec![] };
        assert!((limiting_q(&pair, 2.5, &eta, 5).unwrap() - PI).abs() < 1e-13);
        // prefactor at dstar = 0.25
        let pf = q_prefactor(1.0, 0.25);
        let expect = PI * crate::special::gamma(0.5) / crate::special::gamma(0.75).powi(2);
        assert!((pf - expect).abs() < 1e-12);
        // dstar out of range
        let eta_bad = EtaVector { d: -0.21, beta: vec![] };
        assert!(limiting_q(&pair, 1.0, &eta_bad, 5).is_err());
    }

    #[test]
    fn limiting_q_quadrature_oracle_randomized() {
        let mut state = 0xfeed5eedu64;
        let mut unif = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut done = 0;
        while done < 12 {
            let d0 = 0.05 + 0.4 * unif();
            let theta0 = -0.8 + 1.6 * unif();
            let phi0 = -0.6 + 1.2 * unif();
            let Ok(tdgp) = ArfimaSpec::tdgp(d0, vec![phi0], vec![theta0], 0.5 + unif()) else {
                continue;
            };
            let pair = MisSpecPair::new(tdgp, FamilySpec::new(1, 1));
            let beta = vec![-0.5 + unif(), -0.5 + unif()];
            if !beta_admissible(pair.family, &beta) {
                continue;
            }
            let d = d0 - (-0.4 + 0.8 * unif());
            let eta = EtaVector { d, beta };
            let sigma2 = 0.5 + unif();
            let n = choose_truncation(&pair, &eta.beta, 1e-13);
            let qs = limiting_q(&pair, sigma2, &eta, n).unwrap();
            let qq = limiting_q_by_quadrature(&pair, sigma2, &eta).unwrap();
            assert!((qs - qq).abs() < 1e-8 * qq.abs().max(1.0), "{qs} vs {qq}");
            done += 1;
        }
    }

    #[test]
    fn truncation_policy() {
        // B = 1: exact at deg A
        let pair = ma1_pair(-0.7, 0.2, FamilySpec::new(1, 0));
        assert_eq!(choose_truncation(&pair, &[0.4], 1e-12), 2);
        // MM theta = 0.5: zeta = 0.5, tol 1e-12 needs roughly 40-45 terms
        let pair2 = MisSpecPair::new(
            ArfimaSpec::tdgp(0.2, vec![], vec![-0.7], 1.0).unwrap(),
            FamilySpec::new(0, 1),
        );
        let n = choose_truncation(&pair2, &[0.5], 1e-12);
        assert!((38..=48).contains(&n), "N = {n}");
        // halving the tolerance adds about log(2)/log(2) = 1 step
        let n2 = choose_truncation(&pair2, &[0.5], 5e-13);
        assert!(n2 >= n && n2 <= n + 2);
        // truncation consistency: |K_2N - K_N| < tol
        let eta = EtaVector { d: 0.1, beta: vec![0.5] };
        let k1 = k_value(&pair2, &eta, n).unwrap();
        let k2 = k_value(&pair2, &eta, 2 * n).unwrap();
        assert!((k2 - k1).abs() < 1e-12);
    }

    #[test]
    fn solve_correctly_specified_recovers_truth() {
        let pair = MisSpecPair::new(
            ArfimaSpec::tdgp(0.2, vec![0.45], vec![], 1.0).unwrap(),
            FamilySpec::new(1, 0),
        );
        let sol = solve_pseudo_true(&pair, &SolveOptions::default()).unwrap();
        assert!((sol.eta1.d - 0.2).abs() < 1e-7, "d1 = {}", sol.eta1.d);
        assert!((sol.eta1.beta[0] - 0.45).abs() < 1e-7);
        assert!(sol.d_star.abs() < 1e-7);
        assert!(sol.grad_norm < 1e-9);
        assert!(sol.a7_interior);
    }

    #[test]
    fn solve_example_one_matches_known_dstar() {
        // theta0 = -0.3, fractional-noise family: dstar = 0.1736
        let pair = ma1_pair(-0.3, 0.4, FamilySpec::new(0, 0));
        let sol = solve_pseudo_true(&pair, &SolveOptions::default()).unwrap();
        assert!((sol.d_star - 0.1736).abs() < 1e-3, "dstar = {}", sol.d_star);
        // dstar is invariant to d0
        let pair2 = ma1_pair(-0.3, 0.2, FamilySpec::new(0, 0));
        let sol2 = solve_pseudo_true(&pair2, &SolveOptions::default()).unwrap();
        assert!((sol.d_star - sol2.d_star).abs() < 1e-9);
    }

    #[test]
    fn contour_grid_minimum_near_solution() {
        let pair = ma1_pair(-0.3, 0.4, FamilySpec::new(1, 0));
        let sol = solve_pseudo_true(&pair, &SolveOptions::default()).unwrap();
        let d_grid: Vec<f64> = (0..40).map(|i| 0.05 + 0.4 * i as f64 / 39.0).collect();
        let beta_grid: Vec<Vec<f64>> = (0..40).map(|i| vec![-0.9 + 1.8 * i as f64 / 39.0]).collect();
        let q = q_contour_grid(&pair, &d_grid, &beta_grid);
        let mut best = (0, 0);
        for i in 0..40 {
            for j in 0..40 {
                assert!(q[i][j].is_finite());
                if q[i][j] < q[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        assert!((d_grid[best.0] - sol.eta1.d).abs() < 0.015, "grid d {}", d_grid[best.0]);
        assert!((beta_grid[best.1][0] - sol.eta1.beta[0]).abs() < 0.06);
        // local convexity probe: Q grows along rays leaving eta1
        let q0 = {
            let n = choose_truncation(&pair, &sol.eta1.beta, 1e-12);
            limiting_q(&pair, 1.0, &sol.eta1, n).unwrap()
        };
        for (dd, db) in [(1.0, 0.0), (0.0, 1.0), (0.7, 0.7), (-0.6, 0.8)] {
            let mut prev = q0;
            for step in 1..=4 {
                let t = 0.01 * step as f64;
                let eta = EtaVector {
                    d: sol.eta1.d + t * dd,
                    beta: vec![sol.eta1.beta[0] + t * db],
                };
                let n = choose_truncation(&pair, &eta.beta, 1e-12);
                let q = limiting_q(&pair, 1.0, &eta, n).unwrap();
                assert!(q > prev, "ray ({dd},{db}) step {step}");
                prev = q;
            }
        }
    }
}
