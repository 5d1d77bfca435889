//! Adaptive Gauss-Kronrod quadrature with a wrapper for integrands carrying
//! an algebraic endpoint singularity at the left limit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("quadrature failed to converge: estimated error {err:.3e} after {panels} panels")]
    NoConvergence { err: f64, panels: usize },
    #[error("non-finite integrand value at lambda = {0}")]
    NonFinite(f64),
}

/// 15-point Kronrod nodes on [0,1] side (symmetric), with the embedded
/// 7-point Gauss rule. Standard QUADPACK abscissae.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_93,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

/// One GK15 panel: returns (kronrod, |kronrod - gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite(c));
    }
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let f1 = f(c - x);
        let f2 = f(c + x);
        if !f1.is_finite() || !f2.is_finite() {
            return Err(QuadError::NonFinite(if f1.is_finite() { c + x } else { c - x }));
        }
        let s = f1 + f2;
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    Ok((kron * h, (kron - gauss).abs() * h))
}

/// Adaptive bisection GK15 over [a, b] to the given absolute + relative
/// tolerance. Panels are split worst-first.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    const MAX_PANELS: usize = 100_000;
    struct Panel {
        a: f64,
        b: f64,
        val: f64,
        err: f64,
    }
    let (val, err) = gk15(&f, a, b)?;
    let mut panels = vec![Panel { a, b, val, err }];
    loop {
        let total: f64 = panels.iter().map(|p| p.val).sum();
        let err_total: f64 = panels.iter().map(|p| p.err).sum();
        if err_total <= abs_tol + rel_tol * total.abs() {
            return Ok(total);
        }
        if panels.len() >= MAX_PANELS {
            return Err(QuadError::NoConvergence {
                err: err_total,
                panels: panels.len(),
            });
        }
        // split the worst panel
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .expect("nonempty");
        let Panel { a, b, .. } = panels.swap_remove(idx);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            // interval exhausted at machine precision; accept what we have
            let (val, err) = gk15(&f, a, b)?;
            panels.push(Panel { a, b, val, err: err.min(f64::EPSILON * val.abs()) });
            let total: f64 = panels.iter().map(|p| p.val).sum();
            return Ok(total);
        }
        let (v1, e1) = gk15(&f, a, m)?;
        let (v2, e2) = gk15(&f, m, b)?;
        panels.push(Panel { a, b: m, val: v1, err: e1 });
        panels.push(Panel { a: m, b, val: v2, err: e2 });
    }
}

/// Integrate `f` over (0, b] where `f(x) ~ x^(-pole) * smooth(x)` near 0 with
/// `pole < 1`. The interval is split at `min(1e-3, b/2)`; on the left piece
/// the substitution `x = u^(1/(1-pole))` removes the algebraic singularity,
/// the right piece is integrated directly.
pub fn integrate_left_singular<F: Fn(f64) -> f64>(
    f: F,
    b: f64,
    pole: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    assert!(pole < 1.0, "non-integrable pole exponent {pole}");
    if pole <= 0.0 {
        // integrand is bounded; still keep endpoints open via GK nodes
        return integrate(f, 0.0, b, abs_tol, rel_tol);
    }
    let split = (1e-3_f64).min(0.5 * b);
    let s = 1.0 - pole;
    let inv_s = 1.0 / s;
    let left = integrate(
        |u| {
            let x = u.powf(inv_s);
            f(x) * inv_s * u.powf(pole * inv_s)
        },
        0.0,
        split.powf(s),
        0.5 * abs_tol,
        0.5 * rel_tol,
    )?;
    let right = integrate(&f, split, b, 0.5 * abs_tol, 0.5 * rel_tol)?;
    Ok(left + right)
}
