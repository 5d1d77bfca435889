//! Scalar special functions: log-gamma, gamma, digamma and the inverse
//! standard normal CDF. Self-contained so results are bit-identical across
//! platforms.

use std::f64::consts::PI;

/// Lanczos coefficients, g = 7, n = 9 (Godfrey's tableau).
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of |Gamma(x)| for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    if x < 0.5 {
        // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Gamma(x) for non-pole real x (positive or negative non-integer).
pub fn gamma(x: f64) -> f64 {
    if x > 0.0 {
        ln_gamma(x).exp()
    } else {
        assert!(x != x.floor(), "gamma pole at non-positive integer {x}");
        // Gamma(x) = pi / (sin(pi x) Gamma(1-x))
        PI / ((PI * x).sin() * ln_gamma(1.0 - x).exp())
    }
}

/// Digamma function. Recurrence shifts the argument above 6, then an
/// asymptotic series in 1/x^2 finishes the job; negative arguments go
/// through the reflection formula.
pub fn digamma(x: f64) -> f64 {
    assert!(
        !(x <= 0.0 && x == x.floor()),
        "digamma pole at non-positive integer {x}"
    );
    if x < 0.0 {
        // psi(1-x) = psi(x) + pi cot(pi x)
        return digamma(1.0 - x) - PI / (PI * x).tan();
    }
    let mut value = 0.0;
    let mut z = x;
    while z < 6.0 {
        value -= 1.0 / z;
        z += 1.0;
    }
    // psi(z) ~ ln z - 1/(2z) - sum B_{2k}/(2k z^{2k})
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2
                                                * (691.0 / 32760.0
                                                    - inv2
                                                        * (1.0 / 12.0
                                                            - inv2 * 3617.0 / 8160.0)))))));
    value + z.ln() - 0.5 * inv - series
}

/// Inverse standard normal CDF (Wichura's PPND16, AS 241). Relative error
/// below 1e-15 over (0, 1).
pub fn inv_norm_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "inv_norm_cdf domain is (0,1), got {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly7(&PPND_A, r) / poly7(&PPND_B, r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly7(&PPND_C, r) / poly7(&PPND_D, r)
    } else {
        let r = r - 5.0;
        poly7(&PPND_E, r) / poly7(&PPND_F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn poly7(c: &[f64; 8], x: f64) -> f64 {
    // Horner, highest degree first in storage order c[7]..c[0]
    let mut v = c[7];
    for i in (0..7).rev() {
        v = v * x + c[i];
    }
    v
}

const PPND_A: [f64; 8] = [
    3.387_132_872_796_366_5e0,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const PPND_B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545_5e3,
];
const PPND_C: [f64; 8] = [
    1.423_437_110_749_683_5e0,
    4.630_337_846_156_545e0,
    5.769_497_221_460_691e0,
    3.647_848_324_763_204_5e0,
    1.270_458_252_452_368_4e0,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const PPND_D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759e0,
    1.676_384_830_183_803_8e0,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const PPND_E: [f64; 8] = [
    6.657_904_643_501_103e0,
    5.463_784_911_164_114e0,
    1.784_826_539_917_291_3e0,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const PPND_F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];
