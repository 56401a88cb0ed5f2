//! Special functions used by the channel models.
//!
//! `erf` and `ln_gamma` delegate to `libm` (a port of musl's libm). The modified Bessel function of
//! the second kind `K_nu(x)` for real order is computed here with Temme's
//! method: a series for `x < 2`, Steed's continued fraction for `x >= 2`,
//! followed by forward recurrence in the order (which is stable for `K`).

use std::f64::consts::PI;

/// Error function.
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// `ln |Gamma(x)|`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// Taylor coefficients of `1/Gamma(1+z)` about `z = 0`.
const RGAMMA1P: [f64; 33] = [
    1.0,
    0.577_215_664_901_532_860_6,
    -0.655_878_071_520_253_881_1,
    -0.042_002_635_034_095_235_53,
    0.166_538_611_382_291_489_5,
    -0.042_197_734_555_544_336_75,
    -0.009_621_971_527_876_973_562,
    0.007_218_943_246_663_099_542,
    -0.001_165_167_591_859_065_112,
    -0.000_215_241_674_114_950_972_8,
    0.000_128_050_282_388_116_186_2,
    -0.000_020_134_854_780_788_238_66,
    -0.000_001_250_493_482_142_670_657,
    0.000_001_133_027_231_981_695_882,
    -2.056_338_416_977_607_103e-7,
    6.116_095_104_481_415_818e-9,
    5.002_007_644_469_222_930e-9,
    -1.181_274_570_487_020_145e-9,
    1.043_426_711_691_100_510e-10,
    7.782_263_439_905_071_254e-12,
    -3.696_805_618_642_205_708e-12,
    5.100_370_287_454_475_979e-13,
    -2.058_326_053_566_506_783e-14,
    -5.348_122_539_423_017_982e-15,
    1.226_778_628_238_260_790e-15,
    -1.181_259_301_697_458_770e-16,
    1.186_692_254_751_600_333e-18,
    1.412_380_655_318_031_782e-18,
    -2.298_745_684_435_370_207e-19,
    1.714_406_321_927_337_433e-20,
    1.337_351_730_493_693_115e-22,
    -2.054_233_551_766_672_789e-22,
    2.736_030_048_607_999_845e-23,
];

/// Temme's auxiliary gamma quantities for `|mu| <= 1/2`:
/// `(gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu))`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mu2 = mu * mu;
    let mut odd = 0.0;
    let mut even = 0.0;
    // Horner over even and odd coefficient subsequences in mu^2.
    for k in (0..RGAMMA1P.len()).rev() {
        if k % 2 == 0 {
            even = even * mu2 + RGAMMA1P[k];
        } else {
            odd = odd * mu2 + RGAMMA1P[k];
        }
    }
    // 1/Gamma(1 +/- mu) = even +/- mu * odd
    let gampl = even + mu * odd;
    let gammi = even - mu * odd;
    (-odd, even, gampl, gammi)
}

/// Returns `(K_mu(x), K_{mu+1}(x))` scaled by `exp(x)`, for `|mu| <= 1/2`, `x > 0`.
fn k_pair_scaled_small_order(mu: f64, x: f64) -> (f64, f64) {
    if x < 2.0 {
        let x2 = 0.5 * x;
        let pimu = PI * mu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        let mu2 = mu * mu;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - mu2);
            c *= dd / fi;
            p /= fi - mu;
            q /= fi + mu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        let scale = x.exp();
        (sum * scale, sum1 * (2.0 / x) * scale)
    } else {
        let mu2 = mu * mu;
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut h = d;
        let mut delh = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - mu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * fi;
            c = -a * c / (fi + 1.0);
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh *= b * d - 1.0;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                break;
            }
        }
        let h = a1 * h;
        let kmu = (PI / (2.0 * x)).sqrt() / s;
        let k1 = kmu * (mu + x + 0.5 - h) / x;
        (kmu, k1)
    }
}

/// `exp(x) * K_nu(x)` for real order `nu` and `x > 0`.
///
/// Returns NaN for `x <= 0` or non-finite input.
pub fn bessel_k_scaled(nu: f64, x: f64) -> f64 {
    if !(x > 0.0) || !nu.is_finite() || !x.is_finite() {
        return f64::NAN;
    }
    let nu = nu.abs();
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let (mut kmu, mut k1) = k_pair_scaled_small_order(mu, x);
    let xi2 = 2.0 / x;
    for i in 1..=(nl as usize) {
        let next = (mu + i as f64) * xi2 * k1 + kmu;
        kmu = k1;
        k1 = next;
    }
    kmu
}

/// Modified Bessel function of the second kind `K_nu(x)`, real order, `x > 0`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    bessel_k_scaled(nu, x) * (-x).exp()
}

/// `ln K_nu(x)`, usable where `K_nu(x)` itself under- or overflows.
pub fn ln_bessel_k(nu: f64, x: f64) -> f64 {
    bessel_k_scaled(nu, x).ln() - x
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from 40-digit arithmetic.
    const K_REF: [(f64, f64, f64); 80] = [
        (0.0, 0.001, 7.0236888005623813228),
        (0.0, 0.05, 3.1142340294719898387),
        (0.0, 0.5, 0.92441907122766586178),
        (0.0, 1.0, 0.42102443824070833334),
        (0.0, 1.999, 0.11403383058923290871),
        (0.0, 2.0, 0.11389387274953343565),
        (0.0, 3.7, 0.015630659921626658481),
        (0.0, 10.0, 0.000017780062316167651811),
        (0.0, 35.0, 1.3310351491429468528e-16),
        (0.0, 120.0, 8.7635680998255777221e-54),
        (0.3, 0.001, 14.406547529041027179),
        (0.3, 0.05, 3.8119663367691106986),
        (0.3, 0.5, 0.97647412438178791708),
        (0.3, 1.0, 0.43507602420880202329),
        (0.3, 1.999, 0.11618048839092040128),
        (0.3, 2.0, 0.11603697434811925836),
        (0.3, 3.7, 0.015801315880070931975),
        (0.3, 10.0, 0.000017856607016823022447),
        (0.3, 35.0, 1.3327238168640898748e-16),
        (0.3, 120.0, 8.7668414762859244923e-54),
        (0.5, 0.001, 39.593659513116643201),
        (0.5, 0.05, 5.3316325691057585315),
        (0.5, 0.5, 1.0750476034999202387),
        (0.5, 1.0, 0.46106850444789455844),
        (0.5, 1.999, 0.12008779543145005232),
        (0.5, 2.0, 0.11993777196806144737),
        (0.5, 3.7, 0.016109033825487323195),
        (0.5, 10.0, 0.000017993478093705179608),
        (0.5, 35.0, 1.3357311366035824921e-16),
        (0.5, 120.0, 8.7726638232031406589e-54),
        (1.0, 0.001, 999.99623815608555346),
        (1.0, 0.05, 19.909674325882505397),
        (1.0, 0.5, 1.6564411200033008937),
        (1.0, 1.0, 0.60190723019723457474),
        (1.0, 1.999, 0.14004984207710966262),
        (1.0, 2.0, 0.13986588181652242728),
        (1.0, 3.7, 0.017628035102223263065),
        (1.0, 10.0, 0.000018648773453825584597),
        (1.0, 35.0, 1.3499178340011056862e-16),
        (1.0, 120.0, 8.8000075200927613541e-54),
        (1.7, 0.001, 185828.39998462762993),
        (1.7, 0.05, 240.14812072096624167),
        (1.7, 0.5, 4.4441563201861336369),
        (1.7, 1.0, 1.138717809179935705),
        (1.7, 1.999, 0.20454613783641590101),
        (1.7, 2.0, 0.20424626426274669945),
        (1.7, 3.7, 0.022075277920882639167),
        (1.7, 10.0, 0.00002040470482713355387),
        (1.7, 35.0, 1.3863340060557180958e-16),
        (1.7, 120.0, 8.8692911963255185493e-54),
        (2.5, 0.001, 118899799.1115487877),
        (2.5, 0.05, 6723.1886696423607802),
        (2.5, 0.5, 20.425904466498484536),
        (2.5, 1.0, 3.2274795311352619091),
        (2.5, 1.999, 0.3904655794952568535),
        (2.5, 2.0, 0.38979775889619970395),
        (2.5, 3.7, 0.032700514975185733994),
        (2.5, 10.0, 0.000023931325864627888879),
        (2.5, 35.0, 1.453493555177612622e-16),
        (2.5, 120.0, 8.9938080570797198296e-54),
        (4.2, 0.001, 283773842706172.33009),
        (4.2, 0.05, 20759340.747294546591),
        (4.2, 0.5, 1284.8515612520777379),
        (4.2, 1.0, 66.009022106017324966),
        (4.2, 1.999, 2.8949276880530499854),
        (4.2, 2.0, 2.8880439741189637611),
        (4.2, 3.7, 0.11699755669955022115),
        (4.2, 10.0, 0.000040876218717040479787),
        (4.2, 35.0, 1.7060592360096936916e-16),
        (4.2, 120.0, 9.4290212504435403393e-54),
        (6.9, 0.001, 1.7881773832449921429e+25),
        (6.9, 0.05, 33843212499307.492974),
        (6.9, 0.5, 4216207.379494139441),
        (6.9, 1.0, 34204.77603590485517),
        (6.9, 1.999, 253.78755913003090924),
        (6.9, 2.0, 252.87179787811989959),
        (6.9, 3.7, 2.4691958981479033854),
        (6.9, 10.0, 0.00016158106500881867277),
        (6.9, 35.0, 2.597797473766942569e-16),
        (6.9, 120.0, 1.0677147068919372951e-53),
    ];

    const ERF_REF: [(f64, f64); 12] = [
        (1e-10, 1.128379167095512615e-10),
        (0.01, 0.011283415555849617151),
        (0.1, 0.1124629160182848984),
        (0.4769362762044699, 0.50000000000000000398),
        (0.5, 0.52049987781304653768),
        (1.0, 0.84270079294971486934),
        (1.5, 0.96610514647531072707),
        (2.0, 0.99532226501895273416),
        (2.5, 0.99959304798255504106),
        (3.0, 0.99997790950300141456),
        (4.0, 0.99999998458274209972),
        (5.5, 0.99999999999999264215),
    ];

    #[test]
    fn bessel_k_matches_reference_grid() {
        for &(nu, x, want) in K_REF.iter() {
            let got = bessel_k(nu, x);
            let rel = ((got - want) / want).abs();
            assert!(rel < 1e-10, "K_{nu}({x}) = {got:e}, want {want:e}, rel {rel:e}");
        }
    }

    #[test]
    fn bessel_k_is_even_in_order() {
        for &(nu, x, _) in K_REF.iter() {
            assert_eq!(bessel_k(nu, x), bessel_k(-nu, x));
        }
    }

    #[test]
    fn bessel_k_half_order_closed_form() {
        // K_{1/2}(x) = sqrt(pi / (2x)) e^{-x}
        for x in [0.01, 0.3, 1.0, 1.99, 2.01, 7.0, 40.0] {
            let want = (PI / (2.0 * x)).sqrt() * (-x).exp();
            let got = bessel_k(0.5, x);
            assert!(((got - want) / want).abs() < 1e-13);
        }
    }

    #[test]
    fn bessel_k_rejects_nonpositive_argument() {
        assert!(bessel_k(0.3, 0.0).is_nan());
        assert!(bessel_k(0.3, -1.0).is_nan());
    }

    #[test]
    fn temme_gammas_near_zero_order() {
        let (gam1, gam2, gampl, gammi) = temme_gammas(0.0);
        assert!((gam1 + 0.577_215_664_901_532_9).abs() < 1e-15);
        assert_eq!(gam2, 1.0);
        assert_eq!(gampl, 1.0);
        assert_eq!(gammi, 1.0);
        // 1/Gamma(1.5) = 2/sqrt(pi)
        let (_, _, gampl, gammi) = temme_gammas(0.5);
        assert!((gampl - 2.0 / PI.sqrt()).abs() < 1e-15);
        assert!((gammi - 1.0 / PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn erf_accuracy() {
        for &(x, want) in ERF_REF.iter() {
            assert!((erf(x) - want).abs() < 1e-15, "erf({x})");
            assert!((erf(-x) + want).abs() < 1e-15);
        }
    }
}
