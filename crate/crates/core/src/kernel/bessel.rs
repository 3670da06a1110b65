//! Modified Bessel function of the second kind, `K_nu(x)`, for real order
//! `nu >= 0` and argument `x > 0`.
//!
//! Half-integer orders use the finite exponential-polynomial closed form.
//! Everything else goes through Temme's method: the order is split as
//! `nu = mu + m` with `|mu| <= 1/2`, `K_mu` and `K_{mu+1}` are computed by
//! Temme's series for `x < 2` (for `mu = 0` this is the classical
//! logarithmic series of `K_0`) or Steed's continued fraction for `x >= 2`,
//! and forward recurrence lifts the pair to order `nu`. Forward recurrence
//! is stable for `K`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const SERIES_SWITCH: f64 = 2.0;
const EPS: f64 = 1e-17;
const MAX_ITER: usize = 10_000;

/// Taylor coefficients `c_k` of `1/Gamma(z) = sum_k c_k z^k` (k = 1..26).
const RECIP_GAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// `K_nu(x)`.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    Ok(bessel_k_scaled(nu, x)? * (-x).exp())
}

/// Exponentially scaled `e^x K_nu(x)`; finite for all `x > 0`.
pub fn bessel_k_scaled(nu: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("K_nu requires x > 0, got x = {x}")));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::Domain(format!("K_nu requires nu >= 0, got nu = {nu}")));
    }
    if let Some(n) = half_integer_index(nu) {
        return Ok(half_integer_scaled(n, x));
    }
    Ok(temme_scaled(nu, x))
}

/// Returns `n` when `nu = n + 1/2`.
pub(crate) fn half_integer_index(nu: f64) -> Option<u32> {
    let twice = 2.0 * nu;
    if twice.fract() == 0.0 && nu.fract() != 0.0 && twice < 200.0 {
        Some((nu - 0.5) as u32)
    } else {
        None
    }
}

/// `e^x K_{n+1/2}(x) = sqrt(pi/(2x)) * sum_{k=0}^{n} (n+k)! / (k! (n-k)!) (2x)^{-k}`.
fn half_integer_scaled(n: u32, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..n {
        let k = f64::from(k);
        let n = f64::from(n);
        // ratio of consecutive terms: (n+k+1)(n-k) / ((k+1) * 2x)
        term *= (n + k + 1.0) * (n - k) / ((k + 1.0) * 2.0 * x);
        sum += term;
    }
    (PI / (2.0 * x)).sqrt() * sum
}

/// `(gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu))` for `|mu| <= 1/2`, where
/// `gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)` and
/// `gam2 = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2`, both evaluated from the
/// Taylor series so that `mu -> 0` carries no cancellation.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mu2 = mu * mu;
    // 1/Gamma(1+mu) = sum_k c_{k+1} mu^k; split into even and odd parts.
    let mut even = 0.0;
    let mut odd = 0.0;
    let mut p = 1.0;
    for (k, c) in RECIP_GAMMA.iter().enumerate() {
        if k % 2 == 0 {
            even += c * p;
        } else {
            odd += c * p;
            p *= mu2;
        }
    }
    // even = sum c_{2j+1} mu^{2j}, odd = sum c_{2j+2} mu^{2j}
    let gampl = even + mu * odd;
    let gammi = even - mu * odd;
    (-odd, even, gampl, gammi)
}

fn temme_scaled(nu: f64, x: f64) -> f64 {
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let mu2 = mu * mu;
    let xi2 = 2.0 / x;

    let (mut k_mu, mut k_mu1) = if x < SERIES_SWITCH {
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
        (sum * scale, sum1 * xi2 * scale)
    } else {
        // Steed's algorithm for the continued fraction CF2.
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
        h *= a1;
        let k_mu = (PI / (2.0 * x)).sqrt() / s;
        let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
        (k_mu, k_mu1)
    };

    for i in 1..=(nl as u64) {
        let next = (mu + i as f64) * xi2 * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
    }
    k_mu
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn half_order_closed_form() {
        let v = bessel_k(0.5, 1.0).unwrap();
        assert_relative_eq!(v, (PI / 2.0).sqrt() * (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(v, 0.461_068_504_447_894_5, max_relative = 1e-14);
    }

    #[test]
    fn three_halves_closed_form() {
        let v = bessel_k(1.5, 2.0).unwrap();
        let expected = (PI / 4.0).sqrt() * (-2.0f64).exp() * 1.5;
        assert_relative_eq!(v, expected, max_relative = 1e-15);
        assert_relative_eq!(v, 0.179_906_657_952_092_2, max_relative = 1e-14);
    }

    #[test]
    fn temme_agrees_with_closed_form_at_half_orders() {
        // Drive the general path with half-integer orders and compare.
        for &nu in &[0.5, 1.5, 2.5, 3.5] {
            for &x in &[0.01, 0.3, 1.0, 1.99, 2.0, 2.01, 5.0, 20.0, 100.0] {
                let n = half_integer_index(nu).unwrap();
                let closed = half_integer_scaled(n, x);
                let temme = temme_scaled(nu, x);
                assert_relative_eq!(temme, closed, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn reciprocal_gamma_series_matches_statrs() {
        use statrs::function::gamma::gamma;
        for &mu in &[-0.5, -0.3, -0.01, 0.0, 1e-6, 0.2, 0.5] {
            let (_, _, gampl, gammi) = temme_gammas(mu);
            assert_relative_eq!(gampl, 1.0 / gamma(1.0 + mu), max_relative = 1e-14);
            assert_relative_eq!(gammi, 1.0 / gamma(1.0 - mu), max_relative = 1e-14);
        }
    }

    #[test]
    fn known_integer_order_values() {
        // Reference values from standard tables (A&S 9.8 / DLMF).
        assert_relative_eq!(bessel_k(0.0, 1.0).unwrap(), 0.421_024_438_240_708_3, max_relative = 1e-14);
        assert_relative_eq!(bessel_k(1.0, 1.0).unwrap(), 0.601_907_230_197_234_6, max_relative = 1e-14);
        assert_relative_eq!(bessel_k(2.0, 1.0).unwrap(), 1.624_838_898_635_177_5, max_relative = 1e-14);
        assert_relative_eq!(bessel_k(0.0, 2.0).unwrap(), 0.113_893_872_749_533_4, max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_domain() {
        assert!(bessel_k(1.0, 0.0).is_err());
        assert!(bessel_k(1.0, -1.0).is_err());
        assert!(bessel_k(-0.5, 1.0).is_err());
        assert!(bessel_k(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn large_argument_does_not_underflow_scaled() {
        let v = bessel_k_scaled(2.0, 1e4).unwrap();
        assert_relative_eq!(v, (PI / 2e4).sqrt(), max_relative = 1e-3);
        assert_eq!(bessel_k(2.0, 1e4).unwrap(), 0.0);
    }
}
