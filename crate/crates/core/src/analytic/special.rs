//! Special functions used by the coverage analysis.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Euler's gamma function.
///
/// Returns a domain error at the poles (zero and the negative integers).
pub fn gamma_function(x: f64) -> Result<f64> {
    if x.is_nan() || (x <= 0.0 && x == x.floor()) {
        return Err(Error::Domain(format!("gamma function has a pole at {x}")));
    }
    Ok(statrs::function::gamma::gamma(x))
}

/// `Γ(1 + 2/α) Γ(1 − 2/α)`, the constant of the PPP interference Laplace
/// transform under Rayleigh fading. Requires `α > 2`.
pub fn ppp_gamma_product(alpha: f64) -> Result<f64> {
    if !(alpha > 2.0) {
        return Err(Error::Domain(format!(
            "path-loss exponent must exceed 2, got {alpha}"
        )));
    }
    let delta = 2.0 / alpha;
    Ok(gamma_function(1.0 + delta)? * gamma_function(1.0 - delta)?)
}

const I0_SERIES_LIMIT: f64 = 20.0;

/// Exponentially scaled modified Bessel function `e^{-x} I₀(x)` for `x >= 0`.
///
/// Power series below 20, Hankel asymptotic expansion above.
pub fn bessel_i0_scaled(x: f64) -> f64 {
    let x = x.abs();
    if x < I0_SERIES_LIMIT {
        let y = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > sum * 1e-17 {
            term *= y / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            let kf = k as f64;
            let next = term * (2.0 * kf - 1.0).powi(2) / (8.0 * kf * x);
            if next >= term || next < sum * 1e-17 {
                break;
            }
            term = next;
            sum += term;
        }
        sum / (2.0 * PI * x).sqrt()
    }
}

/// Rician density of the distance `u` between the origin and a point
/// Gaussian-displaced (std `sigma` per axis) from a center at distance `v`.
pub fn rician_pdf(u: f64, v: f64, sigma: f64) -> Result<f64> {
    if !(u >= 0.0 && v >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Rician arguments must be non-negative, got u={u}, v={v}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be > 0, got {sigma}"
        )));
    }
    Ok(rician_pdf_unchecked(u, v, sigma))
}

#[inline]
pub(crate) fn rician_pdf_unchecked(u: f64, v: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let d = u - v;
    (u / s2) * (-0.5 * d * d / s2).exp() * bessel_i0_scaled(u * v / s2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gamma_known_values() {
        assert!(rel(gamma_function(1.0).unwrap(), 1.0) < 1e-14);
        assert!(rel(gamma_function(0.5).unwrap(), PI.sqrt()) < 1e-13);
        assert!(rel(gamma_function(1.5).unwrap(), PI.sqrt() / 2.0) < 1e-13);
        let mut fact = 1.0;
        for n in 1..10 {
            fact *= n as f64;
            assert!(rel(gamma_function(n as f64 + 1.0).unwrap(), fact) < 1e-13);
        }
    }

    #[test]
    fn gamma_matches_high_precision_reference() {
        // 25-digit reference values
        let cases = [
            (0.1, 9.513_507_698_668_731_836),
            (1.0 / 3.0, 2.678_938_534_707_747_789),
            (0.75, 1.225_416_702_465_177_645),
            (2.5, 1.329_340_388_179_137_020),
            (3.7, 4.170_651_783_796_603_165),
            (7.25, 1_155.381_013_919_989_687),
            (9.9, 289_867.703_840_109_406_8),
        ];
        for (x, want) in cases {
            let got = gamma_function(x).unwrap();
            assert!(rel(got, want) < 1e-12, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn gamma_poles_are_domain_errors() {
        for x in [0.0, -1.0, -7.0] {
            assert!(matches!(gamma_function(x), Err(Error::Domain(_))));
        }
        assert!(gamma_function(-0.5).is_ok());
    }

    #[test]
    fn gamma_product_at_alpha_four() {
        assert!(rel(ppp_gamma_product(4.0).unwrap(), PI / 2.0) < 1e-13);
        assert!(ppp_gamma_product(2.0).is_err());
    }

    #[test]
    fn bessel_i0_scaled_reference() {
        let cases = [
            (0.0, 1.0),
            (0.5, 0.645_035_270_449_150_068_1),
            (5.0, 0.183_540_812_609_328_353_1),
            (19.9, 0.090_008_588_864_389_594_04),
            (20.1, 0.089_553_763_620_613_447_24),
            (35.0, 0.067_678_378_350_413_625_73),
            (200.0, 0.028_227_159_949_111_915_67),
        ];
        for (x, want) in cases {
            let got = bessel_i0_scaled(x);
            assert!(rel(got, want) < 1e-13, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn rician_reduces_to_rayleigh() {
        let sigma = 50.0;
        for u in [1.0f64, 30.0, 80.0, 200.0] {
            let rayleigh = u / (sigma * sigma) * (-u * u / (2.0 * sigma * sigma)).exp();
            assert!(rel(rician_pdf(u, 0.0, sigma).unwrap(), rayleigh) < 1e-14);
        }
    }

    #[test]
    fn rician_vanishes_at_origin() {
        assert_eq!(rician_pdf(0.0, 10.0, 50.0).unwrap(), 0.0);
    }

    #[test]
    fn rician_rejects_negative_inputs() {
        assert!(rician_pdf(-1.0, 0.0, 1.0).is_err());
        assert!(rician_pdf(1.0, -1.0, 1.0).is_err());
        assert!(rician_pdf(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn rician_large_argument_is_finite() {
        // u*v/σ² = 4e6, the unscaled Bessel function would overflow
        let p = rician_pdf(2000.0, 2000.0, 1.0).unwrap();
        assert!(p.is_finite() && p > 0.0);
    }
}
