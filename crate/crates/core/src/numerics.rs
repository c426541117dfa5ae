//! Principal branch of the Lambert W function on `[0, inf)`.
//!
//! The allocator needs `W(exp(z))` where `z` grows like `b / lambda`, so
//! [`lambert_w_of_exp`] never forms `exp(z)` once `z` passes
//! [`WEvalConfig::log_domain_threshold`]; it solves `w + ln w = z` instead.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WEvalConfig {
    /// Residual tolerance, relative to `max(1, |target|)`.
    pub abs_tol: f64,
    pub max_iter: usize,
    /// Above this `z`, `W(exp(z))` is evaluated in the log domain.
    pub log_domain_threshold: f64,
}

impl Default for WEvalConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_iter: 64,
            log_domain_threshold: 30.0,
        }
    }
}

impl WEvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || self.max_iter == 0 || !self.log_domain_threshold.is_finite() {
            return Err(Error::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// `W(x)` for `x >= 0` with the default configuration.
pub fn lambert_w(x: f64) -> Result<f64> {
    lambert_w_with(x, &WEvalConfig::default())
}

/// `W(exp(z))` with the default configuration.
pub fn lambert_w_of_exp(z: f64) -> Result<f64> {
    lambert_w_of_exp_with(z, &WEvalConfig::default())
}

pub fn lambert_w_with(x: f64, cfg: &WEvalConfig) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }

    let mut w = initial_guess(x);
    for _ in 0..cfg.max_iter {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let next = w - f / denom;
        // Halley can step below zero from a poor guess near the origin.
        let next = if next <= 0.0 { 0.5 * w } else { next };
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * next;
        w = next;
        if done {
            break;
        }
    }

    let residual = (w * w.exp() - x).abs();
    if residual <= cfg.abs_tol * x.max(1.0) {
        Ok(w)
    } else {
        Err(Error::NonConvergence {
            what: "lambert_w",
            iterations: cfg.max_iter,
        })
    }
}

pub fn lambert_w_of_exp_with(z: f64, cfg: &WEvalConfig) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain(z));
    }
    if z <= cfg.log_domain_threshold {
        lambert_w_with(z.exp(), cfg)
    } else {
        solve_log_domain(z, cfg)
    }
}

/// Solves `w + ln w = z` with Halley steps. Valid for any finite `z`, but only
/// used above the threshold; tests compare it against the direct route.
pub(crate) fn solve_log_domain(z: f64, cfg: &WEvalConfig) -> Result<f64> {
    let mut w = if z > 1.0 {
        let lz = z.ln();
        z - lz + lz / z
    } else {
        z.exp()
    };
    if w <= 0.0 {
        return Err(Error::Domain(z));
    }

    for _ in 0..cfg.max_iter {
        let f = w + w.ln() - z;
        let d1 = 1.0 + 1.0 / w;
        let d2 = -1.0 / (w * w);
        let next = w - 2.0 * f * d1 / (2.0 * d1 * d1 - f * d2);
        let next = if next <= 0.0 { 0.5 * w } else { next };
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * next;
        w = next;
        if done {
            break;
        }
    }

    let residual = (w + w.ln() - z).abs();
    if residual <= cfg.abs_tol * z.abs().max(1.0) {
        Ok(w)
    } else {
        Err(Error::NonConvergence {
            what: "lambert_w_of_exp",
            iterations: cfg.max_iter,
        })
    }
}

fn initial_guess(x: f64) -> f64 {
    if x < 0.1 {
        // W(x) = x - x^2 + 3/2 x^3 - ...
        x * (1.0 - x * (1.0 - 1.5 * x))
    } else if x < 20.0 {
        // Winitzki's global approximation
        let l = x.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::E;

    /// Bisection on `w e^w = x` over a bracketing interval; independent of
    /// the Halley path.
    fn bisect_w(x: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Fixed point `w <- z - ln w`, contracting for large `z`.
    fn fixed_point_log(z: f64) -> f64 {
        let mut w = z;
        for _ in 0..200 {
            let next = z - w.ln();
            if (next + next.ln() - z).abs() < 1e-12 {
                return next;
            }
            w = next;
        }
        w
    }

    #[test]
    fn oracle_omega_constant() {
        let omega = bisect_w(1.0, 0.0, 1.0);
        assert!((omega - 0.567_143_290_409_783_8).abs() < 1e-15);
        assert!((lambert_w(1.0).unwrap() - omega).abs() < 1e-14);
        assert!((lambert_w_of_exp(0.0).unwrap() - omega).abs() < 1e-14);
    }

    #[test]
    fn trivial_points() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert!((lambert_w(E).unwrap() - 1.0).abs() < 1e-15);
        assert!((lambert_w_of_exp(1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn large_exponent_matches_fixed_point_oracle() {
        let oracle = fixed_point_log(1000.0);
        assert!((oracle - 993.099_169_472).abs() < 1e-8);
        let w = lambert_w_of_exp(1000.0).unwrap();
        assert!((w - oracle).abs() < 1e-10, "{w} vs {oracle}");
    }

    #[test]
    fn rejects_negative_argument() {
        assert_eq!(lambert_w(-0.1), Err(Error::Domain(-0.1)));
        assert!(lambert_w_of_exp(f64::NAN).is_err());
    }

    #[test]
    fn tiny_and_huge_arguments() {
        let w = lambert_w(1e-300).unwrap();
        assert!((w - 1e-300).abs() < 1e-310);
        let w = lambert_w(1e300).unwrap();
        assert!(w.is_finite() && w > 600.0);
        let w = lambert_w_of_exp(1e8).unwrap();
        assert!(w.is_finite());
        assert!((w + w.ln() - 1e8).abs() <= 1e-12 * 1e8);
        // far negative exponent: W(e^z) ~ e^z
        let w = lambert_w_of_exp(-30.0).unwrap();
        assert!((w / (-30.0f64).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(WEvalConfig::default().validate().is_ok());
        let bad = WEvalConfig {
            abs_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn defining_identity(x in 0.0f64..1e6) {
            let w = lambert_w(x).unwrap();
            prop_assert!(w >= 0.0);
            prop_assert!((w * w.exp() - x).abs() <= 1e-12 * x.max(1.0));
        }

        #[test]
        fn monotone(x1 in 0.0f64..1e6, x2 in 0.0f64..1e6) {
            let (lo, hi) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
            prop_assert!(lambert_w(lo).unwrap() <= lambert_w(hi).unwrap());
        }

        #[test]
        fn log_domain_agrees_with_direct(z in -30.0f64..30.0) {
            let cfg = WEvalConfig::default();
            let direct = lambert_w(z.exp()).unwrap();
            let logd = solve_log_domain(z, &cfg).unwrap();
            prop_assert!((direct - logd).abs() <= 10.0 * cfg.abs_tol, "{direct} {logd}");
            prop_assert_eq!(lambert_w_of_exp(z).unwrap(), direct);
        }

        #[test]
        fn log_domain_finite(z in 30.0f64..1e8) {
            let w = lambert_w_of_exp(z).unwrap();
            prop_assert!(w.is_finite() && w > 0.0);
            prop_assert!((w + w.ln() - z).abs() <= 1e-12 * z);
        }
    }
}
