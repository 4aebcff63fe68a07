//! Scalar primitives shared by every other module.
//!
//! All logarithms are natural (nats). Nothing here clamps silently: a
//! probability of exactly 0 or 1 handed to [`logit`] is a domain error and the
//! caller decides how to clip.

use crate::error::{Error, Result};

/// A probability in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value <= 0.0 || value > 1.0 {
            return Err(Error::Domain {
                op: "Probability::new",
                value,
                domain: "(0, 1]",
            });
        }
        Ok(Self(value))
    }

    /// Like [`Probability::new`] but also rejects 1.
    pub fn interior(value: f64) -> Result<Self> {
        if value.is_nan() || value <= 0.0 || value >= 1.0 {
            return Err(Error::Domain {
                op: "Probability::interior",
                value,
                domain: "(0, 1)",
            });
        }
        Ok(Self(value))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Log-odds `log(t / (1 - t))` for `0 < t < 1`.
pub fn logit(t: f64) -> Result<f64> {
    if t.is_nan() || t <= 0.0 || t >= 1.0 {
        return Err(Error::Domain {
            op: "logit",
            value: t,
            domain: "(0, 1)",
        });
    }
    Ok(t.ln() - (-t).ln_1p())
}

/// Logistic function, the inverse of [`logit`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary entropy in nats with `0 log 0 = 0`.
pub fn binary_entropy(t: f64) -> Result<f64> {
    if t.is_nan() || !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain {
            op: "binary_entropy",
            value: t,
            domain: "[0, 1]",
        });
    }
    Ok(xlogx_neg(t) + xlogx_neg(1.0 - t))
}

/// `[x]_+`.
pub fn clip_nonneg(x: f64) -> f64 {
    x.max(0.0)
}

/// `-t log t` with the `0 log 0 = 0` convention.
pub(crate) fn xlogx_neg(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        -t * t.ln()
    }
}

/// `log(1 + q (e^u - 1))`, i.e. the log-partition of a single-outcome tilt.
pub(crate) fn log_tilt_partition(q: f64, u: f64) -> f64 {
    (q * u.exp_m1()).ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logit_values() {
        assert_eq!(logit(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(logit(0.93).unwrap(), 2.5867, epsilon = 1e-4);
        assert_abs_diff_eq!(logit(0.2).unwrap(), -1.3863, epsilon = 1e-4);
        // log(0.93 / 0.07) and log(0.25) evaluated directly
        assert_abs_diff_eq!(logit(0.93).unwrap(), (0.93f64 / 0.07).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(logit(0.2).unwrap(), 0.25f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn logit_is_odd() {
        for i in 1..1000 {
            let t = i as f64 / 1000.0;
            assert_abs_diff_eq!(logit(1.0 - t).unwrap(), -logit(t).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn logit_rejects_boundaries() {
        for t in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(logit(t), Err(Error::Domain { .. })), "{t}");
        }
    }

    #[test]
    fn logit_sigmoid_round_trip() {
        // Below x ~ 12 the f64 value of sigmoid(x) keeps enough of 1 - t to
        // recover x to 1e-10. Above that, t sits within a few thousand ulps of
        // 1 and the representation error of t itself bounds the round trip.
        for i in 0..=6000 {
            let x = -30.0 + i as f64 * 0.01;
            let t = sigmoid(x);
            let back = logit(t).unwrap();
            if x <= 12.0 {
                assert!(
                    (back - x).abs() <= 1e-10 * x.abs().max(1.0),
                    "x = {x}, back = {back}"
                );
            } else {
                // |d logit / dt| = 1 / (t (1 - t)); sigmoid rounds t by at most two ulps.
                let bound = 2.0 * f64::EPSILON / (t * (1.0 - t)) + 1e-12;
                assert!(
                    (back - x).abs() <= bound,
                    "x = {x}, back = {back}, bound = {bound}"
                );
            }
        }
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(binary_entropy(0.5).unwrap(), 2f64.ln(), epsilon = 1e-15);
        let direct = -0.93 * 0.93f64.ln() - 0.07 * 0.07f64.ln();
        assert_abs_diff_eq!(binary_entropy(0.93).unwrap(), direct, epsilon = 1e-15);
        assert_abs_diff_eq!(
            binary_entropy(0.93).unwrap(),
            0.253_638_946_921_691_4,
            epsilon = 1e-15
        );
        assert!(binary_entropy(-0.01).is_err());
        assert!(binary_entropy(1.01).is_err());
    }

    #[test]
    fn binary_entropy_symmetric_and_bounded() {
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            let h = binary_entropy(t).unwrap();
            assert_abs_diff_eq!(h, binary_entropy(1.0 - t).unwrap(), epsilon = 1e-12);
            if t > 0.0 {
                assert!(h <= t * (1.0 - t.ln()) + 1e-15, "t = {t}");
            }
        }
    }

    #[test]
    fn clip() {
        assert_eq!(clip_nonneg(-3.2), 0.0);
        assert_eq!(clip_nonneg(0.0), 0.0);
        assert_eq!(clip_nonneg(1.7), 1.7);
    }

    #[test]
    fn probability_constructor() {
        assert!(Probability::new(1.0).is_ok());
        assert!(Probability::new(0.0).is_err());
        assert!(Probability::new(-0.5).is_err());
        assert!(Probability::new(1.0 + 1e-12).is_err());
        assert!(Probability::new(f64::NAN).is_err());
        assert!(Probability::interior(1.0).is_err());
        assert_eq!(Probability::interior(0.3).unwrap().get(), 0.3);
    }

    #[test]
    fn tilt_partition_matches_direct() {
        for &(q, u) in &[(0.2, 4f64.ln()), (0.01, 7.0), (0.9, -3.0)] {
            let direct = (q * u.exp() + 1.0 - q).ln();
            assert_abs_diff_eq!(log_tilt_partition(q, u), direct, epsilon = 1e-13);
        }
    }
}
