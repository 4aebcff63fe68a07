//! Likelihood-dependent weighting rules.
//!
//! Every rule is described by an effective reward `omega(q)` on the observed
//! token, where `q` is the model's probability of that token. The supervised
//! gradient multiplies `grad log pi(y*)` by the token weight `w(q) = q * omega(q)`,
//! and the one-step proximal update tilts the base by `u(q) = omega(q)` (the
//! KL strength is fixed to 1 and folded into the learning rate).
//!
//! | rule            | `omega(q)`                           | `w(q)`              |
//! |-----------------|--------------------------------------|---------------------|
//! | SFT             | `1 / q`                              | `1`                 |
//! | DFT             | `1`                                  | `q`                 |
//! | InfoSFT(p̄)      | `[logit(p̄) - logit(q)]_+`            | peaks at mid `q`    |
//! | CalibratedC(C)  | `C - logit(q)` (unclipped)           | may be negative     |
//! | Oracle(p)       | `logit(p) - logit(q)`                | may be negative     |

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{clip_nonneg, logit};

/// Calibration level used when InfoSFT is requested without one.
pub const DEFAULT_P_BAR: f64 = 0.93;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightRule {
    Sft,
    Dft,
    InfoSft {
        p_bar: f64,
    },
    /// The unclipped family `u_C(q) = C - logit(q)`; `C = logit(p̄)` gives the
    /// unclipped InfoSFT rule.
    CalibratedC {
        c: f64,
    },
    Oracle {
        p: f64,
    },
}

impl WeightRule {
    pub fn info_sft(p_bar: f64) -> Result<Self> {
        check_interior("InfoSft p_bar", p_bar)?;
        Ok(WeightRule::InfoSft { p_bar })
    }

    pub fn oracle(p: f64) -> Result<Self> {
        check_interior("Oracle p", p)?;
        Ok(WeightRule::Oracle { p })
    }

    pub fn calibrated(c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::NonFinite("calibration constant C".into()));
        }
        Ok(WeightRule::CalibratedC { c })
    }

    /// Unclipped InfoSFT: `CalibratedC(logit(p_bar))`.
    pub fn unclipped_info_sft(p_bar: f64) -> Result<Self> {
        Self::calibrated(logit(p_bar)?)
    }

    /// Short identifier used in file names and CSV columns.
    pub fn name(&self) -> &'static str {
        match self {
            WeightRule::Sft => "sft",
            WeightRule::Dft => "dft",
            WeightRule::InfoSft { .. } => "infosft",
            WeightRule::CalibratedC { .. } => "calibrated",
            WeightRule::Oracle { .. } => "oracle",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            WeightRule::InfoSft { p_bar } => check_interior("InfoSft p_bar", p_bar),
            WeightRule::Oracle { p } => check_interior("Oracle p", p),
            WeightRule::CalibratedC { c } if !c.is_finite() => {
                Err(Error::NonFinite("calibration constant C".into()))
            }
            _ => Ok(()),
        }
    }

    /// Effective reward `omega(q)`.
    ///
    /// `q = 1` is accepted only by SFT and DFT; the logit-based rules report a
    /// domain error so the caller has to clip near-certain tokens explicitly.
    pub fn omega(&self, q: f64) -> Result<f64> {
        self.validate()?;
        match *self {
            WeightRule::Sft => {
                check_unit("omega(SFT)", q)?;
                Ok(1.0 / q)
            }
            WeightRule::Dft => {
                check_unit("omega(DFT)", q)?;
                Ok(1.0)
            }
            WeightRule::InfoSft { p_bar } => Ok(clip_nonneg(logit(p_bar)? - logit(q)?)),
            WeightRule::CalibratedC { c } => Ok(c - logit(q)?),
            WeightRule::Oracle { p } => Ok(logit(p)? - logit(q)?),
        }
    }

    /// Multiplier on `grad log pi(y*)`: `q * omega(q)`. SFT returns exactly 1
    /// rather than the rounded product `q * (1 / q)`.
    pub fn token_weight(&self, q: f64) -> Result<f64> {
        let omega = self.omega(q)?;
        Ok(match self {
            WeightRule::Sft => 1.0,
            _ => q * omega,
        })
    }

    /// Proximal tilt coefficient `u(q) = omega(q) / beta` with `beta = 1`.
    pub fn u_coefficient(&self, q: f64) -> Result<f64> {
        self.omega(q)
    }
}

fn check_interior(op: &'static str, t: f64) -> Result<()> {
    if t.is_nan() || t <= 0.0 || t >= 1.0 {
        return Err(Error::Domain {
            op,
            value: t,
            domain: "(0, 1)",
        });
    }
    Ok(())
}

fn check_unit(op: &'static str, q: f64) -> Result<()> {
    if q.is_nan() || q <= 0.0 || q > 1.0 {
        return Err(Error::Domain {
            op,
            value: q,
            domain: "(0, 1]",
        });
    }
    Ok(())
}

impl fmt::Display for WeightRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightRule::Sft => write!(f, "sft"),
            WeightRule::Dft => write!(f, "dft"),
            WeightRule::InfoSft { p_bar } => write!(f, "infosft({p_bar})"),
            WeightRule::CalibratedC { c } => write!(f, "calibrated({c})"),
            WeightRule::Oracle { p } => write!(f, "oracle({p})"),
        }
    }
}

/// Parses `sft`, `dft`, `infosft`, `infosft(0.9)`, `calibrated(2.5)`,
/// `oracle(0.8)`. Bare `infosft` uses [`DEFAULT_P_BAR`].
impl FromStr for WeightRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (head, arg) = match s.find('(') {
            Some(open) if s.ends_with(')') => (&s[..open], Some(&s[open + 1..s.len() - 1])),
            Some(_) => {
                return Err(Error::Config(format!(
                    "unbalanced parentheses in rule {s:?}"
                )))
            }
            None => (s.as_str(), None),
        };
        let arg = arg
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("rule {s:?}: {e}")))
            })
            .transpose()?;
        match (head.trim(), arg) {
            ("sft", None) => Ok(WeightRule::Sft),
            ("dft", None) => Ok(WeightRule::Dft),
            ("infosft", None) => WeightRule::info_sft(DEFAULT_P_BAR),
            ("infosft", Some(p)) => WeightRule::info_sft(p),
            ("calibrated", Some(c)) => WeightRule::calibrated(c),
            ("oracle", Some(p)) => WeightRule::oracle(p),
            _ => Err(Error::Config(format!("unknown weight rule {s:?}"))),
        }
    }
}

/// `(q, w(q))` for every `q` in `grid`; the grid must lie strictly inside `(0, 1)`.
pub fn weight_curve(rule: &WeightRule, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    grid.iter()
        .map(|&q| {
            check_interior("weight_curve grid", q)?;
            Ok((q, rule.token_weight(q)?))
        })
        .collect()
}

/// Evenly spaced points `i / (n + 1)`, `i = 1..=n`.
pub fn interior_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
}

/// Number of sign changes in the first differences of `values`, ignoring
/// zero differences. A unimodal bump with flat tails gives exactly one.
pub fn difference_sign_changes(values: &[f64]) -> usize {
    let signs: Vec<f64> = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d != 0.0)
        .map(f64::signum)
        .collect();
    signs.windows(2).filter(|s| s[0] != s[1]).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const INFO: WeightRule = WeightRule::InfoSft { p_bar: 0.93 };

    #[test]
    fn omega_examples() {
        assert_eq!(WeightRule::Sft.omega(0.25).unwrap(), 4.0);
        for q in [0.01, 0.5, 1.0] {
            assert_eq!(WeightRule::Dft.omega(q).unwrap(), 1.0);
        }
        let expected = crate::numerics::logit(0.93).unwrap();
        assert_abs_diff_eq!(INFO.omega(0.5).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(INFO.omega(0.5).unwrap(), 2.5867, epsilon = 1e-4);
    }

    #[test]
    fn token_weight_examples() {
        assert_eq!(WeightRule::Sft.token_weight(0.01).unwrap(), 1.0);
        assert_abs_diff_eq!(INFO.token_weight(0.5).unwrap(), 1.2934, epsilon = 1e-4);
        assert_eq!(INFO.token_weight(0.95).unwrap(), 0.0);
        assert_eq!(WeightRule::Dft.token_weight(0.37).unwrap(), 0.37);
    }

    #[test]
    fn u_coefficient_examples() {
        for q in [0.1, 0.5, 0.8] {
            assert_eq!(
                WeightRule::oracle(q).unwrap().u_coefficient(q).unwrap(),
                0.0
            );
        }
        let u = WeightRule::oracle(0.5).unwrap().u_coefficient(0.2).unwrap();
        assert_abs_diff_eq!(u, 4f64.ln(), epsilon = 1e-15);
        assert_eq!(
            WeightRule::CalibratedC { c: 0.0 }
                .u_coefficient(0.5)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn q_one_is_domain_error_for_logit_rules() {
        assert!(WeightRule::Sft.omega(1.0).is_ok());
        assert!(WeightRule::Dft.omega(1.0).is_ok());
        for rule in [
            INFO,
            WeightRule::CalibratedC { c: 1.0 },
            WeightRule::Oracle { p: 0.5 },
        ] {
            assert!(
                matches!(rule.omega(1.0), Err(Error::Domain { .. })),
                "{rule}"
            );
            assert!(rule.omega(0.0).is_err());
        }
        assert!(WeightRule::Sft.omega(0.0).is_err());
        assert!(WeightRule::info_sft(1.0).is_err());
        assert!(WeightRule::InfoSft { p_bar: 0.0 }.omega(0.5).is_err());
    }

    #[test]
    fn curves() {
        let grid = interior_grid(10_000);
        for (q, w) in weight_curve(&WeightRule::Dft, &grid).unwrap() {
            assert_eq!(w, q);
        }
        for (_, w) in weight_curve(&WeightRule::Sft, &grid).unwrap() {
            assert_eq!(w, 1.0);
        }
        let info: Vec<f64> = weight_curve(&INFO, &grid)
            .unwrap()
            .into_iter()
            .map(|(_, w)| w)
            .collect();
        assert_eq!(difference_sign_changes(&info), 1);
        assert!(info[0] < 2e-3 && info[0] < info[1]);
        assert_eq!(*info.last().unwrap(), 0.0);
        assert!(weight_curve(&INFO, &[0.0, 0.5]).is_err());
        assert!(weight_curve(&WeightRule::Sft, &[0.5, 1.0]).is_err());
    }

    #[test]
    fn info_sft_small_q_asymptotics() {
        let ratio = |q: f64| INFO.token_weight(q).unwrap() / (q * (1.0 / q).ln());
        // 1 + logit(p_bar) / ln(1/q) + O(q), from a 30-digit evaluation
        assert_abs_diff_eq!(ratio(1e-6), 1.187_230_745_707_496_5, epsilon = 1e-12);
        let mut prev = f64::INFINITY;
        for e in [6, 12, 50, 100, 300] {
            let q = 10f64.powi(-e);
            let r = ratio(q);
            assert_abs_diff_eq!(
                r,
                1.0 + logit(0.93).unwrap() / (1.0 / q).ln(),
                epsilon = 1e-5
            );
            assert!(r < prev && r > 1.0);
            prev = r;
        }
        assert!(prev < 1.004);
    }

    #[test]
    fn info_sft_half_support() {
        let rule = WeightRule::info_sft(0.5).unwrap();
        let grid = interior_grid(999);
        for (q, w) in weight_curve(&rule, &grid).unwrap() {
            if q >= 0.5 {
                assert_eq!(w, 0.0);
            } else {
                assert!(w > 0.0);
            }
        }
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("sft".parse::<WeightRule>().unwrap(), WeightRule::Sft);
        assert_eq!("DFT".parse::<WeightRule>().unwrap(), WeightRule::Dft);
        assert_eq!("infosft".parse::<WeightRule>().unwrap(), INFO);
        assert_eq!(
            "infosft(0.9)".parse::<WeightRule>().unwrap(),
            WeightRule::InfoSft { p_bar: 0.9 }
        );
        assert_eq!(
            "calibrated(-1.5)".parse::<WeightRule>().unwrap(),
            WeightRule::CalibratedC { c: -1.5 }
        );
        for bad in [
            "",
            "infosft(1.2)",
            "oracle",
            "calibrated(x)",
            "sft(1)",
            "infosft(0.9",
        ] {
            assert!(bad.parse::<WeightRule>().is_err(), "{bad}");
        }
        for rule in [
            WeightRule::Sft,
            INFO,
            WeightRule::Oracle { p: 0.25 },
            WeightRule::CalibratedC { c: 2.0 },
        ] {
            assert_eq!(rule.to_string().parse::<WeightRule>().unwrap(), rule);
        }
    }

    proptest! {
        #[test]
        fn weight_is_q_times_omega(q in 1e-9f64..0.999_999, p in 0.01f64..0.99, c in -5.0f64..5.0) {
            for rule in [WeightRule::Dft, WeightRule::InfoSft { p_bar: p },
                         WeightRule::CalibratedC { c }, WeightRule::Oracle { p }] {
                prop_assert_eq!(rule.token_weight(q).unwrap(), q * rule.omega(q).unwrap());
            }
            let sft = q * WeightRule::Sft.omega(q).unwrap();
            prop_assert!((WeightRule::Sft.token_weight(q).unwrap() - sft).abs() <= f64::EPSILON);
        }

        #[test]
        fn calibrated_matches_info_sft_below_p_bar(p_bar in 0.05f64..0.99, frac in 0.001f64..0.999) {
            let q = p_bar * frac;
            let info = WeightRule::InfoSft { p_bar }.token_weight(q).unwrap();
            let cal = WeightRule::unclipped_info_sft(p_bar).unwrap().token_weight(q).unwrap();
            prop_assert!((info - cal).abs() <= 1e-14);
        }

        #[test]
        fn info_sft_unimodal_below_p_bar(p_bar in 0.2f64..0.99, n in 50usize..2000) {
            let rule = WeightRule::InfoSft { p_bar };
            let grid: Vec<f64> = (1..n).map(|i| p_bar * i as f64 / n as f64).collect();
            let w: Vec<f64> = weight_curve(&rule, &grid).unwrap().into_iter().map(|x| x.1).collect();
            prop_assert!(difference_sign_changes(&w) <= 1);
            prop_assert!(w.iter().all(|&v| v >= 0.0));
        }
    }
}
