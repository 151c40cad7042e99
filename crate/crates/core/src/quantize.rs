//! Uniform quantizers `R -> Z`, optionally rescaled to a step `eps` as
//! `q_eps(x) = eps * q(x / eps)`.
//!
//! Every quantizer here returns either `floor(x)` or `ceil(x)` (in units of
//! the step). The randomized ones consume exactly one uniform `f64` draw per
//! call, whatever the input, so random streams stay aligned across inputs.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizeError {
    #[error("cannot quantize non-finite value {0}")]
    NonFinite(f64),
    #[error("quantizer step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("biased quantizer needs 0 < p < 1, got {0}")]
    BadBias(f64),
    #[error("unknown quantizer `{0}` (expected det, prob, floor, ceil, tie_alt or biased:<p>)")]
    Unknown(String),
}

fn check_finite(x: f64) -> Result<(), QuantizeError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(QuantizeError::NonFinite(x))
    }
}

/// `(floor(x), x - floor(x))`. The subtraction is exact for every finite `x`
/// whose fractional part decides a rounding branch below.
fn split(x: f64) -> (f64, f64) {
    let f = x.floor();
    (f, x - f)
}

fn round_half_up(x: f64) -> f64 {
    let (f, frac) = split(x);
    if frac >= 0.5 {
        f + 1.0
    } else {
        f
    }
}

/// Nearest-integer quantizer, ties rounded up: `q_d(x) = floor(x + 1/2)`.
///
/// This is the form under which `q_d(x) = ceil(floor(2x) / 2)` holds for all
/// real `x`, which the symbolic dynamics depends on. `|x - q_d(x)| <= 1/2`.
pub fn quantize_det(x: f64) -> Result<i64, QuantizeError> {
    check_finite(x)?;
    Ok(round_half_up(x) as i64)
}

/// Randomized rounding: `ceil(x)` with probability `x - floor(x)`, otherwise
/// `floor(x)`. Unbiased, with `E[(x - q)^2] <= 1/4`.
pub fn quantize_prob<R: Rng + ?Sized>(x: f64, rng: &mut R) -> Result<i64, QuantizeError> {
    check_finite(x)?;
    let u: f64 = rng.gen();
    let (f, frac) = split(x);
    Ok(if u < frac { f as i64 + 1 } else { f as i64 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantizerKind {
    Deterministic,
    Probabilistic,
    Floor,
    Ceil,
    /// Nearest integer, but `y + 1/2` goes to `y` for odd `y` and to `y + 1`
    /// for even `y`, so ties do not drift in one direction.
    TieAlternating,
    /// Rounds `a + 1/2` up with probability `p`; off half-integers it follows
    /// the [`QuantizerKind::Probabilistic`] law.
    BiasedProbabilistic(f64),
}

impl QuantizerKind {
    pub fn is_random(self) -> bool {
        matches!(self, Self::Probabilistic | Self::BiasedProbabilistic(_))
    }

    fn apply_unit<R: Rng + ?Sized>(self, x: f64, rng: &mut R) -> f64 {
        match self {
            Self::Deterministic => round_half_up(x),
            Self::Floor => x.floor(),
            Self::Ceil => x.ceil(),
            Self::TieAlternating => {
                let (f, frac) = split(x);
                if frac == 0.5 {
                    if f.rem_euclid(2.0) == 1.0 {
                        f
                    } else {
                        f + 1.0
                    }
                } else {
                    round_half_up(x)
                }
            }
            Self::Probabilistic => {
                let u: f64 = rng.gen();
                let (f, frac) = split(x);
                if u < frac {
                    f + 1.0
                } else {
                    f
                }
            }
            Self::BiasedProbabilistic(p) => {
                let u: f64 = rng.gen();
                let (f, frac) = split(x);
                let up = if frac == 0.5 { p } else { frac };
                if u < up {
                    f + 1.0
                } else {
                    f
                }
            }
        }
    }
}

impl fmt::Display for QuantizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Deterministic => f.write_str("det"),
            Self::Probabilistic => f.write_str("prob"),
            Self::Floor => f.write_str("floor"),
            Self::Ceil => f.write_str("ceil"),
            Self::TieAlternating => f.write_str("tie_alt"),
            Self::BiasedProbabilistic(p) => write!(f, "biased:{p}"),
        }
    }
}

impl FromStr for QuantizerKind {
    type Err = QuantizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.trim() {
            "det" | "deterministic" => Self::Deterministic,
            "prob" | "probabilistic" => Self::Probabilistic,
            "floor" => Self::Floor,
            "ceil" => Self::Ceil,
            "tie_alt" => Self::TieAlternating,
            other => match other.strip_prefix("biased:") {
                Some(p) => {
                    let p: f64 = p.trim().parse().map_err(|_| QuantizeError::Unknown(other.to_string()))?;
                    if !(p > 0.0 && p < 1.0) {
                        return Err(QuantizeError::BadBias(p));
                    }
                    Self::BiasedProbabilistic(p)
                }
                None => return Err(QuantizeError::Unknown(other.to_string())),
            },
        };
        Ok(kind)
    }
}

/// A quantizer variant together with its step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    kind: QuantizerKind,
    step: f64,
}

impl Quantizer {
    pub fn new(kind: QuantizerKind, step: f64) -> Result<Self, QuantizeError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(QuantizeError::BadStep(step));
        }
        if let QuantizerKind::BiasedProbabilistic(p) = kind {
            if !(p > 0.0 && p < 1.0) {
                return Err(QuantizeError::BadBias(p));
            }
        }
        Ok(Self { kind, step })
    }

    /// Unit-step quantizer. Panics on an invalid bias.
    pub fn unit(kind: QuantizerKind) -> Self {
        Self::new(kind, 1.0).expect("invalid quantizer")
    }

    pub fn deterministic() -> Self {
        Self::unit(QuantizerKind::Deterministic)
    }

    pub fn probabilistic() -> Self {
        Self::unit(QuantizerKind::Probabilistic)
    }

    pub fn kind(&self) -> QuantizerKind {
        self.kind
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn is_random(&self) -> bool {
        self.kind.is_random()
    }

    pub fn is_unit(&self) -> bool {
        self.step == 1.0
    }

    /// Quantizes `x`, returning a multiple of the step.
    pub fn quantize<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64, QuantizeError> {
        check_finite(x)?;
        if self.step == 1.0 {
            Ok(self.kind.apply_unit(x, rng))
        } else {
            Ok(self.step * self.kind.apply_unit(x / self.step, rng))
        }
    }
}

impl Default for Quantizer {
    fn default() -> Self {
        Self::deterministic()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;
    use proptest::prelude::*;

    #[test]
    fn det_examples() {
        assert_eq!(quantize_det(3.4), Ok(3));
        assert_eq!(quantize_det(0.5), Ok(1));
        assert_eq!(quantize_det(0.0), Ok(0));
        assert_eq!(quantize_det(-0.4), Ok(0));
        assert_eq!(quantize_det(-0.6), Ok(-1));
        // Ties go up on both sides of zero.
        assert_eq!(quantize_det(-0.5), Ok(0));
        assert_eq!(quantize_det(-3.5), Ok(-3));
        assert_eq!(quantize_det(0.49999999999999994), Ok(0));
        assert_eq!(quantize_det(-0.5000000000000001), Ok(-1));
        assert!(quantize_det(f64::NAN).is_err());
        assert!(quantize_det(f64::INFINITY).is_err());
    }

    #[test]
    fn prob_examples() {
        let mut rng = trial_rng(0);
        assert!((0..1000).all(|_| quantize_prob(5.0, &mut rng) == Ok(5)));
        assert!((0..1000).all(|_| quantize_prob(-2.0, &mut rng) == Ok(-2)));
        let n = 200_000;
        let ups = (0..n).filter(|_| quantize_prob(3.6, &mut rng).unwrap() == 4).count();
        let p = ups as f64 / n as f64;
        let sigma = (0.6f64 * 0.4 / n as f64).sqrt();
        assert!((p - 0.6).abs() < 4.0 * sigma, "{p}");
        assert!(quantize_prob(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn prob_unbiased_at_quarter() {
        let mut rng = trial_rng(1);
        let n = 1_000_000;
        let sum: i64 = (0..n).map(|_| quantize_prob(0.25, &mut rng).unwrap()).sum();
        let mean = sum as f64 / n as f64;
        let sigma = (0.25f64 * 0.75).sqrt() / (n as f64).sqrt();
        assert!((mean - 0.25).abs() <= 3.0 * sigma, "{mean}");
    }

    #[test]
    fn variant_examples() {
        let mut rng = trial_rng(2);
        let q = |k, s, x: f64, rng: &mut _| Quantizer::new(k, s).unwrap().quantize(x, rng).unwrap();
        assert_eq!(q(QuantizerKind::Floor, 1.0, -0.2, &mut rng), -1.0);
        assert_eq!(q(QuantizerKind::Ceil, 1.0, -0.2, &mut rng), 0.0);
        assert_eq!(q(QuantizerKind::Deterministic, 0.25, 0.3, &mut rng), 0.25);
        assert_eq!(q(QuantizerKind::TieAlternating, 1.0, 2.5, &mut rng), 3.0);
        assert_eq!(q(QuantizerKind::TieAlternating, 1.0, 3.5, &mut rng), 3.0);
        assert_eq!(q(QuantizerKind::TieAlternating, 1.0, -1.5, &mut rng), -1.0);
        assert_eq!(q(QuantizerKind::TieAlternating, 1.0, -0.5, &mut rng), -1.0);
        assert_eq!(q(QuantizerKind::TieAlternating, 1.0, 2.6, &mut rng), 3.0);
    }

    #[test]
    fn biased_rounds_ties_with_p() {
        let quant = Quantizer::unit(QuantizerKind::BiasedProbabilistic(0.8));
        let mut rng = trial_rng(3);
        let n = 100_000;
        let ups = (0..n).filter(|_| quant.quantize(4.5, &mut rng).unwrap() == 5.0).count();
        let sigma = (0.8f64 * 0.2 / n as f64).sqrt();
        assert!((ups as f64 / n as f64 - 0.8).abs() < 4.0 * sigma);
        let ups = (0..n).filter(|_| quant.quantize(4.25, &mut rng).unwrap() == 5.0).count();
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((ups as f64 / n as f64 - 0.25).abs() < 4.0 * sigma);
    }

    #[test]
    fn constructor_validation() {
        assert_eq!(Quantizer::new(QuantizerKind::Deterministic, 0.0), Err(QuantizeError::BadStep(0.0)));
        assert!(Quantizer::new(QuantizerKind::Deterministic, f64::NAN).is_err());
        assert_eq!(Quantizer::new(QuantizerKind::BiasedProbabilistic(1.0), 1.0), Err(QuantizeError::BadBias(1.0)));
        assert!(Quantizer::deterministic().quantize(f64::NEG_INFINITY, &mut trial_rng(0)).is_err());
    }

    #[test]
    fn parse_round_trip() {
        for s in ["det", "prob", "floor", "ceil", "tie_alt", "biased:0.3"] {
            let k: QuantizerKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert!("biased:1.5".parse::<QuantizerKind>().is_err());
        assert!("round".parse::<QuantizerKind>().is_err());
    }

    fn all_kinds() -> impl Strategy<Value = QuantizerKind> {
        prop_oneof![
            Just(QuantizerKind::Deterministic),
            Just(QuantizerKind::Probabilistic),
            Just(QuantizerKind::Floor),
            Just(QuantizerKind::Ceil),
            Just(QuantizerKind::TieAlternating),
            (0.01f64..0.99).prop_map(QuantizerKind::BiasedProbabilistic),
        ]
    }

    proptest! {
        #[test]
        fn output_is_floor_or_ceil(kind in all_kinds(), step in prop_oneof![Just(1.0), Just(0.25), 0.1f64..3.0], x in -1e6f64..1e6, seed: u64) {
            let q = Quantizer::new(kind, step).unwrap();
            let v = q.quantize(x, &mut trial_rng(seed)).unwrap();
            let (lo, hi) = (step * (x / step).floor(), step * (x / step).ceil());
            prop_assert!(v == lo || v == hi, "{} -> {}", x, v);
        }

        #[test]
        fn det_error_at_most_half(x in -1e9f64..1e9) {
            let q = quantize_det(x).unwrap() as f64;
            prop_assert!((x - q).abs() <= 0.5);
        }

        #[test]
        fn prob_error_at_most_one(x in -1e9f64..1e9, seed: u64) {
            let q = quantize_prob(x, &mut trial_rng(seed)).unwrap() as f64;
            prop_assert!((x - q).abs() <= 1.0);
        }
    }
}
