//! Integer symbolic dynamics `n_i = floor(2 x_i)`.
//!
//! With a deterministic unit quantizer the quantized update laws act on
//! `n(t)` through closed-form pair maps:
//!
//! * `g1`: compensating and partially quantized, nearest-integer rounding;
//! * `g2`: totally quantized, nearest-integer rounding;
//! * `g3`: totally quantized, randomized rounding (once all states lie on
//!   the half-integer lattice);
//! * `g4`: compensating, rounding down;
//! * `g5`: totally and partially quantized, rounding down.
//!
//! All halving uses floor/ceil semantics, which differ from Rust's truncating
//! `/` for negative operands.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolicError {
    #[error("symbolic vector is empty")]
    Empty,
    #[error("unknown symbolic map `{0}` (expected g1..g5)")]
    UnknownMap(String),
    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
}

#[inline]
pub fn floor_half(h: i64) -> i64 {
    h.div_euclid(2)
}

#[inline]
pub fn ceil_half(h: i64) -> i64 {
    -(-h).div_euclid(2)
}

/// Remainder of `h` modulo 2, in `{0, 1}`.
#[inline]
pub fn rem2(h: i64) -> i64 {
    h.rem_euclid(2)
}

pub fn g1(h: i64, k: i64) -> (i64, i64) {
    (floor_half(h) + ceil_half(k), floor_half(k) + ceil_half(h))
}

pub fn g2(h: i64, k: i64) -> i64 {
    ceil_half(h) + ceil_half(k)
}

/// `g2` with given coin flips: `g2(h, k) - xi1 * r_h - xi2 * r_k`.
pub fn g3_with(h: i64, k: i64, xi1: bool, xi2: bool) -> i64 {
    g2(h, k) - i64::from(xi1) * rem2(h) - i64::from(xi2) * rem2(k)
}

/// Draws `xi1` then `xi2`, each Bernoulli(1/2), and applies [`g3_with`].
pub fn g3<R: Rng + ?Sized>(h: i64, k: i64, rng: &mut R) -> i64 {
    let xi1: bool = rng.gen();
    let xi2: bool = rng.gen();
    g3_with(h, k, xi1, xi2)
}

pub fn g4(h: i64, k: i64) -> (i64, i64) {
    (floor_half(k) + ceil_half(h), floor_half(h) + ceil_half(k))
}

pub fn g5(h: i64, k: i64) -> i64 {
    floor_half(h) + floor_half(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymbolicMap {
    G1,
    G2,
    G3,
    G4,
    G5,
}

impl SymbolicMap {
    pub fn is_random(self) -> bool {
        self == Self::G3
    }

    /// Image of the pair `(h, k)` under this map. `G3` draws its two coins
    /// from `rng`; the others ignore it.
    pub fn apply<R: Rng + ?Sized>(self, h: i64, k: i64, rng: &mut R) -> (i64, i64) {
        match self {
            Self::G1 => g1(h, k),
            Self::G2 => {
                let v = g2(h, k);
                (v, v)
            }
            Self::G3 => {
                let v = g3(h, k, rng);
                (v, v)
            }
            Self::G4 => g4(h, k),
            Self::G5 => {
                let v = g5(h, k);
                (v, v)
            }
        }
    }
}

impl fmt::Display for SymbolicMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = match self {
            Self::G1 => 1,
            Self::G2 => 2,
            Self::G3 => 3,
            Self::G4 => 4,
            Self::G5 => 5,
        };
        write!(f, "g{i}")
    }
}

impl FromStr for SymbolicMap {
    type Err = SymbolicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "g1" => Ok(Self::G1),
            "g2" => Ok(Self::G2),
            "g3" => Ok(Self::G3),
            "g4" => Ok(Self::G4),
            "g5" => Ok(Self::G5),
            _ => Err(SymbolicError::UnknownMap(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicVector(pub Vec<i64>);

impl SymbolicVector {
    /// `n_i = floor(2 x_i)`.
    pub fn lift(x: &[f64]) -> Self {
        Self(x.iter().map(|&v| lift_value(v)).collect())
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Applies `map` on edge `(i, j)`; the lower index plays the role of `h`.
    pub fn step<R: Rng + ?Sized>(&mut self, map: SymbolicMap, (i, j): (usize, usize), rng: &mut R) -> Result<(), SymbolicError> {
        let n = self.0.len();
        for index in [i, j] {
            if index >= n {
                return Err(SymbolicError::IndexOutOfRange { index, n });
            }
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let (a, b) = map.apply(self.0[lo], self.0[hi], rng);
        self.0[lo] = a;
        self.0[hi] = b;
        Ok(())
    }

    pub fn spread(&self) -> Result<Spread, SymbolicError> {
        spread(&self.0)
    }

    pub fn in_set_r(&self) -> bool {
        in_set_r(&self.0)
    }

    pub fn in_set_a(&self) -> bool {
        in_set_a(&self.0)
    }
}

#[inline]
pub fn lift_value(x: f64) -> i64 {
    (2.0 * x).floor() as i64
}

/// Minimum `m`, maximum `M` and width `D = M - m` of a symbolic vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Spread {
    pub min: i64,
    pub max: i64,
    pub width: i64,
}

pub fn spread(n: &[i64]) -> Result<Spread, SymbolicError> {
    let min = *n.iter().min().ok_or(SymbolicError::Empty)?;
    let max = *n.iter().max().ok_or(SymbolicError::Empty)?;
    Ok(Spread { min, max, width: max - min })
}

/// Entries span at most two consecutive integers `{a, a + 1}`.
pub fn in_set_r(n: &[i64]) -> bool {
    spread(n).map(|s| s.width <= 1).unwrap_or(false)
}

/// All entries equal to the same even integer `2a`.
pub fn in_set_a(n: &[i64]) -> bool {
    match n.split_first() {
        Some((&first, rest)) => rem2(first) == 0 && rest.iter().all(|&v| v == first),
        None => false,
    }
}

/// Free-function form of [`SymbolicVector::step`].
pub fn symbolic_step<R: Rng + ?Sized>(
    map: SymbolicMap,
    n: &SymbolicVector,
    edge: (usize, usize),
    rng: &mut R,
) -> Result<SymbolicVector, SymbolicError> {
    let mut out = n.clone();
    out.step(map, edge, rng)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn halving_semantics() {
        assert_eq!((floor_half(-3), ceil_half(-3)), (-2, -1));
        assert_eq!((floor_half(3), ceil_half(3)), (1, 2));
        assert_eq!((floor_half(-4), ceil_half(-4)), (-2, -2));
        assert_eq!(rem2(-3), 1);
    }

    #[test]
    fn lift_examples() {
        assert_eq!(SymbolicVector::lift(&[3.4, 3.6]).0, vec![6, 7]);
        assert_eq!(SymbolicVector::lift(&[-0.25]).0, vec![-1]);
        assert_eq!(SymbolicVector::lift(&[2.0]).0, vec![4]);
    }

    #[test]
    fn g1_examples() {
        for h in -4..=4 {
            let expected = if h % 2 == 0 { (h + 1, h) } else { (h, h + 1) };
            assert_eq!(g1(h, h + 1), expected, "h = {h}");
        }
        assert_eq!(g1(4, 6), (5, 5));
        assert_eq!(g1(0, 3), (2, 1));
    }

    #[test]
    fn g2_g4_g5_examples() {
        assert_eq!(g2(3, 3), 4);
        assert_eq!(g2(4, 4), 4);
        assert_eq!(g2(0, 5), 3);
        assert_eq!(g4(0, 3), (1, 2));
        assert_eq!(g5(3, 3), 2);
        assert_eq!(g5(4, 6), 5);
    }

    #[test]
    fn g3_examples() {
        let mut rng = trial_rng(4);
        assert!((0..100).all(|_| g3(4, 6, &mut rng) == 5));
        // Enumerate the four equally likely coin outcomes.
        let mut counts = std::collections::BTreeMap::new();
        for xi1 in [false, true] {
            for xi2 in [false, true] {
                *counts.entry(g3_with(3, 3, xi1, xi2)).or_insert(0) += 1;
            }
        }
        assert_eq!(counts, [(2, 1), (3, 2), (4, 1)].into_iter().collect());
    }

    #[test]
    fn set_membership() {
        assert!(in_set_r(&[5, 5, 6, 5]));
        assert!(!in_set_r(&[5, 7, 5]));
        assert!(in_set_r(&[-3, -3, -3]));
        assert!(in_set_a(&[4, 4, 4]));
        assert!(!in_set_a(&[3, 3, 3]));
        assert!(!in_set_a(&[4, 4, 6]));
        assert!(in_set_a(&[-2, -2]));
        assert!(!in_set_a(&[]));
        assert!(!in_set_r(&[]));
    }

    #[test]
    fn step_examples() {
        let mut rng = trial_rng(0);
        let n = SymbolicVector(vec![0, 1]);
        assert_eq!(symbolic_step(SymbolicMap::G1, &n, (0, 1), &mut rng).unwrap().0, vec![1, 0]);
        let n = SymbolicVector(vec![3, 3]);
        assert_eq!(symbolic_step(SymbolicMap::G2, &n, (0, 1), &mut rng).unwrap().0, vec![4, 4]);
        let n = SymbolicVector(vec![2, 3]);
        assert_eq!(symbolic_step(SymbolicMap::G1, &n, (0, 1), &mut rng).unwrap().0, vec![3, 2]);
        // Reversed edge orientation gives the same result.
        assert_eq!(symbolic_step(SymbolicMap::G1, &n, (1, 0), &mut rng).unwrap().0, vec![3, 2]);
        assert!(symbolic_step(SymbolicMap::G1, &n, (0, 2), &mut rng).is_err());
        assert!("g7".parse::<SymbolicMap>().is_err());
        assert_eq!("G3".parse::<SymbolicMap>(), Ok(SymbolicMap::G3));
    }

    #[test]
    fn spread_examples() {
        assert_eq!(spread(&[0, 1, 5]), Ok(Spread { min: 0, max: 5, width: 5 }));
        assert_eq!(spread(&[2, 2]), Ok(Spread { min: 2, max: 2, width: 0 }));
        assert_eq!(spread(&[-1, 3]), Ok(Spread { min: -1, max: 3, width: 4 }));
        assert_eq!(spread(&[]), Err(SymbolicError::Empty));
    }

    #[test]
    fn fixed_points() {
        let mut rng = trial_rng(8);
        for a in -5..=5 {
            for map in [SymbolicMap::G2, SymbolicMap::G3] {
                for _ in 0..4 {
                    assert_eq!(map.apply(2 * a, 2 * a, &mut rng), (2 * a, 2 * a));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn g1_is_symmetric(h in -1000i64..1000, k in -1000i64..1000) {
            let (a, b) = g1(h, k);
            prop_assert_eq!(g1(k, h), (b, a));
        }

        #[test]
        fn g1_translation(h in -1000i64..1000, k in -1000i64..1000) {
            let (a, b) = g1(h, k);
            prop_assert_eq!(g1(h + 2, k + 2), (a + 2, b + 2));
        }

        #[test]
        fn r_is_invariant_under_g1(base in -50i64..50, bits in prop::collection::vec(any::<bool>(), 2..12), seed: u64) {
            let mut n = SymbolicVector(bits.iter().map(|&b| base + i64::from(b)).collect());
            let mut rng = trial_rng(seed);
            let len = n.len();
            for _ in 0..100 {
                let i = rng.gen_range(0..len);
                let j = (i + rng.gen_range(1..len)) % len;
                n.step(SymbolicMap::G1, (i, j), &mut rng).unwrap();
                prop_assert!(n.in_set_r());
            }
        }
    }
}
