//! One gossip step on the real-valued states.
//!
//! When edge `(i, j)` is active, only `x_i` and `x_j` change. With
//! `xh_k` the quantized value agent `k` transmits:
//!
//! | rule         | `x_i'`                        |
//! |--------------|-------------------------------|
//! | standard     | `(x_i + x_j) / 2`             |
//! | totally      | `(xh_i + xh_j) / 2`           |
//! | partially    | `x_i / 2 + xh_j / 2`          |
//! | compensating | `x_i - xh_i / 2 + xh_j / 2`   |
//!
//! and symmetrically for `x_j'`. Each agent quantizes once per step and both
//! updates use that same symbol.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::graph::Graph;
use crate::quantize::{QuantizeError, Quantizer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("state vector is empty")]
    Empty,
    #[error("state entry {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("state has {got} entries, graph has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("edge ({0}, {1}) is not in the graph")]
    EdgeNotInGraph(usize, usize),
    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("unknown update rule `{0}` (expected standard, totally, partially or compensating)")]
    UnknownRule(String),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
}

/// Agent states `x_1..x_N`, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self, DynamicsError> {
        if values.is_empty() {
            return Err(DynamicsError::Empty);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { index, value });
        }
        Ok(Self(values))
    }

    pub fn constant(n: usize, value: f64) -> Result<Self, DynamicsError> {
        Self::new(vec![value; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn average(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// `(min, max)` of the entries.
    pub fn range(&self) -> (f64, f64) {
        self.0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for StateVector {
    type Error = DynamicsError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

/// Arithmetic mean of the states.
pub fn average(x: &[f64]) -> Result<f64, DynamicsError> {
    if x.is_empty() {
        return Err(DynamicsError::Empty);
    }
    Ok(x.iter().sum::<f64>() / x.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateRule {
    Standard,
    TotallyQuantized,
    PartiallyQuantized,
    Compensating,
}

impl UpdateRule {
    pub const ALL: [UpdateRule; 4] = [Self::Standard, Self::TotallyQuantized, Self::PartiallyQuantized, Self::Compensating];

    pub fn uses_quantizer(self) -> bool {
        self != Self::Standard
    }
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Standard => "standard",
            Self::TotallyQuantized => "totally",
            Self::PartiallyQuantized => "partially",
            Self::Compensating => "compensating",
        })
    }
}

impl FromStr for UpdateRule {
    type Err = DynamicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "standard" => Ok(Self::Standard),
            "totally" => Ok(Self::TotallyQuantized),
            "partially" => Ok(Self::PartiallyQuantized),
            "compensating" => Ok(Self::Compensating),
            other => Err(DynamicsError::UnknownRule(other.to_string())),
        }
    }
}

/// Pairwise update given the transmitted symbols `(xh_i, xh_j)`.
///
/// `unit_step` enables the bin correction of the partially quantized rule,
/// which is only meaningful for integer symbols.
pub fn pair_update(rule: UpdateRule, (xi, xj): (f64, f64), (qi, qj): (f64, f64), unit_step: bool) -> (f64, f64) {
    match rule {
        UpdateRule::Standard => {
            let m = 0.5 * xi + 0.5 * xj;
            (m, m)
        }
        UpdateRule::TotallyQuantized => {
            let m = 0.5 * qi + 0.5 * qj;
            (m, m)
        }
        UpdateRule::PartiallyQuantized => {
            let a = half_plus_half(xi, qj, unit_step);
            let b = half_plus_half(xj, qi, unit_step);
            (a, b)
        }
        UpdateRule::Compensating => {
            let d = 0.5 * (qj - qi);
            (xi + d, xj - d)
        }
    }
}

/// `x / 2 + q / 2` for integer `q`.
///
/// In exact arithmetic `floor(2 * result) = floor(x) + q`. Rounding the sum
/// can land exactly on the next half-integer when `x` sits just below an
/// integer; in that case the result is pulled back to the largest double in
/// the correct bin, keeping `floor(2x)` exact.
fn half_plus_half(x: f64, q: f64, unit_step: bool) -> f64 {
    let y = 0.5 * x + 0.5 * q;
    if unit_step {
        let bin = x.floor() + q;
        if (2.0 * y).floor() > bin {
            return (0.5 * (bin + 1.0)).next_down();
        }
    }
    y
}

/// An update rule paired with the quantizer its agents transmit through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protocol {
    pub rule: UpdateRule,
    pub quantizer: Quantizer,
}

impl Protocol {
    pub fn new(rule: UpdateRule, quantizer: Quantizer) -> Self {
        Self { rule, quantizer }
    }

    /// Applies one step on edge `(i, j)` after checking that it belongs to
    /// `graph` and that `x` matches the graph size.
    pub fn step<R: Rng + ?Sized>(
        &self,
        graph: &Graph,
        x: &mut StateVector,
        (i, j): (usize, usize),
        rng: &mut R,
    ) -> Result<(), DynamicsError> {
        let n = graph.n_nodes();
        if x.len() != n {
            return Err(DynamicsError::LengthMismatch { expected: n, got: x.len() });
        }
        for index in [i, j] {
            if index >= n {
                return Err(DynamicsError::IndexOutOfRange { index, n });
            }
        }
        if !graph.contains_edge(i, j) {
            return Err(DynamicsError::EdgeNotInGraph(i, j));
        }
        self.step_pair(x.as_mut_slice(), (i, j), rng)?;
        for k in [i, j] {
            if !x[k].is_finite() {
                return Err(DynamicsError::NonFinite { index: k, value: x[k] });
            }
        }
        Ok(())
    }

    /// Unchecked step for callers that drew `(i, j)` from the graph.
    ///
    /// Randomized quantizers draw for the lower index first.
    pub fn step_pair<R: Rng + ?Sized>(&self, x: &mut [f64], (i, j): (usize, usize), rng: &mut R) -> Result<(), QuantizeError> {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let (xl, xh) = (x[lo], x[hi]);
        let (ql, qh) = if self.rule.uses_quantizer() {
            let ql = self.quantizer.quantize(xl, rng)?;
            let qh = self.quantizer.quantize(xh, rng)?;
            (ql, qh)
        } else {
            (xl, xh)
        };
        let (a, b) = pair_update(self.rule, (xl, xh), (ql, qh), self.quantizer.is_unit());
        x[lo] = a;
        x[hi] = b;
        Ok(())
    }
}
