//! Seeded trials and batches.
//!
//! A trial draws its initial state and then one edge per step from a single
//! ChaCha8 stream seeded with the trial seed. The stopping rule depends on the
//! update rule and quantizer:
//!
//! | rule | quantizer | converged when |
//! |------|-----------|----------------|
//! | standard | - | `max - min <= 1e-9` |
//! | totally | any | all states equal and on the quantizer lattice |
//! | partially / compensating | deterministic | `floor(2x / step)` spans at most two consecutive values |
//! | partially | randomized | `max - min <= 1e-9` and the states within `1e-9` of a lattice point |
//! | compensating | randomized | never; runs to `max_steps` |

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::analysis::mean_var;
use crate::dynamics::{DynamicsError, Protocol, StateVector, UpdateRule};
use crate::graph::{Graph, GraphError};
use crate::quantize::{QuantizeError, Quantizer, QuantizerKind};
use crate::rng::{derive_seed, trial_rng};
use crate::symbolic::{SymbolicError, SymbolicMap, SymbolicVector};

/// Spread tolerance for rules that only converge asymptotically.
pub const CONSENSUS_TOL: f64 = 1e-9;
/// Lattice membership tolerance when the quantizer step is not 1.
const LATTICE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid trial configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite state {value} at node {index} after step {step}")]
    NonFinite { step: u64, index: usize, value: f64 },
    #[error("no symbolic map for rule `{rule}` with quantizer `{quantizer}`")]
    UnsupportedShadow { rule: UpdateRule, quantizer: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
}

/// How the initial state is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// i.i.d. uniform on `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    Values(Vec<f64>),
}

impl InitSpec {
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<StateVector, SimError> {
        match self {
            Self::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(SimError::InvalidConfig(format!("bad uniform interval [{lo}, {hi}]")));
                }
                let v = (0..n).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect();
                Ok(StateVector::new(v)?)
            }
            Self::Values(v) => {
                if v.len() != n {
                    return Err(DynamicsError::LengthMismatch { expected: n, got: v.len() }.into());
                }
                Ok(StateVector::new(v.clone())?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub rule: UpdateRule,
    pub quantizer: Quantizer,
    pub init: InitSpec,
    pub seed: u64,
    /// Step cap; `None` means [`default_max_steps`].
    pub max_steps: Option<u64>,
    pub record_trace: bool,
    pub trace_stride: u64,
    /// Extra steps to run after convergence while tracking the spread and the
    /// distance from the initial average.
    pub hold_steps: u64,
}

impl TrialConfig {
    pub fn new(rule: UpdateRule, quantizer: Quantizer, init: InitSpec, seed: u64) -> Self {
        Self { rule, quantizer, init, seed, max_steps: None, record_trace: false, trace_stride: 1, hold_steps: 0 }
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = Some(max_steps);
        self
    }

    pub fn with_trace(mut self, stride: u64) -> Self {
        self.record_trace = true;
        self.trace_stride = stride;
        self
    }

    pub fn with_hold(mut self, hold_steps: u64) -> Self {
        self.hold_steps = hold_steps;
        self
    }

    pub fn protocol(&self) -> Protocol {
        Protocol::new(self.rule, self.quantizer)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.max_steps == Some(0) {
            return Err(SimError::InvalidConfig("max_steps must be positive".into()));
        }
        if self.trace_stride == 0 {
            return Err(SimError::InvalidConfig("trace_stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn resolved_max_steps(&self, g: &Graph) -> u64 {
        self.max_steps.unwrap_or_else(|| default_max_steps(g))
    }
}

/// `50 N |E| ln N`, at least 1000.
pub fn default_max_steps(g: &Graph) -> u64 {
    let n = g.n_nodes() as f64;
    let cap = 50.0 * n * g.n_edges() as f64 * n.ln();
    (cap.ceil() as u64).max(1000)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub step: u64,
    pub min: f64,
    pub max: f64,
    pub spread: f64,
    /// `||x - x_ave(0) 1||^2 / N`.
    pub mse: f64,
    pub avg: f64,
}

impl TracePoint {
    pub fn of(step: u64, x: &[f64], avg0: f64) -> Self {
        let (min, max) = min_max(x);
        let n = x.len() as f64;
        let mse = x.iter().map(|v| (v - avg0) * (v - avg0)).sum::<f64>() / n;
        let avg = x.iter().sum::<f64>() / n;
        Self { step, min, max, spread: max - min, mse, avg }
    }
}

/// Worst values seen from the convergence step through the hold period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldMonitor {
    pub steps: u64,
    pub max_spread: f64,
    /// Largest `||x - x_ave(0) 1||_inf`.
    pub max_dev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub converged: bool,
    pub t_con: Option<u64>,
    /// First step at which every node has been selected at least once.
    pub t_all: Option<u64>,
    pub steps_run: u64,
    pub initial_state: StateVector,
    pub initial_average: f64,
    pub final_state: StateVector,
    /// Consensus value, for rules that reach consensus.
    pub alpha: Option<f64>,
    /// `|alpha - x_ave(0)|`.
    pub z: Option<f64>,
    /// Final `||x - x_ave(0) 1||_inf`.
    pub max_dev: f64,
    /// Final `||x - x_ave(0) 1||^2 / N`.
    pub final_mse: f64,
    /// Largest `|x_ave(t) - x_ave(0)|` over the checkpoints visited.
    pub max_avg_drift: f64,
    /// Largest per-step violation of `frac(2 x_i(t+1)) = frac(x_i(t))` for
    /// the partially quantized rule with a unit quantizer.
    pub max_frac_violation: Option<f64>,
    pub hold: Option<HoldMonitor>,
    pub trace: Option<Vec<TracePoint>>,
}

impl TrialResult {
    pub fn initial_range(&self) -> f64 {
        let (lo, hi) = min_max(&self.initial_state);
        hi - lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Criterion {
    Spread,
    LatticeConsensus,
    SetR,
    IntegerLimit,
    None,
}

fn criterion(rule: UpdateRule, q: &Quantizer) -> Criterion {
    match rule {
        UpdateRule::Standard => Criterion::Spread,
        UpdateRule::TotallyQuantized => Criterion::LatticeConsensus,
        UpdateRule::PartiallyQuantized if q.is_random() => Criterion::IntegerLimit,
        UpdateRule::PartiallyQuantized => Criterion::SetR,
        UpdateRule::Compensating if q.is_random() => Criterion::None,
        UpdateRule::Compensating => Criterion::SetR,
    }
}

fn reaches_consensus(c: Criterion) -> bool {
    matches!(c, Criterion::Spread | Criterion::LatticeConsensus | Criterion::IntegerLimit)
}

fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
}

fn inf_dev(x: &[f64], avg0: f64) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max((v - avg0).abs()))
}

/// Half-lattice cell of `x` for step `s`: `(round(2x/s), true)` on the
/// lattice, otherwise `(floor(2x/s), false)`.
#[derive(Debug, Clone, Copy)]
struct Cells {
    step: f64,
    unit: bool,
}

impl Cells {
    fn cell(&self, x: f64) -> (i64, bool) {
        let v = if self.unit { 2.0 * x } else { 2.0 * x / self.step };
        let r = v.round();
        let on = if self.unit { v == r } else { (v - r).abs() <= LATTICE_TOL * r.abs().max(1.0) };
        if on {
            (r as i64, true)
        } else {
            (v.floor() as i64, false)
        }
    }
}

/// Histogram of cells, kept in sync with the state two nodes at a time.
struct CellTracker {
    cells: Cells,
    counts: BTreeMap<i64, usize>,
    off_lattice: usize,
}

impl CellTracker {
    fn new(cells: Cells, x: &[f64]) -> Self {
        let mut t = Self { cells, counts: BTreeMap::new(), off_lattice: 0 };
        for &v in x {
            t.add(v);
        }
        t
    }

    fn add(&mut self, v: f64) {
        let (c, on) = self.cells.cell(v);
        *self.counts.entry(c).or_insert(0) += 1;
        if !on {
            self.off_lattice += 1;
        }
    }

    fn remove(&mut self, v: f64) {
        let (c, on) = self.cells.cell(v);
        if let Some(k) = self.counts.get_mut(&c) {
            *k -= 1;
            if *k == 0 {
                self.counts.remove(&c);
            }
        }
        if !on {
            self.off_lattice -= 1;
        }
    }

    fn width(&self) -> i64 {
        match (self.counts.keys().next(), self.counts.keys().next_back()) {
            (Some(a), Some(b)) => b.saturating_sub(*a),
            _ => 0,
        }
    }

    fn single_even(&self) -> bool {
        self.counts.len() == 1 && self.counts.keys().next().is_some_and(|k| k.rem_euclid(2) == 0)
    }
}

fn is_converged(c: Criterion, tracker: &CellTracker, x: &[f64]) -> bool {
    match c {
        Criterion::Spread => {
            let (lo, hi) = min_max(x);
            hi - lo <= CONSENSUS_TOL
        }
        Criterion::LatticeConsensus => tracker.off_lattice == 0 && tracker.single_even() && {
            let first = x[0];
            x.iter().all(|&v| v == first)
        },
        Criterion::SetR => tracker.width() <= 1,
        // States approach the integer limit from above (cell 2a) or from
        // below (cell 2a - 1), so at most two adjacent cells remain.
        Criterion::IntegerLimit => tracker.width() <= 1 && {
            let (lo, hi) = min_max(x);
            let v = lo / tracker.cells.step;
            hi - lo <= CONSENSUS_TOL && (v - v.round()).abs() <= CONSENSUS_TOL
        },
        Criterion::None => false,
    }
}

/// Runs one trial on `graph`.
pub fn run_trial(graph: &Graph, cfg: &TrialConfig) -> Result<TrialResult, SimError> {
    cfg.validate()?;
    let n = graph.n_nodes();
    let max_steps = cfg.resolved_max_steps(graph);
    let mut rng = trial_rng(cfg.seed);
    let x0 = cfg.init.sample(n, &mut rng)?;
    let avg0 = x0.average();
    let protocol = cfg.protocol();
    let crit = criterion(cfg.rule, &cfg.quantizer);
    let check_frac = cfg.rule == UpdateRule::PartiallyQuantized && cfg.quantizer.is_unit();
    let drift_every = n.max(1) as u64;

    let mut x = x0.as_slice().to_vec();
    let mut tracker = CellTracker::new(Cells { step: cfg.quantizer.step(), unit: cfg.quantizer.step() == 1.0 }, &x);
    let mut seen = vec![false; n];
    let mut n_seen = 0usize;
    let mut t_all = None;
    let mut max_avg_drift = 0.0f64;
    let mut max_frac: Option<f64> = check_frac.then_some(0.0);
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut hold: Option<HoldMonitor> = None;

    let drift = |x: &[f64]| (x.iter().sum::<f64>() / n as f64 - avg0).abs();
    let observe_hold = |h: &mut HoldMonitor, x: &[f64]| {
        let (lo, hi) = min_max(x);
        h.max_spread = h.max_spread.max(hi - lo);
        h.max_dev = h.max_dev.max(inf_dev(x, avg0));
    };

    if let Some(tr) = trace.as_mut() {
        tr.push(TracePoint::of(0, &x, avg0));
    }
    let mut t_con = if is_converged(crit, &tracker, &x) { Some(0) } else { None };
    if t_con.is_some() {
        let mut h = HoldMonitor { steps: 0, max_spread: 0.0, max_dev: 0.0 };
        observe_hold(&mut h, &x);
        hold = Some(h);
    }

    let mut step = 0u64;
    while step < max_steps {
        if hold.as_ref().is_some_and(|h| h.steps >= cfg.hold_steps) {
            break;
        }
        let (i, j) = graph.sample_edge(&mut rng);
        let (xi, xj) = (x[i], x[j]);
        protocol.step_pair(&mut x, (i, j), &mut rng)?;
        step += 1;
        for k in [i, j] {
            if !x[k].is_finite() {
                return Err(SimError::NonFinite { step, index: k, value: x[k] });
            }
        }
        tracker.remove(xi);
        tracker.remove(xj);
        tracker.add(x[i]);
        tracker.add(x[j]);
        if let Some(m) = max_frac.as_mut() {
            for (old, new) in [(xi, x[i]), (xj, x[j])] {
                let lhs = 2.0 * new - (2.0 * new).floor();
                let rhs = old - old.floor();
                *m = m.max((lhs - rhs).abs());
            }
        }
        if t_all.is_none() {
            for k in [i, j] {
                if !seen[k] {
                    seen[k] = true;
                    n_seen += 1;
                }
            }
            if n_seen == n {
                t_all = Some(step);
            }
        }
        if step % drift_every == 0 {
            max_avg_drift = max_avg_drift.max(drift(&x));
        }
        if let Some(tr) = trace.as_mut() {
            if step % cfg.trace_stride == 0 {
                tr.push(TracePoint::of(step, &x, avg0));
            }
        }
        match hold.as_mut() {
            Some(h) => {
                h.steps += 1;
                observe_hold(h, &x);
            }
            None => {
                if is_converged(crit, &tracker, &x) {
                    t_con = Some(step);
                    max_avg_drift = max_avg_drift.max(drift(&x));
                    let mut h = HoldMonitor { steps: 0, max_spread: 0.0, max_dev: 0.0 };
                    observe_hold(&mut h, &x);
                    hold = Some(h);
                }
            }
        }
    }
    max_avg_drift = max_avg_drift.max(drift(&x));
    if let Some(tr) = trace.as_mut() {
        if tr.last().map(|p| p.step) != Some(step) {
            tr.push(TracePoint::of(step, &x, avg0));
        }
    }

    let converged = t_con.is_some();
    let alpha = if converged && reaches_consensus(crit) { Some(x.iter().sum::<f64>() / n as f64) } else { None };
    let z = alpha.map(|a| (a - avg0).abs());
    let final_mse = x.iter().map(|v| (v - avg0) * (v - avg0)).sum::<f64>() / n as f64;
    Ok(TrialResult {
        seed: cfg.seed,
        converged,
        t_con,
        t_all,
        steps_run: step,
        max_dev: inf_dev(&x, avg0),
        initial_state: x0,
        initial_average: avg0,
        final_state: StateVector::new(x)?,
        alpha,
        z,
        final_mse,
        max_avg_drift,
        max_frac_violation: max_frac,
        hold,
        trace,
    })
}

/// Count, mean, sample standard deviation, min and max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// `None` for an empty sample. Sums run in input order.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, var) = mean_var(values);
        let (min, max) = min_max(values);
        Some(Self { count: values.len(), mean, std: var.sqrt(), min, max })
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

/// One row of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub converged: bool,
    pub t_con: Option<u64>,
    pub t_all: Option<u64>,
    pub alpha: Option<f64>,
    pub z: Option<f64>,
    pub max_dev: f64,
    pub final_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub trials: usize,
    pub converged: usize,
    pub convergence_rate: f64,
    /// Over converged trials.
    pub t_con: Option<Stats>,
    pub t_all: Option<Stats>,
    pub z: Option<Stats>,
    pub alpha: Option<Stats>,
    /// Over all trials.
    pub max_dev: Stats,
    pub final_mse: Stats,
    pub records: Vec<TrialRecord>,
}

impl BatchSummary {
    pub fn from_records(records: Vec<TrialRecord>) -> Option<Self> {
        let trials = records.len();
        if trials == 0 {
            return None;
        }
        let collect = |f: &dyn Fn(&TrialRecord) -> Option<f64>| records.iter().filter_map(f).collect::<Vec<_>>();
        let converged = records.iter().filter(|r| r.converged).count();
        Some(Self {
            trials,
            converged,
            convergence_rate: converged as f64 / trials as f64,
            t_con: Stats::of(&collect(&|r| r.t_con.map(|t| t as f64))),
            t_all: Stats::of(&collect(&|r| r.t_all.map(|t| t as f64))),
            z: Stats::of(&collect(&|r| r.z)),
            alpha: Stats::of(&collect(&|r| r.alpha)),
            max_dev: Stats::of(&collect(&|r| Some(r.max_dev)))?,
            final_mse: Stats::of(&collect(&|r| Some(r.final_mse)))?,
            records,
        })
    }
}

/// Runs `trials` trials; trial `k` uses seed `derive_seed(cfg.seed, k)`.
/// Traces are not kept.
pub fn run_batch(graph: &Graph, cfg: &TrialConfig, trials: usize) -> Result<BatchSummary, SimError> {
    if trials == 0 {
        return Err(SimError::InvalidConfig("trials must be at least 1".into()));
    }
    cfg.validate()?;
    let one = |k: usize| -> Result<TrialRecord, SimError> {
        let mut c = cfg.clone();
        c.seed = derive_seed(cfg.seed, k as u64);
        c.record_trace = false;
        let r = run_trial(graph, &c)?;
        Ok(TrialRecord {
            trial: k,
            seed: c.seed,
            converged: r.converged,
            t_con: r.t_con,
            t_all: r.t_all,
            alpha: r.alpha,
            z: r.z,
            max_dev: r.max_dev,
            final_mse: r.final_mse,
        })
    };
    let records = map_indexed(trials, one)?;
    Ok(BatchSummary::from_records(records).expect("non-empty batch"))
}

/// Maps `f` over `0..count`, in parallel when the `parallel` feature is on.
/// Results are always in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T: Send, E: Send>(count: usize, f: impl Fn(usize) -> Result<T, E> + Sync) -> Result<Vec<T>, E> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(&f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, E>(count: usize, f: impl Fn(usize) -> Result<T, E>) -> Result<Vec<T>, E> {
    (0..count).map(f).collect()
}

/// The symbolic map that `floor(2x)` follows step for step, if any.
pub fn shadow_map(rule: UpdateRule, quantizer: &Quantizer) -> Option<SymbolicMap> {
    if !quantizer.is_unit() {
        return None;
    }
    use QuantizerKind::{Deterministic, Floor};
    use UpdateRule::{Compensating, PartiallyQuantized, TotallyQuantized};
    match (rule, quantizer.kind()) {
        (Compensating, Deterministic) | (PartiallyQuantized, Deterministic) => Some(SymbolicMap::G1),
        (TotallyQuantized, Deterministic) => Some(SymbolicMap::G2),
        (Compensating, Floor) => Some(SymbolicMap::G4),
        (TotallyQuantized, Floor) | (PartiallyQuantized, Floor) => Some(SymbolicMap::G5),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowReport {
    pub map: SymbolicMap,
    pub steps: u64,
    /// Steps at which `floor(2x)` and the symbolic state disagreed.
    pub mismatches: u64,
    pub first_mismatch: Option<u64>,
}

impl ShadowReport {
    pub fn matched(&self) -> bool {
        self.mismatches == 0
    }
}

/// Runs the real-valued dynamics and the symbolic map side by side on the
/// same edge sequence for `max_steps` steps, comparing `floor(2x)` with the
/// symbolic state after every step. The symbolic state is not resynced after
/// a mismatch.
pub fn shadow_trial(graph: &Graph, cfg: &TrialConfig) -> Result<ShadowReport, SimError> {
    cfg.validate()?;
    let map = shadow_map(cfg.rule, &cfg.quantizer)
        .ok_or_else(|| SimError::UnsupportedShadow { rule: cfg.rule, quantizer: cfg.quantizer.kind().to_string() })?;
    let steps = cfg.resolved_max_steps(graph);
    let mut rng = trial_rng(cfg.seed);
    let mut x = cfg.init.sample(graph.n_nodes(), &mut rng)?.into_inner();
    let mut sym = SymbolicVector::lift(&x);
    let protocol = cfg.protocol();
    let mut mismatches = 0;
    let mut first_mismatch = None;
    let mut bad = vec![false; x.len()];
    let mut n_bad = 0usize;
    for step in 1..=steps {
        let (i, j) = graph.sample_edge(&mut rng);
        protocol.step_pair(&mut x, (i, j), &mut rng)?;
        for k in [i, j] {
            if !x[k].is_finite() {
                return Err(SimError::NonFinite { step, index: k, value: x[k] });
            }
        }
        sym.step(map, (i, j), &mut rng)?;
        for k in [i, j] {
            let now = crate::symbolic::lift_value(x[k]) != sym.0[k];
            if now != bad[k] {
                bad[k] = now;
                if now {
                    n_bad += 1;
                } else {
                    n_bad -= 1;
                }
            }
        }
        if n_bad > 0 {
            mismatches += 1;
            first_mismatch.get_or_insert(step);
        }
    }
    Ok(ShadowReport { map, steps, mismatches, first_mismatch })
}
