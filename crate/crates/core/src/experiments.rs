//! Canned experiments and their CSV layouts.
//!
//! Floats are written as `{:.16e}` (17 significant digits, round-trippable).
//! Absent values are empty fields.

use std::io::Write;

use thiserror::Error;

use crate::analysis::{auxiliary_trajectory, theoretical_fixed_point, AnalysisError, CovarianceMatrix};
use crate::dynamics::{Protocol, UpdateRule};
use crate::graph::{complete_graph, random_geometric_graph, Graph};
use crate::quantize::{Quantizer, QuantizerKind};
use crate::rng::{derive_seed, trial_rng};
use crate::sim::{map_indexed, run_batch, BatchSummary, InitSpec, SimError, TracePoint, TrialConfig};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn fmt_opt_u64(v: Option<u64>) -> String {
    v.map(|t| t.to_string()).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(out: W, trace: &[TracePoint]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "min", "max", "spread", "mse_from_x0avg", "avg"])?;
    for p in trace {
        w.write_record([p.step.to_string(), fmt_f64(p.min), fmt_f64(p.max), fmt_f64(p.spread), fmt_f64(p.mse), fmt_f64(p.avg)])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_batch_csv<W: Write>(out: W, summary: &BatchSummary) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "seed", "converged", "t_con", "t_all", "alpha", "z", "max_dev"])?;
    for r in &summary.records {
        w.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            r.converged.to_string(),
            fmt_opt_u64(r.t_con),
            fmt_opt_u64(r.t_all),
            fmt_opt_f64(r.alpha),
            fmt_opt_f64(r.z),
            fmt_f64(r.max_dev),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Row {
    pub n: usize,
    pub quantizer: QuantizerKind,
    pub interval: (f64, f64),
    pub z_mean: f64,
    pub z_std: f64,
    pub converged: usize,
    pub trials: usize,
}

/// Deviation `z = |alpha - x_ave(0)|` of the totally quantized rule on
/// complete graphs, for both rounding quantizers.
///
/// Rows come in the order size, quantizer (`det` then `prob`), interval.
/// Both quantizers see the same initial states: the batch seed depends only
/// on the size and interval. Statistics are over converged trials.
pub fn fig1(sizes: &[usize], intervals: &[(f64, f64)], trials: usize, seed: u64, max_steps: Option<u64>) -> Result<Vec<Fig1Row>, ExperimentError> {
    if intervals.is_empty() {
        return Err(ExperimentError::Invalid("no initial-condition intervals".into()));
    }
    let mut rows = Vec::new();
    for &n in sizes {
        let g = complete_graph(n).map_err(SimError::from)?;
        for quantizer in [Quantizer::deterministic(), Quantizer::probabilistic()] {
            for (k, &(lo, hi)) in intervals.iter().enumerate() {
                let batch_seed = derive_seed(derive_seed(seed, n as u64), k as u64);
                let mut cfg = TrialConfig::new(UpdateRule::TotallyQuantized, quantizer, InitSpec::Uniform { lo, hi }, batch_seed);
                cfg.max_steps = max_steps;
                let s = run_batch(&g, &cfg, trials)?;
                let (z_mean, z_std) = s.z.map(|z| (z.mean, z.std)).unwrap_or((f64::NAN, f64::NAN));
                rows.push(Fig1Row { n, quantizer: quantizer.kind(), interval: (lo, hi), z_mean, z_std, converged: s.converged, trials });
            }
        }
    }
    Ok(rows)
}

fn fmt_interval((lo, hi): (f64, f64)) -> String {
    format!("{lo}:{hi}")
}

pub fn write_fig1_csv<W: Write>(out: W, rows: &[Fig1Row]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "quantizer", "init_interval", "z_mean", "z_std"])?;
    for r in rows {
        w.write_record([r.n.to_string(), r.quantizer.to_string(), fmt_interval(r.interval), fmt_f64(r.z_mean), fmt_f64(r.z_std)])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Where each trial's graph comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    Fixed(Graph),
    /// A fresh connected random geometric graph per trial.
    Geometric { n: usize, radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Config {
    pub graph: GraphSource,
    pub init: InitSpec,
    pub trials: usize,
    pub steps: u64,
    pub seed: u64,
}

impl Fig2Config {
    /// Geometric graph, `x(0)` uniform on `[-100, 100]`.
    pub fn geometric(n: usize, radius: f64, trials: usize, steps: u64, seed: u64) -> Self {
        Self { graph: GraphSource::Geometric { n, radius }, init: InitSpec::Uniform { lo: -100.0, hi: 100.0 }, trials, steps, seed }
    }
}

/// Column order of the comparison.
pub const FIG2_RULES: [UpdateRule; 4] = [
    UpdateRule::Standard,
    UpdateRule::TotallyQuantized,
    UpdateRule::PartiallyQuantized,
    UpdateRule::Compensating,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig2Row {
    pub step: u64,
    /// Mean of `||x - x_ave(0) 1||^2 / N`, in [`FIG2_RULES`] order.
    pub mse: [f64; 4],
}

/// Mean squared distance from the initial average against time for the
/// exact rule and the three quantized rules with randomized rounding.
///
/// Trial `k` draws its graph (if random) and `x(0)` from
/// `derive_seed(seed, k)`; each rule then runs on that graph and `x(0)`
/// with its own stream `derive_seed(derive_seed(seed, k), 1 + rule index)`.
pub fn fig2(cfg: &Fig2Config) -> Result<Vec<Fig2Row>, ExperimentError> {
    if cfg.trials == 0 {
        return Err(ExperimentError::Invalid("trials must be at least 1".into()));
    }
    let steps = cfg.steps as usize;
    let per_trial = map_indexed(cfg.trials, |k| -> Result<Vec<Vec<f64>>, ExperimentError> {
        let trial_seed = derive_seed(cfg.seed, k as u64);
        let mut rng = trial_rng(trial_seed);
        let g = match &cfg.graph {
            GraphSource::Fixed(g) => g.clone(),
            GraphSource::Geometric { n, radius } => random_geometric_graph(*n, *radius, &mut rng).map_err(SimError::from)?,
        };
        let x0 = cfg.init.sample(g.n_nodes(), &mut rng)?;
        let avg0 = x0.average();
        let n = g.n_nodes() as f64;
        let mut curves = Vec::with_capacity(4);
        for (a, rule) in FIG2_RULES.iter().enumerate() {
            let protocol = Protocol::new(*rule, Quantizer::probabilistic());
            let mut rng = trial_rng(derive_seed(trial_seed, 1 + a as u64));
            let mut x = x0.as_slice().to_vec();
            let mut curve = Vec::with_capacity(steps + 1);
            let mse = |x: &[f64]| x.iter().map(|v| (v - avg0) * (v - avg0)).sum::<f64>() / n;
            curve.push(mse(&x));
            for _ in 0..steps {
                let e = g.sample_edge(&mut rng);
                protocol.step_pair(&mut x, e, &mut rng).map_err(SimError::from)?;
                curve.push(mse(&x));
            }
            curves.push(curve);
        }
        Ok(curves)
    })?;
    let inv = 1.0 / cfg.trials as f64;
    let rows = (0..=steps)
        .map(|t| {
            let mut mse = [0.0; 4];
            for curves in &per_trial {
                for a in 0..4 {
                    mse[a] += curves[a][t];
                }
            }
            Fig2Row { step: t as u64, mse: mse.map(|v| v * inv) }
        })
        .collect();
    Ok(rows)
}

pub fn write_fig2_csv<W: Write>(out: W, rows: &[Fig2Row]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "standard", "totally", "partially", "compensating"])?;
    for r in rows {
        let mut rec = vec![r.step.to_string()];
        rec.extend(r.mse.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceRow {
    pub step: u64,
    /// `||S(t) - (I - 11^T / N) / 4||_F`.
    pub residual: f64,
    pub trace: f64,
}

/// The auxiliary covariance recursion started from zero.
pub fn covariance(g: &Graph, steps: u64) -> Result<Vec<CovarianceRow>, ExperimentError> {
    let star = theoretical_fixed_point(g.n_nodes())?;
    let mut rows = Vec::with_capacity(steps as usize + 1);
    auxiliary_trajectory(g, &CovarianceMatrix::zeros(g.n_nodes()), steps as usize, |t, s| {
        rows.push(CovarianceRow { step: t as u64, residual: s.distance(&star), trace: s.trace() });
    })?;
    Ok(rows)
}

pub fn write_covariance_csv<W: Write>(out: W, rows: &[CovarianceRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "frobenius_residual", "trace"])?;
    for r in rows {
        w.write_record([r.step.to_string(), fmt_f64(r.residual), fmt_f64(r.trace)])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
