//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export takes plain numbers and strings and returns a JSON string.
//! The `*_json` functions hold the logic and are callable natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use qgossip::config::{Config, GRAPH_STREAM};
use qgossip::experiments::{self, Fig2Config, FIG2_RULES};
use qgossip::graph::random_geometric_graph;
use qgossip::rng::{derive_seed, trial_rng};
use qgossip::sim::{run_trial, InitSpec, TrialConfig};
use qgossip::symbolic::SymbolicVector;
use qgossip::{Graph, Protocol, Quantizer, UpdateRule};

/// Upper bound on points returned per curve.
const MAX_POINTS: usize = 600;

fn stride_for(steps: u64) -> u64 {
    steps.div_ceil(MAX_POINTS as u64).max(1)
}

#[derive(Serialize)]
struct Curves {
    steps: Vec<u64>,
    names: Vec<String>,
    /// One series per rule, aligned with `steps`.
    series: Vec<Vec<f64>>,
}

/// Mean squared distance from the initial average for the four rules on
/// random geometric graphs.
pub fn compare_rules_json(n: usize, radius: f64, trials: usize, steps: u64, seed: u64) -> Result<String, String> {
    let rows = experiments::fig2(&Fig2Config::geometric(n, radius, trials, steps, seed)).map_err(|e| e.to_string())?;
    let stride = stride_for(steps);
    let kept: Vec<_> = rows.iter().filter(|r| r.step % stride == 0 || r.step == steps).collect();
    let out = Curves {
        steps: kept.iter().map(|r| r.step).collect(),
        names: FIG2_RULES.iter().map(|r| r.to_string()).collect(),
        series: (0..4).map(|a| kept.iter().map(|r| r.mse[a]).collect()).collect(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SweepRow {
    n: usize,
    det_mean: f64,
    det_std: f64,
    prob_mean: f64,
    prob_std: f64,
}

/// Consensus deviation of the totally quantized rule on complete graphs,
/// nearest-integer against randomized rounding. `sizes` is comma-separated.
pub fn deviation_sweep_json(sizes: &str, trials: usize, lo: f64, hi: f64, seed: u64) -> Result<String, String> {
    let mut cfg = Config::new();
    cfg.set("sizes", sizes).map_err(|e| e.to_string())?;
    let sizes = cfg.sizes().map_err(|e| e.to_string())?;
    if !(lo <= hi) {
        return Err(format!("bad interval [{lo}, {hi}]"));
    }
    let rows = experiments::fig1(&sizes, &[(lo, hi)], trials, seed, None).map_err(|e| e.to_string())?;
    // rows come as (n, det), (n, prob) per size
    let out: Vec<SweepRow> = rows
        .chunks(2)
        .map(|p| SweepRow { n: p[0].n, det_mean: p[0].z_mean, det_std: p[0].z_std, prob_mean: p[1].z_mean, prob_std: p[1].z_std })
        .collect();
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Trajectory {
    steps: Vec<u64>,
    /// `states[k]` is the full state at `steps[k]`.
    states: Vec<Vec<f64>>,
    initial_average: f64,
    converged: bool,
    t_con: Option<u64>,
    alpha: Option<f64>,
    z: Option<f64>,
    /// First step at which `floor(2x)` spans at most two consecutive values.
    symbolic_hit: Option<u64>,
}

fn build_graph(topology: &str, n: usize, seed: u64) -> Result<Graph, String> {
    if topology == "geometric" {
        let mut rng = trial_rng(derive_seed(seed, GRAPH_STREAM));
        return random_geometric_graph(n, 0.5, &mut rng).map_err(|e| e.to_string());
    }
    let mut cfg = Config::new();
    for (k, v) in [("topology", topology.to_string()), ("n", n.to_string())] {
        cfg.set(k, &v).map_err(|e| e.to_string())?;
    }
    cfg.graph().map_err(|e| e.to_string())
}

/// One trial with its full state history (subsampled).
#[allow(clippy::too_many_arguments)]
pub fn trajectory_json(topology: &str, n: usize, rule: &str, quantizer: &str, lo: f64, hi: f64, seed: u64, steps: u64) -> Result<String, String> {
    let g = build_graph(topology, n, seed)?;
    let rule: UpdateRule = rule.parse().map_err(|e: qgossip::dynamics::DynamicsError| e.to_string())?;
    let quantizer = Quantizer::new(quantizer.parse().map_err(|e: qgossip::quantize::QuantizeError| e.to_string())?, 1.0).map_err(|e| e.to_string())?;
    if steps == 0 {
        return Err("steps must be positive".into());
    }
    let cfg = TrialConfig::new(rule, quantizer, InitSpec::Uniform { lo, hi }, seed).with_max_steps(steps);
    let summary = run_trial(&g, &cfg).map_err(|e| e.to_string())?;

    // Replay the same stream to record every node.
    let mut rng = trial_rng(seed);
    let mut x = cfg.init.sample(g.n_nodes(), &mut rng).map_err(|e| e.to_string())?.into_inner();
    let protocol = Protocol::new(rule, quantizer);
    let stride = stride_for(steps);
    let mut out_steps = vec![0];
    let mut states = vec![x.clone()];
    let mut symbolic_hit = SymbolicVector::lift(&x).in_set_r().then_some(0);
    for t in 1..=steps {
        let e = g.sample_edge(&mut rng);
        protocol.step_pair(&mut x, e, &mut rng).map_err(|e| e.to_string())?;
        if symbolic_hit.is_none() && SymbolicVector::lift(&x).in_set_r() {
            symbolic_hit = Some(t);
        }
        if t % stride == 0 || t == steps {
            out_steps.push(t);
            states.push(x.clone());
        }
    }
    let out = Trajectory {
        steps: out_steps,
        states,
        initial_average: summary.initial_average,
        converged: summary.converged,
        t_con: summary.t_con,
        alpha: summary.alpha,
        z: summary.z,
        symbolic_hit,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare_rules(n: usize, radius: f64, trials: usize, steps: u32, seed: u32) -> Result<String, JsValue> {
    js(compare_rules_json(n, radius, trials, steps as u64, seed as u64))
}

#[wasm_bindgen]
pub fn deviation_sweep(sizes: &str, trials: usize, lo: f64, hi: f64, seed: u32) -> Result<String, JsValue> {
    js(deviation_sweep_json(sizes, trials, lo, hi, seed as u64))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn trajectory(topology: &str, n: usize, rule: &str, quantizer: &str, lo: f64, hi: f64, seed: u32, steps: u32) -> Result<String, JsValue> {
    js(trajectory_json(topology, n, rule, quantizer, lo, hi, seed as u64, steps as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn compare_rules_shape() {
        let v: Value = serde_json::from_str(&compare_rules_json(8, 0.6, 2, 1500, 1).unwrap()).unwrap();
        let steps = v["steps"].as_array().unwrap();
        assert!(steps.len() <= MAX_POINTS + 2);
        assert_eq!(steps.last().unwrap().as_u64(), Some(1500));
        assert_eq!(v["series"].as_array().unwrap().len(), 4);
        assert_eq!(v["names"][3], "compensating");
        let standard = v["series"][0].as_array().unwrap();
        assert!(standard.last().unwrap().as_f64().unwrap() < standard[0].as_f64().unwrap());
    }

    #[test]
    fn deviation_sweep_rows() {
        let v: Value = serde_json::from_str(&deviation_sweep_json("3,5", 10, 0.0, 20.0, 2).unwrap()).unwrap();
        let rows = v.as_array().unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1]["n"], 5);
        assert!(rows[0]["det_mean"].as_f64().unwrap() >= 0.0);
        assert!(deviation_sweep_json("1", 10, 0.0, 1.0, 0).is_err());
        assert!(deviation_sweep_json("4", 10, 2.0, 1.0, 0).is_err());
    }

    #[test]
    fn trajectory_matches_trial() {
        let v: Value = serde_json::from_str(&trajectory_json("ring", 6, "compensating", "det", -10.0, 10.0, 3, 2000).unwrap()).unwrap();
        let states = v["states"].as_array().unwrap();
        assert_eq!(states[0].as_array().unwrap().len(), 6);
        assert_eq!(v["steps"].as_array().unwrap().len(), states.len());
        // The trial stops at convergence; the replay runs on, so the symbolic
        // hit is the same step.
        assert_eq!(v["t_con"], v["symbolic_hit"]);
        assert!(trajectory_json("star", 6, "compensating", "det", 0.0, 1.0, 0, 10).is_err());
        assert!(trajectory_json("ring", 6, "nope", "det", 0.0, 1.0, 0, 10).is_err());
        assert!(trajectory_json("geometric", 10, "totally", "prob", 0.0, 5.0, 0, 500).is_ok());
    }
}
