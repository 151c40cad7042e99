//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys form a closed
//! set ([`KEYS`]); anything else is rejected. Values given later (for example
//! command-line overrides) replace earlier ones.
//!
//! ```text
//! topology = geometric
//! n = 20
//! radius = 0.4
//! quantizer = prob
//! rule = compensating
//! init = uniform:-100:100
//! seed = 7
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::dynamics::UpdateRule;
use crate::graph::{complete_graph, grid_graph, random_geometric_graph, ring_graph, Graph, GraphError};
use crate::quantize::{Quantizer, QuantizerKind};
use crate::rng::{derive_seed, trial_rng};
use crate::sim::{InitSpec, TrialConfig};

/// Every accepted key with its default value.
pub const KEYS: &[(&str, &str)] = &[
    ("topology", "complete"),
    ("n", "10"),
    ("rows", "3"),
    ("cols", "3"),
    ("radius", "0.4"),
    ("edge_probs", "uniform"),
    ("quantizer", "det"),
    ("quantizer_step", "1"),
    ("rule", "compensating"),
    ("init", "uniform:-100:100"),
    ("seed", "0"),
    ("max_steps", "auto"),
    ("trace_stride", "1"),
    ("hold_steps", "0"),
    ("trials", "100"),
    ("threads", "auto"),
    ("sizes", "10,20,40,60,80,100"),
    ("intervals", "0:20,0:100"),
    ("steps", "1000"),
];

/// Stream index used to derive the seed of a random graph from `seed`, so
/// that the layout does not share draws with trial 0.
pub const GRAPH_STREAM: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
}

fn bad(key: &str, value: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::BadValue { key: key.into(), value: value.into(), reason: reason.to_string() }
}

fn default_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Complete,
    Ring,
    Grid,
    Geometric,
}

impl FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "complete" => Ok(Self::Complete),
            "ring" => Ok(Self::Ring),
            "grid" => Ok(Self::Grid),
            "geometric" => Ok(Self::Geometric),
            _ => Err("expected complete, ring, grid or geometric".into()),
        }
    }
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: idx + 1, text: raw.into() })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if default_of(key).is_none() {
            return Err(ConfigError::UnknownKey(key.into()));
        }
        self.values.insert(key.into(), value.into());
        Ok(())
    }

    /// Sets `key` only if it has no explicit value yet.
    pub fn set_default(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !self.values.contains_key(key) {
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax { line: 0, text: kv.into() })?;
        self.set(k.trim(), v.trim())
    }

    /// Explicit value or the default.
    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).or_else(|| default_of(key)).unwrap_or_else(|| panic!("unknown key {key}"))
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn parse_as<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let v = self.get(key);
        v.parse().map_err(|e| bad(key, v, e))
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.parse_as(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        self.parse_as(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.parse_as(key)?;
        if !v.is_finite() {
            return Err(bad(key, self.get(key), "not finite"));
        }
        Ok(v)
    }

    /// `auto` maps to `None`.
    pub fn optional_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        if self.get(key) == "auto" {
            Ok(None)
        } else {
            self.u64(key).map(Some)
        }
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.u64("seed")
    }

    pub fn topology(&self) -> Result<Topology, ConfigError> {
        self.parse_as("topology")
    }

    /// Builds the graph. Geometric layouts draw from
    /// `derive_seed(seed, GRAPH_STREAM)`.
    pub fn graph(&self) -> Result<Graph, ConfigError> {
        let g = match self.topology()? {
            Topology::Complete => complete_graph(self.usize("n")?)?,
            Topology::Ring => ring_graph(self.usize("n")?)?,
            Topology::Grid => grid_graph(self.usize("rows")?, self.usize("cols")?)?,
            Topology::Geometric => {
                let mut rng = trial_rng(derive_seed(self.seed()?, GRAPH_STREAM));
                random_geometric_graph(self.usize("n")?, self.f64("radius")?, &mut rng)?
            }
        };
        self.apply_edge_probs(g)
    }

    fn apply_edge_probs(&self, g: Graph) -> Result<Graph, ConfigError> {
        let v = self.get("edge_probs");
        if v == "uniform" {
            return Ok(g);
        }
        let path = v.strip_prefix("file:").ok_or_else(|| bad("edge_probs", v, "expected uniform or file:<path>"))?;
        let file = fs::File::open(path).map_err(|e| ConfigError::Io { path: path.into(), msg: e.to_string() })?;
        Ok(g.reweighted_from_csv(file)?)
    }

    pub fn node_count(&self) -> Result<usize, ConfigError> {
        match self.topology()? {
            Topology::Grid => Ok(self.usize("rows")? * self.usize("cols")?),
            _ => self.usize("n"),
        }
    }

    pub fn quantizer(&self) -> Result<Quantizer, ConfigError> {
        let kind: QuantizerKind = self.parse_as("quantizer")?;
        let step = self.f64("quantizer_step")?;
        Quantizer::new(kind, step).map_err(|e| bad("quantizer", self.get("quantizer"), e))
    }

    pub fn rule(&self) -> Result<UpdateRule, ConfigError> {
        self.parse_as("rule")
    }

    pub fn init(&self) -> Result<InitSpec, ConfigError> {
        let v = self.get("init");
        if let Some(rest) = v.strip_prefix("uniform:") {
            let (lo, hi) = parse_interval(rest).ok_or_else(|| bad("init", v, "expected uniform:<lo>:<hi> with lo <= hi"))?;
            return Ok(InitSpec::Uniform { lo, hi });
        }
        if let Some(path) = v.strip_prefix("file:") {
            let values = read_values(path)?;
            return Ok(InitSpec::Values(values));
        }
        Err(bad("init", v, "expected uniform:<lo>:<hi> or file:<path>"))
    }

    pub fn trial_config(&self) -> Result<TrialConfig, ConfigError> {
        let mut cfg = TrialConfig::new(self.rule()?, self.quantizer()?, self.init()?, self.seed()?);
        cfg.max_steps = self.optional_u64("max_steps")?;
        if cfg.max_steps == Some(0) {
            return Err(bad("max_steps", "0", "must be positive"));
        }
        cfg.trace_stride = self.u64("trace_stride")?;
        if cfg.trace_stride == 0 {
            return Err(bad("trace_stride", "0", "must be at least 1"));
        }
        cfg.hold_steps = self.u64("hold_steps")?;
        Ok(cfg)
    }

    pub fn trials(&self) -> Result<usize, ConfigError> {
        let t = self.usize("trials")?;
        if t == 0 {
            return Err(bad("trials", "0", "must be at least 1"));
        }
        Ok(t)
    }

    /// `auto` maps to `None`.
    pub fn threads(&self) -> Result<Option<usize>, ConfigError> {
        Ok(self.optional_u64("threads")?.map(|t| t as usize))
    }

    pub fn sizes(&self) -> Result<Vec<usize>, ConfigError> {
        let v = self.get("sizes");
        let sizes: Vec<usize> = v
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad("sizes", v, e))?;
        if sizes.is_empty() || sizes.iter().any(|&n| n < 2) {
            return Err(bad("sizes", v, "every size must be at least 2"));
        }
        Ok(sizes)
    }

    pub fn intervals(&self) -> Result<Vec<(f64, f64)>, ConfigError> {
        let v = self.get("intervals");
        v.split(',').map(|s| parse_interval(s.trim()).ok_or_else(|| bad("intervals", v, "expected lo:hi[,lo:hi...]"))).collect()
    }

    /// Every key with its effective value, one `key = value` per line, in
    /// key order.
    pub fn render_effective(&self) -> String {
        let mut keys: Vec<&str> = KEYS.iter().map(|(k, _)| *k).collect();
        keys.sort_unstable();
        keys.iter().map(|k| format!("{k} = {}\n", self.get(k))).collect()
    }
}

fn parse_interval(s: &str) -> Option<(f64, f64)> {
    let (lo, hi) = s.split_once(':')?;
    let lo: f64 = lo.trim().parse().ok()?;
    let hi: f64 = hi.trim().parse().ok()?;
    (lo.is_finite() && hi.is_finite() && lo <= hi).then_some((lo, hi))
}

/// Reads one value per line (or comma-separated), skipping blanks and `#`.
fn read_values(path: &str) -> Result<Vec<f64>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.into(), msg: e.to_string() })?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for tok in line.split(',') {
            let tok = tok.trim();
            if tok.is_empty() {
                continue;
            }
            let v: f64 = tok.parse().map_err(|e| ConfigError::Io { path: path.into(), msg: format!("`{tok}`: {e}") })?;
            if !v.is_finite() {
                return Err(ConfigError::Io { path: path.into(), msg: format!("non-finite value `{tok}`") });
            }
            out.push(v);
        }
    }
    Ok(out)
}
