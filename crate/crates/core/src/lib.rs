//! Randomized pairwise gossip for average consensus over digital links.
//!
//! At every step one edge of a connected graph is drawn at random and its two
//! endpoints update their real-valued states using quantized copies of each
//! other's values. Three quantized update laws are provided (totally
//! quantized, partially quantized, compensating) alongside the exact gossip
//! baseline, together with:
//!
//! * the uniform quantizers ([`quantize`]),
//! * the exact integer symbolic dynamics `n_i = floor(2 x_i)` that the
//!   deterministic variants reduce to ([`symbolic`]),
//! * the mean-square covariance recursion for the compensating law with
//!   randomized rounding ([`analysis`]),
//! * a seeded trial and batch driver ([`sim`]) and the canned experiments
//!   behind the command-line tool ([`experiments`], [`config`]).

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod experiments;
pub mod graph;
pub mod quantize;
pub mod rng;
pub mod sim;
pub mod symbolic;

pub use analysis::CovarianceMatrix;
pub use dynamics::{average, Protocol, StateVector, UpdateRule};
pub use graph::Graph;
pub use quantize::{Quantizer, QuantizerKind};
pub use sim::{run_batch, run_trial, shadow_trial, BatchSummary, InitSpec, TrialConfig, TrialResult};
pub use symbolic::{SymbolicMap, SymbolicVector};
