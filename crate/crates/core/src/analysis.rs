//! Mean-square analysis of the compensating rule with randomized rounding.
//!
//! With `y(t) = x(t) - x_ave(0) 1` and `e(t) = q_p(x(t)) - x(t)`, the second
//! moment `Sigma_yy(t) = E[y y^T]` obeys
//!
//! ```text
//! Sigma_yy(t+1) = N(Sigma_yy(t)) + Q(Sigma_ee(t)),
//! N(M) = E[P M P],   Q(M) = E[(P - I) M (P - I)],
//! ```
//!
//! where `P = I - E_ij / 2` for the active edge. Since `Sigma_ee <= I/4`, the
//! auxiliary recursion `S(t+1) = N(S(t)) + Qbar / 4` with `Qbar = I - E[P]`
//! dominates it, and converges to `(I - 11^T / N) / 4` for every choice of
//! edge probabilities. That bounds the per-node RMS distance from the initial
//! average by `Jbar = sqrt((N - 1) / N) / 2 <= 1/2`.

use rand::Rng;
use thiserror::Error;

use crate::dynamics::{DynamicsError, Protocol, StateVector, UpdateRule};
use crate::graph::Graph;
use crate::quantize::{QuantizeError, Quantizer};
use crate::rng::{derive_seed, trial_rng};

/// Symmetry tolerance for covariance inputs.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative tolerance for `1^T M 1 = 0`, scaled by `N^2`.
pub const SUBSPACE_TOL: f64 = 1e-9;
/// Consensus tolerance for [`deviation_z`].
pub const CONSENSUS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("matrix is {got}x{got}, expected {expected}x{expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("data length {len} is not a square number of entries")]
    NotSquare { len: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not in the zero-sum subspace (1^T M 1 = {0:e})")]
    NotInSubspace(f64),
    #[error("{what} must be positive")]
    NonPositive { what: &'static str },
    #[error("final state is not at consensus (spread {0:e})")]
    NotAtConsensus(f64),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
}

/// Dense row-major `N x N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CovarianceMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(data: Vec<f64>) -> Result<Self, AnalysisError> {
        let n = (data.len() as f64).sqrt().round() as usize;
        if n * n != data.len() {
            return Err(AnalysisError::NotSquare { len: data.len() });
        }
        Ok(Self { n, data })
    }

    /// `y y^T`.
    pub fn outer(y: &[f64]) -> Self {
        let n = y.len();
        let data = y.iter().flat_map(|&a| y.iter().map(move |&b| a * b)).collect();
        Self { n, data }
    }

    /// `I - 11^T / n`, the projector onto zero-mean vectors.
    pub fn centering(n: usize) -> Self {
        let mut m = Self::identity(n);
        let c = 1.0 / n as f64;
        m.data.iter_mut().for_each(|v| *v -= c);
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// `1^T M 1`.
    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|v| v * c).collect() }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &Self) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    fn check_dim(&self, n: usize) -> Result<(), AnalysisError> {
        if self.n == n {
            Ok(())
        } else {
            Err(AnalysisError::DimensionMismatch { expected: n, got: self.n })
        }
    }

    /// Checks symmetry and membership in `{M : 1^T M 1 = 0}`.
    pub fn validate_in_subspace(&self) -> Result<(), AnalysisError> {
        let asym = self.max_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(AnalysisError::NotSymmetric(asym));
        }
        let total = self.total();
        if total.abs() > SUBSPACE_TOL * (self.n * self.n) as f64 {
            return Err(AnalysisError::NotInSubspace(total));
        }
        Ok(())
    }
}

/// `E[P] = sum_e W_e (I - E_e / 2)`.
pub fn expected_update_matrix(g: &Graph) -> CovarianceMatrix {
    let mut m = CovarianceMatrix::identity(g.n_nodes());
    m.add_scaled(-1.0, &q_bar(g));
    m
}

/// `Qbar = E[(I - P)^2] = I - E[P] = sum_e W_e E_e / 2`, half the weighted
/// Laplacian.
pub fn q_bar(g: &Graph) -> CovarianceMatrix {
    let n = g.n_nodes();
    let mut m = CovarianceMatrix::zeros(n);
    for (&(i, j), &w) in g.edges().iter().zip(g.edge_probs()) {
        let h = 0.5 * w;
        m.data[i * n + i] += h;
        m.data[j * n + j] += h;
        m.data[i * n + j] -= h;
        m.data[j * n + i] -= h;
    }
    m
}

/// `N(M) = E[P M P]`.
///
/// `P_e M P_e` differs from `M` only in rows and columns `i, j`: both rows
/// become their average, both columns become their average, and the 2x2
/// block becomes the mean of its four entries. Each edge therefore costs
/// `O(N)`.
pub fn apply_n(m: &CovarianceMatrix, g: &Graph) -> Result<CovarianceMatrix, AnalysisError> {
    let n = g.n_nodes();
    m.check_dim(n)?;
    let mut out = m.clone();
    for (&(i, j), &w) in g.edges().iter().zip(g.edge_probs()) {
        let hw = 0.5 * w;
        for l in 0..n {
            if l == i || l == j {
                continue;
            }
            // rows
            let (mil, mjl) = (m.get(i, l), m.get(j, l));
            out.data[i * n + l] += hw * (mjl - mil);
            out.data[j * n + l] += hw * (mil - mjl);
            // columns
            let (mli, mlj) = (m.get(l, i), m.get(l, j));
            out.data[l * n + i] += hw * (mlj - mli);
            out.data[l * n + j] += hw * (mli - mlj);
        }
        let s = 0.25 * (m.get(i, i) + m.get(i, j) + m.get(j, i) + m.get(j, j));
        for (a, b) in [(i, i), (i, j), (j, i), (j, j)] {
            out.data[a * n + b] += w * (s - m.get(a, b));
        }
    }
    Ok(out)
}

/// One step of the auxiliary recursion, `N(S) + Qbar / 4`, with `Qbar`
/// supplied by the caller.
fn auxiliary_step(s: &CovarianceMatrix, g: &Graph, qbar: &CovarianceMatrix) -> Result<CovarianceMatrix, AnalysisError> {
    let mut next = apply_n(s, g)?;
    next.add_scaled(0.25, qbar);
    Ok(next)
}

/// Iterates `S <- N(S) + Qbar / 4` `steps` times from `sigma0`, which must be
/// symmetric with `1^T sigma0 1 = 0`.
pub fn iterate_auxiliary(g: &Graph, sigma0: &CovarianceMatrix, steps: usize) -> Result<CovarianceMatrix, AnalysisError> {
    let mut s = sigma0.clone();
    auxiliary_trajectory(g, sigma0, steps, |_, m| s = m.clone())?;
    Ok(s)
}

/// Runs the auxiliary recursion and calls `visit(t, S(t))` for `t = 0..=steps`.
pub fn auxiliary_trajectory<F>(g: &Graph, sigma0: &CovarianceMatrix, steps: usize, mut visit: F) -> Result<(), AnalysisError>
where
    F: FnMut(usize, &CovarianceMatrix),
{
    sigma0.check_dim(g.n_nodes())?;
    sigma0.validate_in_subspace()?;
    let qbar = q_bar(g);
    let mut s = sigma0.clone();
    visit(0, &s);
    for t in 1..=steps {
        s = auxiliary_step(&s, g, &qbar)?;
        visit(t, &s);
    }
    Ok(())
}

/// `(I - 11^T / n) / 4`, the limit of the auxiliary recursion.
pub fn theoretical_fixed_point(n: usize) -> Result<CovarianceMatrix, AnalysisError> {
    if n < 2 {
        return Err(AnalysisError::TooFewNodes(n));
    }
    Ok(CovarianceMatrix::centering(n).scaled(0.25))
}

/// `sqrt((n - 1) / n) / 2`.
pub fn j_bar(n: usize) -> Result<f64, AnalysisError> {
    if n < 2 {
        return Err(AnalysisError::TooFewNodes(n));
    }
    Ok(0.5 * ((n - 1) as f64 / n as f64).sqrt())
}

/// `|| N(S*) + Qbar / 4 - S* ||_F` for the closed-form fixed point `S*`.
pub fn fixed_point_residual(g: &Graph) -> Result<f64, AnalysisError> {
    let star = theoretical_fixed_point(g.n_nodes())?;
    let next = auxiliary_step(&star, g, &q_bar(g))?;
    Ok(next.distance(&star))
}

/// Monte Carlo estimate of the RMS distance from the initial average.
#[derive(Debug, Clone, PartialEq)]
pub struct JEstimate {
    /// `sqrt(mean over trials of ||y(horizon)||^2 / N)`.
    pub j: f64,
    /// Delta-method standard error of `j`.
    pub j_std_err: f64,
    pub mse: f64,
    pub mse_std_err: f64,
    pub trials: usize,
    pub horizon: u64,
}

/// Default horizon `200 N ln N` (at least `N`).
pub fn default_horizon(n: usize) -> u64 {
    ((200.0 * n as f64 * (n as f64).ln()).ceil() as u64).max(n as u64)
}

/// Runs `trials` independent compensating trials with randomized rounding
/// from `x0`, each for `horizon` steps, and estimates `J(W)` from the final
/// squared distances. Trial `k` uses seed `derive_seed(seed, k)`.
pub fn estimate_j(g: &Graph, x0: &StateVector, trials: usize, horizon: u64, seed: u64) -> Result<JEstimate, AnalysisError> {
    if trials == 0 {
        return Err(AnalysisError::NonPositive { what: "trials" });
    }
    if horizon == 0 {
        return Err(AnalysisError::NonPositive { what: "horizon" });
    }
    if x0.len() != g.n_nodes() {
        return Err(DynamicsError::LengthMismatch { expected: g.n_nodes(), got: x0.len() }.into());
    }
    let n = g.n_nodes() as f64;
    let avg0 = x0.average();
    let protocol = Protocol::new(UpdateRule::Compensating, Quantizer::probabilistic());
    let one = |k: usize| -> Result<f64, AnalysisError> {
        let mut rng = trial_rng(derive_seed(seed, k as u64));
        let mut x = x0.as_slice().to_vec();
        for _ in 0..horizon {
            let e = g.sample_edge(&mut rng);
            protocol.step_pair(&mut x, e, &mut rng)?;
        }
        Ok(x.iter().map(|v| (v - avg0) * (v - avg0)).sum::<f64>() / n)
    };
    let per_trial = crate::sim::map_indexed(trials, one)?;
    let (mse, var) = mean_var(&per_trial);
    let mse_std_err = (var / trials as f64).sqrt();
    let j = mse.sqrt();
    let j_std_err = if j > 0.0 { mse_std_err / (2.0 * j) } else { mse_std_err.sqrt() };
    Ok(JEstimate { j, j_std_err, mse, mse_std_err, trials, horizon })
}

/// Sample mean and unbiased variance (0 for fewer than two samples).
pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var)
}

/// Sample moments of the quantization error `e = q_p(x) - x` at a fixed state.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub mean: Vec<f64>,
    /// Sample covariance (normalized by `samples`, about the sample mean).
    pub covariance: CovarianceMatrix,
    pub samples: usize,
}

pub fn quantization_error_stats<R: Rng + ?Sized>(x: &StateVector, samples: usize, rng: &mut R) -> Result<ErrorStats, AnalysisError> {
    if samples == 0 {
        return Err(AnalysisError::NonPositive { what: "samples" });
    }
    let n = x.len();
    let q = Quantizer::probabilistic();
    let mut sum = vec![0.0; n];
    let mut cross = CovarianceMatrix::zeros(n);
    let mut e = vec![0.0; n];
    for _ in 0..samples {
        for (k, &v) in x.iter().enumerate() {
            e[k] = q.quantize(v, rng)? - v;
            sum[k] += e[k];
        }
        for a in 0..n {
            for b in 0..n {
                cross.data[a * n + b] += e[a] * e[b];
            }
        }
    }
    let s = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|v| v / s).collect();
    let mut covariance = cross.scaled(1.0 / s);
    for a in 0..n {
        for b in 0..n {
            covariance.data[a * n + b] -= mean[a] * mean[b];
        }
    }
    Ok(ErrorStats { mean, covariance, samples })
}

/// Empirical second moments of the compensating/randomized process at a
/// fixed time, over independent trials from the same `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMoments {
    pub steps: u64,
    pub trials: usize,
    /// Mean of `y y^T`.
    pub sigma_yy: CovarianceMatrix,
    /// Mean of `y e^T`, with `e` a fresh quantization of `x(steps)`.
    pub sigma_ye: CovarianceMatrix,
    /// Per-trial values of `||y||^2`, for confidence intervals.
    pub sq_norms: Vec<f64>,
}

pub fn empirical_moments(g: &Graph, x0: &StateVector, steps: u64, trials: usize, seed: u64) -> Result<EmpiricalMoments, AnalysisError> {
    if trials == 0 {
        return Err(AnalysisError::NonPositive { what: "trials" });
    }
    let n = g.n_nodes();
    if x0.len() != n {
        return Err(DynamicsError::LengthMismatch { expected: n, got: x0.len() }.into());
    }
    let avg0 = x0.average();
    let protocol = Protocol::new(UpdateRule::Compensating, Quantizer::probabilistic());
    let q = Quantizer::probabilistic();
    let mut sigma_yy = CovarianceMatrix::zeros(n);
    let mut sigma_ye = CovarianceMatrix::zeros(n);
    let mut sq_norms = Vec::with_capacity(trials);
    for k in 0..trials {
        let mut rng = trial_rng(derive_seed(seed, k as u64));
        let mut x = x0.as_slice().to_vec();
        for _ in 0..steps {
            let e = g.sample_edge(&mut rng);
            protocol.step_pair(&mut x, e, &mut rng)?;
        }
        let y: Vec<f64> = x.iter().map(|v| v - avg0).collect();
        let err: Vec<f64> = x.iter().map(|&v| q.quantize(v, &mut rng).map(|h| h - v)).collect::<Result<_, _>>()?;
        for a in 0..n {
            for b in 0..n {
                sigma_yy.data[a * n + b] += y[a] * y[b];
                sigma_ye.data[a * n + b] += y[a] * err[b];
            }
        }
        sq_norms.push(y.iter().map(|v| v * v).sum());
    }
    let inv = 1.0 / trials as f64;
    Ok(EmpiricalMoments { steps, trials, sigma_yy: sigma_yy.scaled(inv), sigma_ye: sigma_ye.scaled(inv), sq_norms })
}

/// `|alpha - x_ave(x0)|` for a final state at consensus on `alpha`.
pub fn deviation_z(final_state: &[f64], x0: &[f64]) -> Result<f64, AnalysisError> {
    let avg0 = crate::dynamics::average(x0)?;
    crate::dynamics::average(final_state)?;
    let (lo, hi) = final_state.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo > CONSENSUS_TOL {
        return Err(AnalysisError::NotAtConsensus(hi - lo));
    }
    Ok((final_state[0] - avg0).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete_graph, random_geometric_graph, ring_graph};
    use nalgebra::{DMatrix, SymmetricEigen};

    fn dense_p(n: usize, i: usize, j: usize) -> DMatrix<f64> {
        let mut p = DMatrix::identity(n, n);
        p[(i, i)] = 0.5;
        p[(j, j)] = 0.5;
        p[(i, j)] = 0.5;
        p[(j, i)] = 0.5;
        p
    }

    fn to_dense(m: &CovarianceMatrix) -> DMatrix<f64> {
        DMatrix::from_row_slice(m.dim(), m.dim(), m.as_slice())
    }

    /// Reference `E[P M P]` by explicit dense products.
    fn apply_n_dense(m: &CovarianceMatrix, g: &Graph) -> DMatrix<f64> {
        let n = g.n_nodes();
        let md = to_dense(m);
        let mut out = DMatrix::zeros(n, n);
        for (&(i, j), &w) in g.edges().iter().zip(g.edge_probs()) {
            let p = dense_p(n, i, j);
            out += w * (&p * &md * &p);
        }
        out
    }

    fn random_symmetric(n: usize, seed: u64) -> CovarianceMatrix {
        let mut rng = trial_rng(seed);
        let mut m = CovarianceMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.gen_range(-1.0..1.0);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }

    #[test]
    fn expected_update_examples() {
        let p = expected_update_matrix(&complete_graph(2).unwrap());
        assert_eq!(p.as_slice(), &[0.5, 0.5, 0.5, 0.5]);
        let p = expected_update_matrix(&complete_graph(3).unwrap());
        for i in 0..3 {
            assert!((p.get(i, i) - 2.0 / 3.0).abs() < 1e-15);
        }
        let mut rng = trial_rng(2);
        let g = random_geometric_graph(9, 0.6, &mut rng).unwrap();
        let p = expected_update_matrix(&g);
        for i in 0..9 {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(p.row(i).iter().all(|&v| v >= 0.0));
        }
        assert!(p.max_asymmetry() == 0.0);
    }

    #[test]
    fn q_bar_examples() {
        let q = q_bar(&complete_graph(2).unwrap());
        assert_eq!(q.as_slice(), &[0.5, -0.5, -0.5, 0.5]);
        let q = q_bar(&ring_graph(7).unwrap());
        for i in 0..7 {
            assert!(q.row(i).iter().sum::<f64>().abs() < 1e-15);
        }
        let eig = SymmetricEigen::new(to_dense(&q));
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-14));
    }

    #[test]
    fn apply_n_examples() {
        let g = complete_graph(2).unwrap();
        let z = apply_n(&CovarianceMatrix::zeros(2), &g).unwrap();
        assert_eq!(z.as_slice(), &[0.0; 4]);
        let c = apply_n(&CovarianceMatrix::centering(2), &g).unwrap();
        assert!(c.frobenius() < 1e-15);
        let g = ring_graph(6).unwrap();
        let m = random_symmetric(6, 1);
        assert!((apply_n(&m, &g).unwrap().total() - m.total()).abs() < 1e-12);
        assert_eq!(apply_n(&m, &complete_graph(5).unwrap()), Err(AnalysisError::DimensionMismatch { expected: 5, got: 6 }));
    }

    #[test]
    fn apply_n_matches_dense_products() {
        let mut rng = trial_rng(5);
        let graphs = [complete_graph(6).unwrap(), ring_graph(7).unwrap(), random_geometric_graph(8, 0.6, &mut rng).unwrap()];
        for (k, g) in graphs.iter().enumerate() {
            // Also a non-symmetric input.
            let mut m = random_symmetric(g.n_nodes(), 10 + k as u64);
            m.set(0, 1, m.get(0, 1) + 0.3);
            let fast = to_dense(&apply_n(&m, g).unwrap());
            let slow = apply_n_dense(&m, g);
            assert!((fast - slow).abs().max() < 1e-14);
        }
    }

    #[test]
    fn apply_n_matches_sampled_products() {
        let g = ring_graph(5).unwrap();
        let m = random_symmetric(5, 3);
        let exact = apply_n(&m, &g).unwrap();
        let mut rng = trial_rng(4);
        let samples = 40_000;
        let mut sum = DMatrix::<f64>::zeros(5, 5);
        let mut sq = DMatrix::<f64>::zeros(5, 5);
        let md = to_dense(&m);
        for _ in 0..samples {
            let (i, j) = g.sample_edge(&mut rng);
            let p = dense_p(5, i, j);
            let s = &p * &md * &p;
            sq += s.component_mul(&s);
            sum += s;
        }
        for a in 0..5 {
            for b in 0..5 {
                let mean = sum[(a, b)] / samples as f64;
                let var = sq[(a, b)] / samples as f64 - mean * mean;
                let se = (var.max(0.0) / samples as f64).sqrt();
                assert!((mean - exact.get(a, b)).abs() <= 3.0 * se + 1e-12, "({a},{b})");
            }
        }
    }

    #[test]
    fn auxiliary_recursion() {
        let g = complete_graph(4).unwrap();
        let star = theoretical_fixed_point(4).unwrap();
        assert!(iterate_auxiliary(&g, &star, 1).unwrap().distance(&star) < 1e-15);
        let zero = CovarianceMatrix::zeros(4);
        assert_eq!(iterate_auxiliary(&g, &zero, 0).unwrap(), zero);
        let mut prev = f64::INFINITY;
        let mut s = zero.clone();
        for _ in 0..200 {
            s = iterate_auxiliary(&g, &s, 1).unwrap();
            let d = s.distance(&star);
            assert!(d <= prev + 1e-15);
            prev = d;
        }
        assert!(prev < 1e-12);
        // trace grows toward (N - 1) / 4
        assert!((s.trace() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auxiliary_rejects_bad_start() {
        let g = complete_graph(3).unwrap();
        assert!(matches!(iterate_auxiliary(&g, &CovarianceMatrix::identity(3), 3), Err(AnalysisError::NotInSubspace(_))));
        let mut m = CovarianceMatrix::zeros(3);
        m.set(0, 1, 1.0);
        m.set(0, 2, -1.0);
        assert!(matches!(iterate_auxiliary(&g, &m, 3), Err(AnalysisError::NotSymmetric(_))));
        assert!(iterate_auxiliary(&g, &CovarianceMatrix::zeros(2), 3).is_err());
    }

    #[test]
    fn limit_is_independent_of_weights() {
        let g = complete_graph(4).unwrap();
        let w = g.reweighted(vec![0.4, 0.05, 0.05, 0.1, 0.1, 0.3]).unwrap();
        let zero = CovarianceMatrix::zeros(4);
        let a = iterate_auxiliary(&g, &zero, 3000).unwrap();
        let b = iterate_auxiliary(&w, &zero, 3000).unwrap();
        assert!(a.distance(&b) < 1e-12);
    }

    #[test]
    fn fixed_point_and_jbar() {
        let s = theoretical_fixed_point(2).unwrap();
        assert_eq!(s.as_slice(), &[0.125, -0.125, -0.125, 0.125]);
        assert!((j_bar(2).unwrap() - 0.353_553_390_593_273_8).abs() < 1e-15);
        assert!((j_bar(4).unwrap() - 0.433_012_701_892_219_3).abs() < 1e-15);
        for n in 2..12 {
            assert!((theoretical_fixed_point(n).unwrap().trace() - (n as f64 - 1.0) / 4.0).abs() < 1e-14);
        }
        assert_eq!(j_bar(1), Err(AnalysisError::TooFewNodes(1)));
        assert!(theoretical_fixed_point(0).is_err());
    }

    #[test]
    fn j_estimate_edge_cases() {
        let g = complete_graph(4).unwrap();
        let x0 = StateVector::constant(4, 3.0).unwrap();
        let est = estimate_j(&g, &x0, 20, 100, 1).unwrap();
        assert_eq!(est.j, 0.0);
        assert!(estimate_j(&g, &x0, 0, 10, 1).is_err());
        assert!(estimate_j(&g, &x0, 10, 0, 1).is_err());
    }

    #[test]
    fn j_estimate_below_bound() {
        let g = complete_graph(5).unwrap();
        let x0 = StateVector::new(vec![-3.7, 10.2, 0.4, 7.75, -1.1]).unwrap();
        let est = estimate_j(&g, &x0, 2000, default_horizon(5), 3).unwrap();
        assert!(est.j <= j_bar(5).unwrap() + 3.0 * est.j_std_err, "{est:?}");
    }

    #[test]
    fn error_stats() {
        let mut rng = trial_rng(6);
        let ints = StateVector::new(vec![1.0, -2.0, 7.0]).unwrap();
        let s = quantization_error_stats(&ints, 1000, &mut rng).unwrap();
        assert!(s.mean.iter().all(|&m| m == 0.0));
        assert!(s.covariance.as_slice().iter().all(|&v| v == 0.0));

        let samples = 200_000;
        let half = StateVector::new(vec![0.5, 0.5, 0.5]).unwrap();
        let s = quantization_error_stats(&half, samples, &mut rng).unwrap();
        // Bernoulli(1/2) variance 1/4; sd of the sample variance ~ 0.25/sqrt(n)
        // is tiny, and off-diagonal covariance sd ~ 0.25/sqrt(n).
        let tol = 4.0 * 0.25 / (samples as f64).sqrt();
        for a in 0..3 {
            assert!((s.covariance.get(a, a) - 0.25).abs() < tol);
            for b in 0..3 {
                if a != b {
                    assert!(s.covariance.get(a, b).abs() < tol);
                }
            }
        }
        let x = StateVector::new(vec![0.3]).unwrap();
        let s = quantization_error_stats(&x, samples, &mut rng).unwrap();
        // p(1-p) = 0.21; the variance of the sample variance of a Bernoulli
        // is p(1-p)(1 - 4p(1-p)) / n.
        let se = (0.21f64 * (1.0 - 0.84) / samples as f64).sqrt();
        assert!((s.covariance.get(0, 0) - 0.21).abs() < 4.0 * se);
        assert!(s.covariance.get(0, 0) <= 0.25);
    }

    #[test]
    fn deviation_examples() {
        assert_eq!(deviation_z(&[3.0, 3.0], &[2.0, 4.0]), Ok(0.0));
        assert_eq!(deviation_z(&[4.0, 4.0], &[2.0, 4.0]), Ok(1.0));
        assert!(matches!(deviation_z(&[4.0, 3.0], &[2.0, 4.0]), Err(AnalysisError::NotAtConsensus(_))));
        assert!(deviation_z(&[], &[1.0]).is_err());
    }

    #[test]
    fn cross_moment_vanishes_and_aux_dominates() {
        let g = ring_graph(6).unwrap();
        let x0 = StateVector::new(vec![4.3, -2.8, 0.6, 9.1, -5.5, 1.25]).unwrap();
        let avg0 = x0.average();
        let y0: Vec<f64> = x0.iter().map(|v| v - avg0).collect();
        let sigma0 = CovarianceMatrix::outer(&y0);
        for steps in [5u64, 20, 80] {
            let trials = 4000;
            let emp = empirical_moments(&g, &x0, steps, trials, 17).unwrap();
            // y and e are uncorrelated: every entry of the sample mean of
            // y e^T within 4 standard errors of zero (|y_a e_b| <= |y_a|).
            let n = 6;
            for a in 0..n {
                let bound = emp.sigma_yy.get(a, a).sqrt() * 0.5;
                for b in 0..n {
                    assert!(emp.sigma_ye.get(a, b).abs() <= 4.0 * bound / (trials as f64).sqrt() + 1e-12);
                }
            }
            let aux = iterate_auxiliary(&g, &sigma0, steps as usize).unwrap();
            let (m, v) = mean_var(&emp.sq_norms);
            assert!(aux.trace() >= m - 3.0 * (v / trials as f64).sqrt(), "t={steps}: {} vs {m}", aux.trace());
        }
    }
}
