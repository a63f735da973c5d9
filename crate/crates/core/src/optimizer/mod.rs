//! Learning view weights by alternating eigendecomposition and an exact
//! simplex QP.
//!
//! The learned Laplacian is restricted to convex combinations
//! `L̂(μ) = Σ_k μ_k L̂_k` of the trace-normalized view Laplacians. The
//! objective is
//!
//! ```text
//! F(μ) = Σ_{i<c} λ_i(L̂(μ)) + γ Σ_k ‖L̂(μ) − L̂_k‖_F²
//! ```
//!
//! The first term is the sum of the `c` smallest eigenvalues (small when the
//! graph nearly splits into `c` components), the second keeps the learned
//! graph close to every view. By Ky Fan, the first term equals
//! `min_P tr(Pᵀ L̂(μ) P)` over orthonormal `n×c` matrices `P`, so fixing `P`
//! leaves a convex quadratic in `μ`.

mod qp;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use qp::{solve_weight_qp, WeightQp, MAX_VIEWS};

use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::linalg::{self, projected_trace};

/// Tolerance on `Σ μ_k = 1` and on the bundle members' unit traces.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Largest objective increase per alternation tolerated before reporting a bug.
pub const MONOTONE_TOL: f64 = 1e-9;

/// Eigenvalue gaps below this at the `c`/`c+1` boundary are flagged.
const DEGENERATE_GAP: f64 = 1e-12;

/// The trace-normalized per-view Laplacians.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianBundle {
    laplacians: Vec<Laplacian>,
}

impl LaplacianBundle {
    pub fn new(laplacians: Vec<Laplacian>) -> Result<Self> {
        let Some(first) = laplacians.first() else {
            return Err(Error::InvalidInput("bundle needs at least one view".into()));
        };
        let n = first.n();
        for (k, l) in laplacians.iter().enumerate() {
            if l.n() != n {
                return Err(Error::Dimension(format!(
                    "view {k} laplacian is {}x{}, expected {n}x{n}",
                    l.n(),
                    l.n()
                )));
            }
            if !l.is_trace_normalized() || (l.trace() - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::ContractViolation(format!(
                    "view {k} laplacian is not trace-normalized (trace {})",
                    l.trace()
                )));
            }
        }
        Ok(Self { laplacians })
    }

    pub fn laplacians(&self) -> &[Laplacian] {
        &self.laplacians
    }

    pub fn k(&self) -> usize {
        self.laplacians.len()
    }

    pub fn n(&self) -> usize {
        self.laplacians[0].n()
    }

    /// The same bundle with views reordered: view `i` of the result is view
    /// `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        Self::new(order.iter().map(|&i| self.laplacians[i].clone()).collect())
    }
}

/// A point of the probability simplex, one weight per view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ViewWeights(Vec<f64>);

impl ViewWeights {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidInput("weights must be non-empty".into()));
        }
        if mu.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "weights must be non-negative: {mu:?}"
            )));
        }
        let total: f64 = mu.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self(mu))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn one_hot(k: usize, index: usize) -> Self {
        let mut mu = vec![0.0; k];
        mu[index] = 1.0;
        Self(mu)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Desired number of clusters.
    pub clusters: usize,
    /// Weight of the disagreement term.
    pub gamma: f64,
    pub max_iters: usize,
    /// Stop once an alternation lowers the objective by less than this.
    pub tol: f64,
    /// Carried for provenance. The optimizer itself draws no random numbers:
    /// the eigensolver and QP are deterministic.
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn new(clusters: usize) -> Self {
        Self {
            clusters,
            gamma: 1.0,
            max_iters: 100,
            tol: 1e-8,
            seed: 0,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.clusters < 2 || self.clusters >= n {
            return Err(Error::InvalidParameter(format!(
                "cluster count must satisfy 2 <= c < n = {n}, got {}",
                self.clusters
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `|tr(Pᵀ L̂ P) − Σ_{i<c} λ_i|` at every P-step.
    pub ky_fan_gaps: Vec<f64>,
    /// Some P-step had `λ_c − λ_{c−1}` below 1e-12, so the basis choice
    /// across the cutoff was arbitrary.
    pub degenerate_gap: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerResult {
    pub weights: ViewWeights,
    /// Orthonormal `n×c` eigenvector basis of `combined`.
    pub basis: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub combined: Laplacian,
    /// Objective at the initial weights, then after every alternation.
    pub objective_trace: Vec<f64>,
    /// Weights at every entry of `objective_trace`.
    pub weight_trace: Vec<ViewWeights>,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: Diagnostics,
}

/// Eigenvector basis for the `c` smallest eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    pub basis: DMatrix<f64>,
    /// All eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
}

impl SpectralBasis {
    /// Sum of the `c` smallest eigenvalues.
    pub fn head_sum(&self) -> f64 {
        self.eigenvalues[..self.basis.ncols()].iter().sum()
    }
}

/// `Σ_k μ_k L̂_k`.
pub fn combine(bundle: &LaplacianBundle, mu: &ViewWeights) -> Result<Laplacian> {
    if mu.len() != bundle.k() {
        return Err(Error::Dimension(format!(
            "{} weights for {} views",
            mu.len(),
            bundle.k()
        )));
    }
    let n = bundle.n();
    let mut out = DMatrix::zeros(n, n);
    for (l, &w) in bundle.laplacians().iter().zip(mu.as_slice()) {
        if w != 0.0 {
            out += l.data() * w;
        }
    }
    Ok(Laplacian::from_parts(out, true))
}

pub fn spectral_basis(matrix: &DMatrix<f64>, c: usize) -> Result<SpectralBasis> {
    let n = matrix.nrows();
    if c == 0 || c >= n {
        return Err(Error::InvalidParameter(format!(
            "basis size must satisfy 1 <= c < n = {n}, got {c}"
        )));
    }
    let eig = linalg::eigh(matrix)?;
    Ok(SpectralBasis {
        basis: eig.vectors.columns(0, c).into_owned(),
        eigenvalues: eig.values,
    })
}

fn require_normalized(l: &Laplacian) -> Result<()> {
    if l.is_trace_normalized() {
        Ok(())
    } else {
        Err(Error::ContractViolation(
            "laplacian must be trace-normalized".into(),
        ))
    }
}

/// Sum of the `c` smallest eigenvalues of a trace-normalized Laplacian.
pub fn structural_loss(l: &Laplacian, c: usize) -> Result<f64> {
    require_normalized(l)?;
    let n = l.n();
    if c == 0 || c >= n {
        return Err(Error::InvalidParameter(format!(
            "cluster count must satisfy 1 <= c < n = {n}, got {c}"
        )));
    }
    Ok(linalg::eigvalsh(l.data())?[..c].iter().sum())
}

/// `Σ_k ‖L̂ − L̂_k‖_F²`.
pub fn disagreement_loss(l: &Laplacian, bundle: &LaplacianBundle) -> Result<f64> {
    require_normalized(l)?;
    if l.n() != bundle.n() {
        return Err(Error::Dimension(format!(
            "laplacian is {0}x{0}, bundle is {1}x{1}",
            l.n(),
            bundle.n()
        )));
    }
    Ok(bundle
        .laplacians()
        .iter()
        .map(|lk| (l.data() - lk.data()).norm_squared())
        .sum())
}

pub fn objective(bundle: &LaplacianBundle, mu: &ViewWeights, c: usize, gamma: f64) -> Result<f64> {
    let combined = combine(bundle, mu)?;
    Ok(structural_loss(&combined, c)? + gamma * disagreement_loss(&combined, bundle)?)
}

struct Iterate {
    weights: ViewWeights,
    combined: Laplacian,
    spectral: SpectralBasis,
    objective: f64,
}

fn evaluate(
    bundle: &LaplacianBundle,
    weights: ViewWeights,
    config: &OptimizerConfig,
) -> Result<Iterate> {
    let combined = combine(bundle, &weights)?;
    let spectral = spectral_basis(combined.data(), config.clusters)?;
    let objective = spectral.head_sum() + config.gamma * disagreement_loss(&combined, bundle)?;
    Ok(Iterate {
        weights,
        combined,
        spectral,
        objective,
    })
}

/// Alternate P-steps (eigendecomposition) and μ-steps (simplex QP) from
/// uniform weights until the objective stops decreasing.
pub fn alternate(bundle: &LaplacianBundle, config: &OptimizerConfig) -> Result<OptimizerResult> {
    config.validate(bundle.n())?;
    let c = config.clusters;

    let mut current = evaluate(bundle, ViewWeights::uniform(bundle.k()), config)?;
    let mut objective_trace = vec![current.objective];
    let mut weight_trace = vec![current.weights.clone()];
    let mut diagnostics = Diagnostics::default();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        let basis = &current.spectral.basis;
        let eigs = &current.spectral.eigenvalues;
        diagnostics.ky_fan_gaps.push(
            (projected_trace(current.combined.data(), basis) - current.spectral.head_sum()).abs(),
        );
        if eigs[c] - eigs[c - 1] < DEGENERATE_GAP {
            diagnostics.degenerate_gap = true;
        }

        let weights = solve_weight_qp(bundle, basis, config.gamma)?;
        let next = evaluate(bundle, weights, config)?;
        if next.objective > current.objective + MONOTONE_TOL {
            return Err(Error::InternalInvariant(format!(
                "objective increased from {} to {} at iteration {iterations}",
                current.objective, next.objective
            )));
        }
        let decrease = current.objective - next.objective;
        objective_trace.push(next.objective);
        weight_trace.push(next.weights.clone());
        current = next;
        if decrease < config.tol {
            converged = true;
            break;
        }
    }

    Ok(OptimizerResult {
        weights: current.weights,
        basis: current.spectral.basis,
        eigenvalues: current.spectral.eigenvalues,
        combined: current.combined,
        objective_trace,
        weight_trace,
        converged,
        iterations,
        diagnostics,
    })
}
