//! Exact minimization of the view-weight subproblem over the probability simplex.
//!
//! For a fixed basis `P` the weight objective is
//!
//! ```text
//! Σ_k μ_k tr(Pᵀ L̂_k P) + γ Σ_i ‖Σ_k μ_k L̂_k − L̂_i‖_F²
//! ```
//!
//! which expands to `μᵀAμ + bᵀμ + const` with `A = γK·Gram`,
//! `Gram_kl = ⟨L̂_k, L̂_l⟩_F` and `b_k = tr(Pᵀ L̂_k P) − 2γ Σ_i Gram_ki`.
//! The number of views is small, so every face of the simplex is visited
//! and the best feasible face minimizer is returned.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{LaplacianBundle, ViewWeights};
use crate::error::{Error, Result};
use crate::linalg::projected_trace;

/// Largest view count accepted by the face enumeration.
pub const MAX_VIEWS: usize = 20;

/// Objective values closer than this are treated as ties.
pub const TIE_TOL: f64 = 1e-12;

/// Relative threshold below which a curvature or gradient component is zero.
const FLAT_RTOL: f64 = 1e-10;

/// Weights within this distance of zero are still feasible, then clipped.
const FEASIBILITY_TOL: f64 = 1e-12;

/// The reduced quadratic `μᵀAμ + bᵀμ` for one basis.
#[derive(Clone, Debug)]
pub struct WeightQp {
    pub quadratic: DMatrix<f64>,
    pub linear: DVector<f64>,
    /// Constant dropped from the expansion: `γ Σ_i Gram_ii`.
    pub offset: f64,
}

impl WeightQp {
    pub fn new(bundle: &LaplacianBundle, basis: &DMatrix<f64>, gamma: f64) -> Result<Self> {
        let ls = bundle.laplacians();
        let k = ls.len();
        let n = bundle.n();
        if basis.nrows() != n {
            return Err(Error::Dimension(format!(
                "basis has {} rows, laplacians are {n}x{n}",
                basis.nrows()
            )));
        }
        let mut gram = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let v = ls[a].data().dot(ls[b].data());
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        let linear = DVector::from_fn(k, |a, _| {
            projected_trace(ls[a].data(), basis) - 2.0 * gamma * gram.row(a).sum()
        });
        Ok(Self {
            quadratic: &gram * (gamma * k as f64),
            linear,
            offset: gamma * gram.trace(),
        })
    }

    /// `μᵀAμ + bᵀμ` (without the constant offset).
    pub fn value(&self, mu: &[f64]) -> f64 {
        let mu = DVector::from_column_slice(mu);
        (&self.quadratic * &mu).dot(&mu) + self.linear.dot(&mu)
    }

    /// The full weight objective, offset included.
    pub fn full_value(&self, mu: &[f64]) -> f64 {
        self.value(mu) + self.offset
    }

    /// Exact minimizer over the simplex.
    ///
    /// Among candidates whose values lie within [`TIE_TOL`] of the best, the
    /// one closest to the uniform weights wins.
    pub fn solve(&self) -> Result<ViewWeights> {
        let k = self.linear.len();
        if k > MAX_VIEWS {
            return Err(Error::UnsupportedSize {
                views: k,
                max: MAX_VIEWS,
            });
        }
        let scale = self
            .quadratic
            .amax()
            .max(self.linear.amax())
            .max(f64::MIN_POSITIVE);
        let flat = FLAT_RTOL * scale;
        let uniform = 1.0 / k as f64;

        let mut best: Option<(f64, f64, Vec<f64>)> = None;
        for mask in 1u32..(1u32 << k) {
            let support: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            let Some(mu) = self.face_minimizer(&support, flat) else {
                continue;
            };
            let value = self.value(&mu);
            let spread: f64 = mu.iter().map(|m| (m - uniform).powi(2)).sum();
            let better = match &best {
                None => true,
                Some((bv, bs, _)) => {
                    value < bv - TIE_TOL || ((value - bv).abs() <= TIE_TOL && spread < *bs)
                }
            };
            if better {
                best = Some((value, spread, mu));
            }
        }
        let (_, _, mu) = best.expect("singleton faces always yield a candidate");
        ViewWeights::new(mu)
    }

    /// Minimizer of the quadratic on the affine hull of `support`, if it is
    /// bounded there and lies in the simplex.
    ///
    /// Parameterizes the face as `u + Z y`, with `u` the face barycenter and
    /// `Z` an orthonormal basis of `{v : Σ v = 0}`. Flat directions take the
    /// minimum-norm step so the returned point is the minimizer nearest `u`.
    fn face_minimizer(&self, support: &[usize], flat: f64) -> Option<Vec<f64>> {
        let k = self.linear.len();
        let m = support.len();
        let mut mu = vec![0.0; k];
        if m == 1 {
            mu[support[0]] = 1.0;
            return Some(mu);
        }

        let a = DMatrix::from_fn(m, m, |i, j| self.quadratic[(support[i], support[j])]);
        let b = DVector::from_fn(m, |i, _| self.linear[support[i]]);
        let u = DVector::from_element(m, 1.0 / m as f64);
        let z = helmert_basis(m);

        let hessian = z.transpose() * &a * &z;
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        let gradient = z.transpose() * (&a * &u * 2.0 + &b);

        let eig = SymmetricEigen::new(hessian);
        let mut y = DVector::zeros(m - 1);
        for (i, &h) in eig.eigenvalues.iter().enumerate() {
            let w = eig.eigenvectors.column(i);
            let g = w.dot(&gradient);
            if h > flat {
                y -= w * (g / (2.0 * h));
            } else if g.abs() > flat {
                // unbounded along a flat direction: optimum sits on a sub-face
                return None;
            }
        }

        let local = u + z * y;
        if local
            .iter()
            .any(|&v| v < -FEASIBILITY_TOL || !v.is_finite())
        {
            return None;
        }
        let total: f64 = local.iter().map(|v| v.max(0.0)).sum();
        for (i, &s) in support.iter().enumerate() {
            mu[s] = local[i].max(0.0) / total;
        }
        Some(mu)
    }
}

/// Orthonormal basis of the sum-zero subspace of `R^m`, as an `m×(m−1)` matrix.
fn helmert_basis(m: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(m, m - 1);
    for j in 1..m {
        let norm = ((j * (j + 1)) as f64).sqrt();
        for i in 0..j {
            z[(i, j - 1)] = 1.0 / norm;
        }
        z[(j, j - 1)] = -(j as f64) / norm;
    }
    z
}

/// Minimize the weight objective for a fixed orthonormal basis `P`.
pub fn solve_weight_qp(
    bundle: &LaplacianBundle,
    basis: &DMatrix<f64>,
    gamma: f64,
) -> Result<ViewWeights> {
    if bundle.k() > MAX_VIEWS {
        return Err(Error::UnsupportedSize {
            views: bundle.k(),
            max: MAX_VIEWS,
        });
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma must be >= 0, got {gamma}"
        )));
    }
    WeightQp::new(bundle, basis, gamma)?.solve()
}
