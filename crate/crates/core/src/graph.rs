//! RBF similarity graphs and normalized Laplacians.
//!
//! Each view's feature matrix becomes a dense Gaussian kernel, then the
//! symmetric normalized Laplacian `I - D^{-1/2} G D^{-1/2}`, then that
//! Laplacian divided by its trace so different views are scale-comparable.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest trace accepted by [`trace_normalize`].
pub const MIN_TRACE: f64 = 1e-14;

/// Rows are frames, columns are feature dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 frames, got {}",
                data.nrows()
            )));
        }
        if data.ncols() < 1 {
            return Err(Error::InvalidInput(
                "feature dimension must be at least 1".into(),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::InvalidInput(format!(
                "non-finite feature at row {row}, column {col}"
            )));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("rows have differing lengths".into()));
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Keep every `stride`-th frame, starting with frame 0.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        let rows: Vec<usize> = (0..self.n()).step_by(stride).collect();
        Self::new(self.data.select_rows(rows.iter()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "sigma")]
pub enum BandwidthPolicy {
    /// σ = median of the off-diagonal pairwise distances.
    Median,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    data: DMatrix<f64>,
    sigma: Option<f64>,
}

impl KernelMatrix {
    /// Wrap a hand-built similarity matrix. Degrees are checked later, by
    /// [`normalized_laplacian`].
    pub fn from_matrix(data: DMatrix<f64>) -> Result<Self> {
        if !data.is_square() || data.nrows() < 2 {
            return Err(Error::InvalidKernel(format!(
                "kernel must be square with n >= 2, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKernel("non-finite entries".into()));
        }
        if data != data.transpose() {
            return Err(Error::InvalidKernel("kernel is not symmetric".into()));
        }
        Ok(Self { data, sigma: None })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Bandwidth used to build the kernel; `None` for hand-built kernels.
    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.data.row_iter().map(|r| r.sum()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian {
    data: DMatrix<f64>,
    trace_normalized: bool,
}

impl Laplacian {
    /// Wrap an arbitrary symmetric matrix as a Laplacian.
    pub fn from_matrix(data: DMatrix<f64>, trace_normalized: bool) -> Result<Self> {
        crate::linalg::check_symmetric(&data)?;
        Ok(Self {
            data,
            trace_normalized,
        })
    }

    pub(crate) fn from_parts(data: DMatrix<f64>, trace_normalized: bool) -> Self {
        Self {
            data,
            trace_normalized,
        }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    pub fn is_trace_normalized(&self) -> bool {
        self.trace_normalized
    }
}

/// Squared Euclidean distances between all pairs of rows.
pub fn pairwise_sq_dists(x: &FeatureMatrix) -> DMatrix<f64> {
    let n = x.n();
    let rows: Vec<Vec<f64>> = x
        .data
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let acc: f64 = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    out
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// The bandwidth `policy` would pick for `x`.
pub fn bandwidth(x: &FeatureMatrix, policy: BandwidthPolicy) -> Result<f64> {
    resolve_bandwidth(&pairwise_sq_dists(x), policy)
}

fn resolve_bandwidth(sq: &DMatrix<f64>, policy: BandwidthPolicy) -> Result<f64> {
    match policy {
        BandwidthPolicy::Fixed(sigma) => {
            if sigma > 0.0 && sigma.is_finite() {
                Ok(sigma)
            } else {
                Err(Error::InvalidParameter(format!(
                    "fixed bandwidth must be positive, got {sigma}"
                )))
            }
        }
        BandwidthPolicy::Median => {
            let n = sq.nrows();
            let mut dists = Vec::with_capacity(n * (n - 1) / 2);
            for j in 0..n {
                for i in (j + 1)..n {
                    dists.push(sq[(i, j)].sqrt());
                }
            }
            let sigma = median(dists);
            if sigma > 0.0 {
                Ok(sigma)
            } else {
                Err(Error::DegenerateData(
                    "median pairwise distance is zero; points are (mostly) identical".into(),
                ))
            }
        }
    }
}

/// Gaussian kernel `exp(-‖x_i - x_j‖² / 2σ²)`.
pub fn rbf_kernel(x: &FeatureMatrix, policy: BandwidthPolicy) -> Result<KernelMatrix> {
    let sq = pairwise_sq_dists(x);
    let sigma = resolve_bandwidth(&sq, policy)?;
    let scale = 1.0 / (2.0 * sigma * sigma);
    let data = sq.map(|d2| (-d2 * scale).exp());
    Ok(KernelMatrix {
        data,
        sigma: Some(sigma),
    })
}

/// `I - D^{-1/2} G D^{-1/2}`, symmetrized.
pub fn normalized_laplacian(g: &KernelMatrix) -> Result<Laplacian> {
    let degrees = g.degrees();
    if let Some((i, d)) = degrees
        .iter()
        .enumerate()
        .find(|(_, d)| !(**d > 0.0) || !d.is_finite())
    {
        return Err(Error::InvalidKernel(format!(
            "vertex {i} has non-positive degree {d}"
        )));
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let n = g.n();
    let mut l = DMatrix::from_fn(n, n, |i, j| {
        let identity = if i == j { 1.0 } else { 0.0 };
        identity - inv_sqrt[i] * g.data[(i, j)] * inv_sqrt[j]
    });
    l = (&l + l.transpose()) * 0.5;
    Ok(Laplacian::from_parts(l, false))
}

pub fn trace_normalize(l: &Laplacian) -> Result<Laplacian> {
    let trace = l.trace();
    if !(trace > MIN_TRACE) {
        return Err(Error::DegenerateLaplacian { trace });
    }
    Ok(Laplacian::from_parts(&l.data / trace, true))
}

/// Kernel, Laplacian and trace-normalized Laplacian for one view.
pub fn view_laplacian(
    x: &FeatureMatrix,
    policy: BandwidthPolicy,
) -> Result<(KernelMatrix, Laplacian)> {
    let kernel = rbf_kernel(x, policy)?;
    let normalized = trace_normalize(&normalized_laplacian(&kernel)?)?;
    Ok((kernel, normalized))
}
