//! From a learned Laplacian to keyframes: spectral embedding, k-means,
//! nearest-to-centroid representatives, and per-representative view choice.

mod kmeans;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, partition_inertia, ClusterAssignment, KMeansConfig};

use crate::error::{Error, Result};
use crate::graph::{KernelMatrix, Laplacian};
use crate::optimizer::spectral_basis;

/// Mean similarities closer than this count as tied in [`select_view`].
const VIEW_TIE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEmbedding {
    /// `n×c`, one row per frame.
    pub coords: DMatrix<f64>,
    pub row_normalized: bool,
    /// Rows that were exactly zero and so could not be normalized.
    pub zero_rows: Vec<usize>,
}

/// Rows of the eigenvectors for the `c` smallest eigenvalues of `l`,
/// optionally scaled to unit length.
pub fn embed(l: &Laplacian, c: usize, row_normalize: bool) -> Result<SpectralEmbedding> {
    if c < 2 || c >= l.n() {
        return Err(Error::InvalidParameter(format!(
            "embedding dimension must satisfy 2 <= c < n = {}, got {c}",
            l.n()
        )));
    }
    let mut coords = spectral_basis(l.data(), c)?.basis;
    let mut zero_rows = Vec::new();
    if row_normalize {
        for (i, mut row) in coords.row_iter_mut().enumerate() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            } else {
                zero_rows.push(i);
            }
        }
    }
    Ok(SpectralEmbedding {
        coords,
        row_normalized: row_normalize,
        zero_rows,
    })
}

/// For each cluster, the member nearest its centroid (lowest index on ties),
/// as `(cluster, frame)` pairs in cluster order.
pub fn representatives(
    points: &DMatrix<f64>,
    a: &ClusterAssignment,
) -> Result<Vec<(usize, usize)>> {
    if a.labels.len() != points.nrows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} points",
            a.labels.len(),
            points.nrows()
        )));
    }
    a.members()
        .iter()
        .enumerate()
        .map(|(cluster, members)| {
            let centroid = a.centroids.row(cluster);
            let mut best: Option<(usize, f64)> = None;
            for &i in members {
                let d = (points.row(i) - centroid).norm_squared();
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            best.map(|(i, _)| (cluster, i))
                .ok_or_else(|| Error::ContractViolation(format!("cluster {cluster} is empty")))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewStrategy {
    /// View whose kernel gives the frame the highest mean similarity to its
    /// cluster.
    #[default]
    MeanSimilarity,
    FirstView,
}

pub fn select_view(
    frame: usize,
    kernels: &[KernelMatrix],
    members: &[usize],
    strategy: ViewStrategy,
) -> Result<usize> {
    if members.is_empty() {
        return Err(Error::ContractViolation("empty member list".into()));
    }
    if kernels.is_empty() {
        return Err(Error::ContractViolation("no kernels to choose from".into()));
    }
    if !members.contains(&frame) {
        return Err(Error::ContractViolation(format!(
            "frame {frame} is not a member of its cluster"
        )));
    }
    if let Some(&bad) = members
        .iter()
        .find(|&&j| kernels.iter().any(|g| j >= g.n()))
    {
        return Err(Error::Dimension(format!("member {bad} outside the kernel")));
    }
    if strategy == ViewStrategy::FirstView {
        return Ok(0);
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (k, g) in kernels.iter().enumerate() {
        let mean =
            members.iter().map(|&j| g.data()[(frame, j)]).sum::<f64>() / members.len() as f64;
        if mean > best.1 + VIEW_TIE_TOL {
            best = (k, mean);
        }
    }
    Ok(best.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Representative {
    pub cluster: usize,
    pub frame: usize,
    pub view: usize,
}

/// One keyframe per cluster, sorted by frame index.
pub fn summary_frames(
    points: &DMatrix<f64>,
    assignment: &ClusterAssignment,
    kernels: &[KernelMatrix],
    strategy: ViewStrategy,
) -> Result<Vec<Representative>> {
    let members = assignment.members();
    let mut out = representatives(points, assignment)?
        .into_iter()
        .map(|(cluster, frame)| {
            select_view(frame, kernels, &members[cluster], strategy).map(|view| Representative {
                cluster,
                frame,
                view,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|r| r.frame);
    Ok(out)
}
