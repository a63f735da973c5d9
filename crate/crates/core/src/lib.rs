//! Multi-view metric learning for keyframe summarization.
//!
//! Given `K` synchronized views of the same `n` frames, each view becomes an
//! RBF similarity graph and a trace-normalized normalized Laplacian. The
//! learned metric is a convex combination of those Laplacians whose weights
//! trade off two goals: the combined graph should split cleanly into `c`
//! clusters (small sum of its `c` smallest eigenvalues), and it should stay
//! close to every view (small summed squared Frobenius distance). Weights are
//! found by alternating an eigendecomposition with an exact simplex QP.
//!
//! The learned Laplacian's eigenvectors give a spectral embedding; k-means
//! on it yields clusters, and the member nearest each centroid is emitted as
//! a keyframe together with the view that shows it best.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod optimizer;
pub mod pipeline;
pub mod synthbench;

pub use error::{Error, ErrorClass, Result};
