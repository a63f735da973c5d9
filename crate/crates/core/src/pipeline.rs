//! End-to-end summarization: feature files in, keyframe manifest out.
//!
//! Stages: per-view RBF kernels and trace-normalized Laplacians, weight
//! learning, spectral embedding of the learned Laplacian, k-means, and one
//! representative frame (with a chosen view) per cluster.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    embed, kmeans, summary_frames, KMeansConfig, Representative, ViewStrategy,
};
use crate::error::{Error, Result};
use crate::graph::{view_laplacian, BandwidthPolicy, FeatureMatrix, KernelMatrix, Laplacian};
use crate::metrics::{self, ClusteringScore, Event, EventScore};
use crate::optimizer::{alternate, LaplacianBundle, OptimizerConfig, OptimizerResult, ViewWeights};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub view_paths: Vec<PathBuf>,
    pub bandwidth: BandwidthPolicy,
    pub ground_truth: Option<PathBuf>,
}

impl DatasetSpec {
    pub fn new(view_paths: Vec<PathBuf>) -> Self {
        Self {
            view_paths,
            bandwidth: BandwidthPolicy::Median,
            ground_truth: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.view_paths.is_empty() {
            return Err(Error::InvalidInput(
                "at least one view file is required".into(),
            ));
        }
        for (i, p) in self.view_paths.iter().enumerate() {
            if self.view_paths[..i].contains(p) {
                return Err(Error::InvalidInput(format!(
                    "view file {} listed more than once",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse a CSV feature file: one row per frame, one float per column.
///
/// A first row containing any non-numeric cell is taken as a header.
pub fn read_feature_csv(path: &Path) -> Result<FeatureMatrix> {
    let text = read_to_string(path)?;
    parse_feature_csv(&text, path)
}

fn parse_feature_csv(text: &str, path: &Path) -> Result<FeatureMatrix> {
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let line = index + 1;
        let record = record.map_err(|e| parse_err(line, 0, e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> =
            record.iter().map(str::parse::<f64>).collect();
        if index == 0 && parsed.iter().any(|v| v.is_err()) {
            continue;
        }
        let mut values = Vec::with_capacity(parsed.len());
        for (col, v) in parsed.into_iter().enumerate() {
            match v {
                Ok(x) if x.is_finite() => values.push(x),
                Ok(x) => return Err(parse_err(line, col + 1, format!("non-finite value {x}"))),
                Err(_) => {
                    return Err(parse_err(
                        line,
                        col + 1,
                        format!("not a number: {:?}", &record[col]),
                    ))
                }
            }
        }
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(parse_err(
                    line,
                    values.len(),
                    format!("expected {} columns, found {}", first.len(), values.len()),
                ));
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(parse_err(0, 0, "no feature rows".into()));
    }
    if rows.len() < 2 {
        return Err(parse_err(rows.len(), 0, "need at least 2 frames".into()));
    }
    let (n, d) = (rows.len(), rows[0].len());
    FeatureMatrix::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

/// Load every view and check they describe the same number of frames.
pub fn load_views(spec: &DatasetSpec) -> Result<Vec<FeatureMatrix>> {
    spec.validate()?;
    let views = spec
        .view_paths
        .iter()
        .map(|p| read_feature_csv(p))
        .collect::<Result<Vec<_>>>()?;
    let expected = views[0].n();
    for (view, path) in views.iter().zip(&spec.view_paths) {
        if view.n() != expected {
            return Err(Error::Synchronization {
                path: path.clone(),
                expected,
                found: view.n(),
            });
        }
    }
    Ok(views)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEvents {
    pub events: Vec<Event>,
}

impl GroundTruthEvents {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let gt: Self = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        for (i, e) in gt.events.iter().enumerate() {
            if e.start > e.end {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("event {i} starts after it ends"),
                });
            }
            if e.label.is_empty() {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("event {i} has an empty label"),
                });
            }
        }
        Ok(gt)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummarizeOptions {
    pub optimizer: OptimizerConfig,
    pub bandwidth: BandwidthPolicy,
    pub restarts: usize,
    pub kmeans_max_iters: usize,
    pub row_normalize: bool,
    pub view_strategy: ViewStrategy,
    /// Keep every `stride`-th frame before building kernels.
    pub stride: usize,
}

impl SummarizeOptions {
    pub fn new(optimizer: OptimizerConfig) -> Self {
        Self {
            optimizer,
            bandwidth: BandwidthPolicy::Median,
            restarts: 10,
            kmeans_max_iters: 300,
            row_normalize: true,
            view_strategy: ViewStrategy::MeanSimilarity,
            stride: 1,
        }
    }

    fn kmeans_config(&self) -> KMeansConfig {
        KMeansConfig {
            clusters: self.optimizer.clusters,
            restarts: self.restarts,
            max_iters: self.kmeans_max_iters,
            seed: self.optimizer.seed,
        }
    }
}

/// Everything the graph stage produces for a set of views.
#[derive(Clone, Debug)]
pub struct ViewGraphs {
    pub kernels: Vec<KernelMatrix>,
    pub bundle: LaplacianBundle,
}

impl ViewGraphs {
    pub fn build(views: &[FeatureMatrix], bandwidth: BandwidthPolicy) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::InvalidInput("at least one view is required".into()));
        }
        let n = views[0].n();
        if let Some(bad) = views.iter().find(|v| v.n() != n) {
            return Err(Error::Dimension(format!(
                "views have {} and {} frames",
                n,
                bad.n()
            )));
        }
        let built: Vec<(KernelMatrix, Laplacian)> = views
            .par_iter()
            .map(|v| view_laplacian(v, bandwidth))
            .collect::<Result<_>>()?;
        let (kernels, laplacians): (Vec<_>, Vec<_>) = built.into_iter().unzip();
        Ok(Self {
            kernels,
            bundle: LaplacianBundle::new(laplacians)?,
        })
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.kernels
            .iter()
            .map(|k| k.sigma().unwrap_or(f64::NAN))
            .collect()
    }
}

/// Full resolved configuration, recorded in every output artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub views: Vec<String>,
    pub bandwidth: BandwidthPolicy,
    pub stride: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub kmeans_max_iters: usize,
    pub row_normalize: bool,
    pub view_strategy: ViewStrategy,
}

impl RunConfig {
    fn new(views: &[PathBuf], options: &SummarizeOptions) -> Self {
        Self {
            views: views.iter().map(|p| p.display().to_string()).collect(),
            bandwidth: options.bandwidth,
            stride: options.stride,
            max_iters: options.optimizer.max_iters,
            tol: options.optimizer.tol,
            restarts: options.restarts,
            kmeans_max_iters: options.kmeans_max_iters,
            row_normalize: options.row_normalize,
            view_strategy: options.view_strategy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryManifest {
    pub schema: u32,
    pub tool_version: String,
    /// Frames analyzed, after striding.
    pub n: usize,
    pub k: usize,
    pub c: usize,
    pub gamma: f64,
    pub sigma_per_view: Vec<f64>,
    pub weights: ViewWeights,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub degenerate_gap: bool,
    /// Cluster label per analyzed frame.
    pub labels: Vec<usize>,
    /// `frame` is an index into the source files, not the strided set.
    pub representatives: Vec<Representative>,
    pub seed: u64,
    pub source_frames: usize,
    pub config: RunConfig,
}

impl SummaryManifest {
    pub fn summary_frames(&self) -> Vec<usize> {
        self.representatives.iter().map(|r| r.frame).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if manifest.schema != MANIFEST_SCHEMA {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("unsupported manifest schema {}", manifest.schema),
            });
        }
        Ok(manifest)
    }
}

/// Weights and objective trace without the clustering stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema: u32,
    pub tool_version: String,
    pub n: usize,
    pub k: usize,
    pub c: usize,
    pub gamma: f64,
    pub sigma_per_view: Vec<f64>,
    pub weights: ViewWeights,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub degenerate_gap: bool,
    pub seed: u64,
    pub config: RunConfig,
}

fn prepare(views: &[FeatureMatrix], stride: usize) -> Result<Vec<FeatureMatrix>> {
    if stride == 1 {
        return Ok(views.to_vec());
    }
    views.iter().map(|v| v.subsample(stride)).collect()
}

/// Graph construction and weight learning on in-memory views.
pub fn learn_views(
    views: &[FeatureMatrix],
    options: &SummarizeOptions,
) -> Result<(ViewGraphs, OptimizerResult)> {
    let views = prepare(views, options.stride).map_err(|e| e.at_stage("load"))?;
    let graphs = ViewGraphs::build(&views, options.bandwidth).map_err(|e| e.at_stage("graph"))?;
    let result =
        alternate(&graphs.bundle, &options.optimizer).map_err(|e| e.at_stage("optimize"))?;
    Ok((graphs, result))
}

/// Summarize in-memory views. `paths` only labels the manifest.
pub fn summarize_views(
    views: &[FeatureMatrix],
    paths: &[PathBuf],
    options: &SummarizeOptions,
) -> Result<SummaryManifest> {
    let source_frames = views.first().map_or(0, FeatureMatrix::n);
    let (graphs, result) = learn_views(views, options)?;
    let c = options.optimizer.clusters;

    let embedding =
        embed(&result.combined, c, options.row_normalize).map_err(|e| e.at_stage("cluster"))?;
    let assignment =
        kmeans(&embedding.coords, &options.kmeans_config()).map_err(|e| e.at_stage("cluster"))?;
    let mut representatives = summary_frames(
        &embedding.coords,
        &assignment,
        &graphs.kernels,
        options.view_strategy,
    )
    .map_err(|e| e.at_stage("select"))?;
    for r in &mut representatives {
        r.frame *= options.stride;
    }

    Ok(SummaryManifest {
        schema: MANIFEST_SCHEMA,
        tool_version: TOOL_VERSION.to_string(),
        n: graphs.bundle.n(),
        k: graphs.bundle.k(),
        c,
        gamma: options.optimizer.gamma,
        sigma_per_view: graphs.sigmas(),
        weights: result.weights,
        objective_trace: result.objective_trace,
        converged: result.converged,
        iterations: result.iterations,
        degenerate_gap: result.diagnostics.degenerate_gap,
        labels: assignment.labels,
        representatives,
        seed: options.optimizer.seed,
        source_frames,
        config: RunConfig::new(paths, options),
    })
}

pub fn summarize(spec: &DatasetSpec, options: &SummarizeOptions) -> Result<SummaryManifest> {
    let views = load_views(spec).map_err(|e| e.at_stage("load"))?;
    let options = SummarizeOptions {
        bandwidth: spec.bandwidth,
        ..options.clone()
    };
    summarize_views(&views, &spec.view_paths, &options)
}

pub fn learn_metric(spec: &DatasetSpec, options: &SummarizeOptions) -> Result<MetricReport> {
    let views = load_views(spec).map_err(|e| e.at_stage("load"))?;
    let options = SummarizeOptions {
        bandwidth: spec.bandwidth,
        ..options.clone()
    };
    let (graphs, result) = learn_views(&views, &options)?;
    Ok(MetricReport {
        schema: MANIFEST_SCHEMA,
        tool_version: TOOL_VERSION.to_string(),
        n: graphs.bundle.n(),
        k: graphs.bundle.k(),
        c: options.optimizer.clusters,
        gamma: options.optimizer.gamma,
        sigma_per_view: graphs.sigmas(),
        weights: result.weights,
        objective_trace: result.objective_trace,
        converged: result.converged,
        iterations: result.iterations,
        degenerate_gap: result.diagnostics.degenerate_gap,
        seed: options.optimizer.seed,
        config: RunConfig::new(&spec.view_paths, &options),
    })
}

/// Score a manifest's keyframes against ground-truth events.
pub fn eval_event_pr(manifest: &SummaryManifest, gt: &GroundTruthEvents) -> Result<EventScore> {
    let limit = manifest.source_frames.max(manifest.n);
    if let Some(e) = gt.events.iter().find(|e| e.end >= limit) {
        return Err(Error::InvalidInput(format!(
            "event {:?} ends at frame {} but the summary covers {limit} frames",
            e.label, e.end
        )));
    }
    metrics::event_precision_recall(&manifest.summary_frames(), &gt.events)
}

pub fn eval_clustering(predicted: &[usize], truth: &[usize]) -> Result<ClusteringScore> {
    metrics::clustering_score(predicted, truth)
}
