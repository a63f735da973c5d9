//! Synthetic multi-view data with planted clusters, and a comparative
//! benchmark of learned weights against simpler baselines.
//!
//! Each event is a Gaussian blob in a latent space. A clean view observes
//! the latent points through its own random rotation and translation plus
//! observation noise; a corrupted view is pure noise of the same shape.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{embed, kmeans, KMeansConfig};
use crate::error::{Error, Result};
use crate::graph::{view_laplacian, BandwidthPolicy, FeatureMatrix, Laplacian};
use crate::metrics::{clustering_score, ClusteringScore};
use crate::optimizer::{alternate, combine, LaplacianBundle, OptimizerConfig, ViewWeights};

/// Center rejection attempts per center before giving up.
const MAX_CENTER_ATTEMPTS: usize = 10_000;

const LATENT_STREAM: u64 = 0;
const VIEW_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub clusters: usize,
    pub points_per_cluster: usize,
    pub latent_dim: usize,
    pub views: usize,
    /// Observation noise per view.
    pub noise_sigma: Vec<f64>,
    pub corrupted_views: Vec<usize>,
    /// Minimum distance between latent cluster centers.
    pub cluster_separation: f64,
    /// Spread of each cluster around its center in the latent space.
    pub cluster_std: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(clusters: usize, views: usize) -> Self {
        Self {
            clusters,
            points_per_cluster: 40,
            latent_dim: 5,
            views,
            noise_sigma: vec![0.5; views],
            corrupted_views: Vec::new(),
            cluster_separation: 10.0,
            cluster_std: 1.0,
            seed: 0,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = vec![sigma; self.views];
        self
    }

    pub fn with_corrupted(mut self, views: Vec<usize>) -> Self {
        self.corrupted_views = views;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        self.clusters * self.points_per_cluster
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.clusters < 2 {
            return bad(format!("need at least 2 clusters, got {}", self.clusters));
        }
        if self.views < 1 {
            return bad("need at least one view".into());
        }
        if self.points_per_cluster < 1 || self.latent_dim < 1 {
            return bad("points_per_cluster and latent_dim must be at least 1".into());
        }
        if self.noise_sigma.len() != self.views {
            return bad(format!(
                "{} noise levels for {} views",
                self.noise_sigma.len(),
                self.views
            ));
        }
        if self.noise_sigma.iter().any(|s| !(*s >= 0.0)) || !(self.cluster_std >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        if let Some(v) = self.corrupted_views.iter().find(|&&v| v >= self.views) {
            return bad(format!(
                "corrupted view {v} out of range for {} views",
                self.views
            ));
        }
        if !(self.cluster_separation > 0.0) {
            return bad("cluster separation must be positive".into());
        }
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentData {
    /// `n×latent_dim`, cluster-major order.
    pub points: DMatrix<f64>,
    pub labels: Vec<usize>,
}

/// Latent points: `clusters` centers at least `cluster_separation` apart,
/// Gaussian members around each.
pub fn gen_latent(cfg: &SynthConfig) -> Result<LatentData> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, LATENT_STREAM);
    let dim = cfg.latent_dim;
    let spread = cfg.cluster_separation * (cfg.clusters as f64).sqrt();

    let mut centers: Vec<DVector<f64>> = Vec::with_capacity(cfg.clusters);
    while centers.len() < cfg.clusters {
        let mut placed = false;
        for _ in 0..MAX_CENTER_ATTEMPTS {
            let candidate =
                DVector::from_fn(dim, |_, _| spread * rng.sample::<f64, _>(StandardNormal));
            if centers
                .iter()
                .all(|c| (c - &candidate).norm() >= cfg.cluster_separation)
            {
                centers.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::SeparationInfeasible {
                separation: cfg.cluster_separation,
                attempts: MAX_CENTER_ATTEMPTS,
            });
        }
    }

    let n = cfg.n();
    let mut points = DMatrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for (l, center) in centers.iter().enumerate() {
        for p in 0..cfg.points_per_cluster {
            let row = l * cfg.points_per_cluster + p;
            for j in 0..dim {
                let offset: f64 = rng.sample(StandardNormal);
                points[(row, j)] = center[j] + cfg.cluster_std * offset;
            }
            labels.push(l);
        }
    }
    Ok(LatentData { points, labels })
}

/// Random orthogonal matrix from the QR factorization of a Gaussian matrix,
/// with columns signed so that `R` has a positive diagonal.
pub fn random_orthogonal(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let qr = gaussian_matrix(dim, dim, 1.0, rng).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            let flipped = -q.column(j);
            q.set_column(j, &flipped);
        }
    }
    q
}

pub fn gen_views(latent: &LatentData, cfg: &SynthConfig) -> Result<Vec<FeatureMatrix>> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, VIEW_STREAM);
    let (n, dim) = latent.points.shape();
    (0..cfg.views)
        .map(|k| {
            // every view consumes the same draws, so a clean view does not
            // depend on which other views are corrupted or how noisy they are
            let q = random_orthogonal(dim, &mut rng);
            let shift = gaussian_matrix(1, dim, cfg.cluster_separation, &mut rng);
            let noise = gaussian_matrix(n, dim, 1.0, &mut rng);
            let data = if cfg.corrupted_views.contains(&k) {
                noise
            } else {
                let mut x = &latent.points * q;
                for mut row in x.row_iter_mut() {
                    row += &shift;
                }
                x + noise * cfg.noise_sigma[k]
            };
            FeatureMatrix::new(data)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub optimizer: OptimizerConfig,
    pub restarts: usize,
    pub kmeans_max_iters: usize,
    pub row_normalize: bool,
    pub bandwidth: BandwidthPolicy,
    /// Record wall-clock runtimes (makes the report non-reproducible).
    pub timings: bool,
}

impl BenchOptions {
    pub fn new(optimizer: OptimizerConfig) -> Self {
        Self {
            optimizer,
            restarts: 10,
            kmeans_max_iters: 300,
            row_normalize: true,
            bandwidth: BandwidthPolicy::Median,
            timings: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodFamily {
    Ours,
    Uniform,
    SingleView,
    Concatenated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: String,
    pub family: MethodFamily,
    pub ari: f64,
    pub nmi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub weights: Vec<f64>,
    pub runs: Vec<MethodRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: String,
    pub family: MethodFamily,
    pub ari_mean: f64,
    pub ari_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: u32,
    pub tool_version: String,
    pub synth: SynthConfig,
    pub options: BenchOptions,
    pub seeds: Vec<u64>,
    /// Statistics over the seeds in `per_seed` (failed seeds excluded from every method).
    pub methods: Vec<MethodStats>,
    pub per_seed: Vec<SeedResult>,
    pub failures: Vec<BenchFailure>,
}

impl BenchReport {
    pub fn method(&self, name: &str) -> Option<&MethodStats> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row per (seed, method).
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidInput(format!("writing csv: {e}"));
        w.write_record(["seed", "method", "family", "ari", "nmi"])
            .map_err(io)?;
        for s in &self.per_seed {
            for r in &s.runs {
                let family = serde_json::to_value(r.family).expect("family serializes");
                w.write_record([
                    s.seed.to_string(),
                    r.method.clone(),
                    family.as_str().unwrap_or_default().to_string(),
                    r.ari.to_string(),
                    r.nmi.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush()
            .map_err(|e| Error::InvalidInput(format!("writing csv: {e}")))?;
        Ok(())
    }
}

fn spectral_labels(l: &Laplacian, options: &BenchOptions, seed: u64) -> Result<Vec<usize>> {
    let c = options.optimizer.clusters;
    let e = embed(l, c, options.row_normalize)?;
    let cfg = KMeansConfig {
        clusters: c,
        restarts: options.restarts,
        max_iters: options.kmeans_max_iters,
        seed,
    };
    Ok(kmeans(&e.coords, &cfg)?.labels)
}

/// Spectral clustering of one view's features, as used by the baselines.
pub fn spectral_cluster_view(
    view: &FeatureMatrix,
    options: &BenchOptions,
    seed: u64,
) -> Result<Vec<usize>> {
    let (_, l) = view_laplacian(view, options.bandwidth)?;
    spectral_labels(&l, options, seed)
}

fn concatenate(views: &[FeatureMatrix]) -> Result<FeatureMatrix> {
    let n = views[0].n();
    let d: usize = views.iter().map(FeatureMatrix::d).sum();
    let mut out = DMatrix::zeros(n, d);
    let mut col = 0;
    for v in views {
        out.view_mut((0, col), (n, v.d())).copy_from(v.data());
        col += v.d();
    }
    FeatureMatrix::new(out)
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64() * 1e3))
}

fn run_seed(cfg: &SynthConfig, seed: u64, options: &BenchOptions) -> Result<SeedResult> {
    let cfg = cfg.clone().with_seed(seed);
    let latent = gen_latent(&cfg)?;
    let views = gen_views(&latent, &cfg)?;
    let truth = &latent.labels;
    let kseed = options.optimizer.seed ^ seed;

    let built: Vec<_> = views
        .iter()
        .map(|v| view_laplacian(v, options.bandwidth))
        .collect::<Result<_>>()?;
    let laplacians: Vec<Laplacian> = built.into_iter().map(|(_, l)| l).collect();
    let bundle = LaplacianBundle::new(laplacians.clone())?;

    let mut runs = Vec::new();
    let mut record = |method: String, family, labels: Vec<usize>, ms: f64| -> Result<()> {
        let ClusteringScore { ari, nmi } = clustering_score(&labels, truth)?;
        runs.push(MethodRun {
            method,
            family,
            ari,
            nmi,
            runtime_ms: options.timings.then_some(ms),
        });
        Ok(())
    };

    let ((labels, weights), ms) = timed(|| {
        let result = alternate(&bundle, &options.optimizer)?;
        Ok((
            spectral_labels(&result.combined, options, kseed)?,
            result.weights,
        ))
    })?;
    record("ours".into(), MethodFamily::Ours, labels, ms)?;

    let (labels, ms) = timed(|| {
        let uniform = combine(&bundle, &ViewWeights::uniform(bundle.k()))?;
        spectral_labels(&uniform, options, kseed)
    })?;
    record("uniform".into(), MethodFamily::Uniform, labels, ms)?;

    for (k, l) in laplacians.iter().enumerate() {
        let (labels, ms) = timed(|| spectral_labels(l, options, kseed))?;
        record(format!("view-{k}"), MethodFamily::SingleView, labels, ms)?;
    }

    let (labels, ms) = timed(|| spectral_cluster_view(&concatenate(&views)?, options, kseed))?;
    record(
        "concatenated".into(),
        MethodFamily::Concatenated,
        labels,
        ms,
    )?;

    Ok(SeedResult {
        seed,
        weights: weights.as_slice().to_vec(),
        runs,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run every method on one instance per seed and aggregate.
///
/// Seeds run in parallel; results are ordered by seed before aggregation so
/// the report does not depend on scheduling or on the order of `seeds`.
pub fn run_benchmark(
    cfg: &SynthConfig,
    seeds: &[u64],
    options: &BenchOptions,
) -> Result<BenchReport> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one seed is required".into(),
        ));
    }
    if options.optimizer.clusters != cfg.clusters {
        return Err(Error::InvalidParameter(format!(
            "optimizer expects {} clusters, data has {}",
            options.optimizer.clusters, cfg.clusters
        )));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();

    let outcomes: Vec<(u64, Result<SeedResult>)> = sorted
        .par_iter()
        .map(|&s| (s, run_seed(cfg, s, options)))
        .collect();

    let mut per_seed = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(r) => per_seed.push(r),
            Err(e) => failures.push(BenchFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }

    let mut methods = Vec::new();
    if let Some(first) = per_seed.first() {
        for (i, template) in first.runs.iter().enumerate() {
            let ari: Vec<f64> = per_seed.iter().map(|s| s.runs[i].ari).collect();
            let nmi: Vec<f64> = per_seed.iter().map(|s| s.runs[i].nmi).collect();
            let runtime: Option<Vec<f64>> = per_seed.iter().map(|s| s.runs[i].runtime_ms).collect();
            let (ari_mean, ari_std) = mean_std(&ari);
            let (nmi_mean, nmi_std) = mean_std(&nmi);
            methods.push(MethodStats {
                method: template.method.clone(),
                family: template.family,
                ari_mean,
                ari_std,
                nmi_mean,
                nmi_std,
                runtime_ms_mean: runtime.map(|r| mean_std(&r).0),
            });
        }
    }

    Ok(BenchReport {
        schema: 1,
        tool_version: crate::pipeline::TOOL_VERSION.to_string(),
        synth: cfg.clone(),
        options: options.clone(),
        seeds: sorted,
        methods,
        per_seed,
        failures,
    })
}
