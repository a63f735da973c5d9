#![allow(dead_code)]

use mvml::graph::{view_laplacian, BandwidthPolicy, FeatureMatrix, KernelMatrix, Laplacian};
use mvml::optimizer::LaplacianBundle;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Points drawn around `blobs` random centers, so instances range from
/// clean clusters to plain noise.
pub fn blob_view(
    n: usize,
    d: usize,
    blobs: usize,
    spread: f64,
    rng: &mut impl Rng,
) -> FeatureMatrix {
    let centers = gaussian(blobs, d, rng) * spread;
    let noise = gaussian(n, d, rng);
    FeatureMatrix::new(DMatrix::from_fn(n, d, |i, j| {
        centers[(i % blobs, j)] + noise[(i, j)]
    }))
    .unwrap()
}

pub fn random_views(n: usize, k: usize, rng: &mut impl Rng) -> Vec<FeatureMatrix> {
    (0..k)
        .map(|_| {
            let d = rng.random_range(1..=4);
            let blobs = rng.random_range(1..=4);
            let spread = rng.random_range(0.0..6.0);
            blob_view(n, d, blobs, spread, rng)
        })
        .collect()
}

pub fn bundle_of(views: &[FeatureMatrix]) -> (Vec<KernelMatrix>, LaplacianBundle) {
    let (kernels, laps): (Vec<KernelMatrix>, Vec<Laplacian>) = views
        .iter()
        .map(|v| view_laplacian(v, BandwidthPolicy::Median).unwrap())
        .unzip();
    (kernels, LaplacianBundle::new(laps).unwrap())
}

pub fn random_bundle(n: usize, k: usize, rng: &mut impl Rng) -> LaplacianBundle {
    bundle_of(&random_views(n, k, rng)).1
}

/// Random `n×c` matrix with orthonormal columns.
pub fn orthonormal(n: usize, c: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let q = gaussian(n, c, rng).qr().q();
    q.columns(0, c).into_owned()
}

/// Symmetric kernel made of `sizes.len()` disconnected blocks with random
/// positive within-block affinities.
pub fn block_kernel(sizes: &[usize], rng: &mut impl Rng) -> KernelMatrix {
    let n: usize = sizes.iter().sum();
    let mut block = vec![0; n];
    let mut start = 0;
    for (b, &s) in sizes.iter().enumerate() {
        block[start..start + s].fill(b);
        start += s;
    }
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = 1.0;
        for j in i + 1..n {
            if block[i] == block[j] {
                let v = rng.random_range(0.1..1.0);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
    }
    KernelMatrix::from_matrix(g).unwrap()
}

/// The weight objective for fixed `P`, computed straight from its
/// definition: `tr(PᵀL(μ)P) + γ Σ_k ‖L(μ) − L_k‖_F²`.
pub fn direct_objective(bundle: &LaplacianBundle, p: &DMatrix<f64>, gamma: f64, mu: &[f64]) -> f64 {
    let ls = bundle.laplacians();
    let n = bundle.n();
    let mut l = DMatrix::zeros(n, n);
    for (w, lk) in mu.iter().zip(ls) {
        l += lk.data() * *w;
    }
    let structural = (p.transpose() * &l * p).trace();
    let disagreement: f64 = ls.iter().map(|lk| (&l - lk.data()).norm_squared()).sum();
    structural + gamma * disagreement
}

/// The same objective expanded into projected traces and Laplacian inner
/// products, cheap enough to evaluate on a dense simplex grid.
pub struct ExpandedObjective {
    traces: Vec<f64>,
    gram: Vec<Vec<f64>>,
    gamma: f64,
}

impl ExpandedObjective {
    pub fn new(bundle: &LaplacianBundle, p: &DMatrix<f64>, gamma: f64) -> Self {
        let ls = bundle.laplacians();
        let traces = ls
            .iter()
            .map(|l| (p.transpose() * l.data() * p).trace())
            .collect();
        let gram = ls
            .iter()
            .map(|a| {
                ls.iter()
                    .map(|b| a.data().component_mul(b.data()).sum())
                    .collect()
            })
            .collect();
        Self {
            traces,
            gram,
            gamma,
        }
    }

    pub fn eval(&self, mu: &[f64]) -> f64 {
        let k = mu.len();
        let g_mu: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| self.gram[i][j] * mu[j]).sum())
            .collect();
        let quad: f64 = (0..k).map(|i| mu[i] * g_mu[i]).sum();
        let linear: f64 = (0..k).map(|i| self.traces[i] * mu[i]).sum();
        let disagreement: f64 = (0..k).map(|j| quad - 2.0 * g_mu[j] + self.gram[j][j]).sum();
        linear + self.gamma * disagreement
    }

    /// Minimum over the simplex grid with spacing `1/steps` (K = 2 or 3).
    pub fn grid_min(&self, steps: usize) -> f64 {
        let h = 1.0 / steps as f64;
        let mut best = f64::INFINITY;
        match self.traces.len() {
            2 => {
                for i in 0..=steps {
                    let t = i as f64 * h;
                    best = best.min(self.eval(&[t, 1.0 - t]));
                }
            }
            3 => {
                for i in 0..=steps {
                    for j in 0..=steps - i {
                        let (a, b) = (i as f64 * h, j as f64 * h);
                        best = best.min(self.eval(&[a, b, (1.0 - a - b).max(0.0)]));
                    }
                }
            }
            k => panic!("grid search supports 2 or 3 views, got {k}"),
        }
        best
    }
}

pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}
