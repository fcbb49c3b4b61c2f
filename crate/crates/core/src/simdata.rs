//! Synthetic count matrices with known cluster structure.
//!
//! Every cluster shares a constant baseline mean; for each cluster a random
//! subset of genes is shifted up or down by `2^de_log_fold`. Counts are
//! negative binomial (gamma-Poisson with size `dispersion`), then each entry
//! is zeroed independently with probability `dropout_rate`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use thiserror::Error;

use crate::diffcore::DenseMatrix;
use crate::ingest::{ExpressionMatrix, IngestError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n_cells: usize,
    pub n_genes: usize,
    pub n_clusters: usize,
    /// Equal cluster sizes; otherwise sizes follow `1, 1/2, …, 1/k`.
    pub balanced: bool,
    pub dropout_rate: f64,
    /// Fraction of genes shifted in each cluster.
    pub de_fraction: f64,
    pub de_log_fold: f64,
    pub base_mean: f64,
    /// Negative binomial size parameter; variance is `m + m²/dispersion`.
    pub dispersion: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_cells: 600,
            n_genes: 500,
            n_clusters: 4,
            balanced: true,
            dropout_rate: 0.05,
            de_fraction: 0.1,
            de_log_fold: 1.0,
            base_mean: 5.0,
            dispersion: 2.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::BadConfig(m.to_string()));
        if self.n_clusters < 2 {
            return bad("n_clusters must be at least 2");
        }
        if self.n_cells < self.n_clusters {
            return bad("n_cells must be at least n_clusters");
        }
        if self.n_genes == 0 {
            return bad("n_genes must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.de_fraction) {
            return bad("de_fraction must lie in [0, 1]");
        }
        if !self.de_log_fold.is_finite() {
            return bad("de_log_fold must be finite");
        }
        if !(self.base_mean > 0.0 && self.base_mean.is_finite()) {
            return bad("base_mean must be positive");
        }
        if !(self.dispersion > 0.0 && self.dispersion.is_finite()) {
            return bad("dispersion must be positive");
        }
        Ok(())
    }

    /// Number of cells in each cluster.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let k = self.n_clusters;
        let weights: Vec<f64> = if self.balanced {
            vec![1.0; k]
        } else {
            (1..=k).map(|i| 1.0 / i as f64).collect()
        };
        let total: f64 = weights.iter().sum();
        let exact: Vec<f64> = weights.iter().map(|w| w / total * self.n_cells as f64).collect();
        let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut left = self.n_cells - sizes.iter().sum::<usize>();
        // Largest remainders first, lower index on ties.
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        sizes
    }
}

/// The per-cluster generative means, `n_clusters × n_genes`.
pub fn cluster_means(cfg: &SimConfig, rng: &mut impl Rng) -> DenseMatrix {
    let n_de = (cfg.de_fraction * cfg.n_genes as f64).round() as usize;
    let fold = 2f64.powf(cfg.de_log_fold);
    let mut means = DenseMatrix::filled(cfg.n_clusters, cfg.n_genes, cfg.base_mean);
    let mut genes: Vec<usize> = (0..cfg.n_genes).collect();
    for c in 0..cfg.n_clusters {
        genes.shuffle(rng);
        for &g in &genes[..n_de] {
            let up = rng.random::<bool>();
            means[(c, g)] = if up { cfg.base_mean * fold } else { cfg.base_mean / fold };
        }
    }
    means
}

/// Draws a labeled count matrix. Cells appear in shuffled order.
pub fn generate(cfg: &SimConfig) -> Result<ExpressionMatrix, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means = cluster_means(cfg, &mut rng);
    let mut labels: Vec<usize> = cfg
        .cluster_sizes()
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();
    labels.shuffle(&mut rng);

    let mut counts = DenseMatrix::zeros(cfg.n_cells, cfg.n_genes);
    for (i, &c) in labels.iter().enumerate() {
        for g in 0..cfg.n_genes {
            let m = means[(c, g)];
            let rate = Gamma::new(cfg.dispersion, m / cfg.dispersion)
                .expect("validated shape and scale")
                .sample(&mut rng);
            let x = if rate > 0.0 {
                Poisson::new(rate).expect("positive rate").sample(&mut rng)
            } else {
                0.0
            };
            let dropped = rng.random::<f64>() < cfg.dropout_rate;
            counts[(i, g)] = if dropped { 0.0 } else { x };
        }
    }
    Ok(ExpressionMatrix::new(counts)?.with_labels(labels)?)
}

/// Fraction of zero entries.
pub fn sparsity(m: &DenseMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.as_slice().iter().filter(|&&v| v == 0.0).count() as f64 / m.len() as f64
}
