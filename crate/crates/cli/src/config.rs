//! Run configuration: a TOML document with one table per stage.
//!
//! Values resolve in three layers. Built-in defaults are overridden by the
//! config file, which is overridden by command-line flags. The resolved
//! configuration is what `cluster` echoes to its output directory, so that
//! file alone reproduces the run.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use softcut::ingest::{GeneSelection, MatrixFormat, PreprocessConfig};
use softcut::otcluster::{KMeansConfig, SinkhornConfig};
use softcut::simdata::SimConfig;
use softcut::softgraph::{NCutConfig, DEFAULT_MAX_CELLS};
use softcut::trainer::TrainConfig;
use softcut::zinb::Activation;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub preprocess: PreprocessSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub ncut: NCutSection,
    pub sinkhorn: SinkhornSection,
    pub simulate: SimulateSection,
    pub select_k: SelectKSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// `dense-csv` or `sparse-triplet`.
    pub format: String,
    /// Ground-truth labels, one integer per line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            input: None,
            format: "dense-csv".into(),
            labels: None,
            out: PathBuf::from("softcut-out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub min_cells_per_gene: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_genes: Option<usize>,
    pub normalize_target: f64,
    pub log_transform: bool,
    /// `total-expression` or `variance`.
    pub gene_selection: String,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        let d = PreprocessConfig::default();
        PreprocessSection {
            min_cells_per_gene: d.min_cells_per_gene,
            top_genes: d.top_genes,
            normalize_target: d.normalize_target,
            log_transform: d.log_transform,
            gene_selection: "total-expression".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embedding_dim: usize,
    pub hidden: Vec<usize>,
    /// `tanh`, `sigmoid`, or `identity`.
    pub activation: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        ModelSection {
            embedding_dim: d.embedding_dim,
            hidden: d.hidden,
            activation: d.hidden_activation.name().into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Number of clusters; required by `cluster`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    pub seed: u64,
    pub deterministic: bool,
    pub pretrain_epochs: usize,
    pub train_epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub gamma: f64,
    pub mu: f64,
    pub recompute_centers: bool,
    pub kmeans_restarts: usize,
    /// Refuse inputs with more cells than this; the graphs are dense.
    pub max_cells: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            clusters: None,
            seed: d.seed,
            deterministic: d.deterministic,
            pretrain_epochs: d.pretrain_epochs,
            train_epochs: d.train_epochs,
            learning_rate: d.learning_rate,
            weight_decay: d.weight_decay,
            gamma: d.gamma,
            mu: d.mu_weight,
            recompute_centers: d.recompute_centers,
            kmeans_restarts: d.kmeans.n_init,
            max_cells: DEFAULT_MAX_CELLS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NCutSection {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for NCutSection {
    fn default() -> Self {
        let d = NCutConfig::default();
        NCutSection {
            alpha: d.alpha,
            beta: d.beta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinkhornSection {
    pub lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SinkhornSection {
    fn default() -> Self {
        let d = SinkhornConfig::default();
        SinkhornSection {
            lambda: d.lambda,
            max_iters: d.max_iters,
            tol: d.marginal_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub cells: usize,
    pub genes: usize,
    pub clusters: usize,
    pub balanced: bool,
    pub dropout: f64,
    pub de_fraction: f64,
    pub de_log_fold: f64,
    pub base_mean: f64,
    pub dispersion: f64,
    pub seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let d = SimConfig::default();
        SimulateSection {
            cells: d.n_cells,
            genes: d.n_genes,
            clusters: d.n_clusters,
            balanced: d.balanced,
            dropout: d.dropout_rate,
            de_fraction: d.de_fraction,
            de_log_fold: d.de_log_fold,
            base_mean: d.base_mean,
            dispersion: d.dispersion,
            seed: d.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectKSection {
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for SelectKSection {
    fn default() -> Self {
        SelectKSection { k_min: 2, k_max: 10 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Defaults, or the file at `path` when given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn matrix_format(&self) -> Result<MatrixFormat> {
        MatrixFormat::from_str(&self.data.format).map_err(anyhow::Error::msg)
    }

    pub fn preprocess_config(&self) -> Result<PreprocessConfig> {
        let p = &self.preprocess;
        let gene_selection = match p.gene_selection.as_str() {
            "total-expression" => GeneSelection::TotalExpression,
            "variance" => GeneSelection::Variance,
            other => bail!("unknown gene_selection `{other}` (expected total-expression or variance)"),
        };
        Ok(PreprocessConfig {
            min_cells_per_gene: p.min_cells_per_gene,
            top_genes: p.top_genes,
            normalize_target: p.normalize_target,
            log_transform: p.log_transform,
            gene_selection,
        })
    }

    /// The trainer configuration. `clusters` falls back to `fallback_k`
    /// for commands that do not need a cluster count.
    pub fn train_config_with(&self, fallback_k: Option<usize>) -> Result<TrainConfig> {
        let t = &self.train;
        let Some(n_clusters) = t.clusters.or(fallback_k) else {
            bail!("the number of clusters is required (set train.clusters or pass --clusters)");
        };
        let Some(hidden_activation) = Activation::parse(&self.model.activation) else {
            bail!("unknown activation `{}`", self.model.activation);
        };
        ensure!(t.kmeans_restarts > 0, "train.kmeans_restarts must be at least 1");
        let cfg = TrainConfig {
            pretrain_epochs: t.pretrain_epochs,
            train_epochs: t.train_epochs,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            ncut: NCutConfig {
                alpha: self.ncut.alpha,
                beta: self.ncut.beta,
            },
            gamma: t.gamma,
            mu_weight: t.mu,
            sinkhorn: SinkhornConfig {
                lambda: self.sinkhorn.lambda,
                max_iters: self.sinkhorn.max_iters,
                marginal_tol: self.sinkhorn.tol,
            },
            n_clusters,
            seed: t.seed,
            embedding_dim: self.model.embedding_dim,
            hidden: self.model.hidden.clone(),
            hidden_activation,
            kmeans: KMeansConfig {
                n_init: t.kmeans_restarts,
                ..KMeansConfig::default()
            },
            recompute_centers: t.recompute_centers,
            deterministic: t.deterministic,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        self.train_config_with(None)
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.simulate;
        SimConfig {
            n_cells: s.cells,
            n_genes: s.genes,
            n_clusters: s.clusters,
            balanced: s.balanced,
            dropout_rate: s.dropout,
            de_fraction: s.de_fraction,
            de_log_fold: s.de_log_fold,
            base_mean: s.base_mean,
            dispersion: s.dispersion,
            seed: s.seed,
        }
    }

    /// Input, truth labels, and output directory must not coincide.
    pub fn check_paths(&self) -> Result<()> {
        let d = &self.data;
        if let Some(input) = &d.input {
            ensure!(input != &d.out, "input and output paths are both {}", input.display());
            if let Some(labels) = &d.labels {
                ensure!(input != labels, "input and labels paths are both {}", input.display());
            }
        }
        if let Some(labels) = &d.labels {
            ensure!(
                labels != &d.out,
                "labels and output paths are both {}",
                labels.display()
            );
        }
        Ok(())
    }
}

/// Input and output locations shared by the data-driven commands.
#[derive(Args, Clone, Debug, Default)]
pub struct DataArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Expression matrix, cells × genes.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Matrix layout: dense-csv or sparse-triplet.
    #[arg(long)]
    pub format: Option<String>,
    /// Ground-truth labels; enables metrics.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Hyperparameter overrides; each replaces the config file value.
#[derive(Args, Clone, Debug, Default)]
pub struct HyperArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed-order reductions (bit-reproducible runs).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub deterministic: Option<bool>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub top_genes: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub train_epochs: Option<usize>,
}

impl DataArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.data;
        if let Some(v) = &self.input {
            d.input = Some(v.clone());
        }
        if let Some(v) = &self.format {
            d.format = v.clone();
        }
        if let Some(v) = &self.labels {
            d.labels = Some(v.clone());
        }
        if let Some(v) = &self.out {
            d.out = v.clone();
        }
    }
}

impl HyperArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        set(&mut cfg.train.seed, &self.seed);
        set(&mut cfg.train.deterministic, &self.deterministic);
        set(&mut cfg.ncut.alpha, &self.alpha);
        set(&mut cfg.ncut.beta, &self.beta);
        set(&mut cfg.train.gamma, &self.gamma);
        set(&mut cfg.train.mu, &self.mu);
        set(&mut cfg.sinkhorn.lambda, &self.lambda);
        set(&mut cfg.train.weight_decay, &self.weight_decay);
        set(&mut cfg.train.pretrain_epochs, &self.pretrain_epochs);
        set(&mut cfg.train.train_epochs, &self.train_epochs);
        if self.clusters.is_some() {
            cfg.train.clusters = self.clusters;
        }
        if self.top_genes.is_some() {
            cfg.preprocess.top_genes = self.top_genes;
        }
    }
}
