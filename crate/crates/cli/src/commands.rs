use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Result};
use log::info;
use serde_json::json;

use softcut::diffcore::DenseMatrix;
use softcut::ingest::{format_labels, load_labels, load_matrix, preprocess, ExpressionMatrix};
use softcut::metrics::MetricsReport;
use softcut::simdata::{generate, sparsity};
use softcut::trainer::{best_k, fit, history_csv, pretrain, select_k, FitOutput, TrainData};
use softcut::zinb::ModelParams;

use crate::config::RunConfig;
use crate::output::write_files;

/// What `cluster` produced, for callers that want more than the files.
#[derive(Debug)]
pub struct ClusterOutcome {
    pub labels: Vec<usize>,
    pub metrics: Option<MetricsReport>,
    pub out_dir: PathBuf,
    pub sinkhorn_unconverged: usize,
}

fn matrix_csv(m: &DenseMatrix, header: &str, row_ids: &[String]) -> String {
    let mut s = String::with_capacity(m.len() * 12);
    s.push_str(header);
    s.push('\n');
    for (i, id) in row_ids.iter().enumerate() {
        s.push_str(id);
        for v in m.row(i) {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    s
}

fn embedding_csv(z: &DenseMatrix, cells: &[String]) -> String {
    let header: Vec<String> = std::iter::once("cell".to_string())
        .chain((1..=z.cols()).map(|j| format!("z{j}")))
        .collect();
    matrix_csv(z, &header.join(","), cells)
}

fn centers_csv(c: &DenseMatrix) -> String {
    let ids: Vec<String> = (0..c.rows()).map(|k| k.to_string()).collect();
    let header: Vec<String> = std::iter::once("cluster".to_string())
        .chain((1..=c.cols()).map(|j| format!("z{j}")))
        .collect();
    matrix_csv(c, &header.join(","), &ids)
}

pub fn metrics_json(m: &MetricsReport) -> String {
    let v = json!({
        "acc": m.acc,
        "nmi": m.nmi,
        "ari": m.ari,
        "n_cells": m.n_cells,
        "n_clusters_true": m.n_clusters_true,
        "n_clusters_pred": m.n_clusters_pred,
    });
    let mut s = serde_json::to_string_pretty(&v).expect("plain values serialize");
    s.push('\n');
    s
}

fn load_input(cfg: &RunConfig) -> Result<(ExpressionMatrix, Option<Vec<usize>>)> {
    let Some(input) = &cfg.data.input else {
        bail!("no input matrix (set data.input or pass --input)");
    };
    let format = cfg.matrix_format()?;
    let raw = load_matrix(input, format)?;
    let truth = match &cfg.data.labels {
        Some(path) => {
            let t = load_labels(path)?;
            ensure!(
                t.len() == raw.n_cells(),
                "{} labels for {} cells in {}",
                t.len(),
                raw.n_cells(),
                input.display()
            );
            Some(t)
        }
        None => None,
    };
    Ok((raw, truth))
}

fn training_data(cfg: &RunConfig, raw: &ExpressionMatrix) -> Result<TrainData> {
    let pre = preprocess(raw, &cfg.preprocess_config()?)?;
    info!(
        "{} cells, {} of {} genes kept",
        pre.x.rows(),
        pre.kept_genes.len(),
        raw.n_genes()
    );
    Ok(TrainData::with_limit(
        pre.x.clone(),
        pre.raw_counts(raw),
        pre.size_factors.clone(),
        cfg.train.max_cells,
    )?)
}

/// Preprocess, build graphs, pretrain, train jointly, and write every
/// artifact to `cfg.data.out`. Nothing is written unless the whole run
/// succeeds.
pub fn cmd_cluster(cfg: &RunConfig) -> Result<ClusterOutcome> {
    cfg.check_paths()?;
    let train_cfg = cfg.train_config()?;
    let (raw, truth) = load_input(cfg)?;
    let data = training_data(cfg, &raw)?;

    let start = Instant::now();
    let FitOutput { pretrain, joint } = fit(&data, &train_cfg)?;
    info!("trained in {:.1?}", start.elapsed());
    if joint.sinkhorn_unconverged > 0 {
        info!(
            "sinkhorn missed the marginal tolerance in {} of {} epochs",
            joint.sinkhorn_unconverged, train_cfg.train_epochs
        );
    }

    let metrics = truth
        .as_deref()
        .map(|t| MetricsReport::compute(t, &joint.labels))
        .transpose()?;

    let mut files = vec![
        ("labels.csv", format_labels(&joint.labels)),
        ("embedding.csv", embedding_csv(&joint.z, raw.cell_ids())),
        ("centers.csv", centers_csv(&joint.centers)),
        ("pretrain_log.csv", history_csv(&pretrain.history)),
        ("train_log.csv", history_csv(&joint.history)),
        ("model.ckpt", joint.params.to_checkpoint()),
        ("config.toml", cfg.to_toml()?),
    ];
    if let Some(m) = &metrics {
        files.push(("metrics.json", metrics_json(m)));
    }
    write_files(&cfg.data.out, &files)?;

    Ok(ClusterOutcome {
        labels: joint.labels,
        metrics,
        out_dir: cfg.data.out.clone(),
        sinkhorn_unconverged: joint.sinkhorn_unconverged,
    })
}

/// Generates a synthetic dataset and writes `matrix.csv` and
/// `labels.csv`. Returns the fraction of zero entries.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<f64> {
    let sim = cfg.sim_config();
    let m = generate(&sim)?;
    let labels = m.labels().expect("simulated data is labeled");
    let zeros = sparsity(m.counts());
    write_files(
        &cfg.data.out,
        &[("matrix.csv", m.to_dense_csv()), ("labels.csv", format_labels(labels))],
    )?;
    Ok(zeros)
}

/// Scores `labels` against `truth` and writes `metrics.json` to `out`.
pub fn cmd_eval(labels: &Path, truth: &Path, out: &Path) -> Result<MetricsReport> {
    let pred = load_labels(labels)?;
    let truth_labels = load_labels(truth)?;
    ensure!(
        pred.len() == truth_labels.len(),
        "{} has {} labels but {} has {}",
        labels.display(),
        pred.len(),
        truth.display(),
        truth_labels.len()
    );
    let report = MetricsReport::compute(&truth_labels, &pred)?;
    write_files(out, &[("metrics.json", metrics_json(&report))])?;
    Ok(report)
}

/// Pretrains once, then scores k-means on the embedding for every k in
/// the configured range by mean silhouette. Returns the scores and the
/// best k.
pub fn cmd_select_k(cfg: &RunConfig) -> Result<(Vec<(usize, f64)>, usize)> {
    cfg.check_paths()?;
    let sk = &cfg.select_k;
    ensure!(
        sk.k_min >= 2 && sk.k_min <= sk.k_max,
        "need 2 <= k_min <= k_max, got {}..={}",
        sk.k_min,
        sk.k_max
    );
    let train_cfg = cfg.train_config_with(Some(sk.k_min))?;
    let (raw, _) = load_input(cfg)?;
    let data = training_data(cfg, &raw)?;
    ensure!(
        sk.k_max < data.n_cells(),
        "k_max {} must be below the cell count {}",
        sk.k_max,
        data.n_cells()
    );
    let params = ModelParams::init(&train_cfg.architecture(data.x.cols()), train_cfg.seed);
    let pre = pretrain(&data, params, &train_cfg)?;
    let scores = select_k(&pre.z, sk.k_min..=sk.k_max, train_cfg.seed, &train_cfg.kmeans)?;
    let best = best_k(&scores).expect("nonempty range");
    let mut table = String::from("k,silhouette\n");
    for (k, s) in &scores {
        table.push_str(&format!("{k},{s}\n"));
    }
    write_files(&cfg.data.out, &[("select_k.csv", table)])?;
    Ok((scores, best))
}
