//! Two-phase optimization of the autoencoder and the cluster centers.
//!
//! Pretraining minimizes `L_ncut + γ·L_zinb`. Joint training adds the
//! alignment term, `L_ncut + γ·L_zinb + μ·KL(P ‖ Q)`, with centers
//! initialized by k-means on the pretrained embedding and the transport
//! target `P` refreshed from the current `Q` every epoch. Both phases are
//! full batch: one optimizer step per epoch.
//!
//! The encoder network produces unit-scale features `H`; the embedding is
//! `Z = H / √N`, so an embedding that meets `ZᵀZ = I` corresponds to
//! features with unit mean square. The decoder reads `H` directly.

use log::{debug, warn};
use thiserror::Error;

use crate::diffcore::{DenseMatrix, DiffError, Graph, NodeId, Reduction};
use crate::ingest::{standardize_columns, ExpressionMatrix, Preprocessed};
use crate::otcluster::{
    argmax_rows, estimate_proportions, kl_loss, kmeans, sinkhorn, soft_assign, soft_assign_values, KMeansConfig,
    OtError, SinkhornConfig,
};
use crate::softgraph::{ncut_loss_node, GraphError, NCutConfig, SoftGraphPair, DEFAULT_MAX_CELLS};
use crate::zinb::{decode_heads, encode, encode_values, zinb_nll, Activation, Architecture, ModelParams, ZinbError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Zinb(#[from] ZinbError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("{phase} loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { phase: &'static str, epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("data mismatch: {0}")]
    Data(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    pub train_epochs: usize,
    pub learning_rate: f64,
    /// Decoupled weight decay on network weights (not on centers).
    pub weight_decay: f64,
    pub ncut: NCutConfig,
    /// Weight of the ZINB reconstruction loss.
    pub gamma: f64,
    /// Weight of the KL alignment loss.
    pub mu_weight: f64,
    pub sinkhorn: SinkhornConfig,
    pub n_clusters: usize,
    pub seed: u64,
    pub embedding_dim: usize,
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub kmeans: KMeansConfig,
    /// Re-run k-means on the current embedding every joint epoch instead of
    /// training the centers by gradient.
    pub recompute_centers: bool,
    /// Fixed-order reductions; parallel reductions are faster on many
    /// cores but may differ in the last bits between runs.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            pretrain_epochs: 200,
            train_epochs: 200,
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            ncut: NCutConfig::default(),
            gamma: 50.0,
            mu_weight: 1e-3,
            sinkhorn: SinkhornConfig::default(),
            n_clusters: 2,
            seed: 0,
            embedding_dim: 16,
            hidden: vec![256, 64],
            hidden_activation: Activation::Tanh,
            kmeans: KMeansConfig::default(),
            recompute_centers: false,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, v) in [
            ("weight_decay", self.weight_decay),
            ("gamma", self.gamma),
            ("mu", self.mu_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if self.n_clusters < 2 {
            return bad(format!("need at least 2 clusters, got {}", self.n_clusters));
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        self.ncut.validate()?;
        self.sinkhorn.validate()?;
        Ok(())
    }

    pub fn architecture(&self, input_dim: usize) -> Architecture {
        Architecture {
            input_dim,
            hidden: self.hidden.clone(),
            embedding_dim: self.embedding_dim,
            hidden_activation: self.hidden_activation,
            embedding_activation: Activation::Identity,
        }
    }

    fn reduction(&self) -> Reduction {
        if self.deterministic {
            Reduction::Deterministic
        } else {
            Reduction::Parallel
        }
    }
}

/// Everything training needs from the data: the network input, the raw
/// counts it reconstructs, size factors, and the two cell graphs.
#[derive(Clone, Debug)]
pub struct TrainData {
    /// Preprocessed expression; the graphs are built from it.
    pub x: DenseMatrix,
    /// `x` with standardized columns, fed to the encoder.
    pub input: DenseMatrix,
    pub counts: DenseMatrix,
    pub size_factors: Vec<f64>,
    pub graphs: SoftGraphPair,
}

impl TrainData {
    pub fn new(x: DenseMatrix, counts: DenseMatrix, size_factors: Vec<f64>) -> Result<Self, TrainError> {
        Self::with_limit(x, counts, size_factors, DEFAULT_MAX_CELLS)
    }

    pub fn with_limit(
        x: DenseMatrix,
        counts: DenseMatrix,
        size_factors: Vec<f64>,
        max_cells: usize,
    ) -> Result<Self, TrainError> {
        if x.shape() != counts.shape() {
            return Err(TrainError::Data(format!(
                "input {:?} and counts {:?} differ in shape",
                x.shape(),
                counts.shape()
            )));
        }
        if size_factors.len() != x.rows() {
            return Err(TrainError::Data(format!(
                "{} size factors for {} cells",
                size_factors.len(),
                x.rows()
            )));
        }
        let graphs = SoftGraphPair::build(&x, max_cells)?;
        Ok(TrainData {
            input: standardize_columns(&x),
            x,
            counts,
            size_factors,
            graphs,
        })
    }

    /// Builds training data from preprocessing output and the raw counts
    /// it was derived from.
    pub fn from_preprocessed(pre: &Preprocessed, raw: &ExpressionMatrix) -> Result<Self, TrainError> {
        Self::new(pre.x.clone(), pre.raw_counts(raw), pre.size_factors.clone())
    }

    pub fn n_cells(&self) -> usize {
        self.x.rows()
    }
}

/// Loss components for one epoch, as written to the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_ncut: f64,
    pub l_zinb: f64,
    pub l_kl: f64,
    pub total: f64,
}

/// CSV rendering of a loss history with the header
/// `epoch,l_ncut,l_zinb,l_kl,total`.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,l_ncut,l_zinb,l_kl,total\n");
    for r in history {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e}\n",
            r.epoch, r.l_ncut, r.l_zinb, r.l_kl, r.total
        ));
    }
    out
}

/// Adam moments for a fixed list of tensors.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub m: Vec<DenseMatrix>,
    pub v: Vec<DenseMatrix>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    /// Zeroed moments shaped like `shapes`, with the usual decay rates.
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        OptimizerState {
            m: shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update with decoupled weight decay
/// (`p ← p·(1 − lr·wd)` before the moment step). `decay[i]` selects which
/// tensors are decayed. Gradients are checked before anything is touched.
pub fn adam_step(
    params: &mut [&mut DenseMatrix],
    grads: &[&DenseMatrix],
    names: &[String],
    decay: &[bool],
    state: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<(), TrainError> {
    let k = params.len();
    if grads.len() != k || names.len() != k || decay.len() != k || state.m.len() != k {
        return Err(TrainError::Data("optimizer inputs differ in length".into()));
    }
    for i in 0..k {
        if grads[i].shape() != params[i].shape() || state.m[i].shape() != params[i].shape() {
            return Err(TrainError::Data(format!(
                "parameter `{}` is {:?} but its gradient is {:?}",
                names[i],
                params[i].shape(),
                grads[i].shape()
            )));
        }
        if !grads[i].is_finite() {
            return Err(TrainError::NonFiniteGradient(names[i].clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..k {
        let shrink = if decay[i] { 1.0 - lr * weight_decay } else { 1.0 };
        let p = params[i].as_mut_slice();
        let m = state.m[i].as_mut_slice();
        let v = state.v[i].as_mut_slice();
        for (((p, m), v), &g) in p.iter_mut().zip(m).zip(v).zip(grads[i].as_slice()) {
            *p *= shrink;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

fn param_names(params: &ModelParams) -> Vec<String> {
    params.named_tensors().into_iter().map(|(n, _)| n).collect()
}

/// Weights are decayed, biases are not.
fn decay_mask(names: &[String]) -> Vec<bool> {
    names.iter().map(|n| n.ends_with(".weight")).collect()
}

/// One epoch's graph: network, cut loss, reconstruction loss, and
/// optionally the soft assignment.
struct Recorded {
    g: Graph,
    param_ids: Vec<NodeId>,
    centers: Option<NodeId>,
    ncut: NodeId,
    zinb: NodeId,
    q: Option<NodeId>,
}

fn record(
    data: &TrainData,
    params: &ModelParams,
    centers: Option<(&DenseMatrix, bool)>,
    laplacian: &DenseMatrix,
    cfg: &TrainConfig,
) -> Result<Recorded, TrainError> {
    let mut g = Graph::with_reduction(cfg.reduction());
    let nodes = params.register(&mut g, true);
    let center_node = centers.map(|(c, trainable)| {
        if trainable {
            g.variable(c.clone())
        } else {
            g.constant(c.clone())
        }
    });
    let x = g.constant(data.input.clone());
    let ones = g.constant(DenseMatrix::ones(data.n_cells(), 1));
    let h = encode(&mut g, x, &nodes, ones);
    let z = g.scale(h, embedding_scale(data.n_cells()));
    let lap = g.constant(laplacian.clone());
    let ncut = ncut_loss_node(&mut g, z, lap, params.embedding_dim(), cfg.ncut.beta);
    let heads = decode_heads(&mut g, h, &nodes, &data.size_factors, ones)?;
    let zinb = zinb_nll(&mut g, &data.counts, heads);
    let q = match center_node {
        Some(c) => {
            let c = g.scale(c, embedding_scale(data.n_cells()));
            Some(soft_assign(&mut g, z, c)?)
        }
        None => None,
    };
    Ok(Recorded {
        g,
        param_ids: nodes.ids(),
        centers: center_node,
        ncut,
        zinb,
        q,
    })
}

/// Factor between encoder features and the embedding, `1/√N`.
pub fn embedding_scale(n_cells: usize) -> f64 {
    1.0 / (n_cells.max(1) as f64).sqrt()
}

/// The embedding `Z` of every cell under `params`.
pub fn embed(data: &TrainData, params: &ModelParams) -> Result<DenseMatrix, TrainError> {
    let h = encode_values(&data.input, params)?;
    Ok(h.scaled(embedding_scale(data.n_cells())))
}

fn check_data(data: &TrainData, params: &ModelParams) -> Result<(), TrainError> {
    params.validate()?;
    if params.input_dim() != data.x.cols() {
        return Err(TrainError::Data(format!(
            "model expects {} genes but the data has {}",
            params.input_dim(),
            data.x.cols()
        )));
    }
    Ok(())
}

fn finite_or(phase: &'static str, epoch: usize) -> impl Fn(DiffError) -> TrainError {
    move |e| match e {
        DiffError::NonFinite { .. } => TrainError::NonFiniteLoss { phase, epoch },
        other => other.into(),
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutput {
    pub params: ModelParams,
    pub z: DenseMatrix,
    pub history: Vec<EpochRecord>,
}

/// Minimizes `L_ncut + γ·L_zinb` for `cfg.pretrain_epochs` full-batch steps.
pub fn pretrain(data: &TrainData, params: ModelParams, cfg: &TrainConfig) -> Result<PretrainOutput, TrainError> {
    pretrain_observed(data, params, cfg, |_, _| {})
}

/// [`pretrain`] calling `observe` after every optimizer step with the
/// epoch's losses and the updated parameters.
pub fn pretrain_observed(
    data: &TrainData,
    mut params: ModelParams,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochRecord, &ModelParams),
) -> Result<PretrainOutput, TrainError> {
    cfg.validate()?;
    check_data(data, &params)?;
    let laplacian = data.graphs.combined_laplacian(cfg.ncut.alpha);
    let names = param_names(&params);
    let decay = decay_mask(&names);
    let shapes: Vec<_> = params.named_tensors().iter().map(|(_, t)| t.shape()).collect();
    let mut opt = OptimizerState::new(&shapes);
    let mut history = Vec::with_capacity(cfg.pretrain_epochs);

    for epoch in 0..cfg.pretrain_epochs {
        let mut r = record(data, &params, None, &laplacian, cfg)?;
        let root = if cfg.gamma > 0.0 {
            let weighted = r.g.scale(r.zinb, cfg.gamma);
            r.g.add(r.ncut, weighted)
        } else {
            r.ncut
        };
        // The reconstruction loss is always evaluated so it can be logged,
        // but only enters the gradient when γ > 0.
        let last = NodeId::max(root, r.zinb);
        r.g.evaluate(last).map_err(finite_or("pretrain", epoch))?;
        let l_ncut = r.g.value(r.ncut).expect("evaluated")[(0, 0)];
        let l_zinb = r.g.value(r.zinb).expect("evaluated")[(0, 0)];
        let total = l_ncut + cfg.gamma * l_zinb;
        if !total.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                phase: "pretrain",
                epoch,
            });
        }
        history.push(EpochRecord {
            epoch,
            l_ncut,
            l_zinb,
            l_kl: 0.0,
            total,
        });
        debug!("pretrain epoch {epoch}: ncut {l_ncut:.6} zinb {l_zinb:.6} total {total:.6}");

        let grads = r.g.backward(root)?;
        let grad_refs: Vec<&DenseMatrix> = r.param_ids.iter().map(|id| grads.get(*id).expect("variable")).collect();
        let mut tensors = params.tensors_mut();
        adam_step(
            &mut tensors,
            &grad_refs,
            &names,
            &decay,
            &mut opt,
            cfg.learning_rate,
            cfg.weight_decay,
        )?;
        observe(history.last().expect("pushed above"), &params);
    }
    let z = embed(data, &params)?;
    Ok(PretrainOutput { params, z, history })
}

#[derive(Clone, Debug)]
pub struct JointOutput {
    pub params: ModelParams,
    pub centers: DenseMatrix,
    pub z: DenseMatrix,
    pub q: DenseMatrix,
    pub labels: Vec<usize>,
    pub history: Vec<EpochRecord>,
    /// Epochs whose Sinkhorn solve stopped short of the marginal tolerance.
    pub sinkhorn_unconverged: usize,
}

/// Joint training on the full objective. Centers start from k-means on
/// the current embedding.
pub fn train_joint(data: &TrainData, mut params: ModelParams, cfg: &TrainConfig) -> Result<JointOutput, TrainError> {
    cfg.validate()?;
    check_data(data, &params)?;
    let laplacian = data.graphs.combined_laplacian(cfg.ncut.alpha);
    let z0 = embed(data, &params)?;
    let km_seed = cfg.seed.wrapping_add(1);
    let scale = embedding_scale(data.n_cells());
    // Centers are stored and trained at the feature scale, like the network
    // output, and mapped into embedding units inside the graph.
    let to_features = |c: DenseMatrix| c.scaled(1.0 / scale);
    let mut centers = to_features(kmeans(&z0, cfg.n_clusters, km_seed, &cfg.kmeans)?.centers);

    let mut names = param_names(&params);
    names.push("centers".into());
    let mut decay = decay_mask(&names);
    *decay.last_mut().expect("centers entry") = false;
    let mut shapes: Vec<_> = params.named_tensors().iter().map(|(_, t)| t.shape()).collect();
    shapes.push(centers.shape());
    let mut opt = OptimizerState::new(&shapes);
    let mut history = Vec::with_capacity(cfg.train_epochs);
    let mut last_plan: Option<DenseMatrix> = None;
    let mut unconverged = 0;

    for epoch in 0..cfg.train_epochs {
        if cfg.recompute_centers && epoch > 0 {
            let z = embed(data, &params)?;
            centers = to_features(kmeans(&z, cfg.n_clusters, km_seed, &cfg.kmeans)?.centers);
        }
        let trainable_centers = !cfg.recompute_centers;
        let mut r = record(data, &params, Some((&centers, trainable_centers)), &laplacian, cfg)?;
        let q = r.q.expect("centers supplied");
        let q_val = r.g.evaluate(q).map_err(finite_or("joint", epoch))?.clone();

        let pi = estimate_proportions(&q_val);
        let plan = match sinkhorn(&q_val, &pi, &cfg.sinkhorn) {
            Ok(s) => {
                if !s.converged {
                    unconverged += 1;
                    warn!(
                        "epoch {epoch}: sinkhorn stopped after {} iterations with marginal violation {:.3e}",
                        s.iterations, s.violation
                    );
                }
                s.plan
            }
            Err(OtError::NonFiniteScaling { iteration }) => {
                unconverged += 1;
                warn!("epoch {epoch}: sinkhorn scaling overflowed at iteration {iteration}; reusing previous target");
                last_plan.clone().unwrap_or_else(|| q_val.clone())
            }
            Err(e) => return Err(e.into()),
        };

        let kl = kl_loss(&mut r.g, &plan, q)?;
        last_plan = Some(plan);
        let w_zinb = r.g.scale(r.zinb, cfg.gamma);
        let w_kl = r.g.scale(kl, cfg.mu_weight);
        let root = match (cfg.gamma > 0.0, cfg.mu_weight > 0.0) {
            (true, true) => {
                let s = r.g.add(r.ncut, w_zinb);
                r.g.add(s, w_kl)
            }
            (true, false) => r.g.add(r.ncut, w_zinb),
            (false, true) => r.g.add(r.ncut, w_kl),
            (false, false) => r.ncut,
        };
        let last = NodeId::max(root, w_kl);
        r.g.evaluate(last).map_err(finite_or("joint", epoch))?;
        let val = |id: NodeId| r.g.value(id).expect("evaluated")[(0, 0)];
        let (l_ncut, l_zinb, l_kl) = (val(r.ncut), val(r.zinb), val(kl));
        let total = l_ncut + cfg.gamma * l_zinb + cfg.mu_weight * l_kl;
        if !total.is_finite() {
            return Err(TrainError::NonFiniteLoss { phase: "joint", epoch });
        }
        history.push(EpochRecord {
            epoch,
            l_ncut,
            l_zinb,
            l_kl,
            total,
        });
        debug!("joint epoch {epoch}: ncut {l_ncut:.6} zinb {l_zinb:.6} kl {l_kl:.6} total {total:.6}");

        let grads = r.g.backward(root)?;
        let center_id = r.centers.expect("centers supplied");
        let zero_centers = DenseMatrix::zeros(centers.rows(), centers.cols());
        let mut grad_refs: Vec<&DenseMatrix> = r.param_ids.iter().map(|id| grads.get(*id).expect("variable")).collect();
        grad_refs.push(grads.get(center_id).unwrap_or(&zero_centers));
        let mut tensors = params.tensors_mut();
        tensors.push(&mut centers);
        adam_step(
            &mut tensors,
            &grad_refs,
            &names,
            &decay,
            &mut opt,
            cfg.learning_rate,
            cfg.weight_decay,
        )?;
    }

    let z = embed(data, &params)?;
    let centers = if cfg.recompute_centers && cfg.train_epochs > 0 {
        kmeans(&z, cfg.n_clusters, km_seed, &cfg.kmeans)?.centers
    } else {
        centers.scaled(scale)
    };
    let q = soft_assign_values(&z, &centers)?;
    let labels = argmax_rows(&q);
    Ok(JointOutput {
        params,
        centers,
        z,
        q,
        labels,
        history,
        sinkhorn_unconverged: unconverged,
    })
}

/// Result of the full pipeline.
#[derive(Clone, Debug)]
pub struct FitOutput {
    pub pretrain: PretrainOutput,
    pub joint: JointOutput,
}

/// Initializes the network from `cfg.seed`, pretrains, then trains jointly.
pub fn fit(data: &TrainData, cfg: &TrainConfig) -> Result<FitOutput, TrainError> {
    cfg.validate()?;
    let params = ModelParams::init(&cfg.architecture(data.x.cols()), cfg.seed);
    let pretrain = pretrain(data, params, cfg)?;
    let joint = train_joint(data, pretrain.params.clone(), cfg)?;
    Ok(FitOutput { pretrain, joint })
}

/// Mean silhouette of a labeling under Euclidean distance. Points in
/// singleton clusters score 0.
pub fn silhouette(z: &DenseMatrix, labels: &[usize]) -> f64 {
    let n = z.rows();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    if n < 2 || k < 2 {
        return 0.0;
    }
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                let d: f64 = z
                    .row(i)
                    .iter()
                    .zip(z.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                sums[labels[j]] += d;
            }
        }
        let own = labels[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

/// Silhouette of k-means on `z` for each candidate cluster count.
pub fn select_k(
    z: &DenseMatrix,
    candidates: impl IntoIterator<Item = usize>,
    seed: u64,
    km: &KMeansConfig,
) -> Result<Vec<(usize, f64)>, TrainError> {
    candidates
        .into_iter()
        .map(|k| {
            if k < 2 {
                return Err(TrainError::Config(format!("candidate cluster count {k} is below 2")));
            }
            let r = kmeans(z, k, seed, km)?;
            Ok((k, silhouette(z, &r.labels)))
        })
        .collect()
}

/// The candidate with the highest silhouette; ties go to the smaller k.
pub fn best_k(scores: &[(usize, f64)]) -> Option<usize> {
    scores
        .iter()
        .fold(None::<(usize, f64)>, |best, &(k, s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((k, s)),
        })
        .map(|(k, _)| k)
}
