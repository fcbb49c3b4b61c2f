//! Feature autoencoder with zero-inflated negative binomial output heads.
//!
//! The encoder maps `X` (cells × genes) to an embedding `Z`; the decoder
//! maps `Z` back to a hidden representation from which three heads produce
//! per-entry dropout probability `pi`, mean `mu` (scaled by each cell's size
//! factor), and dispersion `theta`. [`zinb_nll`] is the mean negative
//! log-likelihood of `X` under those parameters.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diffcore::{special, DenseMatrix, DiffError, Graph, NodeId};

/// Lower/upper clamp for `mu` and `theta`.
pub const PARAM_MIN: f64 = 1e-6;
pub const PARAM_MAX: f64 = 1e6;
/// `pi` is kept in `[PI_EPS, 1 - PI_EPS]`.
pub const PI_EPS: f64 = 1e-6;
/// Mixture probability floor applied before the log.
pub const PROB_FLOOR: f64 = 1e-10;
/// Pre-activation clamp ahead of `exp`, far outside the useful range but
/// enough to keep `exp` finite.
const LOGIT_CAP: f64 = 60.0;

#[derive(Debug, Error)]
pub enum ZinbError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("layer shapes do not chain: {0}")]
    Architecture(String),
    #[error("size factor {value} for cell {cell} is not positive")]
    SizeFactor { cell: usize, value: f64 },
    #[error("expected {expected} size factors, got {got}")]
    SizeFactorCount { expected: usize, got: usize },
    #[error("non-finite ZINB loss at entries {0:?}")]
    NonFiniteLoss(Vec<(usize, usize)>),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

/// Elementwise nonlinearity between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
    /// `tanh(x) = 2·sigmoid(2x) − 1`, recorded through the sigmoid kernel.
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "sigmoid" => Some(Activation::Sigmoid),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    fn apply(self, g: &mut Graph, x: NodeId) -> NodeId {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Tanh => {
                let x2 = g.scale(x, 2.0);
                let s = g.sigmoid(x2);
                let s2 = g.scale(s, 2.0);
                g.offset(s2, -1.0)
            }
        }
    }
}

/// A fully connected layer `y = x W + b` with `W: in × out`, `b: 1 × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weight: DenseMatrix::zeros(fan_in, fan_out),
            bias: DenseMatrix::zeros(1, fan_out),
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Layer {
            weight: DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit)),
            bias: DenseMatrix::zeros(1, fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }
}

/// Shape description of the autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub hidden_activation: Activation,
    pub embedding_activation: Activation,
}

impl Architecture {
    /// `input → 256 → 64 → 16`, mirrored for the decoder.
    pub fn with_defaults(input_dim: usize) -> Self {
        Architecture {
            input_dim,
            hidden: vec![256, 64],
            embedding_dim: 16,
            hidden_activation: Activation::Sigmoid,
            embedding_activation: Activation::Identity,
        }
    }
}

/// All trainable weights of the autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
    pub head_pi: Layer,
    pub head_mu: Layer,
    pub head_theta: Layer,
    pub hidden_activation: Activation,
    pub embedding_activation: Activation,
}

impl ModelParams {
    /// Seeded Glorot initialization.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc_dims = vec![arch.input_dim];
        enc_dims.extend(&arch.hidden);
        enc_dims.push(arch.embedding_dim);
        let encoder = enc_dims
            .windows(2)
            .map(|w| Layer::glorot(w[0], w[1], &mut rng))
            .collect();
        let mut dec_dims = vec![arch.embedding_dim];
        dec_dims.extend(arch.hidden.iter().rev());
        let decoder: Vec<Layer> = dec_dims
            .windows(2)
            .map(|w| Layer::glorot(w[0], w[1], &mut rng))
            .collect();
        let last = *dec_dims.last().expect("nonempty");
        ModelParams {
            encoder,
            decoder,
            head_pi: Layer::glorot(last, arch.input_dim, &mut rng),
            head_mu: Layer::glorot(last, arch.input_dim, &mut rng),
            head_theta: Layer::glorot(last, arch.input_dim, &mut rng),
            hidden_activation: arch.hidden_activation,
            embedding_activation: arch.embedding_activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.first().map_or(0, Layer::fan_in)
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.last().map_or(0, Layer::fan_out)
    }

    /// Checks that every layer's input width matches the previous output.
    pub fn validate(&self) -> Result<(), ZinbError> {
        if self.encoder.is_empty() {
            return Err(ZinbError::Architecture("encoder has no layers".into()));
        }
        let mut width = self.input_dim();
        for (name, layers) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, l) in layers.iter().enumerate() {
                if l.fan_in() != width || l.bias.shape() != (1, l.fan_out()) {
                    return Err(ZinbError::Architecture(format!(
                        "{name}.{i} is {}x{} with bias {:?}, expected input width {width}",
                        l.fan_in(),
                        l.fan_out(),
                        l.bias.shape()
                    )));
                }
                width = l.fan_out();
            }
        }
        let d = self.input_dim();
        for (name, h) in [
            ("pi", &self.head_pi),
            ("mu", &self.head_mu),
            ("theta", &self.head_theta),
        ] {
            if h.weight.shape() != (width, d) || h.bias.shape() != (1, d) {
                return Err(ZinbError::Architecture(format!(
                    "head_{name} is {:?}, expected {width}x{d}",
                    h.weight.shape()
                )));
            }
        }
        Ok(())
    }

    /// Every tensor with a stable dotted name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &DenseMatrix)> {
        let mut out = Vec::new();
        for (prefix, layers) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, l) in layers.iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), &l.weight));
                out.push((format!("{prefix}.{i}.bias"), &l.bias));
            }
        }
        for (name, h) in [
            ("head_pi", &self.head_pi),
            ("head_mu", &self.head_mu),
            ("head_theta", &self.head_theta),
        ] {
            out.push((format!("{name}.weight"), &h.weight));
            out.push((format!("{name}.bias"), &h.bias));
        }
        out
    }

    /// Mutable counterpart of [`ModelParams::named_tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out = Vec::new();
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for h in [&mut self.head_pi, &mut self.head_mu, &mut self.head_theta] {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    /// Adds every tensor to `g`, as variables when `trainable`.
    pub fn register(&self, g: &mut Graph, trainable: bool) -> ParamNodes {
        let mut leaf = |m: &DenseMatrix| {
            if trainable {
                g.variable(m.clone())
            } else {
                g.constant(m.clone())
            }
        };
        let mut layer = |l: &Layer| LayerNodes {
            weight: leaf(&l.weight),
            bias: leaf(&l.bias),
        };
        ParamNodes {
            encoder: self.encoder.iter().map(&mut layer).collect(),
            decoder: self.decoder.iter().map(&mut layer).collect(),
            head_pi: layer(&self.head_pi),
            head_mu: layer(&self.head_mu),
            head_theta: layer(&self.head_theta),
            hidden_activation: self.hidden_activation,
            embedding_activation: self.embedding_activation,
        }
    }

    /// Writes the text checkpoint described in the README.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ZinbError> {
        fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ZinbError> {
        Self::from_checkpoint(&fs::read_to_string(path)?)
    }

    pub fn to_checkpoint(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "softcut-params v1");
        let _ = writeln!(
            s,
            "activation {} {}",
            self.hidden_activation.name(),
            self.embedding_activation.name()
        );
        let _ = writeln!(s, "layers {} {}", self.encoder.len(), self.decoder.len());
        for (name, m) in self.named_tensors() {
            let _ = writeln!(s, "tensor {name} {} {}", m.rows(), m.cols());
            for i in 0..m.rows() {
                let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:e}")).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, ZinbError> {
        let bad = |m: &str| ZinbError::Checkpoint(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("softcut-params v1") {
            return Err(bad("missing `softcut-params v1` header"));
        }
        let act: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
        let (hidden_activation, embedding_activation) = match act[..] {
            ["activation", h, e] => (
                Activation::parse(h).ok_or_else(|| bad("unknown activation"))?,
                Activation::parse(e).ok_or_else(|| bad("unknown activation"))?,
            ),
            _ => return Err(bad("malformed activation line")),
        };
        let counts: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
        let (n_enc, n_dec) = match counts[..] {
            ["layers", e, d] => (
                e.parse::<usize>().map_err(|_| bad("bad layer count"))?,
                d.parse::<usize>().map_err(|_| bad("bad layer count"))?,
            ),
            _ => return Err(bad("malformed layers line")),
        };

        let mut read_tensor = |expect: &str| -> Result<DenseMatrix, ZinbError> {
            let head: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
            let (rows, cols) = match head[..] {
                ["tensor", name, r, c] if name == expect => (
                    r.parse::<usize>().map_err(|_| bad("bad tensor rows"))?,
                    c.parse::<usize>().map_err(|_| bad("bad tensor cols"))?,
                ),
                _ => return Err(ZinbError::Checkpoint(format!("expected tensor {expect}"))),
            };
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = lines.next().ok_or_else(|| bad("truncated tensor"))?;
                for t in line.split_whitespace() {
                    data.push(t.parse::<f64>().map_err(|_| bad("bad value"))?);
                }
            }
            DenseMatrix::from_vec(rows, cols, data)
                .ok_or_else(|| ZinbError::Checkpoint(format!("tensor {expect} has wrong length")))
        };
        let mut read_layer = |name: String| -> Result<Layer, ZinbError> {
            Ok(Layer {
                weight: read_tensor(&format!("{name}.weight"))?,
                bias: read_tensor(&format!("{name}.bias"))?,
            })
        };
        let encoder = (0..n_enc)
            .map(|i| read_layer(format!("encoder.{i}")))
            .collect::<Result<Vec<_>, _>>()?;
        let decoder = (0..n_dec)
            .map(|i| read_layer(format!("decoder.{i}")))
            .collect::<Result<Vec<_>, _>>()?;
        let params = ModelParams {
            encoder,
            decoder,
            head_pi: read_layer("head_pi".into())?,
            head_mu: read_layer("head_mu".into())?,
            head_theta: read_layer("head_theta".into())?,
            hidden_activation,
            embedding_activation,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNodes {
    pub weight: NodeId,
    pub bias: NodeId,
}

/// Graph handles for a registered [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ParamNodes {
    pub encoder: Vec<LayerNodes>,
    pub decoder: Vec<LayerNodes>,
    pub head_pi: LayerNodes,
    pub head_mu: LayerNodes,
    pub head_theta: LayerNodes,
    pub hidden_activation: Activation,
    pub embedding_activation: Activation,
}

impl ParamNodes {
    /// Node ids in the same order as [`ModelParams::tensors_mut`].
    pub fn ids(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        for l in self.encoder.iter().chain(&self.decoder) {
            out.push(l.weight);
            out.push(l.bias);
        }
        for h in [&self.head_pi, &self.head_mu, &self.head_theta] {
            out.push(h.weight);
            out.push(h.bias);
        }
        out
    }
}

/// `x W + 1 b`, with `ones` an `n × 1` constant of ones.
fn affine(g: &mut Graph, x: NodeId, layer: LayerNodes, ones: NodeId) -> NodeId {
    let xw = g.matmul(x, layer.weight);
    let b = g.matmul(ones, layer.bias);
    g.add(xw, b)
}

/// Records the encoder on `g`; returns the embedding node `Z`.
pub fn encode(g: &mut Graph, x: NodeId, nodes: &ParamNodes, ones: NodeId) -> NodeId {
    let mut h = x;
    let last = nodes.encoder.len() - 1;
    for (i, &layer) in nodes.encoder.iter().enumerate() {
        let a = affine(g, h, layer, ones);
        let act = if i == last {
            nodes.embedding_activation
        } else {
            nodes.hidden_activation
        };
        h = act.apply(g, a);
    }
    h
}

/// Graph handles for the three head outputs.
#[derive(Clone, Copy, Debug)]
pub struct ZinbNodes {
    pub pi: NodeId,
    pub mu: NodeId,
    pub theta: NodeId,
}

fn check_size_factors(size_factors: &[f64], n: usize) -> Result<(), ZinbError> {
    if size_factors.len() != n {
        return Err(ZinbError::SizeFactorCount {
            expected: n,
            got: size_factors.len(),
        });
    }
    if let Some((cell, &value)) = size_factors
        .iter()
        .enumerate()
        .find(|(_, &s)| !(s > 0.0) || !s.is_finite())
    {
        return Err(ZinbError::SizeFactor { cell, value });
    }
    Ok(())
}

/// Records the decoder and the three heads on `g`.
pub fn decode_heads(
    g: &mut Graph,
    z: NodeId,
    nodes: &ParamNodes,
    size_factors: &[f64],
    ones: NodeId,
) -> Result<ZinbNodes, ZinbError> {
    let n = g.value(ones).map_or(size_factors.len(), |v| v.rows());
    check_size_factors(size_factors, n)?;
    let mut h = z;
    for &layer in &nodes.decoder {
        let a = affine(g, h, layer, ones);
        h = nodes.hidden_activation.apply(g, a);
    }

    let pi_logit = affine(g, h, nodes.head_pi, ones);
    let pi_raw = g.sigmoid(pi_logit);
    let pi = g.clamp(pi_raw, PI_EPS, 1.0 - PI_EPS);

    let mu_logit = affine(g, h, nodes.head_mu, ones);
    let mu_logit = g.clamp(mu_logit, -LOGIT_CAP, LOGIT_CAP);
    let mu_exp = g.exp(mu_logit);
    let s = g.constant(DenseMatrix::column(size_factors));
    let mu_scaled = g.scale_rows(mu_exp, s);
    let mu = g.clamp(mu_scaled, PARAM_MIN, PARAM_MAX);

    let theta_logit = affine(g, h, nodes.head_theta, ones);
    let theta_logit = g.clamp(theta_logit, -LOGIT_CAP, LOGIT_CAP);
    let theta_exp = g.exp(theta_logit);
    let theta = g.clamp(theta_exp, PARAM_MIN, PARAM_MAX);

    Ok(ZinbNodes { pi, mu, theta })
}

/// Records the mean ZINB negative log-likelihood of constant `x` given the
/// head outputs. Returns the scalar loss node.
pub fn zinb_nll(g: &mut Graph, x: &DenseMatrix, heads: ZinbNodes) -> NodeId {
    let (n, d) = x.shape();
    let zero_mask = g.constant(x.map(|v| if v == 0.0 { 1.0 } else { 0.0 }));
    let ln_gamma_x1 = g.constant(x.map(|v| special::ln_gamma(v + 1.0)));
    let xc = g.constant(x.clone());
    let ZinbNodes { pi, mu, theta } = heads;

    let x_theta = g.add(xc, theta);
    let lg_x_theta = g.ln_gamma(x_theta);
    let lg_theta = g.ln_gamma(theta);
    let log_theta = g.log(theta);
    let theta_mu = g.add(theta, mu);
    let log_theta_mu = g.log(theta_mu);
    let log_mu = g.log(mu);

    let t1 = g.sub(lg_x_theta, lg_theta);
    let t2 = g.sub(t1, ln_gamma_x1);
    let ratio_theta = g.sub(log_theta, log_theta_mu);
    let t3 = g.mul(theta, ratio_theta);
    let ratio_mu = g.sub(log_mu, log_theta_mu);
    let t4 = g.mul(xc, ratio_mu);
    let t5 = g.add(t2, t3);
    let log_nb = g.add(t5, t4);
    let nb = g.exp(log_nb);

    let neg_pi = g.scale(pi, -1.0);
    let keep = g.offset(neg_pi, 1.0);
    let zero_part = g.mul(pi, zero_mask);
    let nb_part = g.mul(keep, nb);
    let mix = g.add(zero_part, nb_part);
    let floored = g.clamp(mix, PROB_FLOOR, f64::INFINITY);
    let log_mix = g.log(floored);
    let total = g.sum(log_mix);
    g.scale(total, -1.0 / (n * d) as f64)
}

/// Head outputs as plain matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ZinbOutput {
    pub pi_hat: DenseMatrix,
    pub mu_hat: DenseMatrix,
    pub theta_hat: DenseMatrix,
}

/// Log of the negative binomial pmf with mean `mu` and dispersion `theta`
/// at count `x`.
pub fn nb_log_pmf(x: f64, mu: f64, theta: f64) -> f64 {
    let log_total = (theta + mu).ln();
    special::ln_gamma(x + theta) - special::ln_gamma(theta) - special::ln_gamma(x + 1.0)
        + theta * (theta.ln() - log_total)
        + x * (mu.ln() - log_total)
}

/// Per-entry negative log-likelihood, evaluated directly without a graph.
pub fn zinb_nll_entries(x: &DenseMatrix, out: &ZinbOutput) -> DenseMatrix {
    DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| {
        let (x, pi, mu, th) = (x[(i, j)], out.pi_hat[(i, j)], out.mu_hat[(i, j)], out.theta_hat[(i, j)]);
        let log_nb = nb_log_pmf(x, mu, th);
        let zero = if x == 0.0 { pi } else { 0.0 };
        let p = (zero + (1.0 - pi) * log_nb.exp()).max(PROB_FLOOR);
        -p.ln()
    })
}

/// Mean ZINB negative log-likelihood of `x` under fixed head outputs.
pub fn zinb_nll_value(x: &DenseMatrix, out: &ZinbOutput) -> Result<f64, ZinbError> {
    let mut g = Graph::new();
    let heads = ZinbNodes {
        pi: g.constant(out.pi_hat.clone()),
        mu: g.constant(out.mu_hat.clone()),
        theta: g.constant(out.theta_hat.clone()),
    };
    let root = zinb_nll(&mut g, x, heads);
    match g.forward(root) {
        Ok(v) => Ok(v),
        Err(DiffError::Shape { .. }) | Err(DiffError::NotScalar { .. }) => {
            Err(ZinbError::Architecture("x and head outputs differ in shape".into()))
        }
        Err(_) => {
            let per = zinb_nll_entries(x, out);
            let bad: Vec<(usize, usize)> = (0..per.rows())
                .flat_map(|i| (0..per.cols()).map(move |j| (i, j)))
                .filter(|&(i, j)| !per[(i, j)].is_finite())
                .collect();
            Err(ZinbError::NonFiniteLoss(bad))
        }
    }
}

/// Runs the encoder on plain matrices.
pub fn encode_values(x: &DenseMatrix, params: &ModelParams) -> Result<DenseMatrix, ZinbError> {
    params.validate()?;
    if x.cols() != params.input_dim() {
        return Err(DiffError::Shape {
            kernel: "matmul",
            left: x.shape(),
            right: Some(params.encoder[0].weight.shape()),
        }
        .into());
    }
    let mut g = Graph::new();
    let nodes = params.register(&mut g, false);
    let xn = g.constant(x.clone());
    let ones = g.constant(DenseMatrix::ones(x.rows(), 1));
    let z = encode(&mut g, xn, &nodes, ones);
    Ok(g.evaluate(z)?.clone())
}

/// Runs decoder and heads on plain decoder input.
pub fn decode_values(z: &DenseMatrix, params: &ModelParams, size_factors: &[f64]) -> Result<ZinbOutput, ZinbError> {
    params.validate()?;
    let mut g = Graph::new();
    let nodes = params.register(&mut g, false);
    let zn = g.constant(z.clone());
    let ones = g.constant(DenseMatrix::ones(z.rows(), 1));
    let heads = decode_heads(&mut g, zn, &nodes, size_factors, ones)?;
    Ok(ZinbOutput {
        pi_hat: g.evaluate(heads.pi)?.clone(),
        mu_hat: g.evaluate(heads.mu)?.clone(),
        theta_hat: g.evaluate(heads.theta)?.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch(d: usize, emb: usize) -> Architecture {
        Architecture {
            input_dim: d,
            hidden: vec![],
            embedding_dim: emb,
            hidden_activation: Activation::Sigmoid,
            embedding_activation: Activation::Sigmoid,
        }
    }

    fn zero_params(arch: &Architecture) -> ModelParams {
        let mut p = ModelParams::init(arch, 0);
        for t in p.tensors_mut() {
            t.map_inplace(|_| 0.0);
        }
        p
    }

    #[test]
    fn zero_weights_give_constant_embedding() {
        let p = zero_params(&tiny_arch(4, 3));
        let x = DenseMatrix::from_fn(5, 4, |i, j| (i + j) as f64);
        let z = encode_values(&x, &p).unwrap();
        assert_eq!(z.shape(), (5, 3));
        assert!(z.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn identity_layer_reproduces_input() {
        let arch = Architecture {
            embedding_activation: Activation::Identity,
            ..tiny_arch(3, 3)
        };
        let mut p = zero_params(&arch);
        p.encoder[0].weight = DenseMatrix::identity(3);
        let x = DenseMatrix::from_fn(4, 3, |i, j| i as f64 * 0.5 - j as f64);
        assert_eq!(encode_values(&x, &p).unwrap(), x);
    }

    #[test]
    fn single_row_input() {
        let p = ModelParams::init(&Architecture::with_defaults(10), 3);
        let x = DenseMatrix::ones(1, 10);
        assert_eq!(encode_values(&x, &p).unwrap().shape(), (1, 16));
    }

    #[test]
    fn encoder_rejects_wrong_width() {
        let p = ModelParams::init(&Architecture::with_defaults(10), 3);
        assert!(encode_values(&DenseMatrix::ones(2, 9), &p).is_err());
    }

    #[test]
    fn zero_heads_give_half_size_factor_and_one() {
        let p = zero_params(&tiny_arch(4, 2));
        let z = DenseMatrix::ones(3, 2);
        let out = decode_values(&z, &p, &[1.0, 2.0, 0.5]).unwrap();
        assert!(out.pi_hat.as_slice().iter().all(|&v| v == 0.5));
        assert!(out.theta_hat.as_slice().iter().all(|&v| v == 1.0));
        for (i, s) in [1.0, 2.0, 0.5].iter().enumerate() {
            assert!(out.mu_hat.row(i).iter().all(|v| v == s));
        }
    }

    #[test]
    fn size_factor_scales_mu_linearly() {
        let p = ModelParams::init(&tiny_arch(4, 2), 9);
        let z = DenseMatrix::from_fn(2, 2, |i, j| 0.1 * (i + 2 * j) as f64);
        let a = decode_values(&z, &p, &[1.0, 1.0]).unwrap();
        let b = decode_values(&z, &p, &[2.0, 1.0]).unwrap();
        for j in 0..4 {
            assert!((b.mu_hat[(0, j)] - 2.0 * a.mu_hat[(0, j)]).abs() < 1e-15);
            assert_eq!(b.mu_hat[(1, j)], a.mu_hat[(1, j)]);
        }
    }

    #[test]
    fn exp_heads_are_clamped() {
        let mut p = zero_params(&tiny_arch(2, 1));
        p.head_mu.bias = DenseMatrix::filled(1, 2, 20.0);
        p.head_theta.bias = DenseMatrix::filled(1, 2, -30.0);
        p.head_pi.bias = DenseMatrix::filled(1, 2, 40.0);
        let out = decode_values(&DenseMatrix::ones(1, 1), &p, &[1.0]).unwrap();
        assert!(out.mu_hat.as_slice().iter().all(|&v| v == PARAM_MAX));
        assert!(out.theta_hat.as_slice().iter().all(|&v| v == PARAM_MIN));
        assert!(out.pi_hat.as_slice().iter().all(|&v| v == 1.0 - PI_EPS));
    }

    #[test]
    fn nonpositive_size_factor_is_rejected() {
        let p = zero_params(&tiny_arch(2, 1));
        let e = decode_values(&DenseMatrix::ones(2, 1), &p, &[1.0, 0.0]).unwrap_err();
        assert!(matches!(e, ZinbError::SizeFactor { cell: 1, .. }));
    }

    fn single(x: f64, pi: f64, mu: f64, theta: f64) -> f64 {
        let out = ZinbOutput {
            pi_hat: DenseMatrix::filled(1, 1, pi),
            mu_hat: DenseMatrix::filled(1, 1, mu),
            theta_hat: DenseMatrix::filled(1, 1, theta),
        };
        zinb_nll_value(&DenseMatrix::filled(1, 1, x), &out).unwrap()
    }

    #[test]
    fn nll_certain_dropout_is_zero() {
        assert!(single(0.0, 1.0, 3.0, 2.0).abs() < 1e-15);
    }

    #[test]
    fn nll_closed_forms() {
        // NB(0; μ=1, θ=1) = (1/2)^1, NB(1; 1, 1) = Γ(2)/Γ(1)/1! · 1/2 · 1/2
        assert!((single(0.0, 0.0, 1.0, 1.0) - 2f64.ln()).abs() < 1e-12);
        assert!((single(1.0, 0.0, 1.0, 1.0) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nll_graph_matches_direct_entries() {
        let x = DenseMatrix::from_fn(3, 4, |i, j| ((i * 4 + j) % 5) as f64);
        let out = ZinbOutput {
            pi_hat: DenseMatrix::from_fn(3, 4, |i, j| 0.1 + 0.05 * (i + j) as f64),
            mu_hat: DenseMatrix::from_fn(3, 4, |i, j| 0.5 + (i * j) as f64),
            theta_hat: DenseMatrix::from_fn(3, 4, |i, j| 0.7 + 0.3 * (i + 2 * j) as f64),
        };
        let direct = zinb_nll_entries(&x, &out);
        let mean = direct.as_slice().iter().sum::<f64>() / 12.0;
        assert!((zinb_nll_value(&x, &out).unwrap() - mean).abs() < 1e-13);
    }

    #[test]
    fn checkpoint_round_trip_is_lossless() {
        let p = ModelParams::init(&Architecture::with_defaults(7), 11);
        let back = ModelParams::from_checkpoint(&p.to_checkpoint()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(ModelParams::from_checkpoint("nope").is_err());
        let p = ModelParams::init(&tiny_arch(3, 2), 1);
        let text = p
            .to_checkpoint()
            .replace("tensor head_mu.weight", "tensor head_xx.weight");
        assert!(ModelParams::from_checkpoint(&text).is_err());
    }
}
