//! Define-then-run reverse-mode graph over [`DenseMatrix`] values.
//!
//! Builder methods only record the kernel and its parents; [`Graph::forward`]
//! evaluates every pending node in insertion order (which is a topological
//! order, since parents always precede children) and [`Graph::backward`]
//! walks the same order in reverse.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::matrix::{gemm, DenseMatrix};
use super::special::{digamma, ln_gamma};
use super::DiffError;

/// Handle to a node inside a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How full reductions are summed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Reduction {
    /// Left-to-right sequential sums; bit-reproducible.
    #[default]
    Deterministic,
    /// Chunked parallel sums; rounding may differ between runs.
    Parallel,
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Variable,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId, f64),
    Exp(NodeId),
    Log(NodeId),
    Sigmoid(NodeId),
    LnGamma(NodeId),
    RowSum(NodeId),
    ColSum(NodeId),
    Sum(NodeId),
    Trace(NodeId),
    FrobeniusSq(NodeId),
    Pow(NodeId, f64),
    Abs(NodeId),
    ScaleRows(NodeId, NodeId),
    Clamp(NodeId, f64, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Variable => "variable",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Sigmoid(_) => "sigmoid",
            Op::LnGamma(_) => "ln_gamma",
            Op::RowSum(_) => "row_sum",
            Op::ColSum(_) => "col_sum",
            Op::Sum(_) => "sum",
            Op::Trace(_) => "trace",
            Op::FrobeniusSq(_) => "frobenius_sq",
            Op::Pow(..) => "pow",
            Op::Abs(_) => "abs",
            Op::ScaleRows(..) => "scale_rows",
            Op::Clamp(..) => "clamp",
        }
    }

    fn parents(&self) -> [Option<NodeId>; 2] {
        match *self {
            Op::Constant | Op::Variable => [None, None],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::ScaleRows(a, b) => {
                [Some(a), Some(b)]
            }
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Offset(a, _)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sigmoid(a)
            | Op::LnGamma(a)
            | Op::RowSum(a)
            | Op::ColSum(a)
            | Op::Sum(a)
            | Op::Trace(a)
            | Op::FrobeniusSq(a)
            | Op::Pow(a, _)
            | Op::Abs(a)
            | Op::Clamp(a, _, _) => [Some(a), None],
        }
    }
}

struct Node {
    op: Op,
    value: Option<DenseMatrix>,
    grad: Option<DenseMatrix>,
    requires_grad: bool,
}

/// Gradients of a scalar root with respect to each variable leaf.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    map: BTreeMap<NodeId, DenseMatrix>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.map.get(&id)
    }

    pub fn remove(&mut self, id: NodeId) -> Option<DenseMatrix> {
        self.map.remove(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &DenseMatrix)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// A single-session computation graph.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    reduction: Reduction,
    evaluated: usize,
}

const PAR_CHUNK: usize = 4096;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_reduction(reduction: Reduction) -> Self {
        Graph {
            reduction,
            ..Self::default()
        }
    }

    pub fn reduction(&self) -> Reduction {
        self.reduction
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_leaf(&mut self, value: DenseMatrix, op: Op, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            value: Some(value),
            grad: None,
            requires_grad,
        });
        id
    }

    fn push(&mut self, op: Op) -> NodeId {
        let requires_grad = op.parents().iter().flatten().any(|p| self.nodes[p.0].requires_grad);
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            value: None,
            grad: None,
            requires_grad,
        });
        id
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> NodeId {
        self.push_leaf(value, Op::Constant, false)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn variable(&mut self, value: DenseMatrix) -> NodeId {
        self.push_leaf(value, Op::Variable, true)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        self.push(Op::Scale(a, s))
    }

    /// Adds a scalar to every entry.
    pub fn offset(&mut self, a: NodeId, s: f64) -> NodeId {
        self.push(Op::Offset(a, s))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Log(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sigmoid(a))
    }

    pub fn ln_gamma(&mut self, a: NodeId) -> NodeId {
        self.push(Op::LnGamma(a))
    }

    /// `r × c → r × 1`.
    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::RowSum(a))
    }

    /// `r × c → 1 × c`.
    pub fn col_sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::ColSum(a))
    }

    /// Sum of all entries, `1 × 1`.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a))
    }

    pub fn trace(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Trace(a))
    }

    /// Squared Frobenius norm, `1 × 1`.
    pub fn frobenius_sq(&mut self, a: NodeId) -> NodeId {
        self.push(Op::FrobeniusSq(a))
    }

    /// Elementwise `a^p`.
    pub fn pow(&mut self, a: NodeId, p: f64) -> NodeId {
        self.push(Op::Pow(a, p))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Abs(a))
    }

    /// Multiplies row `i` of `m` by `v[i]`; `v` must be `rows(m) × 1`.
    pub fn scale_rows(&mut self, m: NodeId, v: NodeId) -> NodeId {
        self.push(Op::ScaleRows(m, v))
    }

    /// Elementwise clamp into `[lo, hi]`; gradient is zero outside.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        self.push(Op::Clamp(a, lo, hi))
    }

    /// Cached value of a node, once evaluated.
    pub fn value(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.nodes.get(id.0).and_then(|n| n.value.as_ref())
    }

    /// Accumulated gradient of a node after [`Graph::backward`].
    pub fn grad(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.nodes.get(id.0).and_then(|n| n.grad.as_ref())
    }

    /// Evaluates every pending node up to and including `id`.
    pub fn evaluate(&mut self, id: NodeId) -> Result<&DenseMatrix, DiffError> {
        if id.0 >= self.nodes.len() {
            return Err(DiffError::UnknownNode(id.0));
        }
        while self.evaluated <= id.0 {
            let idx = self.evaluated;
            if self.nodes[idx].value.is_none() {
                let v = self.compute(idx)?;
                if !v.is_finite() {
                    return Err(DiffError::NonFinite {
                        kernel: self.nodes[idx].op.name(),
                        node: idx,
                    });
                }
                self.nodes[idx].value = Some(v);
            }
            self.evaluated += 1;
        }
        Ok(self.nodes[id.0].value.as_ref().expect("evaluated"))
    }

    /// Evaluates the graph up to `root`, which must be `1 × 1`, and returns
    /// its scalar value.
    pub fn forward(&mut self, root: NodeId) -> Result<f64, DiffError> {
        let v = self.evaluate(root)?;
        if v.shape() != (1, 1) {
            return Err(DiffError::NotScalar { shape: v.shape() });
        }
        Ok(v[(0, 0)])
    }

    fn val(&self, id: NodeId) -> &DenseMatrix {
        self.nodes[id.0].value.as_ref().expect("parent evaluated before child")
    }

    fn sum_slice(&self, xs: &[f64]) -> f64 {
        match self.reduction {
            Reduction::Deterministic => xs.iter().sum(),
            Reduction::Parallel => xs.par_chunks(PAR_CHUNK).map(|c| c.iter().sum::<f64>()).sum(),
        }
    }

    fn compute(&self, idx: usize) -> Result<DenseMatrix, DiffError> {
        let op = &self.nodes[idx].op;
        let name = op.name();
        let same = |a: &DenseMatrix, b: &DenseMatrix| -> Result<(), DiffError> {
            if a.shape() == b.shape() {
                Ok(())
            } else {
                Err(DiffError::Shape {
                    kernel: name,
                    left: a.shape(),
                    right: Some(b.shape()),
                })
            }
        };
        let out = match *op {
            Op::Constant | Op::Variable => unreachable!("leaves carry values"),
            Op::MatMul(a, b) => {
                let (a, b) = (self.val(a), self.val(b));
                if a.cols() != b.rows() {
                    return Err(DiffError::Shape {
                        kernel: name,
                        left: a.shape(),
                        right: Some(b.shape()),
                    });
                }
                gemm(a, false, b, false)
            }
            Op::Transpose(a) => self.val(a).transpose(),
            Op::Add(a, b) => {
                let (a, b) = (self.val(a), self.val(b));
                same(a, b)?;
                a.zip_map(b, |x, y| x + y)
            }
            Op::Sub(a, b) => {
                let (a, b) = (self.val(a), self.val(b));
                same(a, b)?;
                a.zip_map(b, |x, y| x - y)
            }
            Op::Mul(a, b) => {
                let (a, b) = (self.val(a), self.val(b));
                same(a, b)?;
                a.zip_map(b, |x, y| x * y)
            }
            Op::Scale(a, s) => self.val(a).scaled(s),
            Op::Offset(a, s) => self.val(a).map(|x| x + s),
            Op::Exp(a) => self.val(a).map(f64::exp),
            Op::Log(a) => self.val(a).map(f64::ln),
            Op::Sigmoid(a) => self.val(a).map(sigmoid),
            Op::LnGamma(a) => self.val(a).map(ln_gamma),
            Op::RowSum(a) => {
                let a = self.val(a);
                DenseMatrix::column(&a.row_sums())
            }
            Op::ColSum(a) => {
                let a = self.val(a);
                DenseMatrix::from_vec(1, a.cols(), a.col_sums()).expect("shape")
            }
            Op::Sum(a) => DenseMatrix::filled(1, 1, self.sum_slice(self.val(a).as_slice())),
            Op::Trace(a) => {
                let a = self.val(a);
                if a.rows() != a.cols() {
                    return Err(DiffError::Shape {
                        kernel: name,
                        left: a.shape(),
                        right: None,
                    });
                }
                DenseMatrix::filled(1, 1, (0..a.rows()).map(|i| a[(i, i)]).sum())
            }
            Op::FrobeniusSq(a) => {
                let a = self.val(a).as_slice();
                let s = match self.reduction {
                    Reduction::Deterministic => a.iter().map(|v| v * v).sum(),
                    Reduction::Parallel => a
                        .par_chunks(PAR_CHUNK)
                        .map(|c| c.iter().map(|v| v * v).sum::<f64>())
                        .sum(),
                };
                DenseMatrix::filled(1, 1, s)
            }
            Op::Pow(a, p) => self.val(a).map(|x| x.powf(p)),
            Op::Abs(a) => self.val(a).map(f64::abs),
            Op::ScaleRows(m, v) => {
                let (m, v) = (self.val(m), self.val(v));
                if v.shape() != (m.rows(), 1) {
                    return Err(DiffError::Shape {
                        kernel: name,
                        left: m.shape(),
                        right: Some(v.shape()),
                    });
                }
                let mut out = m.clone();
                for i in 0..m.rows() {
                    let s = v[(i, 0)];
                    out.row_mut(i).iter_mut().for_each(|x| *x *= s);
                }
                out
            }
            Op::Clamp(a, lo, hi) => self.val(a).map(|x| x.clamp(lo, hi)),
        };
        Ok(out)
    }

    /// Back-propagates from a scalar `root`, accumulating gradients on every
    /// node that depends on a variable, and returns the variable gradients.
    pub fn backward(&mut self, root: NodeId) -> Result<Gradients, DiffError> {
        if root.0 >= self.nodes.len() {
            return Err(DiffError::UnknownNode(root.0));
        }
        let shape = match &self.nodes[root.0].value {
            Some(v) if self.evaluated > root.0 => v.shape(),
            _ => return Err(DiffError::NotEvaluated),
        };
        if shape != (1, 1) {
            return Err(DiffError::NotScalar { shape });
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[root.0].grad = Some(DenseMatrix::ones(1, 1));

        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(upstream) = self.nodes[idx].grad.take() else {
                continue;
            };
            let contributions = self.vjp(idx, &upstream);
            self.nodes[idx].grad = Some(upstream);
            for (parent, g) in contributions {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut self.nodes[parent.0].grad {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }

        let mut map = BTreeMap::new();
        for (idx, n) in self.nodes.iter().enumerate().take(root.0 + 1) {
            if matches!(n.op, Op::Variable) {
                let g = match (&n.grad, &n.value) {
                    (Some(g), _) => g.clone(),
                    (None, Some(v)) => DenseMatrix::zeros(v.rows(), v.cols()),
                    (None, None) => continue,
                };
                map.insert(NodeId(idx), g);
            }
        }
        Ok(Gradients { map })
    }

    /// Vector-Jacobian products of node `idx` given its upstream gradient.
    fn vjp(&self, idx: usize, up: &DenseMatrix) -> Vec<(NodeId, DenseMatrix)> {
        let out = self.nodes[idx].value.as_ref().expect("evaluated");
        let wants = |id: NodeId| self.nodes[id.0].requires_grad;
        match self.nodes[idx].op {
            Op::Constant | Op::Variable => vec![],
            Op::MatMul(a, b) => {
                let mut v = Vec::with_capacity(2);
                if wants(a) {
                    v.push((a, gemm(up, false, self.val(b), true)));
                }
                if wants(b) {
                    v.push((b, gemm(self.val(a), true, up, false)));
                }
                v
            }
            Op::Transpose(a) => vec![(a, up.transpose())],
            Op::Add(a, b) => [(a, 1.0), (b, 1.0)]
                .into_iter()
                .filter(|&(p, _)| wants(p))
                .map(|(p, s)| (p, if s == 1.0 { up.clone() } else { up.scaled(s) }))
                .collect(),
            Op::Sub(a, b) => [(a, 1.0), (b, -1.0)]
                .into_iter()
                .filter(|&(p, _)| wants(p))
                .map(|(p, s)| (p, if s == 1.0 { up.clone() } else { up.scaled(s) }))
                .collect(),
            Op::Mul(a, b) => {
                let mut v = Vec::with_capacity(2);
                if wants(a) {
                    v.push((a, up.zip_map(self.val(b), |g, y| g * y)));
                }
                if wants(b) {
                    v.push((b, up.zip_map(self.val(a), |g, x| g * x)));
                }
                v
            }
            Op::Scale(a, s) => vec![(a, up.scaled(s))],
            Op::Offset(a, _) => vec![(a, up.clone())],
            Op::Exp(a) => vec![(a, up.zip_map(out, |g, y| g * y))],
            Op::Log(a) => vec![(a, up.zip_map(self.val(a), |g, x| g / x))],
            Op::Sigmoid(a) => vec![(a, up.zip_map(out, |g, y| g * y * (1.0 - y)))],
            Op::LnGamma(a) => vec![(a, up.zip_map(self.val(a), |g, x| g * digamma(x)))],
            Op::RowSum(a) => {
                let (r, c) = self.val(a).shape();
                vec![(a, DenseMatrix::from_fn(r, c, |i, _| up[(i, 0)]))]
            }
            Op::ColSum(a) => {
                let (r, c) = self.val(a).shape();
                vec![(a, DenseMatrix::from_fn(r, c, |_, j| up[(0, j)]))]
            }
            Op::Sum(a) => {
                let (r, c) = self.val(a).shape();
                vec![(a, DenseMatrix::filled(r, c, up[(0, 0)]))]
            }
            Op::Trace(a) => {
                let n = self.val(a).rows();
                vec![(a, DenseMatrix::identity(n).scaled(up[(0, 0)]))]
            }
            Op::FrobeniusSq(a) => vec![(a, self.val(a).scaled(2.0 * up[(0, 0)]))],
            Op::Pow(a, p) => vec![(a, up.zip_map(self.val(a), |g, x| g * p * x.powf(p - 1.0)))],
            Op::Abs(a) => vec![(a, up.zip_map(self.val(a), |g, x| g * sign(x)))],
            Op::ScaleRows(m, v) => {
                let (mv, vv) = (self.val(m), self.val(v));
                let mut res = Vec::with_capacity(2);
                if wants(m) {
                    let mut g = up.clone();
                    for i in 0..g.rows() {
                        let s = vv[(i, 0)];
                        g.row_mut(i).iter_mut().for_each(|x| *x *= s);
                    }
                    res.push((m, g));
                }
                if wants(v) {
                    let gv: Vec<f64> = (0..mv.rows())
                        .map(|i| up.row(i).iter().zip(mv.row(i)).map(|(g, x)| g * x).sum())
                        .collect();
                    res.push((v, DenseMatrix::column(&gv)));
                }
                res
            }
            Op::Clamp(a, lo, hi) => vec![(
                a,
                up.zip_map(self.val(a), |g, x| if x >= lo && x <= hi { g } else { 0.0 }),
            )],
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
