//! Dual-channel soft similarity graphs and the joint normalized-cut loss.
//!
//! Both graphs are dense and fully weighted:
//!
//! * `A1 = X Xᵀ` (inner-product similarity),
//! * `A2 = |C| |C|ᵀ` where `C` is the pairwise cosine matrix of the rows.
//!
//! Each is turned into `L = I − D^{-1/2} A D^{-1/2}` and the loss on an
//! embedding `Z` is `tr(Zᵀ (α L1 + (1−α) L2) Z) + β ‖ZᵀZ − I‖²_F`.

use thiserror::Error;

use crate::diffcore::{DenseMatrix, DiffError, Graph, NodeId};

/// Default refusal threshold for the dense `N × N` graphs.
pub const DEFAULT_MAX_CELLS: usize = 10_000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("row {0} has zero norm; cosine similarity is undefined")]
    ZeroNormRow(usize),
    #[error("node {0} has zero degree")]
    ZeroDegree(usize),
    #[error("adjacency must be square, got {0:?}")]
    NotSquare((usize, usize)),
    #[error("adjacency has a negative entry at ({0}, {1})")]
    NegativeWeight(usize, usize),
    #[error("{cells} cells exceeds the dense graph limit of {limit}")]
    TooManyCells { cells: usize, limit: usize },
    #[error("embedding has {z} rows but the graphs have {graph} nodes")]
    SizeMismatch { z: usize, graph: usize },
    #[error("alpha must lie in [0, 1] and beta must be nonnegative (alpha={alpha}, beta={beta})")]
    BadConfig { alpha: f64, beta: f64 },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NCutConfig {
    /// Weight of the inner-product graph; `1 − alpha` goes to the cosine graph.
    pub alpha: f64,
    /// Weight of the orthogonality penalty.
    pub beta: f64,
}

impl Default for NCutConfig {
    fn default() -> Self {
        NCutConfig { alpha: 0.7, beta: 15.0 }
    }
}

impl NCutConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if (0.0..=1.0).contains(&self.alpha) && self.beta >= 0.0 && self.beta.is_finite() {
            Ok(())
        } else {
            Err(GraphError::BadConfig {
                alpha: self.alpha,
                beta: self.beta,
            })
        }
    }
}

/// The two adjacency matrices with their degrees and Laplacians.
#[derive(Clone, Debug)]
pub struct SoftGraphPair {
    pub a1: DenseMatrix,
    pub a2: DenseMatrix,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub l1: DenseMatrix,
    pub l2: DenseMatrix,
}

impl SoftGraphPair {
    /// Builds both graphs from the preprocessed matrix.
    pub fn build(x: &DenseMatrix, max_cells: usize) -> Result<Self, GraphError> {
        if x.rows() > max_cells {
            return Err(GraphError::TooManyCells {
                cells: x.rows(),
                limit: max_cells,
            });
        }
        let a1 = build_adjacency_feature(x);
        let a2 = build_adjacency_cosine(x)?;
        let l1 = normalized_laplacian(&a1)?;
        let l2 = normalized_laplacian(&a2)?;
        Ok(SoftGraphPair {
            d1: a1.row_sums(),
            d2: a2.row_sums(),
            a1,
            a2,
            l1,
            l2,
        })
    }

    pub fn n(&self) -> usize {
        self.a1.rows()
    }

    /// `α L1 + (1 − α) L2`.
    pub fn combined_laplacian(&self, alpha: f64) -> DenseMatrix {
        self.l1.zip_map(&self.l2, |a, b| alpha * a + (1.0 - alpha) * b)
    }
}

/// `A1 = X Xᵀ`. Exactly symmetric: the lower triangle is mirrored.
pub fn build_adjacency_feature(x: &DenseMatrix) -> DenseMatrix {
    let mut a = x.gram();
    symmetrize_from_upper(&mut a);
    a
}

fn symmetrize_from_upper(a: &mut DenseMatrix) {
    let n = a.rows();
    for i in 0..n {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
}

/// `A2 = |C| |C|ᵀ` with `C` the pairwise cosine similarity of rows of `x`.
pub fn build_adjacency_cosine(x: &DenseMatrix) -> Result<DenseMatrix, GraphError> {
    let mut unit = x.clone();
    for i in 0..unit.rows() {
        let norm = unit.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(GraphError::ZeroNormRow(i));
        }
        unit.row_mut(i).iter_mut().for_each(|v| *v /= norm);
    }
    let mut cos_abs = unit.gram();
    cos_abs.map_inplace(f64::abs);
    symmetrize_from_upper(&mut cos_abs);
    let mut a2 = cos_abs.gram();
    symmetrize_from_upper(&mut a2);
    Ok(a2)
}

/// `L = I − D^{-1/2} A D^{-1/2}` for a symmetric nonnegative `A`.
pub fn normalized_laplacian(a: &DenseMatrix) -> Result<DenseMatrix, GraphError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(GraphError::NotSquare(a.shape()));
    }
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] < 0.0 {
                return Err(GraphError::NegativeWeight(i, j));
            }
        }
    }
    let deg = a.row_sums();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if d > 0.0 {
                Ok(1.0 / d.sqrt())
            } else {
                Err(GraphError::ZeroDegree(i))
            }
        })
        .collect::<Result<_, _>>()?;
    let mut l = DenseMatrix::from_fn(n, n, |i, j| {
        let off = a[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 - off
        } else {
            -off
        }
    });
    symmetrize_from_upper(&mut l);
    Ok(l)
}

/// Records the cut loss on `g` given a precomputed combined Laplacian node
/// and the embedding width `d`.
pub fn ncut_loss_node(g: &mut Graph, z: NodeId, laplacian: NodeId, d: usize, beta: f64) -> NodeId {
    let lz = g.matmul(laplacian, z);
    let zt = g.transpose(z);
    let quad = g.matmul(zt, lz);
    let cut = g.trace(quad);
    if beta == 0.0 {
        return cut;
    }
    let gram = g.matmul(zt, z);
    let eye = g.constant(DenseMatrix::identity(d));
    let dev = g.sub(gram, eye);
    let ortho = g.frobenius_sq(dev);
    let weighted = g.scale(ortho, beta);
    g.add(cut, weighted)
}

/// Records the cut loss for `z` against `pair`. The embedding width is
/// taken from `z`'s value, so `z` must already be evaluated.
pub fn ncut_loss(g: &mut Graph, z: NodeId, pair: &SoftGraphPair, cfg: &NCutConfig) -> Result<NodeId, GraphError> {
    cfg.validate()?;
    let zv = g.evaluate(z)?;
    if zv.rows() != pair.n() {
        return Err(GraphError::SizeMismatch {
            z: zv.rows(),
            graph: pair.n(),
        });
    }
    let d = zv.cols();
    let l = g.constant(pair.combined_laplacian(cfg.alpha));
    Ok(ncut_loss_node(g, z, l, d, cfg.beta))
}

/// Cut loss on plain matrices.
pub fn ncut_loss_value(z: &DenseMatrix, pair: &SoftGraphPair, cfg: &NCutConfig) -> Result<f64, GraphError> {
    let mut g = Graph::new();
    let zn = g.constant(z.clone());
    let root = ncut_loss(&mut g, zn, pair, cfg)?;
    Ok(g.forward(root)?)
}
