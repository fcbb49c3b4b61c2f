//! Soft cluster assignment, balanced transport targets, and the alignment
//! loss between them.
//!
//! `Q` comes from a heavy-tailed kernel on embedding-to-center distances,
//! `q_ij ∝ (1 + ‖z_i − c_j‖²)^{-1}`. The target `P` is the entropic
//! transport plan between the cells and cluster proportions `π`, obtained
//! by Sinkhorn scaling of `Q^λ`. Training pulls `Q` toward `P` through
//! `KL(P ‖ Q)`.

mod kmeans;
mod sinkhorn;

pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use sinkhorn::{sinkhorn, SinkhornConfig, SinkhornResult};

use thiserror::Error;

use crate::diffcore::{DenseMatrix, DiffError, Graph, NodeId};

/// Floor applied to `Q` before logs and powers.
pub const Q_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OtError {
    #[error("need at least 2 clusters for soft assignment, got {0}")]
    TooFewClusters(usize),
    #[error("need at least 1 cluster, got 0")]
    NoClusters,
    #[error("{points} points cannot be split into {clusters} clusters")]
    TooFewPoints { points: usize, clusters: usize },
    #[error("embedding width {z} does not match center width {centers}")]
    WidthMismatch { z: usize, centers: usize },
    #[error("shape mismatch: {what}")]
    Shape { what: String },
    #[error("negative transport mass {value} at ({row}, {col})")]
    NegativeMass { row: usize, col: usize, value: f64 },
    #[error("proportions must be positive and sum to 1")]
    BadProportions,
    #[error(
        "sinkhorn scaling became non-finite at iteration {iteration}; lambda may be too large for the spread of Q"
    )]
    NonFiniteScaling { iteration: usize },
    #[error("invalid sinkhorn configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Records `Q` for embedding node `z` (`N × d`) and center node `centers`
/// (`C × d`). Both nodes are evaluated to validate shapes.
pub fn soft_assign(g: &mut Graph, z: NodeId, centers: NodeId) -> Result<NodeId, OtError> {
    let (n, dz) = g.evaluate(z)?.shape();
    let (c, dc) = g.evaluate(centers)?.shape();
    if c < 2 {
        return Err(OtError::TooFewClusters(c));
    }
    if dz != dc {
        return Err(OtError::WidthMismatch { z: dz, centers: dc });
    }
    let zz = g.mul(z, z);
    let z_norm = g.row_sum(zz);
    let cc = g.mul(centers, centers);
    let c_norm = g.row_sum(cc);
    let ones_c = g.constant(DenseMatrix::ones(1, c));
    let ones_n = g.constant(DenseMatrix::ones(n, 1));
    let zn_b = g.matmul(z_norm, ones_c);
    let c_norm_t = g.transpose(c_norm);
    let cn_b = g.matmul(ones_n, c_norm_t);
    let ct = g.transpose(centers);
    let cross = g.matmul(z, ct);
    let cross2 = g.scale(cross, -2.0);
    let partial = g.add(zn_b, cn_b);
    let dist = g.add(partial, cross2);
    // Rounding can leave tiny negative distances; keep the kernel bounded.
    let dist = g.clamp(dist, 0.0, f64::MAX);
    let shifted = g.offset(dist, 1.0);
    let kernel = g.pow(shifted, -1.0);
    let norm = g.row_sum(kernel);
    let inv = g.pow(norm, -1.0);
    Ok(g.scale_rows(kernel, inv))
}

/// `Q` computed directly on matrices.
pub fn soft_assign_values(z: &DenseMatrix, centers: &DenseMatrix) -> Result<DenseMatrix, OtError> {
    if centers.rows() < 2 {
        return Err(OtError::TooFewClusters(centers.rows()));
    }
    if z.cols() != centers.cols() {
        return Err(OtError::WidthMismatch {
            z: z.cols(),
            centers: centers.cols(),
        });
    }
    let mut q = DenseMatrix::zeros(z.rows(), centers.rows());
    for i in 0..z.rows() {
        let zi = z.row(i);
        let row = q.row_mut(i);
        for (j, r) in row.iter_mut().enumerate() {
            let d2: f64 = zi.iter().zip(centers.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            *r = 1.0 / (1.0 + d2);
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(q)
}

/// Index of the largest entry in each row; ties go to the lowest index.
pub fn argmax_rows(m: &DenseMatrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let mut best = 0;
            for (j, &v) in m.row(i).iter().enumerate() {
                if v > m.row(i)[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Cluster proportions from hard argmax counts, floored at `1/(10C)` and
/// renormalized so no cluster is starved.
pub fn estimate_proportions(q: &DenseMatrix) -> Vec<f64> {
    let c = q.cols();
    if c == 0 {
        return Vec::new();
    }
    let mut counts = vec![0.0; c];
    for k in argmax_rows(q) {
        counts[k] += 1.0;
    }
    let n = q.rows().max(1) as f64;
    let floor = 1.0 / (10.0 * c as f64);
    let floored: Vec<f64> = counts.iter().map(|&k| (k / n).max(floor)).collect();
    let total: f64 = floored.iter().sum();
    floored.into_iter().map(|p| p / total).collect()
}

fn check_target(p: &DenseMatrix) -> Result<(), OtError> {
    for i in 0..p.rows() {
        for (j, &v) in p.row(i).iter().enumerate() {
            if v < 0.0 || v.is_nan() {
                return Err(OtError::NegativeMass {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

fn entropy_term(p: &DenseMatrix) -> f64 {
    p.as_slice().iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum()
}

/// Records `KL(P ‖ Q) / N` with `P` held constant. `Q` is floored at
/// [`Q_FLOOR`] before the log.
pub fn kl_loss(g: &mut Graph, p: &DenseMatrix, q: NodeId) -> Result<NodeId, OtError> {
    check_target(p)?;
    let shape = g.evaluate(q)?.shape();
    if shape != p.shape() {
        return Err(OtError::Shape {
            what: format!("target {:?} vs assignment {:?}", p.shape(), shape),
        });
    }
    let n = p.rows().max(1) as f64;
    let pn = g.constant(p.clone());
    let floored = g.clamp(q, Q_FLOOR, f64::MAX);
    let log_q = g.log(floored);
    let cross = g.mul(pn, log_q);
    let total = g.sum(cross);
    let scaled = g.scale(total, -1.0 / n);
    Ok(g.offset(scaled, entropy_term(p) / n))
}

/// `KL(P ‖ Q) / N` on plain matrices.
pub fn kl_loss_value(p: &DenseMatrix, q: &DenseMatrix) -> Result<f64, OtError> {
    check_target(p)?;
    if p.shape() != q.shape() {
        return Err(OtError::Shape {
            what: format!("target {:?} vs assignment {:?}", p.shape(), q.shape()),
        });
    }
    let n = p.rows().max(1) as f64;
    let kl: f64 = p
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .filter(|(&pv, _)| pv > 0.0)
        .map(|(&pv, &qv)| pv * (pv.ln() - qv.max(Q_FLOOR).ln()))
        .sum();
    Ok(kl / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q_of(z: &[&[f64]], c: &[&[f64]]) -> DenseMatrix {
        soft_assign_values(&DenseMatrix::from_rows(z), &DenseMatrix::from_rows(c)).unwrap()
    }

    #[test]
    fn coincident_center_dominates() {
        let q = q_of(&[&[0.0]], &[&[0.0], &[1000.0]]);
        assert!((q[(0, 0)] + q[(0, 1)] - 1.0).abs() < 1e-15);
        assert!(q[(0, 1)] < 2e-6 && q[(0, 1)] > 5e-7);
    }

    #[test]
    fn symmetric_point_splits_evenly() {
        let q = q_of(&[&[0.0]], &[&[-1.0], &[1.0]]);
        assert_eq!(q.row(0), &[0.5, 0.5]);
        let q = q_of(&[&[0.0, 0.0]], &[&[3.0, 4.0], &[-5.0, 0.0]]);
        assert!((q[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn graph_and_direct_agree() {
        let z = DenseMatrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let c = DenseMatrix::from_fn(4, 3, |i, j| ((i + 2 * j) as f64 * 0.91).cos());
        let mut g = Graph::new();
        let zn = g.constant(z.clone());
        let cn = g.constant(c.clone());
        let q = soft_assign(&mut g, zn, cn).unwrap();
        let got = g.evaluate(q).unwrap().clone();
        assert!(got.max_abs_diff(&soft_assign_values(&z, &c).unwrap()) < 1e-14);
    }

    #[test]
    fn single_cluster_rejected() {
        let z = DenseMatrix::zeros(3, 2);
        let c = DenseMatrix::zeros(1, 2);
        assert!(matches!(soft_assign_values(&z, &c), Err(OtError::TooFewClusters(1))));
        let mut g = Graph::new();
        let zn = g.constant(z);
        let cn = g.constant(c);
        assert!(matches!(soft_assign(&mut g, zn, cn), Err(OtError::TooFewClusters(1))));
    }

    #[test]
    fn width_mismatch_rejected() {
        let z = DenseMatrix::zeros(3, 2);
        let c = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            soft_assign_values(&z, &c),
            Err(OtError::WidthMismatch { z: 2, centers: 3 })
        ));
    }

    #[test]
    fn proportions_from_counts() {
        let q = DenseMatrix::from_rows(&[[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.1, 0.9]]);
        assert_eq!(estimate_proportions(&q), vec![0.5, 0.5]);
    }

    #[test]
    fn proportions_floor_starved_cluster() {
        let q = DenseMatrix::from_rows(&[[0.9, 0.1], [0.8, 0.2], [0.6, 0.4]]);
        let p = estimate_proportions(&q);
        assert!((p[0] - 20.0 / 21.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let q = DenseMatrix::from_rows(&[[0.5, 0.5]]);
        assert_eq!(argmax_rows(&q), vec![0]);
        let p = estimate_proportions(&q);
        assert!(p[0] > p[1]);
    }

    #[test]
    fn kl_examples() {
        let q = DenseMatrix::from_rows(&[[0.3, 0.7], [0.6, 0.4]]);
        assert!(kl_loss_value(&q, &q).unwrap().abs() < 1e-15);
        let p = DenseMatrix::from_rows(&[[1.0, 0.0]]);
        let q = DenseMatrix::from_rows(&[[0.5, 0.5]]);
        assert!((kl_loss_value(&p, &q).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);

        let mut g = Graph::new();
        let qn = g.constant(q);
        let root = kl_loss(&mut g, &p, qn).unwrap();
        assert!((g.forward(root).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn kl_rejects_negative_target() {
        let p = DenseMatrix::from_rows(&[[1.1, -0.1]]);
        let q = DenseMatrix::from_rows(&[[0.5, 0.5]]);
        assert!(matches!(
            kl_loss_value(&p, &q),
            Err(OtError::NegativeMass { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn kl_floors_zero_assignment() {
        let p = DenseMatrix::from_rows(&[[0.5, 0.5]]);
        let q = DenseMatrix::from_rows(&[[1.0, 0.0]]);
        let v = kl_loss_value(&p, &q).unwrap();
        assert!(v.is_finite() && v > 10.0);
    }
}
