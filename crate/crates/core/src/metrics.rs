//! External clustering scores: Hungarian-matched accuracy, NMI, and ARI.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("label vectors differ in length ({truth} vs {pred})")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label vectors are empty")]
    Empty,
}

/// Scores for one predicted labeling against the truth.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub n_cells: usize,
    pub n_clusters_true: usize,
    pub n_clusters_pred: usize,
}

impl MetricsReport {
    pub fn compute(truth: &[usize], pred: &[usize]) -> Result<Self, MetricsError> {
        let table = Contingency::new(truth, pred)?;
        Ok(MetricsReport {
            acc: table.accuracy(),
            nmi: table.nmi(),
            ari: table.ari(),
            n_cells: truth.len(),
            n_clusters_true: table.rows,
            n_clusters_pred: table.cols,
        })
    }
}

pub fn accuracy_hungarian(truth: &[usize], pred: &[usize]) -> Result<f64, MetricsError> {
    Ok(Contingency::new(truth, pred)?.accuracy())
}

pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64, MetricsError> {
    Ok(Contingency::new(truth, pred)?.nmi())
}

pub fn ari(truth: &[usize], pred: &[usize]) -> Result<f64, MetricsError> {
    Ok(Contingency::new(truth, pred)?.ari())
}

/// Counts `n_ij` of cells with truth label `i` and predicted label `j`,
/// after compacting both label sets to `0..k`.
#[derive(Clone, Debug)]
struct Contingency {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
    n: u64,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    for &l in labels {
        let next = map.len();
        map.entry(l).or_insert(next);
    }
    (labels.iter().map(|l| map[l]).collect(), map.len())
}

fn comb2(x: u64) -> i128 {
    let x = x as i128;
    x * (x - 1) / 2
}

impl Contingency {
    fn new(truth: &[usize], pred: &[usize]) -> Result<Self, MetricsError> {
        if truth.len() != pred.len() {
            return Err(MetricsError::LengthMismatch {
                truth: truth.len(),
                pred: pred.len(),
            });
        }
        if truth.is_empty() {
            return Err(MetricsError::Empty);
        }
        let (t, rows) = compact(truth);
        let (p, cols) = compact(pred);
        let mut counts = vec![0u64; rows * cols];
        for (&a, &b) in t.iter().zip(&p) {
            counts[a * cols + b] += 1;
        }
        Ok(Contingency {
            rows,
            cols,
            counts,
            n: truth.len() as u64,
        })
    }

    fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.cols + j]
    }

    fn row_sums(&self) -> Vec<u64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j)).sum())
            .collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// True when the two partitions coincide up to relabeling.
    fn same_partition(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..self.cols).filter(|&j| self.get(i, j) > 0).count() == 1)
            && (0..self.cols).all(|j| (0..self.rows).filter(|&i| self.get(i, j) > 0).count() == 1)
    }

    fn accuracy(&self) -> f64 {
        let k = self.rows.max(self.cols);
        let mut cost = vec![0i64; k * k];
        for i in 0..self.rows {
            for j in 0..self.cols {
                cost[i * k + j] = -(self.get(i, j) as i64);
            }
        }
        let assignment = min_cost_assignment(&cost, k);
        let matched: i64 = assignment.iter().enumerate().map(|(i, &j)| -cost[i * k + j]).sum();
        matched as f64 / self.n as f64
    }

    fn nmi(&self) -> f64 {
        let n = self.n as f64;
        let entropy = |sums: &[u64]| -> f64 {
            sums.iter()
                .filter(|&&s| s > 0)
                .map(|&s| {
                    let p = s as f64 / n;
                    -p * p.ln()
                })
                .sum()
        };
        let a = self.row_sums();
        let b = self.col_sums();
        let (ht, hp) = (entropy(&a), entropy(&b));
        if ht == 0.0 && hp == 0.0 {
            // Both partitions are a single cluster, hence identical.
            return 1.0;
        }
        let mut mi = 0.0;
        for (i, &ai) in a.iter().enumerate() {
            for (j, &bj) in b.iter().enumerate() {
                let nij = self.get(i, j);
                if nij > 0 {
                    let nij = nij as f64;
                    mi += nij / n * (nij * n / (ai as f64 * bj as f64)).ln();
                }
            }
        }
        if mi <= 0.0 {
            return 0.0;
        }
        (mi / ((ht + hp) / 2.0)).clamp(0.0, 1.0)
    }

    /// Evaluated on exact integer pair counts, scaled by `2·C(n,2)` so the
    /// only rounding is the final division.
    fn ari(&self) -> f64 {
        let index: i128 = self.counts.iter().map(|&c| comb2(c)).sum();
        let sa: i128 = self.row_sums().into_iter().map(comb2).sum();
        let sb: i128 = self.col_sums().into_iter().map(comb2).sum();
        let total = comb2(self.n);
        let num = 2 * total * index - 2 * sa * sb;
        let denom = total * (sa + sb) - 2 * sa * sb;
        if denom == 0 {
            return if self.same_partition() { 1.0 } else { 0.0 };
        }
        num as f64 / denom as f64
    }
}

/// Exact minimum-cost perfect matching on a square `k × k` integer cost
/// matrix (row-major) by successive shortest augmenting paths with
/// potentials. Returns the column assigned to each row.
pub fn min_cost_assignment(cost: &[i64], k: usize) -> Vec<usize> {
    assert_eq!(cost.len(), k * k, "cost matrix must be k × k");
    // 1-based working arrays; index 0 is the virtual source column.
    let mut u = vec![0i64; k + 1];
    let mut v = vec![0i64; k + 1];
    let mut owner = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for row in 1..=k {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![i64::MAX; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = i64::MAX;
            let mut col1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = cost[(r - 1) * k + (j - 1)] - u[r] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = col0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        col1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; k];
    for j in 1..=k {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}
