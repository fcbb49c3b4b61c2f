//! Seeded k-means++ initialization followed by Lloyd iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::OtError;
use crate::diffcore::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansConfig {
    pub max_iters: usize,
    /// Lloyd stops once no center moves farther than this.
    pub tol: f64,
    /// Independent restarts; the lowest final inertia wins.
    pub n_init: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            max_iters: 300,
            tol: 1e-8,
            n_init: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub centers: DenseMatrix,
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
}

/// Clusters the rows of `z` into `k` groups. Deterministic given `seed`.
pub fn kmeans(z: &DenseMatrix, k: usize, seed: u64, cfg: &KMeansConfig) -> Result<KMeansResult, OtError> {
    if k == 0 {
        return Err(OtError::NoClusters);
    }
    if z.rows() < k {
        return Err(OtError::TooFewPoints {
            points: z.rows(),
            clusters: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..cfg.n_init.max(1) {
        let centers = plus_plus(z, k, &mut rng);
        let run = lloyd(z, centers, cfg);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(z: &DenseMatrix, k: usize, rng: &mut impl Rng) -> DenseMatrix {
    let n = z.rows();
    let mut centers = DenseMatrix::zeros(k, z.cols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(z.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(z.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            // Guard against rounding landing on a zero-weight tail.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(z.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(z.row(i), centers.row(c)));
        }
    }
    centers
}

fn assign(z: &DenseMatrix, centers: &DenseMatrix, labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let mut inertia = 0.0;
    for i in 0..z.rows() {
        let mut best = (0, f64::INFINITY);
        for j in 0..centers.rows() {
            let d = sq_dist(z.row(i), centers.row(j));
            if d < best.1 {
                best = (j, d);
            }
        }
        labels[i] = best.0;
        dists[i] = best.1;
        inertia += best.1;
    }
    inertia
}

fn lloyd(z: &DenseMatrix, mut centers: DenseMatrix, cfg: &KMeansConfig) -> KMeansResult {
    let (n, d) = z.shape();
    let k = centers.rows();
    let mut labels = vec![0; n];
    let mut dists = vec![0.0; n];
    let mut history = Vec::new();
    let mut inertia = assign(z, &centers, &mut labels, &mut dists);
    history.push(inertia);

    for _ in 0..cfg.max_iters {
        let mut sums = DenseMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums.row_mut(l).iter_mut().zip(z.row(i)) {
                *s += v;
            }
        }
        let mut updated = DenseMatrix::zeros(k, d);
        for (j, &cnt) in counts.iter().enumerate() {
            if cnt > 0 {
                let inv = 1.0 / cnt as f64;
                for (u, s) in updated.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *u = s * inv;
                }
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Hand the empty cluster the point worst served by its
                // current center, and take it out of its old cluster.
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n >= k guarantees a donor cluster");
                let old = labels[far];
                counts[old] -= 1;
                counts[j] = 1;
                labels[far] = j;
                dists[far] = 0.0;
                updated.row_mut(j).copy_from_slice(z.row(far));
                let inv = 1.0 / counts[old] as f64;
                let mut mean = vec![0.0; d];
                for i in (0..n).filter(|&i| labels[i] == old) {
                    for (m, v) in mean.iter_mut().zip(z.row(i)) {
                        *m += v;
                    }
                }
                for (u, m) in updated.row_mut(old).iter_mut().zip(&mean) {
                    *u = m * inv;
                }
            }
        }
        let shift = (0..k)
            .map(|j| sq_dist(updated.row(j), centers.row(j)).sqrt())
            .fold(0.0, f64::max);
        centers = updated;
        inertia = assign(z, &centers, &mut labels, &mut dists);
        history.push(inertia);
        if shift < cfg.tol {
            break;
        }
    }
    KMeansResult {
        centers,
        labels,
        inertia,
        inertia_history: history,
    }
}
