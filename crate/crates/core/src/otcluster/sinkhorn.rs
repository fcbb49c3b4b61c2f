//! Sinkhorn scaling of `Q^λ` to prescribed row and column marginals.

use super::{OtError, Q_FLOOR};
use crate::diffcore::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornConfig {
    /// Sharpness of the transport plan; larger values approach a hard
    /// assignment.
    pub lambda: f64,
    pub max_iters: usize,
    pub marginal_tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            lambda: 50.0,
            max_iters: 500,
            marginal_tol: 1e-6,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<(), OtError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(OtError::BadConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.max_iters == 0 {
            return Err(OtError::BadConfig("max_iters must be at least 1".into()));
        }
        if !(self.marginal_tol > 0.0) {
            return Err(OtError::BadConfig(format!(
                "marginal_tol must be positive, got {}",
                self.marginal_tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SinkhornResult {
    /// `N × C` plan with rows summing to 1 and columns to `N·π`.
    pub plan: DenseMatrix,
    pub converged: bool,
    pub iterations: usize,
    /// Largest absolute marginal error of `plan`.
    pub violation: f64,
}

/// Sharpness of the first continuation stage.
const LAMBDA_START: f64 = 1.0;

/// Scales `Q^λ` so that rows sum to 1 and column `c` sums to `N·π_c`.
///
/// Plain alternating scaling contracts very slowly once `Q^λ` spans many
/// orders of magnitude, so λ is approached by doubling from
/// [`LAMBDA_START`]. Each stage runs the usual `u`/`v` updates on a kernel
/// into which the previous stage's scalings have been absorbed as log
/// potentials, rescaled to the new λ. The fixed point is the same as for a
/// single run at the target λ; only the starting point differs. On
/// non-convergence the final-stage iterate with the smallest violation is
/// returned with `converged = false`.
pub fn sinkhorn(q: &DenseMatrix, pi: &[f64], cfg: &SinkhornConfig) -> Result<SinkhornResult, OtError> {
    cfg.validate()?;
    let (n, c) = q.shape();
    if pi.len() != c {
        return Err(OtError::Shape {
            what: format!("{} proportions for {} clusters", pi.len(), c),
        });
    }
    let pi_sum: f64 = pi.iter().sum();
    if pi.iter().any(|&p| !(p > 0.0)) || (pi_sum - 1.0).abs() > 1e-9 {
        return Err(OtError::BadProportions);
    }
    if n == 0 {
        return Ok(SinkhornResult {
            plan: q.clone(),
            converged: true,
            iterations: 0,
            violation: 0.0,
        });
    }

    let log_q = q.map(|v| v.max(Q_FLOOR).ln());
    let target: Vec<f64> = pi.iter().map(|p| p * n as f64).collect();

    let mut stages = Vec::new();
    let mut lam = cfg.lambda.min(LAMBDA_START);
    while lam < cfg.lambda {
        stages.push(lam);
        lam *= 2.0;
    }
    stages.push(cfg.lambda);

    // Log potentials: the current kernel is exp(λ ln q_ij + a_i + b_j).
    // Starting from the row maxima keeps the first kernel in (0, 1].
    let mut a: Vec<f64> = (0..n)
        .map(|i| -stages[0] * log_q.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut b = vec![0.0; c];
    let mut iterations = 0;
    let mut prev = stages[0];

    for (stage, &lam) in stages.iter().enumerate() {
        let ratio = lam / prev;
        a.iter_mut().for_each(|x| *x *= ratio);
        b.iter_mut().for_each(|x| *x *= ratio);
        prev = lam;
        let k = DenseMatrix::from_fn(n, c, |i, j| (lam * log_q[(i, j)] + a[i] + b[j]).exp());
        if !k.is_finite() {
            return Err(OtError::NonFiniteScaling { iteration: iterations });
        }
        let last = stage + 1 == stages.len();
        let (u, v, violation, used) = scale(&k, &target, cfg, last)?;
        iterations += used;
        if last {
            let mut plan = k;
            for (i, &ui) in u.iter().enumerate() {
                for (p, vj) in plan.row_mut(i).iter_mut().zip(&v) {
                    *p *= ui * vj;
                }
            }
            return Ok(SinkhornResult {
                plan,
                converged: violation <= cfg.marginal_tol,
                iterations,
                violation,
            });
        }
        a.iter_mut().zip(&u).for_each(|(x, ui)| *x += ui.ln());
        b.iter_mut().zip(&v).for_each(|(x, vj)| *x += vj.ln());
    }
    unreachable!("the final stage returns")
}

/// Alternating scaling of `k` for at most `cfg.max_iters` iterations.
/// Returns the scalings, their marginal violation, and the iteration
/// count; with `keep_best`, the best iterate seen rather than the last.
fn scale(
    k: &DenseMatrix,
    target: &[f64],
    cfg: &SinkhornConfig,
    keep_best: bool,
) -> Result<(Vec<f64>, Vec<f64>, f64, usize), OtError> {
    let (n, c) = k.shape();
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; c];
    let mut kv = vec![0.0; n];
    let mut ktu = vec![0.0; c];
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;

    for it in 1..=cfg.max_iters {
        iterations = it;
        mat_vec(k, &v, &mut kv);
        for (ui, &s) in u.iter_mut().zip(&kv) {
            *ui = 1.0 / s;
        }
        mat_t_vec(k, &u, &mut ktu);
        for ((vj, &s), &t) in v.iter_mut().zip(&ktu).zip(target) {
            *vj = t / s;
        }
        if u.iter().chain(&v).any(|x| !x.is_finite() || *x == 0.0) {
            return Err(OtError::NonFiniteScaling { iteration: it });
        }

        // Columns are exact after the v update; rows carry the error, but
        // both are measured so the reported violation is honest.
        mat_vec(k, &v, &mut kv);
        let row_err = u.iter().zip(&kv).map(|(a, b)| (a * b - 1.0).abs()).fold(0.0, f64::max);
        mat_t_vec(k, &u, &mut ktu);
        let col_err = ktu
            .iter()
            .zip(&v)
            .zip(target)
            .map(|((s, vj), t)| (s * vj - t).abs())
            .fold(0.0, f64::max);
        let violation = row_err.max(col_err);

        if !keep_best || best.as_ref().is_none_or(|b| violation < b.0) {
            best = Some((violation, u.clone(), v.clone()));
        }
        if violation <= cfg.marginal_tol {
            break;
        }
    }
    let (violation, u, v) = best.expect("at least one iteration runs");
    Ok((u, v, violation, iterations))
}

fn mat_vec(k: &DenseMatrix, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = k.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn mat_t_vec(k: &DenseMatrix, u: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (i, &ui) in u.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(k.row(i)) {
            *o += a * ui;
        }
    }
}
