//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. Set
//! `SOFTCUT_ACCEPTANCE=1,4,6` to run a subset. The end-to-end criteria
//! train the full model many times and take tens of minutes in total.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use itertools::Itertools;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use softcut::diffcore::{finite_difference_check, DenseMatrix, Graph, NodeId};
use softcut::metrics::{accuracy_hungarian, ari};
use softcut::otcluster::{kl_loss, sinkhorn, soft_assign, SinkhornConfig};
use softcut::softgraph::{ncut_loss, normalized_laplacian, NCutConfig, SoftGraphPair};
use softcut::zinb::{nb_log_pmf, zinb_nll, ZinbNodes};
use softcut_cli::{cmd_cluster, cmd_simulate, RunConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Magnitudes in `[lo, hi)` with random signs.
fn signed(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| {
        let v = rng.random_range(lo..hi);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

fn row_stochastic(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64) -> DenseMatrix {
    let m = uniform(rng, rows, cols, lo, 1.0);
    let sums = m.row_sums();
    DenseMatrix::from_fn(rows, cols, |i, j| m[(i, j)] / sums[i])
}

// ---------------------------------------------------------------------------
// 1. Gradient suite

type Build = Box<dyn Fn(&mut Graph, &[NodeId]) -> NodeId>;

struct Instance {
    inputs: Vec<DenseMatrix>,
    build: Build,
}

/// `Σ W ⊙ node` for a fixed positive weight matrix, so every output entry
/// contributes to the gradient.
fn weighted(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> impl Fn(&mut Graph, NodeId) -> NodeId {
    let w = uniform(rng, rows, cols, 0.5, 1.5);
    move |g: &mut Graph, node: NodeId| {
        let wn = g.constant(w.clone());
        let p = g.mul(node, wn);
        g.sum(p)
    }
}

fn unary(
    rng: &mut ChaCha8Rng,
    r: usize,
    c: usize,
    input: DenseMatrix,
    op: impl Fn(&mut Graph, NodeId) -> NodeId + 'static,
) -> Instance {
    let read = weighted(rng, r, c);
    Instance {
        inputs: vec![input],
        build: Box::new(move |g, ids| {
            let y = op(g, ids[0]);
            read(g, y)
        }),
    }
}

fn binary(
    rng: &mut ChaCha8Rng,
    r: usize,
    c: usize,
    a: DenseMatrix,
    b: DenseMatrix,
    op: impl Fn(&mut Graph, NodeId, NodeId) -> NodeId + 'static,
) -> Instance {
    let read = weighted(rng, r, c);
    Instance {
        inputs: vec![a, b],
        build: Box::new(move |g, ids| {
            let y = op(g, ids[0], ids[1]);
            read(g, y)
        }),
    }
}

fn kernel_instance(kernel: &str, rng: &mut ChaCha8Rng) -> Instance {
    let r = rng.random_range(1..5);
    let c = rng.random_range(1..5);
    match kernel {
        "matmul" => {
            let k = rng.random_range(1..5);
            let a = uniform(rng, r, k, 0.5, 1.5);
            let b = uniform(rng, k, c, 0.5, 1.5);
            binary(rng, r, c, a, b, |g, a, b| g.matmul(a, b))
        }
        "transpose" => {
            let a = signed(rng, r, c, 0.1, 2.0);
            unary(rng, c, r, a, |g, a| g.transpose(a))
        }
        "add" => {
            let (a, b) = (signed(rng, r, c, 0.1, 2.0), signed(rng, r, c, 0.1, 2.0));
            binary(rng, r, c, a, b, |g, a, b| g.add(a, b))
        }
        "sub" => {
            let (a, b) = (signed(rng, r, c, 0.1, 2.0), signed(rng, r, c, 0.1, 2.0));
            binary(rng, r, c, a, b, |g, a, b| g.sub(a, b))
        }
        "mul" => {
            let (a, b) = (signed(rng, r, c, 0.5, 1.5), signed(rng, r, c, 0.5, 1.5));
            binary(rng, r, c, a, b, |g, a, b| g.mul(a, b))
        }
        "scale" => {
            let s = rng.random_range(0.5..3.0);
            let a = signed(rng, r, c, 0.1, 2.0);
            unary(rng, r, c, a, move |g, a| g.scale(a, s))
        }
        "offset" => {
            let s = rng.random_range(-2.0..2.0);
            let a = signed(rng, r, c, 0.1, 2.0);
            unary(rng, r, c, a, move |g, a| g.offset(a, s))
        }
        "exp" => {
            let a = uniform(rng, r, c, -1.0, 1.0);
            unary(rng, r, c, a, |g, a| g.exp(a))
        }
        "log" => {
            let a = uniform(rng, r, c, 0.5, 3.0);
            unary(rng, r, c, a, |g, a| g.log(a))
        }
        "sigmoid" => {
            let a = uniform(rng, r, c, -2.0, 2.0);
            unary(rng, r, c, a, |g, a| g.sigmoid(a))
        }
        // Digamma vanishes near 1.46, so stay well above it.
        "ln_gamma" => {
            let a = uniform(rng, r, c, 2.0, 6.0);
            unary(rng, r, c, a, |g, a| g.ln_gamma(a))
        }
        "row_sum" => {
            let a = signed(rng, r, c, 0.1, 2.0);
            unary(rng, r, 1, a, |g, a| g.row_sum(a))
        }
        "col_sum" => {
            let a = signed(rng, r, c, 0.1, 2.0);
            unary(rng, 1, c, a, |g, a| g.col_sum(a))
        }
        "sum" => {
            let a = signed(rng, r, c, 0.1, 2.0);
            unary(rng, 1, 1, a, |g, a| g.sum(a))
        }
        "trace" => {
            let a = signed(rng, r, r, 0.1, 2.0);
            let w = uniform(rng, r, r, 0.5, 1.5);
            Instance {
                inputs: vec![a],
                build: Box::new(move |g, ids| {
                    let wn = g.constant(w.clone());
                    let p = g.mul(ids[0], wn);
                    g.trace(p)
                }),
            }
        }
        "frobenius_sq" => {
            let a = signed(rng, r, c, 0.5, 1.5);
            unary(rng, 1, 1, a, |g, a| g.frobenius_sq(a))
        }
        "pow" => {
            let p = [-1.0, 0.5, 2.0, 3.0][rng.random_range(0..4)];
            let a = uniform(rng, r, c, 0.5, 2.0);
            unary(rng, r, c, a, move |g, a| g.pow(a, p))
        }
        "abs" => {
            let a = signed(rng, r, c, 0.5, 1.5);
            unary(rng, r, c, a, |g, a| g.abs(a))
        }
        "scale_rows" => {
            let m = signed(rng, r, c, 0.5, 1.5);
            let v = signed(rng, r, 1, 0.5, 1.5);
            binary(rng, r, c, m, v, |g, m, v| g.scale_rows(m, v))
        }
        // Entries sit inside, below, and above the bounds, never within
        // the probe step of a kink.
        "clamp" => {
            let a = DenseMatrix::from_fn(r, c, |_, _| match rng.random_range(0..3) {
                0 => rng.random_range(-2.0..-1.1),
                1 => rng.random_range(-0.9..0.9),
                _ => rng.random_range(1.1..2.0),
            });
            unary(rng, r, c, a, |g, a| g.clamp(a, -1.0, 1.0))
        }
        other => panic!("no instance generator for kernel {other}"),
    }
}

fn zinb_instance(rng: &mut ChaCha8Rng) -> Instance {
    let (r, c) = (rng.random_range(2..5), rng.random_range(2..5));
    let x = DenseMatrix::from_fn(r, c, |_, _| rng.random_range(0..8) as f64);
    let pi = uniform(rng, r, c, 0.05, 0.95);
    // A mean equal to an integer count zeroes the mean derivative there.
    let mu = DenseMatrix::from_fn(r, c, |_, _| rng.random_range(0..6) as f64 + rng.random_range(0.2..0.8));
    let theta = uniform(rng, r, c, 0.3, 5.0);
    Instance {
        inputs: vec![pi, mu, theta],
        build: Box::new(move |g, ids| {
            zinb_nll(
                g,
                &x,
                ZinbNodes {
                    pi: ids[0],
                    mu: ids[1],
                    theta: ids[2],
                },
            )
        }),
    }
}

fn ncut_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(3..9);
    let d = rng.random_range(1..4);
    let genes = rng.random_range(3..7);
    let x = uniform(rng, n, genes, 0.1, 3.0);
    let pair = SoftGraphPair::build(&x, 1000).expect("positive data gives a valid graph");
    let cfg = NCutConfig {
        alpha: rng.random_range(0.0..1.0),
        beta: 15.0,
    };
    let z = uniform(rng, n, d, -1.0, 1.0);
    Instance {
        inputs: vec![z],
        build: Box::new(move |g, ids| ncut_loss(g, ids[0], &pair, &cfg).expect("shapes agree")),
    }
}

fn kl_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(3..10);
    let k = rng.random_range(2..5);
    let d = rng.random_range(1..4);
    let z = uniform(rng, n, d, -1.0, 1.0);
    let centers = uniform(rng, k, d, -1.0, 1.0);
    let p = row_stochastic(rng, n, k, 0.05);
    Instance {
        inputs: vec![z, centers],
        build: Box::new(move |g, ids| {
            let q = soft_assign(g, ids[0], ids[1]).expect("shapes agree");
            kl_loss(g, &p, q).expect("valid target")
        }),
    }
}

fn criterion_gradients() -> Result<Outcome> {
    const INSTANCES: usize = 50;
    const EPS: f64 = 1e-6;
    let kernels = [
        "matmul",
        "transpose",
        "add",
        "sub",
        "mul",
        "scale",
        "offset",
        "exp",
        "log",
        "sigmoid",
        "ln_gamma",
        "row_sum",
        "col_sum",
        "sum",
        "trace",
        "frobenius_sq",
        "pow",
        "abs",
        "scale_rows",
        "clamp",
    ];
    type Sampler = fn(&mut ChaCha8Rng) -> Instance;
    let composites: [(&str, Sampler); 3] = [
        ("zinb_nll", zinb_instance),
        ("ncut_loss", ncut_instance),
        ("kl_loss", kl_instance),
    ];

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = (0.0f64, String::new());
    let mut checks = 0;
    let mut run = |name: &str, inst: Instance| -> Result<()> {
        for wrt in 0..inst.inputs.len() {
            let err = finite_difference_check(&inst.build, &inst.inputs, wrt, EPS)
                .with_context(|| format!("{name}, input {wrt}"))?;
            checks += 1;
            if err > worst.0 {
                worst = (err, name.to_string());
            }
        }
        Ok(())
    };
    for k in kernels {
        for _ in 0..INSTANCES {
            run(k, kernel_instance(k, &mut rng))?;
        }
    }
    for (name, make) in composites {
        for _ in 0..INSTANCES {
            run(name, make(&mut rng))?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst.0 <= 1e-5 && secs < 120.0,
        format!(
            "{} kernels + 3 losses x {INSTANCES} instances, {checks} checks, max rel err {:.2e} ({}), {secs:.1}s",
            kernels.len(),
            worst.0,
            worst.1
        ),
    )
}

// ---------------------------------------------------------------------------
// 2-3. Sinkhorn

fn criterion_sinkhorn_marginals() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cfg = SinkhornConfig::default();
    let (mut converged, mut worst_row, mut worst_col) = (0, 0.0f64, 0.0f64);
    const CASES: usize = 100;
    for _ in 0..CASES {
        let n = rng.random_range(2..=200);
        let c = rng.random_range(2..=10);
        let q = row_stochastic(&mut rng, n, c, 0.05);
        let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        let pi: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let res = sinkhorn(&q, &pi, &cfg)?;
        if !res.converged {
            continue;
        }
        converged += 1;
        for s in res.plan.row_sums() {
            worst_row = worst_row.max((s - 1.0).abs());
        }
        for (s, p) in res.plan.col_sums().iter().zip(&pi) {
            worst_col = worst_col.max((s - n as f64 * p).abs());
        }
    }
    outcome(
        converged == CASES && worst_row <= 1e-6 && worst_col <= 1e-6,
        format!("{converged}/{CASES} converged, max |P1-1| {worst_row:.2e}, max |P'1-N pi| {worst_col:.2e}"),
    )
}

fn criterion_sinkhorn_limit() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let cfg = SinkhornConfig {
        lambda: 200.0,
        ..SinkhornConfig::default()
    };
    const PER_SIZE: usize = 50;
    // The limit is only sharp when the best permutation beats the runner-up
    // by a clear gap Δ in summed log Q: for N = 2 the plan's off entries
    // are 1/(1 + e^{λΔ/2}). Instances with λΔ/2 < 10 are redrawn.
    const MARGIN: f64 = 0.1;
    let (mut cases, mut redrawn, mut worst) = (0, 0, 0.0f64);
    for n in 2..=4usize {
        let pi = vec![1.0 / n as f64; n];
        let mut done = 0;
        while done < PER_SIZE {
            let q = row_stochastic(&mut rng, n, n, 0.1);
            let mut scored: Vec<(f64, Vec<usize>)> = (0..n)
                .permutations(n)
                .map(|p| ((0..n).map(|i| q[(i, p[i])].ln()).sum(), p))
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            if scored[0].0 - scored[1].0 < MARGIN {
                redrawn += 1;
                continue;
            }
            let best = &scored[0].1;
            let res = sinkhorn(&q, &pi, &cfg)?;
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| best[i] != j)
                .map(|(i, j)| res.plan[(i, j)])
                .sum();
            worst = worst.max(off);
            done += 1;
            cases += 1;
        }
    }
    outcome(
        worst <= 1e-2,
        format!("{cases} instances (N=C in 2..4, {redrawn} near-ties redrawn), max off-permutation mass {worst:.2e}"),
    )
}

// ---------------------------------------------------------------------------
// 4. Laplacian spectrum

fn connected(a: &DenseMatrix) -> bool {
    let n = a.rows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if a[(i, j)] > 0.0 && !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn criterion_laplacian() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut lo, mut hi, mut worst_min, mut n_connected) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 0);
    let mut pass = true;
    const CASES: usize = 50;
    for case in 0..CASES {
        let n = rng.random_range(2..=20);
        // Alternate dense graphs with sparse ones that may fall apart into
        // several components; every node keeps at least one edge.
        let density = if case % 2 == 0 { 1.0 } else { 0.15 };
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                if rng.random_bool(density) {
                    let w = rng.random_range(0.0..1.0);
                    a[(i, j)] = w;
                    a[(j, i)] = w;
                }
            }
            if a.row(i).iter().all(|&v| v == 0.0) {
                let j = (i + 1) % n;
                let w = rng.random_range(0.1..1.0);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
        let l = normalized_laplacian(&a)?;
        let ev = DMatrix::from_row_slice(n, n, l.as_slice())
            .symmetric_eigen()
            .eigenvalues;
        let (min, max) = ev
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        lo = lo.min(min);
        hi = hi.max(max);
        pass &= min >= -1e-8 && max <= 2.0 + 1e-8;
        if connected(&a) {
            n_connected += 1;
            worst_min = worst_min.max(min);
            pass &= min <= 1e-8;
        }
    }
    outcome(
        pass,
        format!(
            "{CASES} graphs, eigenvalues in [{lo:.2e}, {hi:.6}], {n_connected} connected with max smallest eigenvalue {worst_min:.2e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. ZINB closed form

/// NB log-pmf through the rising factorial `Γ(x+θ)/Γ(θ) = θ(θ+1)…(θ+x−1)`.
fn oracle_nb_log_pmf(x: u32, mu: f64, theta: f64) -> f64 {
    let rising: f64 = (0..x).map(|k| (theta + k as f64).ln()).sum();
    let log_fact: f64 = (1..=x).map(|k| (k as f64).ln()).sum();
    rising - log_fact + theta * (theta / (theta + mu)).ln() + x as f64 * (mu / (theta + mu)).ln()
}

fn criterion_zinb() -> Result<Outcome> {
    let one = |v: f64| DenseMatrix::from_rows(&[[v]]);
    let mut worst_nll = 0.0f64;
    let mut points = 0;
    for x in [0u32, 1, 5] {
        for pi in [0.0, 0.5, 0.9] {
            for mu in [0.5, 2.0] {
                for theta in [0.5, 2.0] {
                    let mut g = Graph::new();
                    let heads = ZinbNodes {
                        pi: g.constant(one(pi)),
                        mu: g.constant(one(mu)),
                        theta: g.constant(one(theta)),
                    };
                    let root = zinb_nll(&mut g, &one(x as f64), heads);
                    let got = g.forward(root)?;
                    let zero = if x == 0 { pi } else { 0.0 };
                    let want = -(zero + (1.0 - pi) * oracle_nb_log_pmf(x, mu, theta).exp()).ln();
                    worst_nll = worst_nll.max((got - want).abs());
                    points += 1;
                }
            }
        }
    }
    let mut worst_sum = 0.0f64;
    for mu in [0.5, 2.0] {
        for theta in [0.5, 2.0] {
            let total: f64 = (0..=10_000).map(|x| nb_log_pmf(x as f64, mu, theta).exp()).sum();
            worst_sum = worst_sum.max((total - 1.0).abs());
        }
    }
    outcome(
        worst_nll <= 1e-10 && worst_sum <= 1e-8,
        format!("{points} grid points, max |nll - closed form| {worst_nll:.2e}; max |sum pmf - 1| {worst_sum:.2e}"),
    )
}

// ---------------------------------------------------------------------------
// 6. Metrics

fn brute_force_accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    let k = truth.iter().chain(pred).max().map_or(1, |m| m + 1);
    let best = (0..k)
        .permutations(k)
        .map(|p| truth.iter().zip(pred).filter(|&(&t, &q)| p[q] == t).count())
        .max()
        .unwrap_or(0);
    best as f64 / truth.len() as f64
}

/// ARI by explicit enumeration of all cell pairs, kept in integers until
/// the final division.
fn pair_counting_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b) = (0i128, 0i128, 0i128);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            both += (sa && sb) as i128;
            in_a += sa as i128;
            in_b += sb as i128;
        }
    }
    let pairs = (n * (n - 1) / 2) as i128;
    // (both − E) / (max − E) with E = in_a·in_b/pairs, scaled by 2·pairs.
    let num = 2 * pairs * both - 2 * in_a * in_b;
    let den = pairs * (in_a + in_b) - 2 * in_a * in_b;
    num as f64 / den as f64
}

fn criterion_metrics() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut mismatches = 0;
    const CASES: usize = 200;
    for _ in 0..CASES {
        let n = rng.random_range(1..=40);
        let k = rng.random_range(1..=6);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        if accuracy_hungarian(&truth, &pred)? != brute_force_accuracy(&truth, &pred) {
            mismatches += 1;
        }
    }
    let (t, p) = ([0, 0, 1, 1], [0, 1, 0, 1]);
    let got = ari(&t, &p)?;
    let oracle = pair_counting_ari(&t, &p);
    outcome(
        mismatches == 0 && got == oracle && got == -0.5,
        format!("{mismatches}/{CASES} accuracy mismatches vs brute force; ari(0011, 0101) = {got} (pair-count oracle {oracle})"),
    )
}

// ---------------------------------------------------------------------------
// 7-10. End to end

struct Run {
    ari: f64,
    acc: f64,
    labels: Vec<u8>,
    secs: f64,
}

fn simulate(dir: &Path, cells: usize, genes: usize, clusters: usize, dropout: f64, seed: u64) -> Result<()> {
    let mut cfg = RunConfig::default();
    cfg.simulate.cells = cells;
    cfg.simulate.genes = genes;
    cfg.simulate.clusters = clusters;
    cfg.simulate.balanced = true;
    cfg.simulate.dropout = dropout;
    cfg.simulate.de_log_fold = 1.5;
    cfg.simulate.seed = seed;
    cfg.data.out = dir.to_path_buf();
    cmd_simulate(&cfg)?;
    Ok(())
}

fn cluster(data: &Path, out: &Path, clusters: usize, seed: u64, edit: impl FnOnce(&mut RunConfig)) -> Result<Run> {
    let mut cfg = RunConfig::default();
    cfg.data.input = Some(data.join("matrix.csv"));
    cfg.data.labels = Some(data.join("labels.csv"));
    cfg.data.out = out.to_path_buf();
    cfg.train.clusters = Some(clusters);
    cfg.train.seed = seed;
    cfg.train.deterministic = true;
    edit(&mut cfg);
    let start = Instant::now();
    let res = cmd_cluster(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let m = res.metrics.context("truth labels were supplied")?;
    Ok(Run {
        ari: m.ari,
        acc: m.acc,
        labels: fs::read(out.join("labels.csv"))?,
        secs,
    })
}

/// The easy benchmark shared by criteria 7, 9, and 10.
struct Easy {
    dir: tempfile::TempDir,
    first: Option<Run>,
}

impl Easy {
    fn new() -> Result<Self> {
        let dir = tempfile::tempdir()?;
        simulate(&dir.path().join("data"), 600, 500, 4, 0.05, 1)?;
        Ok(Easy { dir, first: None })
    }

    fn data(&self) -> std::path::PathBuf {
        self.dir.path().join("data")
    }

    /// Default hyperparameters, training seed 0; computed once.
    fn default_run(&mut self) -> Result<&Run> {
        if self.first.is_none() {
            let run = cluster(&self.data(), &self.dir.path().join("run-a"), 4, 0, |_| {})?;
            self.first = Some(run);
        }
        Ok(self.first.as_ref().expect("set above"))
    }
}

fn easy(slot: &mut Option<Easy>) -> Result<&mut Easy> {
    if slot.is_none() {
        *slot = Some(Easy::new()?);
    }
    Ok(slot.as_mut().expect("set above"))
}

fn criterion_easy(easy: &mut Easy) -> Result<Outcome> {
    let r = easy.default_run()?;
    outcome(
        r.ari >= 0.90 && r.acc >= 0.90 && r.secs < 600.0,
        format!("ARI {:.4}, ACC {:.4}, {:.1}s", r.ari, r.acc, r.secs),
    )
}

fn criterion_robustness() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let mut means = Vec::new();
    let mut detail = Vec::new();
    for dropout in [0.05, 0.15, 0.25] {
        let mut aris = Vec::new();
        for seed in 1..=3u64 {
            let data = dir.path().join(format!("d{dropout}-{seed}"));
            simulate(&data, 1000, 800, 6, dropout, seed)?;
            let r = cluster(&data, &dir.path().join(format!("r{dropout}-{seed}")), 6, seed, |_| {})?;
            aris.push(r.ari);
        }
        let mean = aris.iter().sum::<f64>() / aris.len() as f64;
        detail.push(format!(
            "{:.0}%: {mean:.4} [{}]",
            dropout * 100.0,
            aris.iter().map(|a| format!("{a:.3}")).join(" ")
        ));
        means.push(mean);
    }
    let monotone = means.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        monotone && means[2] >= 0.5,
        format!("mean ARI by dropout {}", detail.join(", ")),
    )
}

fn criterion_determinism(easy: &mut Easy) -> Result<Outcome> {
    let out_b = easy.dir.path().join("run-b");
    let data = easy.data();
    let first = easy.default_run()?.labels.clone();
    let second = cluster(&data, &out_b, 4, 0, |_| {})?;
    ensure!(!first.is_empty(), "empty labels.csv");
    outcome(
        first == second.labels,
        format!(
            "two runs, labels.csv {} bytes, identical: {}",
            first.len(),
            first == second.labels
        ),
    )
}

fn criterion_ablation(easy: &mut Easy) -> Result<Outcome> {
    let data = easy.data();
    let root = easy.dir.path().to_path_buf();
    let mut full = vec![easy.default_run()?.ari];
    for seed in 1..=2u64 {
        full.push(cluster(&data, &root.join(format!("full-{seed}")), 4, seed, |_| {})?.ari);
    }
    let mut ablated = Vec::new();
    for seed in 0..=2u64 {
        let r = cluster(&data, &root.join(format!("ncut-{seed}")), 4, seed, |c| {
            c.train.gamma = 0.0;
            c.train.mu = 0.0;
        })?;
        ablated.push(r.ari);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (f, a) = (mean(&full), mean(&ablated));
    let show = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).join(" ");
    outcome(
        f >= a,
        format!(
            "full loss {f:.4} [{}] vs NCut only {a:.4} [{}]",
            show(&full),
            show(&ablated)
        ),
    )
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    // `cargo test -- <filter>` passes libtest arguments; a filter that
    // does not name this suite skips it.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| a.contains("acceptance")) {
        return ExitCode::SUCCESS;
    }
    let only: Option<Vec<usize>> = std::env::var("SOFTCUT_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |i: usize| only.as_ref().is_none_or(|o| o.contains(&i));

    let mut shared: Option<Easy> = None;

    let mut failed = 0;
    let mut ran = 0;
    for i in 1..=10 {
        if !wanted(i) {
            continue;
        }
        let (name, result) = match i {
            1 => ("gradient suite", criterion_gradients()),
            2 => ("sinkhorn marginals", criterion_sinkhorn_marginals()),
            3 => ("sinkhorn permutation limit", criterion_sinkhorn_limit()),
            4 => ("laplacian spectrum", criterion_laplacian()),
            5 => ("zinb closed form", criterion_zinb()),
            6 => ("metric oracles", criterion_metrics()),
            7 => ("easy benchmark", easy(&mut shared).and_then(criterion_easy)),
            8 => ("dropout robustness", criterion_robustness()),
            9 => ("determinism", easy(&mut shared).and_then(criterion_determinism)),
            10 => ("ablation direction", easy(&mut shared).and_then(criterion_ablation)),
            _ => unreachable!(),
        };
        ran += 1;
        let (status, detail) = match result {
            Ok(o) => (if o.pass { "PASS" } else { "FAIL" }, o.detail),
            Err(e) => ("FAIL", format!("error: {e:#}")),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {i:>2} {status} {name}: {detail}");
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
