use softcut::diffcore::{DenseMatrix, Graph};
use softcut::zinb::{nb_log_pmf, zinb_nll, ZinbNodes};

/// Negative binomial log-pmf from the rising factorial
/// `Γ(x+θ)/Γ(θ) = θ(θ+1)…(θ+x−1)`, valid for integer `x`.
fn oracle_nb_log_pmf(x: u32, mu: f64, theta: f64) -> f64 {
    let rising: f64 = (0..x).map(|k| (theta + k as f64).ln()).sum();
    let log_fact: f64 = (1..=x).map(|k| (k as f64).ln()).sum();
    rising - log_fact + theta * (theta / (theta + mu)).ln() + x as f64 * (mu / (theta + mu)).ln()
}

fn graph_nll(x: f64, pi: f64, mu: f64, theta: f64) -> f64 {
    let mut g = Graph::new();
    let one = |v: f64| DenseMatrix::from_rows(&[[v]]);
    let heads = ZinbNodes {
        pi: g.constant(one(pi)),
        mu: g.constant(one(mu)),
        theta: g.constant(one(theta)),
    };
    let root = zinb_nll(&mut g, &one(x), heads);
    g.forward(root).unwrap()
}

#[test]
fn nll_matches_rising_factorial_oracle_on_grid() {
    for x in [0u32, 1, 5] {
        for pi in [0.0, 0.5, 0.9] {
            for mu in [0.5, 2.0] {
                for theta in [0.5, 2.0] {
                    let nb = oracle_nb_log_pmf(x, mu, theta).exp();
                    let zero = if x == 0 { pi } else { 0.0 };
                    let want = -(zero + (1.0 - pi) * nb).ln();
                    let got = graph_nll(x as f64, pi, mu, theta);
                    assert!(
                        (got - want).abs() <= 1e-10,
                        "x={x} pi={pi} mu={mu} theta={theta}: {got} vs {want}"
                    );
                }
            }
        }
    }
}

#[test]
fn nb_pmf_sums_to_one() {
    for mu in [0.5, 2.0, 50.0] {
        for theta in [0.5, 2.0, 10.0] {
            let total: f64 = (0..=10_000).map(|x| nb_log_pmf(x as f64, mu, theta).exp()).sum();
            assert!((total - 1.0).abs() <= 1e-8, "mu={mu} theta={theta}: {total}");
            for x in [0u32, 3, 17] {
                let diff = nb_log_pmf(x as f64, mu, theta) - oracle_nb_log_pmf(x, mu, theta);
                assert!(diff.abs() < 1e-10);
            }
        }
    }
}
