use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use softcut_cli::config::{DataArgs, HyperArgs};
use softcut_cli::{cmd_cluster, cmd_eval, cmd_select_k, cmd_simulate, RunConfig};

/// Graph-based clustering of single-cell expression matrices.
///
/// Settings resolve as built-in defaults, then the --config file, then
/// individual flags.
#[derive(Parser)]
#[command(name = "softcut", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster an expression matrix and write labels, embedding, and logs.
    Cluster {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Generate a synthetic labeled count matrix.
    Simulate(SimulateArgs),
    /// Score predicted labels against ground truth.
    Eval {
        /// Predicted labels, one integer per line.
        #[arg(long)]
        labels: PathBuf,
        /// Ground-truth labels, one integer per line.
        #[arg(long)]
        truth: PathBuf,
        /// Directory for metrics.json; defaults to the labels file's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank cluster counts by silhouette on the pretrained embedding.
    SelectK {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        k_min: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for matrix.csv and labels.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    genes: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    de_log_fold: Option<f64>,
    /// Cluster sizes proportional to 1, 1/2, ..., 1/k.
    #[arg(long)]
    unbalanced: bool,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cluster { data, hyper } => {
            let mut cfg = RunConfig::load_or_default(data.config.as_deref())?;
            data.apply(&mut cfg);
            hyper.apply(&mut cfg);
            let outcome = cmd_cluster(&cfg)?;
            println!("wrote {} labels to {}", outcome.labels.len(), outcome.out_dir.display());
            if let Some(m) = outcome.metrics {
                println!("acc {:.4}  nmi {:.4}  ari {:.4}", m.acc, m.nmi, m.ari);
            }
        }
        Command::Simulate(args) => {
            let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
            let s = &mut cfg.simulate;
            s.seed = args.seed.unwrap_or(s.seed);
            s.cells = args.cells.unwrap_or(s.cells);
            s.genes = args.genes.unwrap_or(s.genes);
            s.clusters = args.clusters.unwrap_or(s.clusters);
            s.dropout = args.dropout.unwrap_or(s.dropout);
            s.de_log_fold = args.de_log_fold.unwrap_or(s.de_log_fold);
            if args.unbalanced {
                s.balanced = false;
            }
            if let Some(out) = args.out {
                cfg.data.out = out;
            }
            let zeros = cmd_simulate(&cfg)?;
            println!("sparsity {zeros:.6}");
        }
        Command::Eval { labels, truth, out } => {
            let out = out.unwrap_or_else(|| match labels.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            });
            let m = cmd_eval(&labels, &truth, &out)?;
            println!("acc {:.4}  nmi {:.4}  ari {:.4}", m.acc, m.nmi, m.ari);
        }
        Command::SelectK {
            data,
            hyper,
            k_min,
            k_max,
        } => {
            let mut cfg = RunConfig::load_or_default(data.config.as_deref())?;
            data.apply(&mut cfg);
            hyper.apply(&mut cfg);
            cfg.select_k.k_min = k_min.unwrap_or(cfg.select_k.k_min);
            cfg.select_k.k_max = k_max.unwrap_or(cfg.select_k.k_max);
            let (scores, best) = cmd_select_k(&cfg)?;
            for (k, s) in scores {
                println!("k {k:>3}  silhouette {s:.4}");
            }
            println!("best k {best}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
