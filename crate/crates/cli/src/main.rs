use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kminer_cli::commands::{self, BaselineMethod};
use kminer_cli::{resolve_config, Result};

#[derive(Parser)]
#[command(name = "kminer", version, about = "Most frequent induced k-subgraph mining")]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset path; overrides the config file.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the dataset and record its split.
    Ingest,
    /// Precompute exact optima for every graph and size.
    Oracle,
    /// Train and write checkpoints plus the training log.
    Train,
    /// Greedy selection of k nodes on one graph.
    Infer {
        #[arg(long)]
        k: usize,
        /// Fixture file; defaults to a graph of the configured dataset.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Dataset graph index when no fixture is given.
        #[arg(long)]
        index: Option<usize>,
        /// Also count the frequency of the found pattern.
        #[arg(long)]
        score: bool,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Greedy inference over the test split against the oracle.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Reference baselines over the test split.
    Baseline {
        #[arg(long, value_enum)]
        method: BaselineMethod,
    },
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = resolve_config(cli.config.as_deref(), cli.seed, cli.out, cli.dataset)?;
    match cli.command {
        Command::Ingest => {
            let s = commands::ingest(&cfg)?;
            println!("{} graphs, {} train, {} test, {} labels", s.graphs, s.train.len(), s.test.len(), s.labels.len());
        }
        Command::Oracle => {
            let s = commands::oracle(&cfg)?;
            println!("{}: {} computed, {} reused", s.path.display(), s.computed, s.reused);
            if !s.failures.is_empty() {
                eprintln!("{} graphs failed", s.failures.len());
                return Ok(false);
            }
        }
        Command::Train => {
            let s = commands::train(&cfg)?;
            println!("{} epochs; checkpoint {}; log {}", s.epochs, s.checkpoint.display(), s.log.display());
        }
        Command::Infer {
            k,
            graph,
            index,
            score,
            checkpoint,
        } => {
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            let r = commands::infer(&cfg, graph.as_deref(), index, k, score)?;
            let nodes: Vec<String> = r.nodes.iter().map(i64::to_string).collect();
            println!("nodes {}", nodes.join(" "));
            print!("{}", r.pattern);
            if let Some(f) = r.frequency {
                println!("frequency {f}");
            }
        }
        Command::Eval { checkpoint } => {
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            print!("{}", commands::eval(&cfg)?.summary_json()?);
            println!();
        }
        Command::Baseline { method } => {
            print!("{}", commands::baseline(&cfg, method)?.summary_json()?);
            println!();
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
