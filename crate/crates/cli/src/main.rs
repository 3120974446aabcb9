//! Command-line frontend: cluster assets under the correlation blockmodel,
//! simulate recovery experiments, backtest selection/allocation strategies,
//! and compare value series.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{backtest_cmd, cluster_cmd, compare_cmd, simulate_cmd};

#[derive(Parser)]
#[command(name = "blockfolio", version, about)]
struct Cli {
    /// Cap worker threads (falls back to BLOCKFOLIO_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster the trailing return window of a price panel.
    Cluster(cluster_cmd::ClusterArgs),
    /// Run seeded blockmodel recovery trials.
    Simulate(simulate_cmd::SimulateArgs),
    /// Backtest clustering + selection + allocation on a price panel.
    Backtest(backtest_cmd::BacktestArgs),
    /// Rolling-window win rates between two value series.
    Compare(compare_cmd::CompareArgs),
}

/// Exit code and stable machine-readable code for scripting.
fn classify(e: &anyhow::Error) -> (u8, &'static str) {
    use blockfolio::Error::*;
    if let Some(err) = e.downcast_ref::<blockfolio::Error>() {
        return match err {
            NoFeasibleThreshold { .. } => (3, "no_feasible_threshold"),
            SolverFailure(_) | EigenFailure(_) | DegenerateFit { .. } | ZeroMarketVariance
            | DegenerateBeta(_) | NegativeBeta(_) | Infeasible { .. } | NotTransitive(..) => {
                (4, "numeric")
            }
            _ => (2, "input"),
        };
    }
    (2, "input")
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();

    let threads = cli.threads.or_else(|| {
        std::env::var("BLOCKFOLIO_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("{{\"code\":\"input\",\"message\":\"thread pool: {e}\"}}");
            return ExitCode::from(2);
        }
    }

    let result = match cli.command {
        Command::Cluster(args) => cluster_cmd::run(args),
        Command::Simulate(args) => simulate_cmd::run(args),
        Command::Backtest(args) => backtest_cmd::run(args),
        Command::Compare(args) => compare_cmd::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            let msg = serde_json::json!({ "code": kind, "message": format!("{e:#}") });
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}
