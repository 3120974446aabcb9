use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use blockfolio::blocksim::{run_experiment, ExperimentConfig};

use super::write_out;

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Experiment JSON: {d, k, within_corr, cross_corr | sigma_f, n, trials,
    /// distribution, seed, acc}.
    #[arg(long)]
    pub config: PathBuf,

    /// Per-trial CSV output (stdout if omitted).
    #[arg(long)]
    pub out_csv: Option<PathBuf>,

    /// Summary JSON output (stderr if omitted).
    #[arg(long)]
    pub out_summary: Option<PathBuf>,
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).context("parsing experiment config")?;
    let (rows, summary) = run_experiment(&cfg)?;

    let mut csv = String::from("seed,exact,ari,tau,delta,epsilon_star,K_found\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.seed, r.exact, r.ari, r.tau, r.delta, r.epsilon_star, r.k_found
        ));
    }
    write_out(args.out_csv.as_deref(), &csv)?;

    let mut summary_text = serde_json::to_string_pretty(&summary)?;
    summary_text.push('\n');
    match &args.out_summary {
        Some(p) => std::fs::write(p, &summary_text)
            .with_context(|| format!("writing {}", p.display()))?,
        None => eprint!("{summary_text}"),
    }
    Ok(())
}
