use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use blockfolio::acc::{acc, AccConfig, PartitionRecord};
use blockfolio::backtest::load_prices;
use blockfolio::baselines::{corr_distance, kmedoids, single_linkage};
use blockfolio::corrcore::{sample_correlation, standardize};

use super::{parse_range, trailing_returns, write_out};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Acc,
    Kmedoids,
    SingleLinkage,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    /// Wide price CSV (date column plus one column per ticker).
    #[arg(long)]
    pub prices: PathBuf,

    #[arg(long, value_enum, default_value = "acc")]
    pub method: Method,

    /// Trailing window length in trading days.
    #[arg(long, default_value_t = 500)]
    pub window: usize,

    /// Clustering date (defaults to the last panel date).
    #[arg(long)]
    pub as_of: Option<chrono::NaiveDate>,

    /// Accepted cluster-count band for the threshold search.
    #[arg(long, value_parser = parse_range, default_value = "15..25")]
    pub clusters: (usize, usize),

    /// Cluster count for the baseline methods.
    #[arg(long, default_value_t = 20)]
    pub k: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Lower search-range multiplier.
    #[arg(long, default_value_t = 0.1)]
    pub a: f64,

    /// Upper search-range multiplier.
    #[arg(long, default_value_t = 10.0)]
    pub b: f64,

    /// Grid points over the threshold search range.
    #[arg(long, default_value_t = 100)]
    pub grids: usize,

    /// Output path for the partition JSON (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// JSON config file; present keys override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Config-file form of the flags (kebab-case keys).
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ClusterFileConfig {
    prices: Option<PathBuf>,
    method: Option<String>,
    window: Option<usize>,
    as_of: Option<chrono::NaiveDate>,
    clusters: Option<String>,
    k: Option<usize>,
    seed: Option<u64>,
    a: Option<f64>,
    b: Option<f64>,
    grids: Option<usize>,
    out: Option<PathBuf>,
}

fn apply_config(args: &mut ClusterArgs) -> Result<()> {
    let Some(path) = &args.config else {
        return Ok(());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let file: ClusterFileConfig = serde_json::from_str(&text).context("parsing config")?;
    if let Some(v) = file.prices {
        args.prices = v;
    }
    if let Some(v) = file.method {
        args.method = match v.as_str() {
            "acc" => Method::Acc,
            "kmedoids" => Method::Kmedoids,
            "single_linkage" | "single-linkage" => Method::SingleLinkage,
            other => anyhow::bail!("unknown method {other:?} in config"),
        };
    }
    if let Some(v) = file.window {
        args.window = v;
    }
    if let Some(v) = file.as_of {
        args.as_of = Some(v);
    }
    if let Some(v) = file.clusters {
        args.clusters = parse_range(&v).map_err(anyhow::Error::msg)?;
    }
    if let Some(v) = file.k {
        args.k = v;
    }
    if let Some(v) = file.seed {
        args.seed = v;
    }
    if let Some(v) = file.a {
        args.a = v;
    }
    if let Some(v) = file.b {
        args.b = v;
    }
    if let Some(v) = file.grids {
        args.grids = v;
    }
    if let Some(v) = file.out {
        args.out = Some(v);
    }
    Ok(())
}

pub fn run(mut args: ClusterArgs) -> Result<()> {
    apply_config(&mut args)?;
    let panel = load_prices(&args.prices)?;
    let as_of = args
        .as_of
        .unwrap_or_else(|| *panel.dates().last().expect("panel is non-empty"));
    let rpanel = trailing_returns(&panel, as_of, args.window)?;

    let record = match args.method {
        Method::Acc => {
            let cfg = AccConfig {
                a: args.a,
                b: args.b,
                n_grids: args.grids,
                cluster_range: args.clusters,
                ..AccConfig::default()
            };
            let result = acc(&rpanel, &cfg)?;
            let corr = sample_correlation(&standardize(&rpanel)?)?;
            PartitionRecord::from_acc(&result, &corr)
        }
        Method::Kmedoids | Method::SingleLinkage => {
            let corr = sample_correlation(&standardize(&rpanel)?)?;
            let dist = corr_distance(&corr);
            let (name, partition) = match args.method {
                Method::Kmedoids => ("kmedoids", kmedoids(&dist, args.k, args.seed)?),
                _ => ("single_linkage", single_linkage(&dist, args.k)?),
            };
            PartitionRecord::from_baseline(name, rpanel.tickers(), &partition)
        }
    };

    let mut value = serde_json::to_value(&record)?;
    value["as_of"] = serde_json::json!(as_of);
    value["window"] = serde_json::json!(args.window);
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    write_out(args.out.as_deref(), &text)
}
