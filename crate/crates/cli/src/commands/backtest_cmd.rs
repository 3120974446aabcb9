use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use blockfolio::acc::AccConfig;
use blockfolio::backtest::{
    load_benchmark, load_constituents, load_prices, run_backtest, BacktestConfig,
    ClusteringMethod, ConstituencyTable, RebalanceFrequency, Strategy,
};

use super::parse_range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    RiskParity,
    MinVariance,
    MeanVariance,
    MarketNeutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseStrategyArg {
    RiskParity,
    MinVariance,
    MeanVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Acc,
    Kmedoids,
    SingleLinkage,
    FixedGroups,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FrequencyArg {
    Annual,
    Semiannual,
    Quarterly,
}

#[derive(Args, Debug)]
pub struct BacktestArgs {
    /// Wide price CSV (date column plus one column per ticker).
    #[arg(long)]
    pub prices: PathBuf,

    /// Constituency CSV `ticker,start,end[,class_group,listing]`; if absent,
    /// every ticker is a member for the whole panel.
    #[arg(long)]
    pub constituents: Option<PathBuf>,

    /// Benchmark CSV (date,price); required for market-neutral and for
    /// correlation/beta metrics.
    #[arg(long)]
    pub benchmark: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "risk-parity")]
    pub strategy: StrategyArg,

    /// Base strategy hedged by the market-neutral wrapper.
    #[arg(long, value_enum, default_value = "risk-parity")]
    pub base: BaseStrategyArg,

    /// Annualized target return for mean-variance.
    #[arg(long, default_value_t = 0.10)]
    pub target: f64,

    #[arg(long, value_enum, default_value = "annual")]
    pub rebalance: FrequencyArg,

    #[arg(long, value_enum, default_value = "acc")]
    pub method: MethodArg,

    /// Ticker-to-group CSV for --method fixed-groups.
    #[arg(long)]
    pub groups: Option<PathBuf>,

    #[arg(long, default_value_t = 500)]
    pub window: usize,

    /// Accepted cluster-count band for the threshold search.
    #[arg(long, value_parser = parse_range, default_value = "15..25")]
    pub clusters: (usize, usize),

    /// Cluster count for the baseline methods.
    #[arg(long, default_value_t = 20)]
    pub k: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Month whose first trading day anchors the schedule.
    #[arg(long, default_value_t = 2)]
    pub anchor_month: u32,

    /// Minimum trading days of history for universe inclusion.
    #[arg(long, default_value_t = 1260)]
    pub min_history: usize,

    /// Annual risk-free rate.
    #[arg(long, default_value_t = 0.0)]
    pub rf: f64,

    /// Output directory for report.json, values.csv, weights.csv.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,

    /// JSON config file; present keys override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct BacktestFileConfig {
    prices: Option<PathBuf>,
    constituents: Option<PathBuf>,
    benchmark: Option<PathBuf>,
    strategy: Option<String>,
    base: Option<String>,
    target: Option<f64>,
    rebalance: Option<String>,
    method: Option<String>,
    groups: Option<PathBuf>,
    window: Option<usize>,
    clusters: Option<String>,
    k: Option<usize>,
    seed: Option<u64>,
    anchor_month: Option<u32>,
    min_history: Option<usize>,
    rf: Option<f64>,
    out_dir: Option<PathBuf>,
}

fn apply_config(args: &mut BacktestArgs) -> Result<()> {
    let Some(path) = &args.config else {
        return Ok(());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let file: BacktestFileConfig = serde_json::from_str(&text).context("parsing config")?;
    let parse_variant = |name: &str, what: &str| -> Result<String> {
        Ok(name.trim().replace('_', "-")).and_then(|v| {
            if v.is_empty() {
                anyhow::bail!("empty {what} in config")
            } else {
                Ok(v)
            }
        })
    };
    if let Some(v) = file.prices {
        args.prices = v;
    }
    if let Some(v) = file.constituents {
        args.constituents = Some(v);
    }
    if let Some(v) = file.benchmark {
        args.benchmark = Some(v);
    }
    if let Some(v) = file.strategy {
        args.strategy = StrategyArg::from_str(&parse_variant(&v, "strategy")?, true)
            .map_err(anyhow::Error::msg)?;
    }
    if let Some(v) = file.base {
        args.base = BaseStrategyArg::from_str(&parse_variant(&v, "base")?, true)
            .map_err(anyhow::Error::msg)?;
    }
    if let Some(v) = file.target {
        args.target = v;
    }
    if let Some(v) = file.rebalance {
        args.rebalance = FrequencyArg::from_str(&parse_variant(&v, "rebalance")?, true)
            .map_err(anyhow::Error::msg)?;
    }
    if let Some(v) = file.method {
        args.method = MethodArg::from_str(&parse_variant(&v, "method")?, true)
            .map_err(anyhow::Error::msg)?;
    }
    if let Some(v) = file.groups {
        args.groups = Some(v);
    }
    if let Some(v) = file.window {
        args.window = v;
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
    if let Some(v) = file.anchor_month {
        args.anchor_month = v;
    }
    if let Some(v) = file.min_history {
        args.min_history = v;
    }
    if let Some(v) = file.rf {
        args.rf = v;
    }
    if let Some(v) = file.out_dir {
        args.out_dir = v;
    }
    Ok(())
}

fn load_groups(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("reading groups {}", path.display()))?;
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        anyhow::ensure!(record.len() >= 2, "groups CSV needs ticker,group rows");
        out.insert(record[0].trim().to_string(), record[1].trim().to_string());
    }
    Ok(out)
}

fn base_strategy(arg: BaseStrategyArg, target: f64) -> Strategy {
    match arg {
        BaseStrategyArg::RiskParity => Strategy::RiskParity,
        BaseStrategyArg::MinVariance => Strategy::MinVariance,
        BaseStrategyArg::MeanVariance => Strategy::MeanVariance {
            target_annual: target,
        },
    }
}

pub fn run(mut args: BacktestArgs) -> Result<()> {
    apply_config(&mut args)?;
    let panel = load_prices(&args.prices)?;
    let constituents = match &args.constituents {
        Some(p) => load_constituents(p)?,
        None => {
            let dates = panel.dates();
            ConstituencyTable::full_membership(
                panel.tickers(),
                dates[0],
                *dates.last().expect("non-empty panel"),
            )
        }
    };
    let benchmark = args.benchmark.as_deref().map(load_benchmark).transpose()?;

    let strategy = match args.strategy {
        StrategyArg::RiskParity => Strategy::RiskParity,
        StrategyArg::MinVariance => Strategy::MinVariance,
        StrategyArg::MeanVariance => Strategy::MeanVariance {
            target_annual: args.target,
        },
        StrategyArg::MarketNeutral => Strategy::MarketNeutral {
            base: Box::new(base_strategy(args.base, args.target)),
        },
    };
    let clustering = match args.method {
        MethodArg::Acc => ClusteringMethod::Acc,
        MethodArg::Kmedoids => ClusteringMethod::Kmedoids { k: args.k },
        MethodArg::SingleLinkage => ClusteringMethod::SingleLinkage { k: args.k },
        MethodArg::FixedGroups => {
            let path = args
                .groups
                .as_ref()
                .context("--method fixed-groups needs --groups")?;
            ClusteringMethod::FixedGroups {
                groups: load_groups(path)?,
            }
        }
    };
    let cfg = BacktestConfig {
        window: args.window,
        frequency: match args.rebalance {
            FrequencyArg::Annual => RebalanceFrequency::Annual,
            FrequencyArg::Semiannual => RebalanceFrequency::Semiannual,
            FrequencyArg::Quarterly => RebalanceFrequency::Quarterly,
        },
        strategy,
        clustering,
        acc: AccConfig {
            cluster_range: args.clusters,
            ..AccConfig::default()
        },
        risk_free: args.rf,
        anchor_month: args.anchor_month,
        seed: args.seed,
        min_history: args.min_history,
        ..BacktestConfig::default()
    };

    let report = run_backtest(
        &panel,
        &constituents,
        benchmark
            .as_ref()
            .map(|(d, p)| (d.as_slice(), p.as_slice())),
        &cfg,
    )?;

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    // report.json: performance metrics at the top level, config echoed beside
    let mut root = serde_json::to_value(&report.report)?;
    root["metadata"] = serde_json::to_value(&report.metadata)?;
    root["config"] = serde_json::to_value(&cfg)?;
    if let Some(last) = report.rebalances.last() {
        root["final_weights"] = serde_json::to_value(blockfolio::alloc::WeightsRecord {
            strategy: report.metadata.strategy.clone(),
            tickers: last.tickers.clone(),
            weights: last.weights.clone(),
            benchmark_weight: last.benchmark_weight,
            beta: last.beta,
        })?;
    }
    let mut text = serde_json::to_string_pretty(&root)?;
    text.push('\n');
    std::fs::write(args.out_dir.join("report.json"), text)?;

    let mut values = String::from("date,value\n");
    for (d, v) in report.series.dates.iter().zip(&report.series.values) {
        values.push_str(&format!("{d},{v}\n"));
    }
    std::fs::write(args.out_dir.join("values.csv"), values)?;

    let mut weights = String::from("date,ticker,weight\n");
    for rec in &report.rebalances {
        for (t, w) in rec.tickers.iter().zip(&rec.weights) {
            weights.push_str(&format!("{},{t},{w}\n", rec.date));
        }
        if let Some(bw) = rec.benchmark_weight {
            weights.push_str(&format!("{},BENCHMARK,{bw}\n", rec.date));
        }
    }
    std::fs::write(args.out_dir.join("weights.csv"), weights)?;
    Ok(())
}
