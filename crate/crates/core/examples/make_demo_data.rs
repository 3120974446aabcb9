//! Writes a synthetic blockmodel market to CSV files so the CLI can be
//! exercised without licensed market data.
//!
//! Usage: cargo run --example make_demo_data -- <output-dir> [d] [k] [n_days]

use std::fmt::Write as _;
use std::path::PathBuf;

use blockfolio::backtest::{synthetic_market, SyntheticMarketConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let dir: PathBuf = args.next().unwrap_or_else(|| "demo".into()).into();
    std::fs::create_dir_all(&dir).expect("create output dir");

    let defaults = SyntheticMarketConfig::default();
    let cfg = SyntheticMarketConfig {
        d: args.next().map_or(defaults.d, |v| v.parse().expect("d")),
        k: args.next().map_or(defaults.k, |v| v.parse().expect("k")),
        n_days: args
            .next()
            .map_or(defaults.n_days, |v| v.parse().expect("n_days")),
        ..defaults
    };
    let market = synthetic_market(&cfg).expect("market builds");

    let mut prices = String::from("date");
    for t in market.prices.tickers() {
        write!(prices, ",{t}").unwrap();
    }
    prices.push('\n');
    for (r, d) in market.prices.dates().iter().enumerate() {
        write!(prices, "{d}").unwrap();
        for c in 0..market.prices.n_tickers() {
            write!(prices, ",{}", market.prices.prices()[[r, c]]).unwrap();
        }
        prices.push('\n');
    }
    std::fs::write(dir.join("prices.csv"), prices).expect("write prices");

    let mut bench = String::from("date,price\n");
    for (d, p) in market
        .benchmark_dates
        .iter()
        .zip(&market.benchmark_prices)
    {
        writeln!(bench, "{d},{p}").unwrap();
    }
    std::fs::write(dir.join("benchmark.csv"), bench).expect("write benchmark");

    let first = market.prices.dates()[0];
    let last = *market.prices.dates().last().unwrap();
    let mut cons = String::from("ticker,start_date,end_date,class_group,listing_date\n");
    for t in market.prices.tickers() {
        writeln!(cons, "{t},{first},{last},,").unwrap();
    }
    std::fs::write(dir.join("constituents.csv"), cons).expect("write constituents");

    // ground-truth block labels are handy as a fixed-groups baseline
    let mut groups = String::new();
    for (t, z) in market
        .prices
        .tickers()
        .iter()
        .zip(market.spec.assignment())
    {
        writeln!(groups, "{t},G{z:02}").unwrap();
    }
    std::fs::write(dir.join("groups.csv"), groups).expect("write groups");

    println!(
        "wrote {} days x {} assets under {}",
        market.prices.n_dates(),
        market.prices.n_tickers(),
        dir.display()
    );
}
