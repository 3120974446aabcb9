use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;

use blockfolio::backtest::rolling_window_compare;

use super::write_out;

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// First value series CSV (date,value), e.g. a backtest's values.csv.
    #[arg(long)]
    pub a: PathBuf,

    /// Second value series CSV (date,value).
    #[arg(long)]
    pub b: PathBuf,

    /// Comma-separated window lengths in trading days.
    #[arg(long, value_delimiter = ',', default_value = "252,504,756,1260,2520")]
    pub windows: Vec<usize>,

    /// Output CSV (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_values(path: &Path) -> Result<Vec<(chrono::NaiveDate, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        anyhow::ensure!(record.len() >= 2, "value CSV needs date,value rows");
        let date = chrono::NaiveDate::parse_from_str(record[0].trim(), "%Y-%m-%d")
            .with_context(|| format!("bad date {:?}", &record[0]))?;
        let value: f64 = record[1]
            .trim()
            .parse()
            .with_context(|| format!("bad value {:?}", &record[1]))?;
        out.push((date, value));
    }
    anyhow::ensure!(!out.is_empty(), "no rows in {}", path.display());
    Ok(out)
}

pub fn run(args: CompareArgs) -> Result<()> {
    let a = load_values(&args.a)?;
    let b = load_values(&args.b)?;

    // align on common dates
    let bdates: std::collections::BTreeMap<chrono::NaiveDate, f64> = b.into_iter().collect();
    let mut va = Vec::new();
    let mut vb = Vec::new();
    for (d, v) in a {
        if let Some(&bv) = bdates.get(&d) {
            va.push(v);
            vb.push(bv);
        }
    }
    anyhow::ensure!(va.len() >= 3, "series share fewer than 3 dates");

    let mut csv = String::from("window_len,windows,return_win_frac,sharpe_windows,sharpe_win_frac\n");
    for &w in &args.windows {
        let c = rolling_window_compare(&va, &vb, w)?;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            c.window_len, c.windows, c.return_win_frac, c.sharpe_windows, c.sharpe_win_frac
        ));
    }
    write_out(args.out.as_deref(), &csv)
}
