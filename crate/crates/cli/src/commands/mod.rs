pub mod backtest_cmd;
pub mod cluster_cmd;
pub mod compare_cmd;
pub mod simulate_cmd;

use std::path::Path;

use anyhow::{Context, Result};
use blockfolio::backtest::PricePanel;
use blockfolio::corrcore::ReturnsPanel;
use ndarray::Array2;

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Trailing `window`-day return panel ending at `as_of`.
///
/// Keeps tickers observed from the start of the window with at most 5%
/// missing prices inside it, repairs the gaps, and differences into simple
/// returns.
pub fn trailing_returns(
    panel: &PricePanel,
    as_of: chrono::NaiveDate,
    window: usize,
) -> Result<ReturnsPanel> {
    let t = panel
        .date_index(as_of)
        .with_context(|| format!("{as_of} is not a trading day in the panel"))?;
    anyhow::ensure!(
        t >= window,
        "need {window} trading days before {as_of}, found {t}"
    );
    let start = t - window;
    let mut keep: Vec<usize> = Vec::new();
    for idx in 0..panel.n_tickers() {
        let first = match panel.first_observed(idx) {
            Some(f) => f,
            None => continue,
        };
        if first > start {
            continue;
        }
        let missing = panel
            .prices()
            .column(idx)
            .iter()
            .take(t + 1)
            .skip(start)
            .filter(|p| p.is_nan())
            .count();
        if (missing as f64) <= 0.05 * (window + 1) as f64 {
            keep.push(idx);
        }
    }
    anyhow::ensure!(keep.len() >= 2, "fewer than 2 tickers cover the window");

    let mut values = Array2::zeros((window, keep.len()));
    for (c, &idx) in keep.iter().enumerate() {
        let repaired = blockfolio::backtest::repair_missing(&panel.series(idx))?;
        for s in 0..window {
            values[[s, c]] = repaired[start + s + 1] / repaired[start + s] - 1.0;
        }
    }
    let dates = panel.dates()[start + 1..=t].to_vec();
    let tickers: Vec<String> = keep.iter().map(|&i| panel.tickers()[i].clone()).collect();
    Ok(ReturnsPanel::new(dates, tickers, values)?)
}

/// Parses `MIN..MAX` (inclusive).
pub fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("expected MIN..MAX, got {s:?}"))?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("bad MIN: {e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("bad MAX: {e}"))?;
    if lo == 0 || hi < lo {
        return Err(format!("invalid range {lo}..{hi}"));
    }
    Ok((lo, hi))
}
