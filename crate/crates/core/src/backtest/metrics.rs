//! Performance metrics and rolling-window comparisons.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trading days per year used for all annualization.
pub const TRADING_DAYS: f64 = 252.0;

/// Dated portfolio value path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl ValueSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} dates for {} values",
                dates.len(),
                values.len()
            )));
        }
        Ok(Self { dates, values })
    }

    pub fn returns(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
    }
}

/// The full metric set of a backtest report.
///
/// `sharpe` is `None` when volatility is zero; `recovery_days` counts trading
/// days from the drawdown valley until the prior peak is regained, `None` if
/// it never is. Periods with non-positive return count as negative so the two
/// counts always sum to `total_periods`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PerformanceReport {
    pub ending_vami: f64,
    pub max_drawdown: f64,
    pub peak_date: Option<NaiveDate>,
    pub valley_date: Option<NaiveDate>,
    pub recovery_days: Option<usize>,
    pub sharpe: Option<f64>,
    pub sortino: Option<f64>,
    pub calmar: Option<f64>,
    pub ann_volatility: f64,
    pub ann_downside_volatility: f64,
    pub correlation: Option<f64>,
    pub beta: Option<f64>,
    pub ann_return: f64,
    pub ann_turnover: Option<f64>,
    pub positive_periods: usize,
    pub negative_periods: usize,
    pub total_periods: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

pub(crate) struct Drawdown {
    pub max_drawdown: f64,
    pub peak_idx: Option<usize>,
    pub valley_idx: Option<usize>,
    pub recovery_days: Option<usize>,
}

pub(crate) fn max_drawdown(values: &[f64]) -> Drawdown {
    let mut peak_idx = 0usize;
    let mut best = Drawdown {
        max_drawdown: 0.0,
        peak_idx: None,
        valley_idx: None,
        recovery_days: None,
    };
    for (i, &v) in values.iter().enumerate() {
        if v > values[peak_idx] {
            peak_idx = i;
        }
        let dd = (values[peak_idx] - v) / values[peak_idx];
        if dd > best.max_drawdown {
            best.max_drawdown = dd;
            best.peak_idx = Some(peak_idx);
            best.valley_idx = Some(i);
        }
    }
    if let (Some(p), Some(v)) = (best.peak_idx, best.valley_idx) {
        best.recovery_days = values
            .iter()
            .enumerate()
            .skip(v + 1)
            .find(|(_, &x)| x >= values[p])
            .map(|(i, _)| i - v);
    }
    best
}

/// Computes the full metric set from a value path.
///
/// `benchmark` must be aligned 1:1 with the series dates when present; the
/// risk-free rate is annual and converted to daily by division by 252.
pub fn performance_metrics(
    series: &ValueSeries,
    benchmark: Option<&[f64]>,
    risk_free_annual: f64,
) -> Result<PerformanceReport> {
    let v = &series.values;
    if v.len() < 2 {
        return Err(Error::TooFewRows(v.len()));
    }
    let returns = series.returns();
    let n = returns.len();
    let rf_daily = risk_free_annual / TRADING_DAYS;

    let m = mean(&returns);
    let sd = if n >= 2 { sample_std(&returns) } else { 0.0 };
    let sharpe = (sd > 0.0).then(|| (m - rf_daily) / sd * TRADING_DAYS.sqrt());

    let downside = (returns.iter().map(|r| r.min(0.0).powi(2)).sum::<f64>() / n as f64).sqrt();
    let sortino = (downside > 0.0).then(|| (m - rf_daily) / downside * TRADING_DAYS.sqrt());

    let dd = max_drawdown(v);
    let ann_return = (v[v.len() - 1] / v[0]).powf(TRADING_DAYS / n as f64) - 1.0;
    let calmar = (dd.max_drawdown > 0.0).then(|| ann_return / dd.max_drawdown);

    let (correlation, beta) = match benchmark {
        Some(b) => {
            if b.len() != v.len() {
                return Err(Error::DimensionMismatch(format!(
                    "benchmark has {} points, series {}",
                    b.len(),
                    v.len()
                )));
            }
            let bret: Vec<f64> = b.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
            let mb = mean(&bret);
            let mut cov = 0.0;
            let mut var_b = 0.0;
            let mut var_a = 0.0;
            for (a, bb) in returns.iter().zip(&bret) {
                cov += (a - m) * (bb - mb);
                var_b += (bb - mb) * (bb - mb);
                var_a += (a - m) * (a - m);
            }
            let corr = (var_a > 0.0 && var_b > 0.0).then(|| cov / (var_a * var_b).sqrt());
            let beta = (var_b > 0.0).then(|| cov / var_b);
            (corr, beta)
        }
        None => (None, None),
    };

    let positive = returns.iter().filter(|r| **r > 0.0).count();
    Ok(PerformanceReport {
        ending_vami: v[v.len() - 1],
        max_drawdown: dd.max_drawdown,
        peak_date: dd.peak_idx.map(|i| series.dates[i]),
        valley_date: dd.valley_idx.map(|i| series.dates[i]),
        recovery_days: dd.recovery_days,
        sharpe,
        sortino,
        calmar,
        ann_volatility: sd * TRADING_DAYS.sqrt(),
        ann_downside_volatility: downside * TRADING_DAYS.sqrt(),
        correlation,
        beta,
        ann_return,
        ann_turnover: None,
        positive_periods: positive,
        negative_periods: n - positive,
        total_periods: n,
    })
}

/// Win rates of series `a` over series `b` across all rolling windows of
/// `window_len` periods.
#[derive(Debug, Clone, Serialize)]
pub struct WindowCompare {
    pub window_len: usize,
    pub windows: usize,
    pub return_wins: usize,
    pub return_win_frac: f64,
    /// Windows where at least one Sharpe is defined and non-negative.
    pub sharpe_windows: usize,
    pub sharpe_wins: usize,
    pub sharpe_win_frac: f64,
}

fn window_stats(values: &[f64]) -> (f64, Option<f64>) {
    let returns: Vec<f64> = values.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let ann_ret = (values[values.len() - 1] / values[0]).powf(TRADING_DAYS / returns.len() as f64) - 1.0;
    let sd = sample_std(&returns);
    let sharpe = (sd > 0.0).then(|| mean(&returns) / sd * TRADING_DAYS.sqrt());
    (ann_ret, sharpe)
}

/// Compares annualized return and Sharpe over every full window. Returns are
/// compared on all windows; Sharpe comparisons exclude windows where both
/// Sharpe ratios are negative (or either is undefined). Ties are not wins.
pub fn rolling_window_compare(
    series_a: &[f64],
    series_b: &[f64],
    window_len: usize,
) -> Result<WindowCompare> {
    if series_a.len() != series_b.len() {
        return Err(Error::DimensionMismatch(format!(
            "series lengths differ: {} vs {}",
            series_a.len(),
            series_b.len()
        )));
    }
    if window_len < 2 || series_a.len() < window_len + 1 {
        return Err(Error::NoValidWindows);
    }
    let starts = series_a.len() - window_len;
    let mut return_wins = 0;
    let mut sharpe_windows = 0;
    let mut sharpe_wins = 0;
    for s in 0..starts {
        let wa = &series_a[s..=s + window_len];
        let wb = &series_b[s..=s + window_len];
        let (ra, sa) = window_stats(wa);
        let (rb, sb) = window_stats(wb);
        if ra > rb {
            return_wins += 1;
        }
        if let (Some(sa), Some(sb)) = (sa, sb) {
            // comparing two negative Sharpe ratios is meaningless
            if sa >= 0.0 || sb >= 0.0 {
                sharpe_windows += 1;
                if sa > sb {
                    sharpe_wins += 1;
                }
            }
        }
    }
    Ok(WindowCompare {
        window_len,
        windows: starts,
        return_wins,
        return_win_frac: return_wins as f64 / starts as f64,
        sharpe_windows,
        sharpe_wins,
        sharpe_win_frac: if sharpe_windows > 0 {
            sharpe_wins as f64 / sharpe_windows as f64
        } else {
            0.0
        },
    })
}
