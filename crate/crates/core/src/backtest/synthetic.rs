//! Deterministic synthetic market for end-to-end runs: blockmodel returns
//! turned into positive price paths plus an equal-weight benchmark index.

use chrono::NaiveDate;
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::data::{ConstituencyTable, PricePanel};
use crate::blocksim::{sample_returns, BlockmodelSpec, FactorLaw};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct SyntheticMarketConfig {
    pub d: usize,
    pub k: usize,
    pub within_corr: f64,
    pub cross_corr: f64,
    pub n_days: usize,
    pub start: NaiveDate,
    /// Per-asset daily volatility drawn uniformly from this range.
    pub vol_range: (f64, f64),
    /// Per-asset daily drift drawn uniformly from this range.
    pub drift_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticMarketConfig {
    fn default() -> Self {
        Self {
            d: 50,
            k: 10,
            within_corr: 0.5,
            cross_corr: 0.1,
            n_days: 2016, // eight years of trading days
            start: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
            vol_range: (0.008, 0.025),
            drift_range: (0.0, 4e-4),
            seed: 20_240_101,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub prices: PricePanel,
    pub constituents: ConstituencyTable,
    pub benchmark_dates: Vec<NaiveDate>,
    pub benchmark_prices: Vec<f64>,
    pub spec: BlockmodelSpec,
}

/// Builds the market: correlated standardized returns are scaled by
/// per-asset volatilities and drifts, compounded into price paths, and
/// aggregated into an equal-weight benchmark.
pub fn synthetic_market(cfg: &SyntheticMarketConfig) -> Result<SyntheticMarket> {
    let spec = BlockmodelSpec::equal_blocks(
        cfg.d,
        cfg.k,
        cfg.within_corr,
        cfg.cross_corr,
        FactorLaw::Gaussian,
        cfg.seed,
    )?;
    let returns = sample_returns(&spec, cfg.n_days)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let vols: Vec<f64> = (0..cfg.d)
        .map(|_| rng.gen_range(cfg.vol_range.0..cfg.vol_range.1))
        .collect();
    let drifts: Vec<f64> = (0..cfg.d)
        .map(|_| rng.gen_range(cfg.drift_range.0..cfg.drift_range.1))
        .collect();

    let dates = crate::blocksim::trading_days(cfg.start, cfg.n_days);
    let mut prices = Array2::zeros((cfg.n_days, cfg.d));
    for c in 0..cfg.d {
        prices[[0, c]] = 100.0;
        for r in 1..cfg.n_days {
            let ret = (drifts[c] + vols[c] * returns.values()[[r, c]]).max(-0.9);
            prices[[r, c]] = prices[[r - 1, c]] * (1.0 + ret);
        }
    }

    let benchmark_prices: Vec<f64> = (0..cfg.n_days)
        .map(|r| {
            100.0 / cfg.d as f64
                * (0..cfg.d)
                    .map(|c| prices[[r, c]] / prices[[0, c]])
                    .sum::<f64>()
        })
        .collect();

    let tickers: Vec<String> = crate::blocksim::asset_names(cfg.d);
    let constituents =
        ConstituencyTable::full_membership(&tickers, dates[0], dates[cfg.n_days - 1]);
    let prices = PricePanel::new(dates.clone(), tickers, prices)?;
    Ok(SyntheticMarket {
        prices,
        constituents,
        benchmark_dates: dates,
        benchmark_prices,
        spec,
    })
}
