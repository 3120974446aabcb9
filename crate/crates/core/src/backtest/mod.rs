//! Data ingestion, universe filtering, scheduled rebalancing, accounting,
//! and performance reporting.

mod data;
mod engine;
mod metrics;
mod synthetic;

pub use data::{
    filter_universe, filter_universe_with, load_benchmark, load_constituents, load_prices,
    repair_missing, ConstituencyTable, Membership, PricePanel, MAX_MISSING_FRAC, MIN_HISTORY_DAYS,
};
pub use engine::{
    run_backtest, BacktestConfig, BacktestReport, ClusteringMethod, RebalanceFrequency,
    RebalanceRecord, Strategy,
};
pub use metrics::{
    performance_metrics, rolling_window_compare, PerformanceReport, ValueSeries, WindowCompare,
};
pub use synthetic::{synthetic_market, SyntheticMarket, SyntheticMarketConfig};
