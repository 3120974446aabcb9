//! Correlation-blockmodel clustering of financial assets, representative-stock
//! selection, portfolio allocation, and backtesting.
//!
//! The pipeline works on a panel of asset returns:
//!
//! 1. [`corrcore`]: standardization, sample correlation, and the CORD
//!    dissimilarity (the maximum difference between two assets' correlations
//!    with every third asset).
//! 2. [`tailest`]: heavy-tailedness estimation `(alpha, L)` from whitened
//!    returns via log-quantile regression.
//! 3. [`acc`]: threshold-based partitioning with a data-driven search range
//!    and intra-cluster-correlation tuning.
//! 4. [`alloc`]: lowest-variance representative per cluster plus risk parity,
//!    minimum-variance, mean-variance, and beta-hedged weights.
//! 5. [`backtest`]: universe filtering, scheduled rebalancing, accounting,
//!    and performance metrics.
//!
//! [`blocksim`] generates synthetic blockmodel panels with known ground truth
//! so cluster recovery can be measured, and [`baselines`] provides
//! single-linkage and k-medoids comparison clusterers.

pub mod acc;
pub mod alloc;
pub mod backtest;
pub mod baselines;
pub mod blocksim;
pub mod corrcore;
pub mod error;
pub mod tailest;

pub use error::{Error, Result};
