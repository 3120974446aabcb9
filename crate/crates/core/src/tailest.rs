//! Heavy-tailedness estimation.
//!
//! Returns are whitened by `rho^{-1/2}` and each coordinate's absolute values
//! are fitted against the boundary survival law `P(Y > t) = 2 exp(-(t/L)^alpha)`.
//! Its quantile function gives `log q(p) = (1/alpha) log log(2/(1-p)) + log L`,
//! so an OLS fit of log order statistics against `log log(2n/j)` estimates
//! `1/alpha` (slope) and `log L` (intercept). The per-coordinate fits are
//! aggregated conservatively: smallest `alpha`, largest `L`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::corrcore::{CorrelationMatrix, StandardizedPanel};
use crate::error::{Error, Result};

/// Tail exponent `alpha` in (0, 2] and scale constant `L > 0`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TailParams {
    pub alpha: f64,
    pub ell: f64,
}

/// Number of largest order statistics used in the regression.
#[derive(Debug, Clone, Copy)]
pub struct TailFitConfig {
    pub k: usize,
}

impl TailFitConfig {
    /// `k = floor(n * frac)`, clamped into the valid range `[2, n-1]`.
    pub fn from_fraction(n: usize, frac: f64) -> Self {
        let k = ((n as f64 * frac).floor() as usize).clamp(2, n.saturating_sub(1).max(2));
        Self { k }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k < 2 || self.k + 1 > n {
            return Err(Error::InvalidConfig(format!(
                "tail fit needs 2 <= k <= n-1, got k={} n={}",
                self.k, n
            )));
        }
        Ok(())
    }
}

/// Raw fits below this are clamped (with a warning): such values make the
/// threshold search range astronomically wide.
pub const ALPHA_FLOOR: f64 = 0.1;

/// Whitened panel `X* rho^{-1/2}` before taking absolute values.
pub fn whiten(
    std_panel: &StandardizedPanel,
    corr: &CorrelationMatrix,
    eig_floor: f64,
) -> Result<Array2<f64>> {
    if corr.dim() != std_panel.n_assets() {
        return Err(Error::DimensionMismatch(format!(
            "panel has {} assets, correlation {}",
            std_panel.n_assets(),
            corr.dim()
        )));
    }
    let m = corr.inv_sqrt(eig_floor)?;
    Ok(std_panel.values().dot(&m))
}

/// Elementwise `|X* rho^{-1/2}|`; rows are observations, columns coordinates.
pub fn whiten_abs(
    std_panel: &StandardizedPanel,
    corr: &CorrelationMatrix,
    eig_floor: f64,
) -> Result<Array2<f64>> {
    let mut w = whiten(std_panel, corr, eig_floor)?;
    w.mapv_inplace(f64::abs);
    Ok(w)
}

/// Fits `(alpha_r, L_r)` from the `k` largest of `n` sorted observations.
///
/// `obs` must be sorted ascending. The largest observation corresponds to
/// q(1) and is excluded; observation `Y(n-j)` is paired with
/// `log log(2n/j)` for `j = 1..k`.
pub fn fit_tail_coordinate(obs: &[f64], k: usize) -> Result<(f64, f64)> {
    let n = obs.len();
    if k < 2 || k + 1 > n {
        return Err(Error::InvalidConfig(format!(
            "tail fit needs 2 <= k <= n-1, got k={k} n={n}"
        )));
    }
    let mut xs = Vec::with_capacity(k);
    let mut ys = Vec::with_capacity(k);
    for j in 1..=k {
        let y = obs[n - 1 - j];
        if y <= 0.0 {
            return Err(Error::DegenerateFit {
                coord: 0,
                reason: format!("order statistic {} of {} is not positive", n - j, n),
            });
        }
        xs.push((2.0 * n as f64 / j as f64).ln().ln());
        ys.push(y.ln());
    }
    let xb = xs.iter().sum::<f64>() / k as f64;
    let yb = ys.iter().sum::<f64>() / k as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - xb) * (y - yb);
        sxx += (x - xb) * (x - xb);
    }
    let slope = sxy / sxx;
    if slope.is_nan() || slope <= 0.0 {
        return Err(Error::DegenerateFit {
            coord: 0,
            reason: format!("regression slope {slope} is not positive"),
        });
    }
    let intercept = yb - slope * xb;
    Ok((1.0 / slope, intercept.exp()))
}

/// Conservative aggregation across coordinates: `alpha = min alpha_r` clamped
/// into `(0, 2]`, `ell = max L_r`.
pub(crate) fn aggregate_fits(fits: &[(f64, f64)]) -> TailParams {
    let mut alpha = f64::INFINITY;
    let mut ell = 0.0_f64;
    for &(a, l) in fits {
        alpha = alpha.min(a);
        ell = ell.max(l);
    }
    if alpha < ALPHA_FLOOR {
        log::warn!("tail exponent fit {alpha:.4} below floor {ALPHA_FLOOR}; clamping");
        alpha = ALPHA_FLOOR;
    }
    TailParams {
        alpha: alpha.min(2.0),
        ell,
    }
}

/// Whitens the panel, fits every coordinate, and aggregates.
pub fn estimate_tail(
    std_panel: &StandardizedPanel,
    corr: &CorrelationMatrix,
    cfg: TailFitConfig,
    eig_floor: f64,
) -> Result<TailParams> {
    cfg.validate(std_panel.n_rows())?;
    let w = whiten_abs(std_panel, corr, eig_floor)?;
    let fits: Vec<Result<(f64, f64)>> = (0..w.ncols())
        .into_par_iter()
        .map(|r| {
            let mut col: Vec<f64> = w.column(r).to_vec();
            col.sort_by(|a, b| a.partial_cmp(b).expect("whitened values are finite"));
            fit_tail_coordinate(&col, cfg.k)
        })
        .collect();
    let mut ok = Vec::with_capacity(fits.len());
    for (r, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(f) => ok.push(f),
            Err(Error::DegenerateFit { reason, .. }) => {
                return Err(Error::DegenerateFit { coord: r, reason })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(aggregate_fits(&ok))
}
