//! Representative selection and portfolio weight computation.
//!
//! Long-only minimum variance and mean-variance are solved by an active set
//! on the nonnegativity constraints with the closed-form equality-constrained
//! inner solution; risk parity equalizes the weighted marginal risk
//! contributions `w_i (Sigma w)_i / sigma(w)`.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::acc::Partition;
use crate::error::{Error, Result};

/// Symmetric positive semidefinite covariance with non-negative diagonal.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    tickers: Vec<String>,
    values: Array2<f64>,
}

impl CovarianceMatrix {
    pub fn new(tickers: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c || tickers.len() != r || r == 0 {
            return Err(Error::DimensionMismatch(format!(
                "covariance {}x{} with {} tickers",
                r,
                c,
                tickers.len()
            )));
        }
        for i in 0..r {
            if values[[i, i]] < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "negative variance for {}",
                    tickers[i]
                )));
            }
            for j in 0..i {
                if (values[[i, j]] - values[[j, i]]).abs() > 1e-9 * (1.0 + values[[i, i]].abs()) {
                    return Err(Error::InvalidConfig("covariance not symmetric".into()));
                }
            }
        }
        Ok(Self { tickers, values })
    }

    /// Sample covariance (denominator n-1) of a returns window
    /// (rows = periods).
    pub fn from_returns(tickers: Vec<String>, returns: &Array2<f64>) -> Result<Self> {
        let (n, d) = returns.dim();
        if n < 2 {
            return Err(Error::TooFewRows(n));
        }
        let means: Vec<f64> = (0..d).map(|c| returns.column(c).sum() / n as f64).collect();
        let mut cov = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..=i {
                let mut s = 0.0;
                for r in 0..n {
                    s += (returns[[r, i]] - means[i]) * (returns[[r, j]] - means[j]);
                }
                let v = s / (n as f64 - 1.0);
                cov[[i, j]] = v;
                cov[[j, i]] = v;
            }
        }
        Self::new(tickers, cov)
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.values[[i, i]]).collect()
    }
}

/// Non-negative weights summing to one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub tickers: Vec<String>,
    pub weights: Vec<f64>,
}

/// Long stock weights plus a short benchmark leg sized to null the
/// portfolio's benchmark exposure.
///
/// Gross exposure (stocks plus the absolute benchmark leg) is one; the net
/// weight `(1-beta)/(1+beta)` is below one, the remainder sitting in cash
/// from the short sale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HedgedWeights {
    pub tickers: Vec<String>,
    pub stock_weights: Vec<f64>,
    pub benchmark_weight: f64,
    pub beta: f64,
}

/// Serialized form of an allocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsRecord {
    pub strategy: String,
    pub tickers: Vec<String>,
    pub weights: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl WeightsRecord {
    pub fn from_weights(strategy: &str, w: &PortfolioWeights) -> Self {
        Self {
            strategy: strategy.into(),
            tickers: w.tickers.clone(),
            weights: w.weights.clone(),
            benchmark_weight: None,
            beta: None,
        }
    }

    pub fn from_hedged(strategy: &str, h: &HedgedWeights) -> Self {
        Self {
            strategy: strategy.into(),
            tickers: h.tickers.clone(),
            weights: h.stock_weights.clone(),
            benchmark_weight: Some(h.benchmark_weight),
            beta: Some(h.beta),
        }
    }
}

/// Per cluster, the index of the lowest-variance member (ties to the smaller
/// index). Returned in cluster-label order.
pub fn select_representatives(p: &Partition, variances: &[f64]) -> Vec<usize> {
    assert_eq!(p.d(), variances.len(), "variance vector length mismatch");
    p.clusters()
        .iter()
        .map(|members| {
            *members
                .iter()
                .min_by(|&&a, &&b| {
                    variances[a]
                        .partial_cmp(&variances[b])
                        .expect("finite variances")
                })
                .expect("clusters are non-empty")
        })
        .collect()
}

fn submatrix(values: &Array2<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| values[[idx[i], idx[j]]])
}

/// Solves `M x = rhs` for an SPD-up-to-ridge matrix; the ridge `1e-10 tr/n`
/// keeps singular (e.g. duplicated-asset) covariances solvable and makes the
/// symmetric tie policy explicit.
fn solve_ridged(m: &DMatrix<f64>, rhs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let n = m.nrows();
    let ridge = 1e-10 * m.trace() / n as f64;
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] += ridge;
    }
    if let Some(chol) = a.clone().cholesky() {
        return Ok(rhs.iter().map(|r| chol.solve(r)).collect());
    }
    let lu = a.lu();
    rhs.iter()
        .map(|r| {
            lu.solve(r)
                .ok_or_else(|| Error::SolverFailure("covariance system is singular".into()))
        })
        .collect()
}

const KKT_TOL: f64 = 1e-9;

fn full_sigma_w(values: &Array2<f64>, w: &[f64]) -> Vec<f64> {
    let d = values.nrows();
    (0..d)
        .map(|i| (0..d).map(|j| values[[i, j]] * w[j]).sum())
        .collect()
}

/// Long-only minimum variance: `min w' Sigma w` s.t. `sum w = 1`, `w >= 0`.
///
/// Active set on the nonnegativity constraints: solve the equality-constrained
/// problem on the support, drop the most negative weight, re-add the worst
/// dual violator, and stop when primal and dual feasibility hold.
pub fn min_variance_weights(cov: &CovarianceMatrix) -> Result<PortfolioWeights> {
    let d = cov.dim();
    let mut support: Vec<usize> = (0..d).collect();
    let ones = |n: usize| DVector::from_element(n, 1.0);
    for _ in 0..(10 * d.max(2)) {
        let sigma_s = submatrix(cov.values(), &support);
        let sol = solve_ridged(&sigma_s, &[ones(support.len())])?;
        let denom = sol[0].sum();
        if denom.abs() < f64::MIN_POSITIVE {
            return Err(Error::SolverFailure("degenerate sum constraint".into()));
        }
        let w_s: Vec<f64> = sol[0].iter().map(|v| v / denom).collect();

        if let Some((pos, _)) = w_s
            .iter()
            .enumerate()
            .filter(|(_, &w)| w < -1e-12)
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite weights"))
        {
            support.remove(pos);
            if support.is_empty() {
                return Err(Error::SolverFailure("active set emptied the support".into()));
            }
            continue;
        }

        let mut w = vec![0.0; d];
        for (s, &i) in support.iter().enumerate() {
            w[i] = w_s[s].max(0.0);
        }
        let sw = full_sigma_w(cov.values(), &w);
        let variance: f64 = w.iter().zip(&sw).map(|(wi, si)| wi * si).sum();
        let tol = KKT_TOL * variance.abs().max(1.0);
        let violator = (0..d)
            .filter(|i| !support.contains(i))
            .map(|i| (i, sw[i] - variance))
            .filter(|(_, v)| *v < -tol)
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite duals"));
        match violator {
            Some((i, _)) => {
                support.push(i);
                support.sort_unstable();
            }
            None => {
                return Ok(PortfolioWeights {
                    tickers: cov.tickers().to_vec(),
                    weights: w,
                })
            }
        }
    }
    Err(Error::SolverFailure(
        "min-variance active set exceeded its iteration budget".into(),
    ))
}

/// Long-only mean-variance: `min w' Sigma w` s.t. `w' mu >= target`,
/// `sum w = 1`, `w >= 0`.
pub fn mean_variance_weights(
    cov: &CovarianceMatrix,
    mu: &[f64],
    target: f64,
) -> Result<PortfolioWeights> {
    let d = cov.dim();
    if mu.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} expected returns for {} assets",
            mu.len(),
            d
        )));
    }
    let best = mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if target > best + 1e-12 {
        return Err(Error::Infeasible { target, best });
    }

    // if the unconstrained-by-return optimum already meets the target, the
    // return constraint is slack
    let mv = min_variance_weights(cov)?;
    let mv_return: f64 = mv.weights.iter().zip(mu).map(|(w, m)| w * m).sum();
    if mv_return >= target - 1e-12 {
        return Ok(mv);
    }

    // otherwise the return constraint binds: equality-constrained active set
    let mut support: Vec<usize> = (0..d).collect();
    for _ in 0..(10 * d.max(2)) {
        let sigma_s = submatrix(cov.values(), &support);
        let ns = support.len();
        let ones = DVector::from_element(ns, 1.0);
        let mu_s = DVector::from_fn(ns, |i, _| mu[support[i]]);
        let sol = solve_ridged(&sigma_s, &[ones.clone(), mu_s.clone()])?;
        let (inv_one, inv_mu) = (&sol[0], &sol[1]);
        let g11 = ones.dot(inv_one);
        let g12 = ones.dot(inv_mu);
        let g22 = mu_s.dot(inv_mu);
        let det = g11 * g22 - g12 * g12;
        let scale = (g11 * g22).abs().max(f64::MIN_POSITIVE);
        let (w_s, lambda, gamma) = if det.abs() < 1e-12 * scale {
            // expected returns are constant on the support; only the sum
            // constraint is informative here
            let w: Vec<f64> = inv_one.iter().map(|v| v / g11).collect();
            (w, 2.0 / g11, 0.0)
        } else {
            // G (lambda/2, gamma/2)' = (1, target)'
            let half_lambda = (g22 - g12 * target) / det;
            let half_gamma = (g11 * target - g12) / det;
            let w: Vec<f64> = (0..ns)
                .map(|i| half_lambda * inv_one[i] + half_gamma * inv_mu[i])
                .collect();
            (w, 2.0 * half_lambda, 2.0 * half_gamma)
        };

        if let Some((pos, _)) = w_s
            .iter()
            .enumerate()
            .filter(|(_, &w)| w < -1e-12)
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite weights"))
        {
            support.remove(pos);
            if support.is_empty() {
                return Err(Error::SolverFailure("active set emptied the support".into()));
            }
            continue;
        }

        let mut w = vec![0.0; d];
        for (s, &i) in support.iter().enumerate() {
            w[i] = w_s[s].max(0.0);
        }
        let sw = full_sigma_w(cov.values(), &w);
        let tol = KKT_TOL * lambda.abs().max(1.0);
        let violator = (0..d)
            .filter(|i| !support.contains(i))
            .map(|i| (i, 2.0 * sw[i] - lambda - gamma * mu[i]))
            .filter(|(_, v)| *v < -tol)
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite duals"));
        if let Some((i, _)) = violator {
            support.push(i);
            support.sort_unstable();
            continue;
        }

        let achieved: f64 = w.iter().zip(mu).map(|(wi, m)| wi * m).sum();
        if achieved < target - 1e-8 {
            return Err(Error::SolverFailure(format!(
                "return constraint missed: achieved {achieved}, target {target}"
            )));
        }
        return Ok(PortfolioWeights {
            tickers: cov.tickers().to_vec(),
            weights: w,
        });
    }
    Err(Error::SolverFailure(
        "mean-variance active set exceeded its iteration budget".into(),
    ))
}

/// Weighted marginal risk contributions `w_i (Sigma w)_i` (all share the
/// `1/sigma(w)` factor, which cancels in comparisons).
fn risk_contributions(values: &Array2<f64>, w: &[f64]) -> Vec<f64> {
    full_sigma_w(values, w)
        .iter()
        .zip(w)
        .map(|(s, wi)| wi * s)
        .collect()
}

fn contribution_spread(values: &Array2<f64>, w: &[f64]) -> f64 {
    let rc = risk_contributions(values, w);
    let max = rc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = rc.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = rc.iter().sum::<f64>() / rc.len() as f64;
    (max - min) / mean.abs().max(f64::MIN_POSITIVE)
}

/// Least-squares objective from the equal-contribution formulation.
fn risk_parity_residual(values: &Array2<f64>, w: &[f64]) -> f64 {
    let d = w.len() as f64;
    let sw = full_sigma_w(values, w);
    let variance: f64 = w.iter().zip(&sw).map(|(wi, si)| wi * si).sum();
    w.iter()
        .zip(&sw)
        .map(|(wi, si)| {
            let target = variance / (d * si);
            (wi - target) * (wi - target)
        })
        .sum()
}

/// Cyclic coordinate solver for `w_i (Sigma w)_i = lambda`: each coordinate
/// update is the positive root of a quadratic, which converges for positive
/// definite covariances where the plain fixed point may cycle.
fn risk_parity_ccd(values: &Array2<f64>, mut w: Vec<f64>) -> Vec<f64> {
    let d = w.len();
    let sw = full_sigma_w(values, &w);
    let variance: f64 = w.iter().zip(&sw).map(|(wi, si)| wi * si).sum();
    let lambda = variance / d as f64;
    for _ in 0..20_000 {
        for i in 0..d {
            let swi: f64 = (0..d).map(|j| values[[i, j]] * w[j]).sum();
            let c = swi - values[[i, i]] * w[i];
            let disc = c * c + 4.0 * values[[i, i]] * lambda;
            w[i] = (-c + disc.sqrt()) / (2.0 * values[[i, i]]);
        }
        let sw = full_sigma_w(values, &w);
        let worst = w
            .iter()
            .zip(&sw)
            .map(|(wi, si)| (wi * si - lambda).abs())
            .fold(0.0_f64, f64::max);
        if worst < 1e-14 * lambda.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let sum: f64 = w.iter().sum();
    w.iter().map(|v| v / sum).collect()
}

/// Equal-risk-contribution weights: `w >= 0`, `sum w = 1`, all
/// `w_i (Sigma w)_i / sigma(w)` equal within 1e-6 relative spread.
pub fn risk_parity_weights(cov: &CovarianceMatrix) -> Result<PortfolioWeights> {
    let d = cov.dim();
    let values = cov.values();
    for i in 0..d {
        if values[[i, i]] <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "risk parity needs positive variance for {}",
                cov.tickers()[i]
            )));
        }
    }
    let mut w = vec![1.0 / d as f64; d];
    let mut converged = false;
    for _ in 0..200 {
        let sw = full_sigma_w(values, &w);
        let variance: f64 = w.iter().zip(&sw).map(|(wi, si)| wi * si).sum();
        let mut next: Vec<f64> = sw
            .iter()
            .map(|&si| variance / (d as f64 * si.max(f64::MIN_POSITIVE)))
            .collect();
        let sum: f64 = next.iter().sum();
        for v in &mut next {
            *v /= sum;
        }
        let step = w
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        w = next;
        if step < 1e-14 {
            converged = true;
            break;
        }
    }
    if !converged || contribution_spread(values, &w) >= 1e-6 {
        // plain fixed point oscillates on strongly coupled covariances
        w = risk_parity_ccd(values, vec![1.0 / d as f64; d]);
    }
    let spread = contribution_spread(values, &w);
    let residual = risk_parity_residual(values, &w);
    if spread >= 1e-6 || residual > 1e-8 {
        return Err(Error::SolverFailure(format!(
            "risk parity did not converge: spread {spread:.2e}, residual {residual:.2e}"
        )));
    }
    Ok(PortfolioWeights {
        tickers: cov.tickers().to_vec(),
        weights: w,
    })
}

/// OLS beta: sample covariance over sample market variance (n-1 denominators).
pub fn estimate_beta(asset_returns: &[f64], market_returns: &[f64]) -> Result<f64> {
    let n = asset_returns.len();
    if n != market_returns.len() {
        return Err(Error::DimensionMismatch(format!(
            "asset series has {n} points, market {}",
            market_returns.len()
        )));
    }
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    let ma = asset_returns.iter().sum::<f64>() / n as f64;
    let mm = market_returns.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (a, m) in asset_returns.iter().zip(market_returns) {
        cov += (a - ma) * (m - mm);
        var += (m - mm) * (m - mm);
    }
    if var == 0.0 {
        return Err(Error::ZeroMarketVariance);
    }
    Ok(cov / var)
}

/// Scales stock weights by `1/(1+beta)` and shorts the benchmark by
/// `beta/(1+beta)`, so total weights still sum to one while benchmark
/// exposure nets to zero.
///
/// A negative portfolio beta is rejected: the construction assumes a long
/// exposure hedged by a short index leg, and the sum-to-one property fails
/// otherwise.
pub fn beta_hedge(w: &PortfolioWeights, betas: &[f64]) -> Result<HedgedWeights> {
    if betas.len() != w.weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} betas for {} weights",
            betas.len(),
            w.weights.len()
        )));
    }
    let beta: f64 = w.weights.iter().zip(betas).map(|(wi, b)| wi * b).sum();
    if 1.0 + beta <= 1e-6 {
        return Err(Error::DegenerateBeta(beta));
    }
    if beta < 0.0 {
        return Err(Error::NegativeBeta(beta));
    }
    let scale = 1.0 / (1.0 + beta);
    Ok(HedgedWeights {
        tickers: w.tickers.clone(),
        stock_weights: w.weights.iter().map(|wi| wi * scale).collect(),
        benchmark_weight: -beta * scale,
        beta,
    })
}
