//! Numeric kernels: standardization, sample correlation, the CORD
//! dissimilarity, and symmetric inverse square roots.
//!
//! CORD (correlation difference) between assets `i` and `j` is the largest
//! absolute difference between their correlations with any third asset:
//! `max_{l != i,j} |rho_il - rho_jl|`. Two assets with CORD zero are
//! interchangeable with respect to the rest of the universe.

use chrono::NaiveDate;
use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dated n x d matrix of simple returns (rows = periods, columns = assets).
#[derive(Debug, Clone)]
pub struct ReturnsPanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    values: Array2<f64>,
}

impl ReturnsPanel {
    /// Validates shape, finiteness, and strictly increasing dates.
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let (n, d) = values.dim();
        if n < 2 {
            return Err(Error::TooFewRows(n));
        }
        if d == 0 || tickers.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{} tickers for {} columns",
                tickers.len(),
                d
            )));
        }
        if dates.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} dates for {} rows",
                dates.len(),
                n
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::NonMonotoneDates(0));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("returns contain non-finite values".into()));
        }
        Ok(Self { dates, tickers, values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.values.ncols()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Panel whose columns have mean 0 and sample standard deviation 1.
///
/// Only produced by [`standardize`], so the invariant holds by construction.
#[derive(Debug, Clone)]
pub struct StandardizedPanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    values: Array2<f64>,
}

impl StandardizedPanel {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.values.ncols()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Symmetric d x d correlation matrix with unit diagonal.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    tickers: Vec<String>,
    values: Array2<f64>,
}

impl CorrelationMatrix {
    /// Validates symmetry, unit diagonal, and the [-1, 1] entry range
    /// (all within 1e-12).
    pub fn new(tickers: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c || tickers.len() != r {
            return Err(Error::DimensionMismatch(format!(
                "correlation matrix {}x{} with {} tickers",
                r,
                c,
                tickers.len()
            )));
        }
        const TOL: f64 = 1e-12;
        for i in 0..r {
            if (values[[i, i]] - 1.0).abs() > TOL {
                return Err(Error::InvalidConfig(format!(
                    "correlation diagonal entry {} is {}",
                    i,
                    values[[i, i]]
                )));
            }
            for j in 0..i {
                if (values[[i, j]] - values[[j, i]]).abs() > TOL {
                    return Err(Error::InvalidConfig(format!(
                        "correlation matrix not symmetric at ({i}, {j})"
                    )));
                }
                if values[[i, j]].abs() > 1.0 + TOL {
                    return Err(Error::InvalidConfig(format!(
                        "correlation entry ({i}, {j}) = {} outside [-1, 1]",
                        values[[i, j]]
                    )));
                }
            }
        }
        Ok(Self { tickers, values })
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

    /// `rho^{-1/2}` via [`inv_sqrt_sym`].
    pub fn inv_sqrt(&self, eig_floor: f64) -> Result<Array2<f64>> {
        inv_sqrt_sym(&self.values, eig_floor)
    }
}

/// Symmetric non-negative d x d dissimilarity matrix with zero diagonal.
#[derive(Debug, Clone)]
pub struct DissimilarityMatrix {
    tickers: Vec<String>,
    values: Array2<f64>,
}

impl DissimilarityMatrix {
    pub fn new(tickers: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c || tickers.len() != r {
            return Err(Error::DimensionMismatch(format!(
                "dissimilarity matrix {}x{} with {} tickers",
                r,
                c,
                tickers.len()
            )));
        }
        for i in 0..r {
            if values[[i, i]] != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "dissimilarity diagonal entry {i} is nonzero"
                )));
            }
            for j in 0..i {
                if values[[i, j]] != values[[j, i]] || values[[i, j]] < 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "dissimilarity entry ({i}, {j}) invalid"
                    )));
                }
            }
        }
        Ok(Self { tickers, values })
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
}

/// Centers each column and scales it to sample standard deviation 1
/// (denominator n-1).
pub fn standardize(panel: &ReturnsPanel) -> Result<StandardizedPanel> {
    let n = panel.n_rows();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    let mut values = panel.values.clone();
    for (c, mut col) in values.columns_mut().into_iter().enumerate() {
        let mean = col.sum() / n as f64;
        col.mapv_inplace(|v| v - mean);
        let ssd: f64 = col.iter().map(|v| v * v).sum();
        if ssd == 0.0 {
            return Err(Error::ConstantColumn(panel.tickers[c].clone()));
        }
        let sd = (ssd / (n as f64 - 1.0)).sqrt();
        col.mapv_inplace(|v| v / sd);
    }
    Ok(StandardizedPanel {
        dates: panel.dates.clone(),
        tickers: panel.tickers.clone(),
        values,
    })
}

/// Sample correlation `X*^T X* / (n-1)` of a standardized panel.
///
/// The diagonal is set to exactly 1 and off-diagonals are clamped to
/// [-1, 1] to absorb last-ulp rounding.
pub fn sample_correlation(std_panel: &StandardizedPanel) -> Result<CorrelationMatrix> {
    let n = std_panel.n_rows();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    let x = std_panel.values();
    let mut rho = x.t().dot(x);
    rho.mapv_inplace(|v| (v / (n as f64 - 1.0)).clamp(-1.0, 1.0));
    for i in 0..rho.nrows() {
        rho[[i, i]] = 1.0;
    }
    Ok(CorrelationMatrix {
        tickers: std_panel.tickers.to_vec(),
        values: rho,
    })
}

fn seg_max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// CORD entry for one pair: `max_{l != i,j} |rho_il - rho_jl|`.
///
/// The max over an empty set (d = 2) is 0, so a two-asset universe always
/// merges. The excluded positions split the scan into three contiguous
/// segments, keeping the hot loop branch-free.
fn cord_entry(row_i: &[f64], row_j: &[f64], i: usize, j: usize) -> f64 {
    debug_assert!(i < j);
    seg_max_abs_diff(&row_i[..i], &row_j[..i])
        .max(seg_max_abs_diff(&row_i[i + 1..j], &row_j[i + 1..j]))
        .max(seg_max_abs_diff(&row_i[j + 1..], &row_j[j + 1..]))
}

/// Full CORD dissimilarity matrix.
///
/// Rows are computed in parallel; every entry depends only on the two rows of
/// `corr` involved, so the result is identical for any thread count.
pub fn cord_matrix(corr: &CorrelationMatrix) -> Result<DissimilarityMatrix> {
    let d = corr.dim();
    if d < 2 {
        return Err(Error::DimensionMismatch(
            "CORD needs at least 2 assets".into(),
        ));
    }
    let rho = corr.values();
    let row = |i: usize| rho.row(i).to_slice().expect("row-major storage");
    let rows: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..d)
                .map(|j| cord_entry(row(i), row(j), i, j))
                .collect()
        })
        .collect();
    let mut out = Array2::zeros((d, d));
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    Ok(DissimilarityMatrix {
        tickers: corr.tickers.to_vec(),
        values: out,
    })
}

/// Inverse square root of a symmetric matrix via eigendecomposition, with
/// eigenvalues clipped below at `eig_floor`.
///
/// For a positive-definite input whose smallest eigenvalue exceeds the floor,
/// the result `M` satisfies `M A M = I`. Singular sample correlation matrices
/// (n < d) are handled by the floor instead of failing.
pub fn inv_sqrt_sym(matrix: &Array2<f64>, eig_floor: f64) -> Result<Array2<f64>> {
    let d = matrix.nrows();
    if matrix.ncols() != d {
        return Err(Error::DimensionMismatch("inv_sqrt needs a square matrix".into()));
    }
    let m = faer::Mat::from_fn(d, d, |i, j| matrix[[i, j]]);
    let eig = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::EigenFailure(format!("{e:?}")))?;
    let floor = eig_floor.max(f64::MIN_POSITIVE);
    let s = eig.S().column_vector();
    let q = eig.U();
    // Q diag(lambda^-1/2) Q^T, symmetrized against last-ulp asymmetry
    let mut scaled = q.to_owned();
    for k in 0..d {
        let ir = 1.0 / s[k].max(floor).sqrt();
        for i in 0..d {
            scaled[(i, k)] *= ir;
        }
    }
    let prod = scaled * q.transpose();
    let mut out = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let v = 0.5 * (prod[(i, j)] + prod[(j, i)]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    Ok(out)
}
