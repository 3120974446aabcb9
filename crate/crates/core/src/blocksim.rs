//! Synthetic correlation-blockmodel generation and recovery diagnostics.
//!
//! A blockmodel draws each standardized return as a shared per-cluster factor
//! plus idiosyncratic noise, so the population correlation matrix is constant
//! within and across blocks. That makes ground truth available: the coarsest
//! partition, the separation between blocks, and the sampling error of
//! correlation differences can all be measured exactly.

use chrono::{Datelike, NaiveDate, Weekday};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acc::{acc, AccConfig, Partition};
use crate::corrcore::{
    cord_matrix, sample_correlation, standardize, CorrelationMatrix, ReturnsPanel,
};
use crate::error::{Error, Result};

/// Distribution of the i.i.d. variates driving factors and noise.
///
/// Every law is rescaled to unit variance so the blockmodel covariance comes
/// out the same; only the tail weight changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum FactorLaw {
    #[default]
    Gaussian,
    StudentT { dof: f64 },
    Laplace,
}


impl FactorLaw {
    /// One standardized (mean 0, variance 1) draw.
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            FactorLaw::Gaussian => rng.sample(rand_distr::StandardNormal),
            FactorLaw::StudentT { dof } => {
                let t: f64 = rng.sample(rand_distr::StudentT::new(dof).expect("dof checked"));
                t * ((dof - 2.0) / dof).sqrt()
            }
            FactorLaw::Laplace => {
                let mut p: f64 = rng.gen();
                if p == 0.0 {
                    p = f64::MIN_POSITIVE;
                }
                // inverse CDF with scale 1/sqrt(2) for unit variance
                let b = std::f64::consts::FRAC_1_SQRT_2;
                if p < 0.5 {
                    b * (2.0 * p).ln()
                } else {
                    -b * (2.0 * (1.0 - p)).ln()
                }
            }
        }
    }
}

/// Ground-truth description of a correlation blockmodel.
#[derive(Debug, Clone)]
pub struct BlockmodelSpec {
    assignment: Vec<usize>,
    k: usize,
    sigma_f: Array2<f64>,
    law: FactorLaw,
    seed: u64,
}

impl BlockmodelSpec {
    /// Validates the assignment, the factor covariance (symmetric PSD with
    /// diagonal in [0, 1]), and the law parameters.
    pub fn new(assignment: Vec<usize>, sigma_f: Array2<f64>, law: FactorLaw, seed: u64) -> Result<Self> {
        let d = assignment.len();
        if d == 0 {
            return Err(Error::InvalidSpec("no assets".into()));
        }
        let k = assignment.iter().max().unwrap() + 1;
        let mut seen = vec![false; k];
        for &z in &assignment {
            seen[z] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::InvalidSpec("cluster labels are not contiguous".into()));
        }
        if sigma_f.dim() != (k, k) {
            return Err(Error::InvalidSpec(format!(
                "factor covariance is {:?}, need {k}x{k}",
                sigma_f.dim()
            )));
        }
        for a in 0..k {
            let var = sigma_f[[a, a]];
            if !(0.0..=1.0 + 1e-12).contains(&var) {
                return Err(Error::InvalidSpec(format!(
                    "factor variance sigma_{a}^2 = {var} outside [0, 1]"
                )));
            }
            for b in 0..a {
                if (sigma_f[[a, b]] - sigma_f[[b, a]]).abs() > 1e-12 {
                    return Err(Error::InvalidSpec("factor covariance not symmetric".into()));
                }
            }
        }
        if min_eigenvalue(&sigma_f)? < -1e-10 {
            return Err(Error::InvalidSpec(
                "factor covariance is not positive semidefinite".into(),
            ));
        }
        if let FactorLaw::StudentT { dof } = law {
            if dof <= 2.0 {
                return Err(Error::InvalidSpec(format!(
                    "student_t needs dof > 2 for finite variance, got {dof}"
                )));
            }
        }
        Ok(Self {
            assignment,
            k,
            sigma_f,
            law,
            seed,
        })
    }

    /// `k` blocks of (near-)equal size with common within-block correlation
    /// and a single cross-block correlation.
    pub fn equal_blocks(
        d: usize,
        k: usize,
        within_corr: f64,
        cross_corr: f64,
        law: FactorLaw,
        seed: u64,
    ) -> Result<Self> {
        if k == 0 || k > d {
            return Err(Error::InvalidSpec(format!("cannot split {d} assets into {k} blocks")));
        }
        let base = d / k;
        let extra = d % k;
        let mut assignment = Vec::with_capacity(d);
        for block in 0..k {
            let size = base + usize::from(block < extra);
            assignment.extend(std::iter::repeat_n(block, size));
        }
        let sigma_f = Array2::from_shape_fn((k, k), |(a, b)| {
            if a == b {
                within_corr
            } else {
                cross_corr
            }
        });
        Self::new(assignment, sigma_f, law, seed)
    }

    pub fn d(&self) -> usize {
        self.assignment.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn sigma_f(&self) -> &Array2<f64> {
        &self.sigma_f
    }

    pub fn law(&self) -> FactorLaw {
        self.law
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// The generating assignment as a partition (not necessarily coarsest).
    pub fn truth(&self) -> Partition {
        Partition::from_assignment(self.assignment.clone()).expect("validated at construction")
    }

    /// Student-t with dof <= 4 violates the alpha-sub-exponential tail
    /// condition; such runs are flagged in experiment output.
    pub fn heavy_tail_stress(&self) -> bool {
        matches!(self.law, FactorLaw::StudentT { dof } if dof <= 4.0)
    }
}

fn min_eigenvalue(m: &Array2<f64>) -> Result<f64> {
    let k = m.nrows();
    let dm = nalgebra::DMatrix::from_fn(k, k, |i, j| m[[i, j]]);
    let eig = nalgebra::SymmetricEigen::try_new(dm, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::EigenFailure("eigensolver did not converge".into()))?;
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Symmetric PSD square root via eigendecomposition, clipping tiny negative
/// eigenvalues to zero.
fn psd_sqrt(m: &Array2<f64>) -> Result<Array2<f64>> {
    let k = m.nrows();
    let dm = nalgebra::DMatrix::from_fn(k, k, |i, j| m[[i, j]]);
    let eig = nalgebra::SymmetricEigen::try_new(dm, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::EigenFailure("eigensolver did not converge".into()))?;
    let roots: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let q = &eig.eigenvectors;
    let mut out = Array2::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for (c, r) in roots.iter().enumerate() {
                s += q[(i, c)] * r * q[(j, c)];
            }
            out[[i, j]] = s;
        }
    }
    Ok(out)
}

/// Synthetic asset names `A000`, `A001`, ...
pub fn asset_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("A{i:03}")).collect()
}

/// `n` consecutive weekdays starting at `start` (weekends skipped).
pub fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut day = start;
    while out.len() < n {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day = day.succ_opt().expect("date range");
    }
    out
}

/// Population correlation implied by the blockmodel: `Sigma_F[z(i), z(j)]`
/// off the diagonal, ones on it.
pub fn implied_correlation(spec: &BlockmodelSpec) -> Result<CorrelationMatrix> {
    let d = spec.d();
    let z = spec.assignment();
    let rho = Array2::from_shape_fn((d, d), |(i, j)| {
        if i == j {
            1.0
        } else {
            spec.sigma_f[[z[i], z[j]]]
        }
    });
    if min_eigenvalue(&rho)? < -1e-10 {
        return Err(Error::InvalidSpec(
            "implied correlation is not positive semidefinite".into(),
        ));
    }
    CorrelationMatrix::new(asset_names(d), rho)
}

/// Draws `n` i.i.d. return vectors `X_i = F_{z(i)} + U_i`, reproducible from
/// the spec seed.
pub fn sample_returns(spec: &BlockmodelSpec, n: usize) -> Result<ReturnsPanel> {
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    let d = spec.d();
    let k = spec.k();
    let factor_root = psd_sqrt(&spec.sigma_f)?;
    let noise_sd: Vec<f64> = spec
        .assignment()
        .iter()
        .map(|&z| (1.0 - spec.sigma_f[[z, z]]).max(0.0).sqrt())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Array2::zeros((n, d));
    let mut xi = vec![0.0; k];
    let mut factors = vec![0.0; k];
    for r in 0..n {
        for x in xi.iter_mut() {
            *x = spec.law.sample(&mut rng);
        }
        for (a, f) in factors.iter_mut().enumerate() {
            *f = (0..k).map(|b| factor_root[[a, b]] * xi[b]).sum();
        }
        for (i, &z) in spec.assignment().iter().enumerate() {
            values[[r, i]] = factors[z] + noise_sd[i] * spec.law.sample(&mut rng);
        }
    }
    let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    ReturnsPanel::new(trading_days(start, n), asset_names(d), values)
}

/// Groups assets whose CORD is at most `tol` and transitively closes.
///
/// With `tol = 0` on an exact blockmodel correlation the relation is provably
/// transitive. For `tol > 0` a failed transitivity check is reported rather
/// than silently closed, since closure could chain distinct blocks.
pub fn coarsest_partition(corr: &CorrelationMatrix, tol: f64) -> Result<Partition> {
    let d = corr.dim();
    let cord = cord_matrix(corr)?;
    let cv = cord.values();
    let mut parent: Vec<usize> = (0..d).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..d {
        for j in (i + 1)..d {
            if cv[[i, j]] <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            if find(&mut parent, i) == find(&mut parent, j) && cv[[i, j]] > tol {
                return Err(Error::NotTransitive(i, j));
            }
        }
    }
    let mut label_of_root = vec![usize::MAX; d];
    let mut assignment = vec![0usize; d];
    let mut next = 0;
    for i in 0..d {
        let r = find(&mut parent, i);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = next;
            next += 1;
        }
        assignment[i] = label_of_root[r];
    }
    Partition::from_assignment(assignment)
}

/// Smallest CORD between assets in different true clusters; infinite for a
/// single cluster.
pub fn min_separation(corr: &CorrelationMatrix, truth: &Partition) -> f64 {
    assert_eq!(corr.dim(), truth.d(), "dimension mismatch");
    let cord = cord_matrix(corr).expect("d >= 2");
    let cv = cord.values();
    let labels = truth.labels();
    let mut min = f64::INFINITY;
    for i in 0..truth.d() {
        for j in (i + 1)..truth.d() {
            if labels[i] != labels[j] {
                min = min.min(cv[[i, j]]);
            }
        }
    }
    min
}

/// `max_{i,j,l} |(rho_hat_il - rho_hat_jl) - (rho_il - rho_jl)|`, the sampling
/// error of correlation differences.
pub fn cord_sampling_error(corr_hat: &CorrelationMatrix, corr_true: &CorrelationMatrix) -> f64 {
    assert_eq!(corr_hat.dim(), corr_true.dim(), "dimension mismatch");
    let d = corr_hat.dim();
    let h = corr_hat.values();
    let t = corr_true.values();
    let mut worst = 0.0_f64;
    // the max over (i, j) for fixed l is the range of column l of the error
    for l in 0..d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..d {
            let e = h[[i, l]] - t[[i, l]];
            lo = lo.min(e);
            hi = hi.max(e);
        }
        worst = worst.max(hi - lo);
    }
    worst
}

/// Chance-corrected pair-counting agreement between two partitions.
pub fn adjusted_rand(p1: &Partition, p2: &Partition) -> f64 {
    assert_eq!(p1.d(), p2.d(), "dimension mismatch");
    let n = p1.d();
    let mut contingency = vec![vec![0u64; p2.k()]; p1.k()];
    for i in 0..n {
        contingency[p1.labels()[i]][p2.labels()[i]] += 1;
    }
    let comb2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut index = 0.0;
    for row in &contingency {
        for &c in row {
            index += comb2(c);
        }
    }
    let row_sum: f64 = contingency.iter().map(|r| comb2(r.iter().sum())).sum();
    let col_sum: f64 = (0..p2.k())
        .map(|j| comb2(contingency.iter().map(|r| r[j]).sum()))
        .sum();
    let total = comb2(n as u64);
    let expected = row_sum * col_sum / total;
    let max = 0.5 * (row_sum + col_sum);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Outcome of one simulate-recover-compare trial.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryResult {
    pub exact: bool,
    pub ari: f64,
    pub tau: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub k_found: usize,
}

/// Samples a panel, runs the full clustering driver, and compares against the
/// coarsest partition of the implied correlation.
pub fn recovery_trial(spec: &BlockmodelSpec, n: usize, acc_cfg: &AccConfig) -> Result<RecoveryResult> {
    let panel = sample_returns(spec, n)?;
    let result = acc(&panel, acc_cfg)?;
    let implied = implied_correlation(spec)?;
    let truth = coarsest_partition(&implied, 0.0)?;
    let rho_hat = sample_correlation(&standardize(&panel)?)?;
    Ok(RecoveryResult {
        exact: result.partition.same_clustering(&truth),
        ari: adjusted_rand(&result.partition, &truth),
        tau: cord_sampling_error(&rho_hat, &implied),
        delta: min_separation(&implied, &truth),
        epsilon: result.epsilon,
        k_found: result.partition.k(),
    })
}

/// JSON description of a simulation experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    #[serde(alias = "K")]
    pub k: usize,
    #[serde(default)]
    pub within_corr: Option<f64>,
    #[serde(default)]
    pub cross_corr: Option<f64>,
    /// Explicit factor covariance; overrides within/cross when present.
    #[serde(default, alias = "Sigma_F")]
    pub sigma_f: Option<Vec<Vec<f64>>>,
    pub n: usize,
    pub trials: usize,
    #[serde(default)]
    pub distribution: FactorLaw,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub acc: AccConfig,
}

impl ExperimentConfig {
    /// Blockmodel for one trial; trial index offsets the seed so trials are
    /// independent streams regardless of scheduling.
    pub fn spec_for_trial(&self, trial: usize) -> Result<BlockmodelSpec> {
        let seed = self.seed.wrapping_add(trial as u64);
        if let Some(rows) = &self.sigma_f {
            if rows.len() != self.k || rows.iter().any(|r| r.len() != self.k) {
                return Err(Error::InvalidSpec(format!(
                    "sigma_f must be {k}x{k}",
                    k = self.k
                )));
            }
            let sigma = Array2::from_shape_fn((self.k, self.k), |(i, j)| rows[i][j]);
            let base = d_assignment(self.d, self.k);
            BlockmodelSpec::new(base, sigma, self.distribution, seed)
        } else {
            let within = self.within_corr.ok_or_else(|| {
                Error::InvalidSpec("need within_corr (or sigma_f)".into())
            })?;
            let cross = self.cross_corr.ok_or_else(|| {
                Error::InvalidSpec("need cross_corr (or sigma_f)".into())
            })?;
            BlockmodelSpec::equal_blocks(self.d, self.k, within, cross, self.distribution, seed)
        }
    }
}

fn d_assignment(d: usize, k: usize) -> Vec<usize> {
    let base = d / k;
    let extra = d % k;
    let mut out = Vec::with_capacity(d);
    for block in 0..k {
        out.extend(std::iter::repeat_n(block, base + usize::from(block < extra)));
    }
    out
}

/// One CSV row per trial.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRow {
    pub seed: u64,
    pub exact: bool,
    pub ari: f64,
    pub tau: f64,
    pub delta: f64,
    pub epsilon_star: f64,
    pub k_found: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub trials: usize,
    pub recovery_rate: f64,
    pub mean_ari: f64,
    pub mean_tau: f64,
    pub heavy_tail_stress: bool,
}

/// Runs all trials (in parallel; each owns its seed stream) and summarizes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Vec<TrialRow>, ExperimentSummary)> {
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("trials must be positive".into()));
    }
    let results: Vec<Result<TrialRow>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let spec = cfg.spec_for_trial(t)?;
            let r = recovery_trial(&spec, cfg.n, &cfg.acc)?;
            Ok(TrialRow {
                seed: spec.seed(),
                exact: r.exact,
                ari: r.ari,
                tau: r.tau,
                delta: r.delta,
                epsilon_star: r.epsilon,
                k_found: r.k_found,
            })
        })
        .collect();
    let mut rows = Vec::with_capacity(cfg.trials);
    for r in results {
        rows.push(r?);
    }
    let trials = rows.len();
    let summary = ExperimentSummary {
        trials,
        recovery_rate: rows.iter().filter(|r| r.exact).count() as f64 / trials as f64,
        mean_ari: rows.iter().map(|r| r.ari).sum::<f64>() / trials as f64,
        mean_tau: rows.iter().map(|r| r.tau).sum::<f64>() / trials as f64,
        heavy_tail_stress: cfg.spec_for_trial(0)?.heavy_tail_stress(),
    };
    Ok((rows, summary))
}
