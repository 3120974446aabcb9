//! Threshold clustering: the PARTITION procedure, the data-driven threshold
//! search range, intra-cluster-correlation tuning, and the composed driver.
//!
//! PARTITION repeatedly takes the most similar unassigned pair. If even that
//! pair is more dissimilar than the threshold, the smaller-indexed asset
//! becomes a singleton; otherwise the pair seeds a cluster that absorbs every
//! unassigned asset within the threshold of either seed.
//!
//! The threshold itself is tuned by maximizing the average intra-cluster
//! correlation over a grid, subject to a user-set band on the cluster count.
//! The grid's range comes from the concentration rate of sampled correlation
//! differences, which switches regime at `n = (log d)^{4/alpha - 1}`.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrcore::{
    cord_matrix, sample_correlation, standardize, CorrelationMatrix, DissimilarityMatrix,
    ReturnsPanel,
};
use crate::error::{Error, Result};
use crate::tailest::{estimate_tail, TailFitConfig, TailParams};

/// Assignment of `d` assets to cluster labels `0..k`.
///
/// Labels are contiguous and every label is non-empty. Cluster 0 is the first
/// cluster discovered by whichever procedure built the partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Builds from a label vector, validating contiguity and non-emptiness.
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::InvalidConfig("empty partition".into()));
        }
        let k = assignment.iter().max().unwrap() + 1;
        let mut seen = vec![false; k];
        for &l in &assignment {
            seen[l] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::InvalidConfig(
                "partition labels are not contiguous".into(),
            ));
        }
        Ok(Self { assignment, k })
    }

    /// Builds from explicit member lists; `clusters` must cover `0..d` once.
    pub fn from_clusters(clusters: &[Vec<usize>], d: usize) -> Result<Self> {
        let mut assignment = vec![usize::MAX; d];
        for (label, members) in clusters.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidConfig(format!("cluster {label} is empty")));
            }
            for &m in members {
                if m >= d || assignment[m] != usize::MAX {
                    return Err(Error::InvalidConfig(format!(
                        "asset {m} missing or assigned twice"
                    )));
                }
                assignment[m] = label;
            }
        }
        if assignment.contains(&usize::MAX) {
            return Err(Error::InvalidConfig("partition does not cover all assets".into()));
        }
        Ok(Self {
            assignment,
            k: clusters.len(),
        })
    }

    pub fn d(&self) -> usize {
        self.assignment.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.assignment
    }

    /// Member lists in label order; members ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.assignment.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Relabels so that clusters are numbered by first occurrence, making
    /// partitions comparable independent of construction order.
    pub fn canonical(&self) -> Partition {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let mut assignment = Vec::with_capacity(self.assignment.len());
        for &l in &self.assignment {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            assignment.push(map[l]);
        }
        Partition {
            assignment,
            k: self.k,
        }
    }

    /// True when both describe the same grouping, labels aside.
    pub fn same_clustering(&self, other: &Partition) -> bool {
        self.d() == other.d() && self.canonical().assignment == other.canonical().assignment
    }
}

/// Which concentration term set the threshold search range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `n` above the crossover: range scales with `sqrt(log d / n)`.
    RootLogOverN,
    /// `n` at or below the crossover: range scales with `(log d)^{2/alpha} / n`.
    LogPowerOverN,
}

/// Threshold search interval `[lo, hi]` in correlation-difference units.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThresholdRange {
    pub lo: f64,
    pub hi: f64,
    pub regime: Regime,
}

/// Tuning parameters for the clustering driver.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AccConfig {
    /// Lower range multiplier.
    pub a: f64,
    /// Upper range multiplier.
    pub b: f64,
    /// Number of grid points over the search range (endpoints included).
    pub n_grids: usize,
    /// Inclusive band `[k_min, k_max]` on the accepted cluster count.
    pub cluster_range: (usize, usize),
    /// Absolute cap on the threshold; correlation differences never exceed 2.
    pub epsilon_cap: f64,
    /// Fraction of observations used as tail order statistics.
    pub k_frac: f64,
    /// Eigenvalue floor for whitening singular sample correlations.
    pub eig_floor: f64,
}

impl Default for AccConfig {
    fn default() -> Self {
        Self {
            a: 0.1,
            b: 10.0,
            n_grids: 100,
            cluster_range: (15, 25),
            epsilon_cap: 2.0,
            k_frac: 0.25,
            eig_floor: 1e-10,
        }
    }
}

impl AccConfig {
    /// A cluster band beyond `d` is not rejected here; it simply leaves no
    /// feasible grid point, which the threshold search reports as such.
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < self.b) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < a < b, got a={} b={}",
                self.a, self.b
            )));
        }
        if self.n_grids < 2 {
            return Err(Error::InvalidConfig("n_grids must be at least 2".into()));
        }
        let (k_min, k_max) = self.cluster_range;
        if !(1 <= k_min && k_min <= k_max) {
            return Err(Error::InvalidConfig(format!(
                "cluster range [{k_min}, {k_max}] is empty"
            )));
        }
        if self.epsilon_cap <= 0.0 {
            return Err(Error::InvalidConfig("epsilon_cap must be positive".into()));
        }
        if !(self.k_frac > 0.0 && self.k_frac < 1.0) {
            return Err(Error::InvalidConfig("k_frac must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Sample size above which `sqrt(log d / n)` dominates
/// `(log d)^{2/alpha} / n`, i.e. `(log d)^{4/alpha - 1}` (natural log).
pub fn crossover_n(d: usize, alpha: f64) -> f64 {
    (d as f64).ln().powf(4.0 / alpha - 1.0)
}

/// Threshold search range from the sample size, dimension, and tail fit.
///
/// Both ends are capped at `epsilon_cap`.
pub fn rule1_range(n: usize, d: usize, tail: &TailParams, cfg: &AccConfig) -> ThresholdRange {
    let log_d = (d as f64).ln();
    let scale = tail.ell * tail.ell;
    let (base, regime) = if (n as f64) > crossover_n(d, tail.alpha) {
        ((log_d / n as f64).sqrt(), Regime::RootLogOverN)
    } else {
        (log_d.powf(2.0 / tail.alpha) / n as f64, Regime::LogPowerOverN)
    };
    ThresholdRange {
        lo: (cfg.a * scale * base).min(cfg.epsilon_cap),
        hi: (cfg.b * scale * base).min(cfg.epsilon_cap),
        regime,
    }
}

/// All unordered pairs sorted ascending by `(dissimilarity, i, j)`.
///
/// Sharing one sorted list across grid evaluations keeps each PARTITION call
/// at O(d^2).
fn sorted_pairs(values: &Array2<f64>) -> Vec<(u32, u32)> {
    let d = values.nrows();
    let mut pairs = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in (i + 1)..d {
            pairs.push((i as u32, j as u32));
        }
    }
    pairs.sort_by(|&(ai, aj), &(bi, bj)| {
        let da = values[[ai as usize, aj as usize]];
        let db = values[[bi as usize, bj as usize]];
        da.partial_cmp(&db)
            .expect("dissimilarities are finite")
            .then(ai.cmp(&bi))
            .then(aj.cmp(&bj))
    });
    pairs
}

fn partition_presorted(values: &Array2<f64>, pairs: &[(u32, u32)], epsilon: f64) -> Partition {
    let d = values.nrows();
    let mut active = vec![true; d];
    let mut remaining = d;
    let mut assignment = vec![0usize; d];
    let mut k = 0usize;
    let mut cursor = 0usize;
    while remaining > 0 {
        if remaining == 1 {
            let i = active.iter().position(|&a| a).expect("one asset left");
            assignment[i] = k;
            k += 1;
            break;
        }
        while cursor < pairs.len() {
            let (i, j) = pairs[cursor];
            if active[i as usize] && active[j as usize] {
                break;
            }
            cursor += 1;
        }
        let (i, j) = pairs[cursor];
        let (i, j) = (i as usize, j as usize);
        if values[[i, j]] > epsilon {
            // even the closest pair is too far apart; split off the smaller index
            assignment[i] = k;
            active[i] = false;
            remaining -= 1;
        } else {
            for m in 0..d {
                if active[m] && values[[i, m]].min(values[[j, m]]) <= epsilon {
                    assignment[m] = k;
                    active[m] = false;
                    remaining -= 1;
                }
            }
        }
        k += 1;
    }
    Partition { assignment, k }
}

/// The PARTITION procedure on a dissimilarity matrix with threshold `epsilon`.
pub fn partition(dissim: &DissimilarityMatrix, epsilon: f64) -> Partition {
    let pairs = sorted_pairs(dissim.values());
    partition_presorted(dissim.values(), &pairs, epsilon)
}

/// Average sample correlation over unordered same-cluster pairs.
///
/// `None` when the partition has no intra-cluster pair (all singletons); the
/// threshold search treats that like negative infinity, so such partitions
/// are never selected.
pub fn intra_cluster_corr(p: &Partition, corr: &CorrelationMatrix) -> Option<f64> {
    assert_eq!(p.d(), corr.dim(), "partition and correlation dimensions differ");
    let rho = corr.values();
    let labels = p.labels();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..p.d() {
        for j in (i + 1)..p.d() {
            if labels[i] == labels[j] {
                sum += rho[[i, j]];
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Grid search over `[lo, hi]` maximizing intra-cluster correlation subject
/// to the cluster-count band. Ties prefer the smallest threshold.
pub fn select_threshold(
    dissim: &DissimilarityMatrix,
    corr: &CorrelationMatrix,
    range: &ThresholdRange,
    cfg: &AccConfig,
) -> Result<(f64, Partition)> {
    cfg.validate()?;
    let (k_min, k_max) = cfg.cluster_range;
    let pairs = sorted_pairs(dissim.values());
    let grid: Vec<f64> = (0..cfg.n_grids)
        .map(|g| range.lo + (range.hi - range.lo) * g as f64 / (cfg.n_grids - 1) as f64)
        .collect();
    // deterministic for any thread count: indexed collect, then a sequential
    // argmax with the smallest-epsilon tie-break
    let evals: Vec<(Partition, Option<f64>)> = grid
        .par_iter()
        .map(|&eps| {
            let p = partition_presorted(dissim.values(), &pairs, eps);
            let score = intra_cluster_corr(&p, corr);
            (p, score)
        })
        .collect();
    let mut best: Option<(f64, usize)> = None;
    for (idx, (p, score)) in evals.iter().enumerate() {
        if p.k() < k_min || p.k() > k_max {
            continue;
        }
        let Some(s) = score else { continue };
        if best.is_none_or(|(bs, _)| *s > bs) {
            best = Some((*s, idx));
        }
    }
    match best {
        Some((_, idx)) => Ok((grid[idx], evals.into_iter().nth(idx).unwrap().0)),
        None => Err(Error::NoFeasibleThreshold { k_min, k_max }),
    }
}

/// Output of the full clustering driver.
#[derive(Debug, Clone)]
pub struct AccResult {
    pub partition: Partition,
    pub tail: TailParams,
    pub range: ThresholdRange,
    pub epsilon: f64,
}

/// Full pipeline: standardize, sample correlation, CORD, tail fit, range,
/// threshold search. Deterministic given the panel and config.
pub fn acc(panel: &ReturnsPanel, cfg: &AccConfig) -> Result<AccResult> {
    cfg.validate()?;
    let std_panel = standardize(panel)?;
    let corr = sample_correlation(&std_panel)?;
    let dissim = cord_matrix(&corr)?;
    let tail = estimate_tail(
        &std_panel,
        &corr,
        TailFitConfig::from_fraction(panel.n_rows(), cfg.k_frac),
        cfg.eig_floor,
    )?;
    let range = rule1_range(panel.n_rows(), panel.n_assets(), &tail, cfg);
    let (epsilon, part) = select_threshold(&dissim, &corr, &range, cfg)?;
    Ok(AccResult {
        partition: part,
        tail,
        range,
        epsilon,
    })
}

/// Serialized form of a clustering result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub method: String,
    pub tickers: Vec<String>,
    pub labels: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intra_corr: Option<f64>,
}

impl PartitionRecord {
    /// Record for an ACC run.
    pub fn from_acc(result: &AccResult, corr: &CorrelationMatrix) -> Self {
        Self {
            method: "acc".into(),
            tickers: corr.tickers().to_vec(),
            labels: result.partition.labels().to_vec(),
            epsilon: Some(result.epsilon),
            alpha: Some(result.tail.alpha),
            ell: Some(result.tail.ell),
            range: Some([result.range.lo, result.range.hi]),
            intra_corr: intra_cluster_corr(&result.partition, corr),
        }
    }

    /// Record for a baseline clusterer (no threshold machinery).
    pub fn from_baseline(method: &str, tickers: &[String], p: &Partition) -> Self {
        Self {
            method: method.into(),
            tickers: tickers.to_vec(),
            labels: p.labels().to_vec(),
            epsilon: None,
            alpha: None,
            ell: None,
            range: None,
            intra_corr: None,
        }
    }
}
