//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Timing-sensitive criteria share a lock so wall-clock measurements are not
//! distorted by parallel test execution.

use std::sync::Mutex;
use std::time::Instant;

use blockfolio::acc::{acc, crossover_n, partition, AccConfig};
use blockfolio::alloc::{
    mean_variance_weights, min_variance_weights, risk_parity_weights, select_representatives,
    CovarianceMatrix,
};
use blockfolio::backtest::{
    performance_metrics, run_backtest, synthetic_market, BacktestConfig, ClusteringMethod,
    RebalanceFrequency, Strategy, SyntheticMarketConfig, ValueSeries,
};
use blockfolio::blocksim::{
    adjusted_rand, cord_sampling_error, coarsest_partition, implied_correlation, min_separation,
    run_experiment, trading_days, BlockmodelSpec, ExperimentConfig, FactorLaw,
};
use blockfolio::corrcore::{cord_matrix, CorrelationMatrix};
use blockfolio::tailest::fit_tail_coordinate;
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("A{i:03}")).collect()
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "{} criterion {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_01_crossover_table() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let expected = [
        (0.25, 7.97e11),
        (0.5, 3.58e5),
        (0.75, 2.74e3),
        (1.0, 240.02),
        (1.25, 55.66),
        (1.5, 21.01),
        (1.75, 10.47),
        (2.0, 6.21),
    ];
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for (alpha, want) in expected {
        let got = crossover_n(500, alpha);
        worst = worst.max((got - want).abs() / want);
    }
    let elapsed = start.elapsed();
    let pass = worst < 0.005 && elapsed.as_micros() < 1000;
    report(
        "1 (crossover table)",
        pass,
        &format!("max rel err {worst:.2e}, {} us", elapsed.as_micros()),
    );
}

// Known red: the tuning rule maximizes intra-cluster correlation, and
// dropping an asset whose sampled correlation row drifted raises that average,
// so slightly oversplit partitions inside the [5, 20] band outscore the truth
// in most trials (exact recovery lands near 10-20%). Criterion 3 verifies the
// partitioning procedure itself recovers exactly inside the provable band.
#[test]
fn criterion_02_recovery_rate() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let cfg = ExperimentConfig {
        d: 100,
        k: 10,
        within_corr: Some(0.5),
        cross_corr: Some(0.1),
        sigma_f: None,
        n: 2000,
        trials: 100,
        distribution: FactorLaw::Gaussian,
        seed: 1000,
        acc: AccConfig {
            cluster_range: (5, 20),
            ..AccConfig::default()
        },
    };
    let start = Instant::now();
    let (rows, summary) = run_experiment(&cfg).expect("experiment runs");
    let elapsed = start.elapsed();
    let exact = rows.iter().filter(|r| r.exact).count();
    let pass = exact >= 95 && summary.mean_ari >= 0.99 && elapsed.as_secs() < 60;
    report(
        "2 (blockmodel recovery)",
        pass,
        &format!(
            "exact {exact}/100, mean ARI {:.4}, {:.1} s",
            summary.mean_ari,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_03_deterministic_recovery_band() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut hits = 0;
    let total = 50;
    for _ in 0..total {
        let k = rng.gen_range(2..6);
        let d = rng.gen_range(2 * k..30.max(2 * k + 1));
        let within = rng.gen_range(0.35..0.8);
        let cross = rng.gen_range(0.0..0.2);
        let spec = BlockmodelSpec::equal_blocks(d, k, within, cross, FactorLaw::Gaussian, 0)
            .expect("valid spec");
        let rho = implied_correlation(&spec).expect("PSD");
        let truth = coarsest_partition(&rho, 0.0).expect("transitive at tol 0");
        let delta = min_separation(&rho, &truth);
        assert!(delta.is_finite() && delta > 0.0);

        // symmetric perturbation bounded by delta/10, so tau <= delta/5
        let bound = delta / 10.0;
        let mut vals = rho.values().clone();
        for i in 0..d {
            for j in 0..i {
                let e: f64 = rng.gen_range(-bound..bound);
                vals[[i, j]] += e;
                vals[[j, i]] += e;
            }
        }
        let perturbed = CorrelationMatrix::new(names(d), vals).expect("still a correlation");
        let tau = cord_sampling_error(&perturbed, &rho);
        let epsilon = delta / 2.0;
        assert!(tau <= epsilon && epsilon < delta - tau, "band construction");

        let cord_hat = cord_matrix(&perturbed).expect("d >= 2");
        let got = partition(&cord_hat, epsilon);
        if got.same_clustering(&truth) {
            hits += 1;
        }
    }
    report(
        "3 (recovery inside the tau band)",
        hits == total,
        &format!("{hits}/{total} exact"),
    );
}

#[test]
fn criterion_04_tail_fit_exactness() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let n = 2000;
    let mut worst = 0.0_f64;
    for &alpha in &[0.5, 1.0, 1.5, 2.0] {
        for &ell in &[0.5, 1.0, 2.0] {
            // exact quantiles of the survival law 2 exp(-(t/L)^alpha)
            let mut obs = Vec::with_capacity(n);
            for i in 1..n {
                let j = (n - i) as f64;
                obs.push(ell * (2.0 * n as f64 / j).ln().powf(1.0 / alpha));
            }
            obs.push(obs[n - 2] * 1.1);
            let (a, l) = fit_tail_coordinate(&obs, n / 4).expect("fit succeeds");
            worst = worst.max((a - alpha).abs()).max((l - ell).abs());
        }
    }
    report(
        "4 (tail-estimator exactness)",
        worst < 1e-6,
        &format!("max abs err {worst:.2e} over the 12-point grid"),
    );
}

#[test]
fn criterion_05_cord_oracle_equivalence() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    // independent triple-loop oracle
    fn cord_oracle(rho: &Array2<f64>) -> Array2<f64> {
        let d = rho.nrows();
        let mut out = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let mut m = 0.0_f64;
                for l in 0..d {
                    if l != i && l != j {
                        m = m.max((rho[[i, l]] - rho[[j, l]]).abs());
                    }
                }
                out[[i, j]] = m;
            }
        }
        out
    }

    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut all_equal = true;
    for _ in 0..100 {
        let d = 20;
        let g = Array2::from_shape_fn((d, d + 2), |_| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let gram = g.dot(&g.t());
        let mut rho = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                rho[[i, j]] = gram[[i, j]] / (gram[[i, i]] * gram[[j, j]]).sqrt();
            }
        }
        for i in 0..d {
            rho[[i, i]] = 1.0;
            for j in 0..i {
                let v = rho[[i, j]].clamp(-1.0, 1.0);
                rho[[i, j]] = v;
                rho[[j, i]] = v;
            }
        }
        let corr = CorrelationMatrix::new(names(d), rho.clone()).expect("valid");
        let fast = cord_matrix(&corr).expect("d >= 2");
        if fast.values() != cord_oracle(&rho) {
            all_equal = false;
        }
    }
    report(
        "5 (CORD oracle equivalence)",
        all_equal,
        "100 random 20x20 matrices, exact equality",
    );
}

#[test]
fn criterion_06_lowest_variance_selection_is_optimal() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    fn selections(clusters: &[Vec<usize>]) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = vec![vec![]];
        for members in clusters {
            let mut next = Vec::new();
            for partial in &out {
                for &m in members {
                    let mut p = partial.clone();
                    p.push(m);
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut failures = 0;
    for _ in 0..200 {
        let k = rng.gen_range(2..5);
        let sizes: Vec<usize> = (0..k).map(|_| rng.gen_range(1..4)).collect();
        let d: usize = sizes.iter().sum();
        let mut assignment = Vec::new();
        for (block, &s) in sizes.iter().enumerate() {
            assignment.extend(std::iter::repeat_n(block, s));
        }
        let within = rng.gen_range(0.3..0.8);
        let cross = rng.gen_range(0.0..0.25);
        let sigma_f = Array2::from_shape_fn((k, k), |(a, b)| if a == b { within } else { cross });
        let spec = BlockmodelSpec::new(assignment, sigma_f, FactorLaw::Gaussian, 0).expect("valid");
        let rho = implied_correlation(&spec).expect("PSD");
        let vols: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..2.0)).collect();
        let sigma =
            Array2::from_shape_fn((d, d), |(i, j)| vols[i] * vols[j] * rho.values()[[i, j]]);

        let truth = spec.truth();
        let variances: Vec<f64> = (0..d).map(|i| sigma[[i, i]]).collect();
        let chosen = select_representatives(&truth, &variances);

        let portfolio_variance = |sel: &[usize]| -> f64 {
            let sub =
                Array2::from_shape_fn((sel.len(), sel.len()), |(i, j)| sigma[[sel[i], sel[j]]]);
            let c = CovarianceMatrix::new(names(sel.len()), sub.clone()).expect("valid");
            let w = min_variance_weights(&c).expect("solves");
            (0..sel.len())
                .flat_map(|i| (0..sel.len()).map(move |j| (i, j)))
                .map(|(i, j)| w.weights[i] * sub[[i, j]] * w.weights[j])
                .sum()
        };

        let chosen_var = portfolio_variance(&chosen);
        let best_var = selections(&truth.clusters())
            .iter()
            .map(|sel| portfolio_variance(sel))
            .fold(f64::INFINITY, f64::min);
        if chosen_var > best_var + 1e-9 {
            failures += 1;
        }
    }
    report(
        "6 (lowest-variance selection optimality)",
        failures == 0,
        &format!("{failures}/200 covariances violated the bound"),
    );
}

#[test]
fn criterion_07_risk_parity_contract() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst_spread = 0.0_f64;
    for _ in 0..100 {
        let d = rng.gen_range(2..21);
        let g = Array2::from_shape_fn((d, d + 3), |_| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let sigma = g.dot(&g.t()) / (d as f64 + 3.0);
        let c = CovarianceMatrix::new(names(d), sigma.clone()).expect("valid");
        let w = risk_parity_weights(&c).expect("risk parity converges");
        let sw: Vec<f64> = (0..d)
            .map(|i| (0..d).map(|j| sigma[[i, j]] * w.weights[j]).sum())
            .collect();
        let rc: Vec<f64> = w.weights.iter().zip(&sw).map(|(wi, si)| wi * si).collect();
        let max = rc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = rc.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = rc.iter().sum::<f64>() / d as f64;
        worst_spread = worst_spread.max((max - min) / mean);
    }

    // diagonal covariances must give inverse-volatility weights
    let mut worst_diag = 0.0_f64;
    for _ in 0..20 {
        let d = rng.gen_range(2..15);
        let vars: Vec<f64> = (0..d).map(|_| rng.gen_range(0.25..4.0)).collect();
        let sigma = Array2::from_shape_fn((d, d), |(i, j)| if i == j { vars[i] } else { 0.0 });
        let c = CovarianceMatrix::new(names(d), sigma).expect("valid");
        let w = risk_parity_weights(&c).expect("diagonal risk parity");
        let inv_vol: Vec<f64> = vars.iter().map(|v| 1.0 / v.sqrt()).collect();
        let total: f64 = inv_vol.iter().sum();
        for (wi, iv) in w.weights.iter().zip(&inv_vol) {
            worst_diag = worst_diag.max((wi - iv / total).abs());
        }
    }
    let pass = worst_spread < 1e-6 && worst_diag < 1e-8;
    report(
        "7 (risk parity contract)",
        pass,
        &format!("max rel contribution spread {worst_spread:.2e}, max inverse-vol err {worst_diag:.2e}"),
    );
}

#[test]
fn criterion_08_allocator_closed_forms() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let uncorr = CovarianceMatrix::new(
        names(2),
        Array2::from_shape_fn((2, 2), |(i, j)| if i == j { [1.0, 4.0][i] } else { 0.0 }),
    )
    .expect("valid");
    let w = min_variance_weights(&uncorr).expect("closed form");
    let mv_err = (w.weights[0] - 0.8).abs().max((w.weights[1] - 0.2).abs());

    let unit = CovarianceMatrix::new(names(2), Array2::eye(2)).expect("valid");
    let w = mean_variance_weights(&unit, &[0.05, 0.15], 0.10).expect("binding solution");
    let mvo_err = (w.weights[0] - 0.5).abs().max((w.weights[1] - 0.5).abs());

    let infeasible = matches!(
        mean_variance_weights(&unit, &[0.05, 0.15], 0.20),
        Err(blockfolio::Error::Infeasible { .. })
    );

    let pass = mv_err < 1e-8 && mvo_err < 1e-8 && infeasible;
    report(
        "8 (allocator closed forms)",
        pass,
        &format!("min-var err {mv_err:.2e}, mean-var err {mvo_err:.2e}, infeasible detected: {infeasible}"),
    );
}

#[test]
fn criterion_09_accounting_golden() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    // hand-checked metric cases
    let start = trading_days(chrono::NaiveDate::from_ymd_opt(2001, 2, 1).unwrap(), 4);
    let vami = performance_metrics(
        &ValueSeries::new(start[..3].to_vec(), vec![1000.0, 1100.0, 990.0]).unwrap(),
        None,
        0.0,
    )
    .expect("metrics");
    let vami_ok = (vami.ending_vami - 990.0).abs() < 1e-12;

    let dd = performance_metrics(
        &ValueSeries::new(start.clone(), vec![100.0, 120.0, 60.0, 130.0]).unwrap(),
        None,
        0.0,
    )
    .expect("metrics");
    let dd_ok = (dd.max_drawdown - 0.5).abs() < 1e-15 && dd.recovery_days == Some(1);

    // full report must serialize byte-identically across runs and thread counts
    let market = synthetic_market(&SyntheticMarketConfig {
        d: 12,
        k: 3,
        n_days: 700,
        ..SyntheticMarketConfig::default()
    })
    .expect("market builds");
    let cfg = BacktestConfig {
        window: 120,
        min_history: 120,
        frequency: RebalanceFrequency::Quarterly,
        strategy: Strategy::MinVariance,
        clustering: ClusteringMethod::Acc,
        acc: AccConfig {
            cluster_range: (2, 6),
            ..AccConfig::default()
        },
        ..BacktestConfig::default()
    };
    let run = |threads: usize| -> String {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("pool");
        pool.install(|| {
            let rep = run_backtest(
                &market.prices,
                &market.constituents,
                Some((&market.benchmark_dates, &market.benchmark_prices)),
                &cfg,
            )
            .expect("backtest runs");
            serde_json::to_string(&rep).expect("serializes")
        })
    };
    let a = run(1);
    let b = run(1);
    let c = run(4);
    let d = run(2);
    let bytes_ok = a == b && a == c && a == d;

    let pass = vami_ok && dd_ok && bytes_ok;
    report(
        "9 (accounting golden)",
        pass,
        &format!("vami {vami_ok}, drawdown {dd_ok}, byte-identical across runs/threads {bytes_ok}"),
    );
}

#[test]
fn criterion_10_synthetic_pipeline() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let market = synthetic_market(&SyntheticMarketConfig::default()).expect("market builds");
    let bench = (
        market.benchmark_dates.as_slice(),
        market.benchmark_prices.as_slice(),
    );

    let strategies = [
        Strategy::RiskParity,
        Strategy::MinVariance,
        Strategy::MeanVariance { target_annual: 0.10 },
    ];
    let frequencies = [
        RebalanceFrequency::Annual,
        RebalanceFrequency::Semiannual,
        RebalanceFrequency::Quarterly,
    ];
    let mut consistent = true;
    let mut detail = String::new();
    let mut acc_min_var_vol = None;
    for strategy in &strategies {
        for frequency in &frequencies {
            let cfg = BacktestConfig {
                strategy: strategy.clone(),
                frequency: *frequency,
                clustering: ClusteringMethod::Acc,
                acc: AccConfig {
                    cluster_range: (5, 20),
                    ..AccConfig::default()
                },
                ..BacktestConfig::default()
            };
            let rep = match run_backtest(&market.prices, &market.constituents, Some(bench), &cfg) {
                Ok(r) => r,
                Err(e) => {
                    consistent = false;
                    detail = format!("{}/{} failed: {e}", strategy.name(), frequency.name());
                    continue;
                }
            };
            let m = &rep.report;
            if let Some(calmar) = m.calmar {
                if (calmar - m.ann_return / m.max_drawdown).abs() > 1e-9 {
                    consistent = false;
                    detail = format!("calmar inconsistent for {}", strategy.name());
                }
            }
            if m.positive_periods + m.negative_periods != m.total_periods {
                consistent = false;
                detail = format!("period counts inconsistent for {}", strategy.name());
            }
            if matches!(strategy, Strategy::MinVariance)
                && matches!(frequency, RebalanceFrequency::Annual)
            {
                acc_min_var_vol = Some(m.ann_volatility);
            }
        }
    }

    // diversification sanity: ACC + min variance vs 100 random 20-stock
    // selections weighted the same way
    let acc_vol = acc_min_var_vol.expect("annual min-variance ran");
    let tickers = market.prices.tickers().to_vec();
    let mut random_vols: Vec<f64> = Vec::with_capacity(100);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9_000 + seed);
        let mut pick: Vec<String> = tickers.clone();
        for i in (1..pick.len()).rev() {
            let j = rng.gen_range(0..=i);
            pick.swap(i, j);
        }
        pick.truncate(20);
        let cfg = BacktestConfig {
            strategy: Strategy::MinVariance,
            frequency: RebalanceFrequency::Annual,
            clustering: ClusteringMethod::SingleLinkage { k: 20 },
            universe: Some(pick),
            ..BacktestConfig::default()
        };
        let rep = run_backtest(&market.prices, &market.constituents, Some(bench), &cfg)
            .expect("random-selection backtest runs");
        random_vols.push(rep.report.ann_volatility);
    }
    random_vols.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median = 0.5 * (random_vols[49] + random_vols[50]);
    let beats = random_vols.iter().filter(|v| acc_vol < **v).count();
    let diversified = acc_vol < median;

    let pass = consistent && diversified;
    report(
        "10 (synthetic end-to-end pipeline)",
        pass,
        &format!(
            "9 runs consistent: {consistent}{}; ACC vol {acc_vol:.4} vs random median {median:.4} (beats {beats}/100)",
            if detail.is_empty() { String::new() } else { format!(" [{detail}]") }
        ),
    );
}

#[test]
fn criterion_11_ari_oracle() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    fn ari_oracle(p1: &blockfolio::acc::Partition, p2: &blockfolio::acc::Partition) -> f64 {
        let n = p1.d();
        let (mut ss, mut sd, mut ds, mut dd) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
        for i in 0..n {
            for j in (i + 1)..n {
                let a = p1.labels()[i] == p1.labels()[j];
                let b = p2.labels()[i] == p2.labels()[j];
                match (a, b) {
                    (true, true) => ss += 1.0,
                    (true, false) => sd += 1.0,
                    (false, true) => ds += 1.0,
                    (false, false) => dd += 1.0,
                }
            }
        }
        let total = ss + sd + ds + dd;
        let expected = (ss + sd) * (ss + ds) / total;
        let max = 0.5 * ((ss + sd) + (ss + ds));
        if (max - expected).abs() < f64::EPSILON {
            1.0
        } else {
            (ss - expected) / (max - expected)
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut worst = 0.0_f64;
    let mut perm_ok = true;
    for _ in 0..500 {
        let d = rng.gen_range(2..13);
        let mk = |rng: &mut ChaCha8Rng| {
            let k = rng.gen_range(1..=d);
            let mut labels: Vec<usize> = (0..d).map(|_| rng.gen_range(0..k)).collect();
            for (i, l) in labels.iter_mut().enumerate().take(k) {
                *l = i;
            }
            blockfolio::acc::Partition::from_assignment(labels).expect("contiguous")
        };
        let a = mk(&mut rng);
        let b = mk(&mut rng);
        worst = worst.max((adjusted_rand(&a, &b) - ari_oracle(&a, &b)).abs());

        // permute labels of a
        let k = a.k();
        let perm: Vec<usize> = (0..k).map(|l| (l + 1) % k).collect();
        let permuted = blockfolio::acc::Partition::from_assignment(
            a.labels().iter().map(|&l| perm[l]).collect(),
        )
        .expect("still contiguous");
        if adjusted_rand(&a, &permuted) != 1.0 {
            perm_ok = false;
        }
    }
    let pass = worst < 1e-12 && perm_ok;
    report(
        "11 (adjusted Rand oracle)",
        pass,
        &format!("max abs deviation {worst:.2e} over 500 pairs; permutation invariance {perm_ok}"),
    );
}

#[test]
fn criterion_12_scaling_guard() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let time_acc = |d: usize| -> f64 {
        let spec = BlockmodelSpec::equal_blocks(d, 20, 0.5, 0.1, FactorLaw::Gaussian, 42)
            .expect("valid spec");
        let panel = blockfolio::blocksim::sample_returns(&spec, 500).expect("samples");
        let cfg = AccConfig {
            cluster_range: (1, d),
            ..AccConfig::default()
        };
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let start = Instant::now();
            let out = acc(&panel, &cfg).expect("acc runs");
            assert!(out.partition.k() >= 1);
            best = best.min(start.elapsed().as_secs_f64());
        }
        best
    };
    let t250 = time_acc(250);
    let t500 = time_acc(500);
    let ratio = t500 / t250;
    let pass = ratio <= 8.0 && t500 < 30.0;
    report(
        "12 (complexity scaling guard)",
        pass,
        &format!("t(250)={t250:.3}s, t(500)={t500:.3}s, ratio {ratio:.2} (<= 8), absolute < 30 s"),
    );
}
