//! Sweep the cluster-count band on the criterion-2 configuration.
use blockfolio::acc::AccConfig;
use blockfolio::blocksim::{run_experiment, ExperimentConfig, FactorLaw};

fn main() {
    for band in [(5usize, 20usize), (5, 15), (5, 12), (5, 11), (5, 10), (10, 10), (10, 20)] {
        let cfg = ExperimentConfig {
            d: 100, k: 10,
            within_corr: Some(0.5), cross_corr: Some(0.1), sigma_f: None,
            n: 2000, trials: 50, distribution: FactorLaw::Gaussian, seed: 1000,
            acc: AccConfig { cluster_range: band, ..AccConfig::default() },
        };
        let (rows, s) = run_experiment(&cfg).unwrap();
        let exact = rows.iter().filter(|r| r.exact).count();
        println!("band [{:2}, {:2}]: exact {:2}/50, mean ARI {:.4}, mean K {:.1}",
            band.0, band.1, exact, s.mean_ari,
            rows.iter().map(|r| r.k_found as f64).sum::<f64>() / rows.len() as f64);
    }
}
