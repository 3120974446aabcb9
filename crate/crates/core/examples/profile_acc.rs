//! Prints per-stage timings of the clustering pipeline at two problem sizes.
//!
//! Usage: cargo run --example profile_acc

use std::time::Instant;

use blockfolio::acc::{rule1_range, select_threshold, AccConfig};
use blockfolio::blocksim::{sample_returns, BlockmodelSpec, FactorLaw};
use blockfolio::corrcore::{cord_matrix, inv_sqrt_sym, sample_correlation, standardize};
use blockfolio::tailest::{estimate_tail, TailFitConfig};

fn main() {
    let n = 500;
    for d in [250usize, 500] {
        let spec = BlockmodelSpec::equal_blocks(d, 20, 0.5, 0.1, FactorLaw::Gaussian, 42)
            .expect("valid spec");
        let panel = sample_returns(&spec, n).expect("samples");

        let t0 = Instant::now();
        let std_panel = standardize(&panel).expect("non-degenerate");
        let t1 = Instant::now();
        let corr = sample_correlation(&std_panel).expect("n >= 2");
        let t2 = Instant::now();
        let cord = cord_matrix(&corr).expect("d >= 2");
        let t3 = Instant::now();
        let _m = inv_sqrt_sym(corr.values(), 1e-10).expect("eigen converges");
        let t4 = Instant::now();
        let tail = estimate_tail(
            &std_panel,
            &corr,
            TailFitConfig::from_fraction(n, 0.25),
            1e-10,
        )
        .expect("tail fit");
        let t5 = Instant::now();
        let cfg = AccConfig {
            cluster_range: (1, d),
            ..AccConfig::default()
        };
        let range = rule1_range(n, d, &tail, &cfg);
        let (eps, part) = select_threshold(&cord, &corr, &range, &cfg).expect("feasible");
        let t6 = Instant::now();

        println!(
            "d={d}: standardize {:?}, corr {:?}, cord {:?}, inv_sqrt {:?}, tail {:?}, grid {:?} -> eps {eps:.4}, K {}",
            t1 - t0,
            t2 - t1,
            t3 - t2,
            t4 - t3,
            t5 - t4,
            t6 - t5,
            part.k()
        );
    }
}
