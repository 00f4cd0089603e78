//! Convergence time diverges at a collapse boundary: the tracked mode's
//! curvature is proportional to the distance delta from the boundary, so
//! iterations-to-converge scale like 1/delta.
//!
//! Run with: cargo run --release --example critical_slowdown

use collapselab::datamodel::CovarianceModel;
use collapselab::losses::LossSpec;
use collapselab::spectra::SymMatrix;
use collapselab::trainer::{convergence_time_sweep, Optimizer, TrainConfig};

fn main() {
    let cov = || {
        CovarianceModel::new(SymMatrix::diagonal(&[1.0]), SymMatrix::diagonal(&[2.0])).unwrap()
    };
    // b = 2 beta - 1 crosses zero at beta = 0.5.
    let deltas = [0.4, 0.2, 0.1, 0.05, 0.025];
    let instances: Vec<_> = deltas
        .iter()
        .map(|&d| (d, LossSpec::beta_infonce(0.5 + d), cov()))
        .collect();
    let config = TrainConfig {
        optimizer: Optimizer::GradientDescent { lr: 0.05 },
        max_iters: 500_000,
        init_scale: 1e-2,
        seed: 3,
        ..TrainConfig::default()
    };
    let pts = convergence_time_sweep(&instances, 1, &config, 0).unwrap();
    println!("{:>8} {:>10} {:>12}", "delta", "iters", "iters*delta");
    for p in &pts {
        println!("{:>8} {:>10} {:>12.1}", p.param, p.iters, p.iters as f64 * p.param);
    }
    println!("\niters*delta stays near constant: the time scale diverges as 1/delta.");
}
