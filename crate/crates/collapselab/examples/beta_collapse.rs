//! Entropy-weight control of dimensional collapse: at beta = 0.5 exactly
//! the modes whose augmentation variance reaches 2x the feature variance
//! are removed, and beta >= 1 never collapses anything.
//!
//! Run with: cargo run --release --example beta_collapse

use collapselab::datamodel::CovarianceModel;
use collapselab::experiments::{beta_collapse_sweep, BetaSweepAxis, SweepMode};
use collapselab::spectra::SymMatrix;
use collapselab::trainer::TrainConfig;

fn main() {
    let cov = CovarianceModel::new(
        SymMatrix::identity(5),
        SymMatrix::diagonal(&[0.0, 1.0, 2.0, 4.0, 8.0]),
    )
    .unwrap();
    let axis = BetaSweepAxis::Beta {
        values: vec![0.25, 0.5, 0.75, 1.0, 1.5],
        cov,
    };
    let out = beta_collapse_sweep(&axis, SweepMode::Analytic, &TrainConfig::default(), 0)
        .unwrap();

    println!("augmentation variances per mode: [0, 1, 2, 4, 8]");
    println!("collapse boundaries (beta* per mode): {:?}\n", out.boundaries);
    println!("{:>6}  eigenvalues of W^T W (descending)", "beta");
    for (i, &beta) in [0.25, 0.5, 0.75, 1.0, 1.5].iter().enumerate() {
        let eigs: Vec<f64> = (0..5).map(|k| out.grid.get(&[i], &format!("eig_{k}"))).collect();
        let text: Vec<String> = eigs.iter().map(|e| format!("{e:.4}")).collect();
        println!("{beta:>6}  [{}]", text.join(", "));
    }
}
