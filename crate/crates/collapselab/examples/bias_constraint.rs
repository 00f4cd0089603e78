//! A bias term under an active norm constraint caps how many modes can
//! survive: with weak augmentation each retained mode consumes about half
//! the norm budget, so a unit target keeps at most two.
//!
//! Run with: cargo run --release --example bias_constraint

use collapselab::datamodel::CovarianceModel;
use collapselab::losses::{Kappa, LossSpec};
use collapselab::solver::bias_constrained_solutions;
use collapselab::spectra::SymMatrix;

fn main() {
    let a: Vec<f64> = (0..8).map(|i| 1.0 + 0.1 * i as f64).collect();
    let c: Vec<f64> = a.iter().map(|v| 1e-3 * v).collect();
    let cov = CovarianceModel::new(SymMatrix::diagonal(&a), SymMatrix::diagonal(&c)).unwrap();
    let spec = LossSpec::infonce()
        .with_normalization(Kappa::Infinite, 1.0)
        .with_bias();
    let sols = bias_constrained_solutions(&spec, &cov, 8).unwrap();
    println!(
        "8 feature modes, target 1: {} feasible solutions, none keeping more than {} modes",
        sols.points.len(),
        sols.max_d_m
    );

    let tight = LossSpec::beta_infonce(0.0)
        .with_normalization(Kappa::Infinite, 0.2)
        .with_bias();
    let cov2 = CovarianceModel::new(
        SymMatrix::identity(3),
        SymMatrix::identity(3).scale(0.5),
    )
    .unwrap();
    let sols2 = bias_constrained_solutions(&tight, &cov2, 3).unwrap();
    println!(
        "tight target 0.2 below every mode ratio 1/3: complete collapse possible = {}",
        sols2.complete_collapse_possible
    );
}
