//! Norm constraints change the collapse rules: survival depends on how a
//! mode compares to the average retained mode, so strong augmentation on
//! one mode removes it even though it would survive unconstrained.
//!
//! Run with: cargo run --release --example normalized_collapse

use collapselab::datamodel::CovarianceModel;
use collapselab::losses::{Kappa, LossSpec};
use collapselab::solver::{
    collapse_case_analysis, finite_norm_solutions, normalized_limit,
};
use collapselab::spectra::{Mask, SymMatrix};

fn main() {
    // Hard-constraint solution and its finite-strength approach.
    let cov = CovarianceModel::new(
        SymMatrix::diagonal(&[1.0, 2.0]),
        SymMatrix::diagonal(&[0.5, 0.1]),
    )
    .unwrap();
    let hard = LossSpec::infonce().with_normalization(Kappa::Infinite, 1.0);
    let limit = normalized_limit(&hard, &cov, &Mask::all(2)).unwrap();
    println!("hard-constraint solution (feasible = {}):", limit.feasible);
    println!("  trace against Sigma = {:.9} (target 1)", limit.rho);
    for kappa in [1e2, 1e3, 1e4] {
        let spec = LossSpec::infonce().with_normalization(Kappa::Finite(kappa), 1.0);
        let sols = finite_norm_solutions(&spec, &cov, 2).unwrap();
        let full = sols.iter().find(|s| s.mask.popcount() == 2).unwrap();
        let err = full.wtw.sub(&limit.wtw).max_abs();
        println!("  kappa = {kappa:>7}: distance to limit = {err:.3e}");
    }

    // Case analysis: tiny augmentation, one overwhelming mode, and a
    // weakly augmented mode that collapses anyway.
    println!("\nstrong single-mode augmentation (d = 4):");
    let strong = CovarianceModel::new(
        SymMatrix::identity(4),
        SymMatrix::diagonal(&[0.0, 0.0, 0.0, 1e4]),
    )
    .unwrap();
    let report = collapse_case_analysis(&strong, 1.0).unwrap();
    let sm = report.strong_single_mode.unwrap();
    println!(
        "  collapses when retained with others: {}; survives alone: {}",
        sm.collapses_in_full_mask, sm.singleton_feasible
    );

    println!("\nweak augmentation can still collapse under the constraint:");
    let weak = CovarianceModel::new(
        SymMatrix::diagonal(&[1.05, 1.0, 1.0, 1.0]),
        SymMatrix::diagonal(&[0.95, 0.0, 0.0, 0.0]),
    )
    .unwrap();
    let report = collapse_case_analysis(&weak, 1.0).unwrap();
    let eps = report.weak_epsilon.unwrap();
    println!(
        "  eps = {:.2}, bound {:.3}: collapse predicted = {} (quoted bound agrees: {})",
        eps.epsilon, eps.quoted_bound, eps.limit_predicts_collapse, eps.agree
    );
}
