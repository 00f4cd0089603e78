//! Enumerate every stationary point of a small quartic landscape and pick
//! the global minimum.
//!
//! Run with: cargo run --release --example stationary_points

use collapselab::datamodel::CovarianceModel;
use collapselab::losses::LossSpec;
use collapselab::solver::{global_minimum, stationary_points};
use collapselab::spectra::{eig_sym, SymMatrix};

fn main() {
    // Two feature modes of equal size; the second is hit by strong
    // augmentation. With the entropy weight at 0.5 its coefficient turns
    // negative and every stationary point masks it out.
    let cov = CovarianceModel::new(
        SymMatrix::diagonal(&[1.0, 1.0]),
        SymMatrix::diagonal(&[0.0, 4.0]),
    )
    .unwrap();
    let spec = LossSpec::beta_infonce(0.5);

    println!("{:<8} {:>4} {:>12} {:>10}  gram eigenvalues", "mask", "rank", "loss", "local_min");
    for p in stationary_points(&spec, &cov, 2).unwrap() {
        let eigs = eig_sym(&p.wtw).unwrap().eigenvalues;
        println!(
            "{:<8} {:>4} {:>12.6} {:>10}  {:?}",
            p.mask.to_string(),
            p.rank,
            p.loss_value,
            p.is_local_min,
            eigs
        );
    }

    let gm = global_minimum(&spec, &cov, 2).unwrap();
    println!("\nglobal minimum keeps {} of 2 modes at loss {:.6}", gm.rank, gm.loss_value);
    println!("W^T W =");
    for i in 0..2 {
        println!("  [{:>9.6}, {:>9.6}]", gm.wtw.get(i, 0), gm.wtw.get(i, 1));
    }
}
