//! Collapse of the weighted contrastive family flips at a critical
//! dataset size: the repulsion deficit (1 - alpha) c / n crosses the
//! feature strength a.
//!
//! Run with: cargo run --release --example critical_dataset_size

use collapselab::experiments::{critical_n_sweep, SweepMode};
use collapselab::spectra::SymMatrix;
use collapselab::trainer::TrainConfig;

fn main() {
    let a0 = SymMatrix::identity(4);
    let ns: Vec<usize> = (16..=30).collect();
    let out = critical_n_sweep(
        0.1,
        5.0,
        &a0,
        &ns,
        SweepMode::Analytic,
        &TrainConfig::default(),
        0,
    )
    .unwrap();

    println!("alpha = 0.1, sigma = 5 (c = 25), a = 1:  n* = {}", out.n_star);
    println!("{:>4}  {:>14}  collapsed modes", "n", "smallest eig");
    for (i, &n) in ns.iter().enumerate() {
        println!(
            "{n:>4}  {:>14.6e}  {}",
            out.grid.get(&[i], "eig_small_0"),
            out.grid.get(&[i], "collapsed_modes")
        );
    }
}
