//! Robustness to class imbalance differs by loss: a landscape driven by
//! the data covariance rotates with the class mix, while one driven by
//! the augmentation covariance does not move at all.
//!
//! Run with: cargo run --release --example imbalance_robustness

use collapselab::experiments::{imbalance_robustness, ImbalanceFamily};
use collapselab::spectra::{Mat, SymMatrix};

fn main() {
    let family = ImbalanceFamily {
        class_means: [vec![1.5, 0.9], vec![-1.5, -0.9]],
        class_covs: [
            SymMatrix::diagonal(&[0.5, 0.2]),
            SymMatrix::diagonal(&[0.3, 0.6]),
        ],
    };
    let th = 0.5f64;
    let rot = Mat::from_rows(&[vec![th.cos(), -th.sin()], vec![th.sin(), th.cos()]]);
    let c = SymMatrix::from_mat(
        &rot.mul(&SymMatrix::diagonal(&[0.3, 0.1]).to_mat()).mul(&rot.transpose()),
    )
    .unwrap();

    let ps = vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.95];
    let grid = imbalance_robustness(&family, &ps, &c).unwrap();
    println!(
        "{:>6}  {:>22}  {:>22}",
        "p", "feature-loss drift", "augmentation-loss drift"
    );
    for (i, &p) in ps.iter().enumerate() {
        println!(
            "{p:>6.2}  {:>22.6}  {:>22.2e}",
            grid.get(&[i], "angle_feature_loss"),
            grid.get(&[i], "angle_augmentation_loss")
        );
    }
    println!("\n(angles in radians between dominant subspaces at p and at the balanced mix)");
}
