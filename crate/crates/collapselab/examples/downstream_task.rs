//! Dimensional collapse can help or hurt a downstream probe: style-
//! targeted augmentation removes the irrelevant feature and keeps the
//! probe accurate, while isotropic noise of the same strength eventually
//! collapses everything.
//!
//! Run with: cargo run --release --example downstream_task

use collapselab::experiments::{downstream_eval, DownstreamTask, SweepMode};
use collapselab::trainer::TrainConfig;

fn main() {
    let task = DownstreamTask::default();
    let a = [1.0, 0.5];
    let sigmas: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64).collect();
    let thetas = vec![0.5, 1.0];
    let grid = downstream_eval(
        &task,
        a,
        &sigmas,
        &thetas,
        0.5,
        SweepMode::Analytic,
        &TrainConfig::default(),
    )
    .unwrap();

    println!("label depends only on the first feature; theta = 1 augments only the second\n");
    println!("{:>6}  {:>14}  {:>14}", "sigma", "mse (theta=.5)", "mse (theta=1)");
    for (i, &s) in sigmas.iter().enumerate() {
        println!(
            "{s:>6.1}  {:>14.6}  {:>14.6}",
            grid.get(&[i, 0], "mse"),
            grid.get(&[i, 1], "mse")
        );
    }
    let var_y = grid.get(&[sigmas.len() - 1, 0], "var_y");
    println!("\nlabel variance (zero-predictor error): {var_y:.4}");
}
