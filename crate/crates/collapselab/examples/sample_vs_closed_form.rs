//! The sampled contrastive loss agrees with the closed-form landscape
//! through fourth order: the remainder along a ray t W0 falls off as t^6.
//!
//! Run with: cargo run --release --example sample_vs_closed_form

use collapselab::datamodel::{sample_gaussian, stream_rng, streams, AugmentationSpec};
use collapselab::losses::{expansion_residual, sample_loss, LossSpec, Weights};
use collapselab::spectra::{Mat, SymMatrix};
use rand::Rng;

fn main() {
    let ds = sample_gaussian(3, 512, &SymMatrix::identity(3), 7).unwrap();
    let aug = AugmentationSpec::Isotropic { sigma: 0.5 };
    let spec = LossSpec::infonce();
    let mut rng = stream_rng(4, streams::EXPERIMENT, 0);
    let w0 = Weights::new(Mat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)));

    let at_zero = sample_loss(&spec, &ds, &aug, &Weights::zeros(3, 3), 8, 0).unwrap();
    println!(
        "loss at the origin: {:.6} (ln n = {:.6})",
        at_zero.value,
        (ds.n() as f64).ln()
    );

    println!("\n{:>8}  {:>14}  local slope", "t", "|remainder|");
    let ts = [0.02, 0.04, 0.08, 0.16, 0.32];
    let mut prev: Option<(f64, f64)> = None;
    for &t in &ts {
        let r = expansion_residual(&spec, &ds, &aug, &w0.scale(t), 16, 3)
            .unwrap()
            .abs();
        let slope = prev
            .map(|(pt, pr)| (r / pr).ln() / (t / pt).ln())
            .map(|s| format!("{s:.2}"))
            .unwrap_or_else(|| "-".into());
        println!("{t:>8.2}  {r:>14.6e}  {slope}");
        prev = Some((t, r));
    }
    println!("\nslopes near 6 confirm the quartic model captures everything below t^6.");
}
