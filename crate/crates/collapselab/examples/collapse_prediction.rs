//! Per-mode collapse verdicts for each loss family on the same data:
//! which eigenmodes of the origin coefficient go negative, and why.
//!
//! Run with: cargo run --release --example collapse_prediction

use collapselab::datamodel::CovarianceModel;
use collapselab::losses::LossSpec;
use collapselab::solver::predict_collapse;
use collapselab::spectra::SymMatrix;

fn main() {
    let cov = CovarianceModel::new(
        SymMatrix::diagonal(&[1.0, 1.0, 1.0]),
        SymMatrix::diagonal(&[0.2, 2.0, 30.0]),
    )
    .unwrap();

    let families = [
        ("plain contrastive", LossSpec::infonce()),
        ("weighted, alpha=0.1, n=16", LossSpec::weighted_infonce(0.1, 16)),
        ("entropy-weighted, beta=0.5", LossSpec::beta_infonce(0.5)),
        ("spectral contrastive", LossSpec::spectral_contrastive()),
        ("redundancy reduction", LossSpec::barlow_twins()),
        ("plain + weight decay 0.9", LossSpec::infonce().with_weight_decay(0.9)),
    ];

    for (name, spec) in families {
        let report = predict_collapse(&spec, &cov).unwrap();
        let verdicts: Vec<String> = report
            .modes
            .iter()
            .map(|m| {
                format!(
                    "a={:.1} c={:.1} b={:+.3} -> {}",
                    m.a.unwrap(),
                    m.c.unwrap(),
                    m.b,
                    if m.collapses { "collapses" } else { "survives" }
                )
            })
            .collect();
        println!("{name}:");
        for v in verdicts {
            println!("    {v}");
        }
        println!(
            "    complete = {}, dimensional = {}\n",
            report.complete_collapse, report.dimensional_collapse
        );
    }
}
