//! One- and two-parameter slices through the landscape, classifying the
//! origin: unstable maximum when no mode collapses, saddle under
//! dimensional collapse, isolated minimum under complete collapse.
//!
//! Run with: cargo run --release --example landscape_slice

use collapselab::datamodel::CovarianceModel;
use collapselab::experiments::{landscape_slice, SliceKind};
use collapselab::losses::LossSpec;
use collapselab::spectra::SymMatrix;
use collapselab::svg::{render_svg, RenderKind, RenderOptions};

fn main() {
    let cases = [
        ("no collapse", [0.1, 0.1]),
        ("dimensional collapse", [0.0, 3.0]),
        ("complete collapse", [2.5, 3.0]),
    ];
    for (name, c) in cases {
        let cov = CovarianceModel::new(
            SymMatrix::diagonal(&[1.0, 0.8]),
            SymMatrix::diagonal(&c),
        )
        .unwrap();
        let spec = LossSpec::beta_infonce(0.0); // coefficient a - c
        let out = landscape_slice(&spec, &cov, None, SliceKind::TwoD, 1.2, 24).unwrap();
        println!("{name:>22}: origin is a {}", out.origin_class.as_str());
        let svg = render_svg(
            &out.grid,
            RenderKind::Heatmap,
            &RenderOptions {
                key: Some("loss".into()),
                title: Some(format!("{name} (origin: {})", out.origin_class.as_str())),
                ..RenderOptions::default()
            },
        )
        .unwrap();
        let file = format!("slice_{}.svg", name.replace(' ', "_"));
        std::fs::write(&file, svg).unwrap();
        println!("{:>22}  wrote {file}", "");
    }
}
