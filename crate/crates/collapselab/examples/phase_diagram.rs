//! Collapse phase diagram over augmentation strength and orientation for
//! the entropy-weighted loss, rendered to an SVG heatmap.
//!
//! Run with: cargo run --release --example phase_diagram

use collapselab::experiments::phase_diagram;
use collapselab::svg::{render_svg, RenderKind, RenderOptions};

fn main() {
    let a = [1.0, 0.5];
    let beta = 0.5;
    let sigmas: Vec<f64> = (0..17).map(|k| 0.25 * k as f64).collect();
    let thetas: Vec<f64> = (0..21).map(|k| 0.05 * k as f64).collect();
    let grid = phase_diagram(a, beta, &sigmas, &thetas).unwrap();

    // Text rendering: rows are theta (top = 1), columns sigma.
    println!("pattern codes: . none, c content-collapse, s style-collapse, X complete\n");
    for (j, &theta) in thetas.iter().enumerate().rev() {
        let row: String = (0..sigmas.len())
            .map(|i| match grid.get(&[i, j], "pattern") as i64 {
                0 => '.',
                1 => 'c',
                2 => 's',
                _ => 'X',
            })
            .collect();
        println!("theta {theta:>5.2} | {row}");
    }
    println!("            sigma 0 .. 4 (step 0.25)");
    println!("\nboundaries: (1-beta) sigma^2 (1-theta) = a1 and (1-beta) sigma^2 theta = a2");

    let svg = render_svg(
        &grid,
        RenderKind::Heatmap,
        &RenderOptions {
            key: Some("pattern".into()),
            title: Some("collapse phase diagram".into()),
            ..RenderOptions::default()
        },
    )
    .unwrap();
    std::fs::write("phase_diagram.svg", svg).unwrap();
    println!("wrote phase_diagram.svg");
}
