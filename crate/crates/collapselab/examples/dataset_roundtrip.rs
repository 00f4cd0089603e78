//! Dataset generation and CSV round-tripping: seeded Gaussian draws,
//! empirical second moments, and bit-exact import/export.
//!
//! Run with: cargo run --release --example dataset_roundtrip

use collapselab::datamodel::{empirical_cov, sample_gaussian, Dataset};
use collapselab::spectra::SymMatrix;

fn main() {
    let cov = SymMatrix::from_rows(&[vec![2.0, 0.6], vec![0.6, 1.0]]).unwrap();
    let ds = sample_gaussian(2, 4096, &cov, 42).unwrap();
    let emp = empirical_cov(&ds);
    println!("generator covariance vs empirical second moment:");
    for i in 0..2 {
        println!(
            "  [{:>7.4}, {:>7.4}]   [{:>7.4}, {:>7.4}]",
            cov.get(i, 0),
            cov.get(i, 1),
            emp.get(i, 0),
            emp.get(i, 1)
        );
    }

    let mut buf = Vec::new();
    ds.write_csv(&mut buf).unwrap();
    let back = Dataset::read_csv(&mut std::io::BufReader::new(&buf[..])).unwrap();
    println!(
        "\ncsv round trip: {} points, bit-identical = {}",
        back.n(),
        back.points() == ds.points()
    );
}
