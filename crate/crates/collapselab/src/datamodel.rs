//! Data generation and description: Gaussian datasets, augmentation noise
//! models, empirical covariances, and a two-class imbalance synthesizer.
//!
//! Covariances are uncentered second moments throughout. Generated datasets
//! are zero-mean, so the distinction is invisible for Gaussian experiments,
//! but it matters for the imbalance mixtures, whose class means enter the
//! second moment directly.
//!
//! All randomness flows through ChaCha12 with explicit 64-bit seeds. Each
//! logical consumer takes its own stream of the same seed, so results do
//! not depend on evaluation order.

use crate::spectra::{self, Mat, SymMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),
    #[error("dimension error: {0}")]
    DimensionError(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("csv parse error at line {line}: {message}")]
    CsvError { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Spectra(#[from] spectra::SpectraError),
}

type Result<T> = std::result::Result<T, DataError>;

/// Stream purposes for the counter-based RNG. Every sampling site takes
/// `seed` plus a `(purpose, index)` pair, giving independent substreams.
pub mod streams {
    pub const DATASET: u64 = 1;
    pub const LOSS_DRAW: u64 = 2;
    pub const TRAIN_INIT: u64 = 3;
    pub const TRAIN_ITER: u64 = 4;
    pub const EXPERIMENT: u64 = 5;
    pub const QUARTIC_DRAW: u64 = 6;
}

/// ChaCha12 substream: same seed, independent stream per (purpose, index).
pub fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 48) ^ index);
    rng
}

pub fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A finite set of clean data points, one per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    points: Mat,
}

impl Dataset {
    pub fn new(points: Mat) -> Result<Dataset> {
        if points.rows() == 0 || points.cols() == 0 {
            return Err(DataError::DimensionError("empty dataset".into()));
        }
        if !points.is_finite() {
            return Err(DataError::InvalidSpec("non-finite data point".into()));
        }
        Ok(Dataset { points })
    }

    pub fn n(&self) -> usize {
        self.points.rows()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn points(&self) -> &Mat {
        &self.points
    }

    /// Header `x0,...,x{d-1}`, one point per line, round-trip float text.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        write!(w, "{}\r\n", header.join(","))?;
        for i in 0..self.n() {
            let row: Vec<String> = self.point(i).iter().map(|v| format!("{v}")).collect();
            write!(w, "{}\r\n", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(r: &mut impl BufRead) -> Result<Dataset> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or(DataError::CsvError {
                line: 1,
                message: "missing header".into(),
            })??;
        let dim = header.trim_end_matches('\r').split(',').count();
        let mut rows = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::with_capacity(dim);
            for field in line.split(',') {
                let v: f64 = field.parse().map_err(|_| DataError::CsvError {
                    line: idx + 2,
                    message: format!("bad float `{field}`"),
                })?;
                row.push(v);
            }
            if row.len() != dim {
                return Err(DataError::CsvError {
                    line: idx + 2,
                    message: format!("expected {dim} fields, got {}", row.len()),
                });
            }
            rows.push(row);
        }
        Dataset::new(Mat::from_rows(&rows))
    }
}

/// Draw `n` i.i.d. zero-mean Gaussian points with the given covariance.
///
/// Sampling goes through the covariance square root `cov^{1/2} z`, which
/// works for singular PSD covariances, unlike a Cholesky factor.
pub fn sample_gaussian(dim: usize, n: usize, cov: &SymMatrix, seed: u64) -> Result<Dataset> {
    if cov.dim() != dim {
        return Err(DataError::DimensionError(format!(
            "cov dim {} vs requested {}",
            cov.dim(),
            dim
        )));
    }
    if !cov.is_psd(1e-8)? {
        return Err(DataError::InvalidCovariance(
            "covariance is not positive semidefinite".into(),
        ));
    }
    let root = spectra::mat_pow(cov, 0.5)?;
    let mut rng = stream_rng(seed, streams::DATASET, 0);
    let mut points = Mat::zeros(n, dim);
    let mut z = vec![0.0; dim];
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = standard_normal(&mut rng);
        }
        for j in 0..dim {
            let mut s = 0.0;
            for (k, zk) in z.iter().enumerate() {
                s += root.get(j, k) * zk;
            }
            points.set(i, j, s);
        }
    }
    Dataset::new(points)
}

/// Uncentered empirical second moment `(1/n) sum x x^T`.
pub fn empirical_cov(ds: &Dataset) -> SymMatrix {
    let d = ds.dim();
    let mut data = vec![0.0; d * d];
    for i in 0..ds.n() {
        let x = ds.point(i);
        for a in 0..d {
            for b in a..d {
                data[a * d + b] += x[a] * x[b];
            }
        }
    }
    let inv = 1.0 / ds.n() as f64;
    for a in 0..d {
        for b in a..d {
            let v = data[a * d + b] * inv;
            data[a * d + b] = v;
            data[b * d + a] = v;
        }
    }
    SymMatrix::new(d, data).expect("finite second moment")
}

/// Additive augmentation noise model.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentationSpec {
    /// Covariance `sigma^2 I`.
    Isotropic { sigma: f64 },
    /// Independent per-coordinate variances.
    Diagonal { variances: Vec<f64> },
    /// Two-dimensional oriented noise with covariance
    /// `sigma^2 diag(1-theta, theta)`; `theta = 1` targets the second
    /// coordinate only, `theta = 0.5` is isotropic.
    Structured { sigma: f64, theta: f64 },
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            AugmentationSpec::Isotropic { sigma } => {
                if *sigma < 0.0 || !sigma.is_finite() {
                    return Err(DataError::InvalidSpec(format!("sigma = {sigma} < 0")));
                }
            }
            AugmentationSpec::Diagonal { variances } => {
                if variances.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                    return Err(DataError::InvalidSpec("negative variance".into()));
                }
            }
            AugmentationSpec::Structured { sigma, theta } => {
                if *sigma < 0.0 || !sigma.is_finite() {
                    return Err(DataError::InvalidSpec(format!("sigma = {sigma} < 0")));
                }
                if !(0.0..=1.0).contains(theta) {
                    return Err(DataError::InvalidSpec(format!(
                        "theta = {theta} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The noise covariance as a matrix of the given dimension.
    pub fn cov(&self, dim: usize) -> Result<SymMatrix> {
        self.validate()?;
        match self {
            AugmentationSpec::Isotropic { sigma } => {
                Ok(SymMatrix::identity(dim).scale(sigma * sigma))
            }
            AugmentationSpec::Diagonal { variances } => {
                if variances.len() != dim {
                    return Err(DataError::DimensionError(format!(
                        "{} variances for dim {dim}",
                        variances.len()
                    )));
                }
                Ok(SymMatrix::diagonal(variances))
            }
            AugmentationSpec::Structured { sigma, theta } => {
                if dim != 2 {
                    return Err(DataError::DimensionError(format!(
                        "structured augmentation requires dim 2, got {dim}"
                    )));
                }
                let s2 = sigma * sigma;
                Ok(SymMatrix::diagonal(&[s2 * (1.0 - theta), s2 * theta]))
            }
        }
    }

    /// One noise draw, written into `out`.
    pub fn sample_into(&self, out: &mut [f64], rng: &mut ChaCha12Rng) {
        match self {
            AugmentationSpec::Isotropic { sigma } => {
                for v in out.iter_mut() {
                    *v = sigma * standard_normal(rng);
                }
            }
            AugmentationSpec::Diagonal { variances } => {
                for (v, var) in out.iter_mut().zip(variances) {
                    *v = var.sqrt() * standard_normal(rng);
                }
            }
            AugmentationSpec::Structured { sigma, theta } => {
                out[0] = sigma * (1.0 - theta).sqrt() * standard_normal(rng);
                out[1] = sigma * theta.sqrt() * standard_normal(rng);
            }
        }
    }
}

/// Two-class mixture description for imbalance studies.
#[derive(Debug, Clone)]
pub struct ImbalanceSpec {
    pub proportions: [f64; 2],
    pub class_means: [Vec<f64>; 2],
    pub class_covs: [SymMatrix; 2],
}

impl ImbalanceSpec {
    pub fn validate(&self) -> Result<()> {
        let [p0, p1] = self.proportions;
        if p0 < 0.0 || p1 < 0.0 || (p0 + p1 - 1.0).abs() > 1e-12 {
            return Err(DataError::InvalidSpec(format!(
                "proportions ({p0}, {p1}) are not a simplex vector"
            )));
        }
        let d = self.class_covs[0].dim();
        if self.class_covs[1].dim() != d
            || self.class_means[0].len() != d
            || self.class_means[1].len() != d
        {
            return Err(DataError::DimensionError(
                "class means/covariances disagree on dimension".into(),
            ));
        }
        Ok(())
    }
}

/// Mixture second moment `sum_k p_k (cov_k + mean_k mean_k^T)`.
pub fn imbalanced_cov(spec: &ImbalanceSpec) -> Result<SymMatrix> {
    spec.validate()?;
    let d = spec.class_covs[0].dim();
    let mut out = SymMatrix::zeros(d);
    for k in 0..2 {
        let p = spec.proportions[k];
        let mean = &spec.class_means[k];
        let outer = Mat::from_fn(d, d, |i, j| mean[i] * mean[j]);
        let second = spec.class_covs[k].add(&SymMatrix::from_mat(&outer)?);
        out = out.add(&second.scale(p));
    }
    Ok(out)
}

/// The covariance triple driving every landscape: clean second moment
/// `A0`, augmentation covariance `C`, and their sum `Sigma`.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    a0: SymMatrix,
    c: SymMatrix,
    sigma: SymMatrix,
    commuting: bool,
}

impl CovarianceModel {
    /// `a0` must be PSD; `c` only needs symmetry (general feature maps can
    /// make its eigenvalues negative).
    pub fn new(a0: SymMatrix, c: SymMatrix) -> Result<CovarianceModel> {
        if a0.dim() != c.dim() {
            return Err(DataError::DimensionError(format!(
                "a0 dim {} vs c dim {}",
                a0.dim(),
                c.dim()
            )));
        }
        if !a0.is_psd(1e-8)? {
            return Err(DataError::InvalidCovariance("a0 is not PSD".into()));
        }
        let sigma = a0.add(&c);
        let commuting = spectra::commutes(&a0, &c, 1e-8)?;
        Ok(CovarianceModel {
            a0,
            c,
            sigma,
            commuting,
        })
    }

    pub fn from_augmentation(a0: SymMatrix, aug: &AugmentationSpec) -> Result<CovarianceModel> {
        let c = aug.cov(a0.dim())?;
        CovarianceModel::new(a0, c)
    }

    pub fn a0(&self) -> &SymMatrix {
        &self.a0
    }

    pub fn c(&self) -> &SymMatrix {
        &self.c
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn commuting(&self) -> bool {
        self.commuting
    }

    pub fn dim(&self) -> usize {
        self.a0.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gaussian_sample_concentrates_on_generator_covariance() {
        let cov = SymMatrix::identity(32);
        let ds = sample_gaussian(32, 4096, &cov, 17).unwrap();
        let emp = empirical_cov(&ds);
        assert!(emp.sub(&cov).max_abs() < 0.15);
    }

    #[test]
    fn zero_covariance_gives_zero_rows() {
        let ds = sample_gaussian(3, 5, &SymMatrix::zeros(3), 1).unwrap();
        for i in 0..5 {
            assert!(ds.point(i).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn fixed_seed_reproduces_dataset() {
        let cov = SymMatrix::diagonal(&[1.0, 2.0]);
        let a = sample_gaussian(2, 64, &cov, 99).unwrap();
        let b = sample_gaussian(2, 64, &cov, 99).unwrap();
        assert_eq!(a.points(), b.points());
    }

    #[test]
    fn non_psd_covariance_rejected() {
        let cov = SymMatrix::diagonal(&[1.0, -1.0]);
        assert!(matches!(
            sample_gaussian(2, 4, &cov, 0).unwrap_err(),
            DataError::InvalidCovariance(_)
        ));
    }

    #[test]
    fn empirical_cov_of_single_point() {
        let ds = Dataset::new(Mat::from_rows(&[vec![1.0, 0.0]])).unwrap();
        let emp = empirical_cov(&ds);
        assert!(emp.sub(&SymMatrix::diagonal(&[1.0, 0.0])).max_abs() < 1e-15);
    }

    #[test]
    fn empirical_cov_of_symmetric_pair() {
        let ds = Dataset::new(Mat::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]])).unwrap();
        let emp = empirical_cov(&ds);
        assert!(emp.sub(&SymMatrix::diagonal(&[1.0, 0.0])).max_abs() < 1e-15);
    }

    #[test]
    fn large_sample_matches_generator_within_concentration() {
        let cov = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let ds = sample_gaussian(2, 8192, &cov, 5).unwrap();
        let emp = empirical_cov(&ds);
        assert!(emp.sub(&cov).max_abs() < 0.12);
    }

    #[test]
    fn structured_augmentation_targets_second_coordinate() {
        let aug = AugmentationSpec::Structured { sigma: 2.0, theta: 1.0 };
        let c = aug.cov(2).unwrap();
        assert!(c.sub(&SymMatrix::diagonal(&[0.0, 4.0])).max_abs() < 1e-15);
    }

    #[test]
    fn structured_half_theta_is_isotropic() {
        let sigma = 1.7;
        let aug = AugmentationSpec::Structured { sigma, theta: 0.5 };
        let c = aug.cov(2).unwrap();
        let expect = SymMatrix::identity(2).scale(sigma * sigma / 2.0);
        assert!(c.sub(&expect).max_abs() < 1e-15);
    }

    #[test]
    fn zero_isotropic_noise_is_zero_matrix() {
        let c = AugmentationSpec::Isotropic { sigma: 0.0 }.cov(3).unwrap();
        assert_eq!(c.max_abs(), 0.0);
    }

    #[test]
    fn structured_requires_dim_two() {
        let aug = AugmentationSpec::Structured { sigma: 1.0, theta: 0.3 };
        assert!(matches!(
            aug.cov(3).unwrap_err(),
            DataError::DimensionError(_)
        ));
    }

    fn two_class(p: f64, mean: Vec<f64>, cov0: SymMatrix, cov1: SymMatrix) -> ImbalanceSpec {
        let neg: Vec<f64> = mean.iter().map(|v| -v).collect();
        ImbalanceSpec {
            proportions: [p, 1.0 - p],
            class_means: [mean, neg],
            class_covs: [cov0, cov1],
        }
    }

    #[test]
    fn degenerate_mixture_is_single_class_moment() {
        let spec = two_class(
            1.0,
            vec![1.0, 2.0],
            SymMatrix::diagonal(&[0.5, 0.5]),
            SymMatrix::identity(2),
        );
        let out = imbalanced_cov(&spec).unwrap();
        let expect = SymMatrix::from_rows(&[vec![1.5, 2.0], vec![2.0, 4.5]]).unwrap();
        assert!(out.sub(&expect).max_abs() < 1e-14);
    }

    #[test]
    fn balanced_symmetric_classes_give_cov_plus_outer() {
        // Mixture-moment algebra: p = 1/2 with means +-mu and equal covs
        // gives cov + mu mu^T.
        let cov = SymMatrix::diagonal(&[0.3, 0.7]);
        let spec = two_class(0.5, vec![1.0, -2.0], cov.clone(), cov.clone());
        let out = imbalanced_cov(&spec).unwrap();
        let expect = SymMatrix::from_rows(&[vec![0.3 + 1.0, -2.0], vec![-2.0, 0.7 + 4.0]]).unwrap();
        assert!(out.sub(&expect).max_abs() < 1e-14);
    }

    #[test]
    fn identical_classes_collapse_to_their_moment() {
        let cov = SymMatrix::diagonal(&[1.0, 2.0]);
        let spec = ImbalanceSpec {
            proportions: [0.5, 0.5],
            class_means: [vec![0.5, 0.0], vec![0.5, 0.0]],
            class_covs: [cov.clone(), cov.clone()],
        };
        let out = imbalanced_cov(&spec).unwrap();
        let expect = SymMatrix::from_rows(&[vec![1.25, 0.0], vec![0.0, 2.0]]).unwrap();
        assert!(out.sub(&expect).max_abs() < 1e-14);
    }

    #[test]
    fn invalid_simplex_rejected() {
        let spec = ImbalanceSpec {
            proportions: [0.7, 0.7],
            class_means: [vec![0.0], vec![0.0]],
            class_covs: [SymMatrix::identity(1), SymMatrix::identity(1)],
        };
        assert!(imbalanced_cov(&spec).is_err());
    }

    #[test]
    fn csv_round_trip_preserves_bits() {
        let cov = SymMatrix::diagonal(&[1.0, 0.25, 3.0]);
        let ds = sample_gaussian(3, 20, &cov, 123).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(&mut std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(ds.points(), back.points());
    }

    #[test]
    fn diagonal_model_is_commuting() {
        let model = CovarianceModel::new(
            SymMatrix::diagonal(&[1.0, 2.0]),
            SymMatrix::diagonal(&[0.0, 4.0]),
        )
        .unwrap();
        assert!(model.commuting());
        assert!(model
            .sigma()
            .sub(&SymMatrix::diagonal(&[1.0, 6.0]))
            .max_abs()
            < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn sigma_dominates_a0_for_psd_augmentations(
            seed in 0u64..500, sigma in 0.0f64..3.0
        ) {
            let mut rng = stream_rng(seed, streams::EXPERIMENT, 0);
            let d = 3usize;
            let raw = Mat::from_fn(d, d, |_, _| standard_normal(&mut rng));
            let a0 = SymMatrix::from_mat(&raw.transpose().mul(&raw)).unwrap();
            let model =
                CovarianceModel::from_augmentation(a0.clone(), &AugmentationSpec::Isotropic { sigma })
                    .unwrap();
            let gap = model.sigma().sub(&a0);
            let pair = spectra::eig_sym(&gap).unwrap();
            for l in pair.eigenvalues {
                prop_assert!(l >= -1e-10);
            }
        }
    }
}
