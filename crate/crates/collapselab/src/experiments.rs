//! Scripted parameter sweeps over the analytic solver and the trainer:
//! augmentation-strength scaling, critical dataset size, entropy-weight
//! collapse control, norm-constrained collapse, collapse phase diagrams,
//! a downstream ridge regression task, imbalance robustness, and loss
//! landscape slices.
//!
//! Every sweep is a pure function of its arguments and seed; grid cells
//! are independent and computed in parallel with a deterministic merge,
//! so `results.csv` output is bit-reproducible.

use crate::datamodel::{
    imbalanced_cov, sample_gaussian, AugmentationSpec, CovarianceModel, DataError, ImbalanceSpec,
};
use crate::losses::{LossError, LossSpec, Weights};
use crate::solver::{self, SolverError};
use crate::spectra::{self, Mat, SpectraError, SymMatrix};
use crate::trainer::{train, LossSource, TrainConfig, TrainError};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("grid cell ({0}) failed: {1}")]
    CellFailed(String, String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, ExperimentError>;

#[derive(Debug, Clone)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: &str, values: Vec<f64>) -> Result<Axis> {
        if values.is_empty() {
            return Err(ExperimentError::InvalidSweep(format!("axis {name} empty")));
        }
        for w in values.windows(2) {
            if !(w[1] > w[0]) {
                return Err(ExperimentError::InvalidSweep(format!(
                    "axis {name} must be strictly increasing"
                )));
            }
        }
        Ok(Axis {
            name: name.to_string(),
            values,
        })
    }
}

/// Rectangular result grid: one row of named values per cell, cells in
/// row-major order over the axes.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub axes: Vec<Axis>,
    pub keys: Vec<String>,
    cells: Vec<Vec<f64>>,
}

impl SweepGrid {
    pub fn new(axes: Vec<Axis>, mut keys: Vec<String>) -> SweepGrid {
        keys.sort();
        let n: usize = axes.iter().map(|a| a.values.len()).product();
        SweepGrid {
            cells: vec![vec![f64::NAN; keys.len()]; n],
            axes,
            keys,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.axes.len());
        let mut flat = 0;
        for (k, &i) in idx.iter().enumerate() {
            assert!(i < self.axes[k].values.len());
            flat = flat * self.axes[k].values.len() + i;
        }
        flat
    }

    /// Multi-index of a flat cell position, row-major.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for k in (0..self.axes.len()).rev() {
            let len = self.axes[k].values.len();
            idx[k] = flat % len;
            flat /= len;
        }
        idx
    }

    pub fn set(&mut self, idx: &[usize], values: &BTreeMap<String, f64>) {
        let flat = self.flat_index(idx);
        for (k, key) in self.keys.iter().enumerate() {
            self.cells[flat][k] = *values
                .get(key)
                .unwrap_or_else(|| panic!("cell missing key {key}"));
        }
    }

    pub fn get(&self, idx: &[usize], key: &str) -> f64 {
        let pos = self
            .keys
            .iter()
            .position(|k| k == key)
            .unwrap_or_else(|| panic!("unknown key {key}"));
        self.cells[self.flat_index(idx)][pos]
    }

    pub fn axis_value(&self, axis: usize, idx: usize) -> f64 {
        self.axes[axis].values[idx]
    }

    /// One row per cell: axis coordinates then the sorted value keys.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let mut header: Vec<String> = self.axes.iter().map(|a| a.name.clone()).collect();
        header.extend(self.keys.iter().cloned());
        write!(w, "{}\r\n", header.join(","))?;
        for flat in 0..self.cells.len() {
            let idx = self.unflatten(flat);
            let mut row: Vec<String> = idx
                .iter()
                .enumerate()
                .map(|(k, &i)| format!("{}", self.axes[k].values[i]))
                .collect();
            for v in &self.cells[flat] {
                row.push(format!("{v}"));
            }
            write!(w, "{}\r\n", row.join(","))?;
        }
        Ok(())
    }
}

/// Fill a grid by evaluating all cells in parallel and merging in flat
/// order, which keeps the output independent of scheduling.
fn fill_grid(
    grid: &mut SweepGrid,
    eval: impl Fn(&[usize]) -> Result<BTreeMap<String, f64>> + Sync,
) -> Result<()> {
    let results: Vec<Result<BTreeMap<String, f64>>> = (0..grid.n_cells())
        .into_par_iter()
        .map(|flat| eval(&grid.unflatten(flat)))
        .collect();
    for (flat, r) in results.into_iter().enumerate() {
        let idx = grid.unflatten(flat);
        match r {
            Ok(values) => grid.set(&idx, &values),
            Err(e) => {
                return Err(ExperimentError::CellFailed(
                    format!("{idx:?}"),
                    e.to_string(),
                ))
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Analytic,
    Trained,
}

/// Least-squares slope of `ln y` against `ln x` (positive values only).
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}

fn gram_eigs_for(
    spec: &LossSpec,
    cov: &CovarianceModel,
    d1: usize,
    mode: SweepMode,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    match mode {
        SweepMode::Analytic => {
            let gm = solver::global_minimum(spec, cov, d1)?;
            Ok(spectra::eig_sym(&gm.wtw)?.eigenvalues)
        }
        SweepMode::Trained => {
            let record = train(
                spec,
                &LossSource::ClosedForm(cov),
                d1,
                &TrainConfig { seed, ..cfg.clone() },
            )?;
            Ok(record.final_gram_eigenvalues())
        }
    }
}

fn smallest_keys(d: usize) -> Vec<String> {
    (0..d.min(3)).map(|k| format!("eig_small_{k}")).collect()
}

fn insert_smallest(values: &mut BTreeMap<String, f64>, eigs: &[f64]) {
    let mut asc = eigs.to_vec();
    asc.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (k, v) in asc.iter().take(3).enumerate() {
        values.insert(format!("eig_small_{k}"), *v);
    }
}

#[derive(Debug, Clone)]
pub struct SigmaScaling {
    pub grid: SweepGrid,
    /// Log-log slope of the smallest eigenvalue over the top decade of
    /// sigma; the no-collapse law decays with slope -4.
    pub tail_slope: f64,
}

/// Smallest three eigenvalues of `W^T W` for the plain contrastive loss
/// under isotropic augmentation of strength `sigma`.
pub fn sigma_scaling(
    a0: &SymMatrix,
    sigma_values: &[f64],
    mode: SweepMode,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<SigmaScaling> {
    let d = a0.dim();
    let axis = Axis::new("sigma", sigma_values.to_vec())?;
    let mut grid = SweepGrid::new(vec![axis], smallest_keys(d));
    let spec = LossSpec::infonce();
    fill_grid(&mut grid, |idx| {
        let sigma = sigma_values[idx[0]];
        let cov = CovarianceModel::from_augmentation(
            a0.clone(),
            &AugmentationSpec::Isotropic { sigma },
        )?;
        let eigs = gram_eigs_for(&spec, &cov, d, mode, cfg, seed ^ idx[0] as u64)?;
        let mut values = BTreeMap::new();
        insert_smallest(&mut values, &eigs);
        Ok(values)
    })?;

    let max_sigma = sigma_values.iter().cloned().fold(0.0f64, f64::max);
    let tail: Vec<(f64, f64)> = sigma_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= max_sigma / 10.0)
        .map(|(i, &s)| (s, grid.get(&[i], "eig_small_0")))
        .collect();
    let xs: Vec<f64> = tail.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.1).collect();
    Ok(SigmaScaling {
        tail_slope: log_log_slope(&xs, &ys),
        grid,
    })
}

#[derive(Debug, Clone)]
pub struct CriticalN {
    pub grid: SweepGrid,
    /// Dataset size at which the collapse verdict flips, from the sign of
    /// the per-mode coefficient: `max_i (1 - alpha) c_i / a_i`.
    pub n_star: f64,
}

/// Collapse of the weighted contrastive family as a function of dataset
/// size, at fixed `alpha` and isotropic augmentation strength `sigma`.
pub fn critical_n_sweep(
    alpha: f64,
    sigma: f64,
    a0: &SymMatrix,
    n_values: &[usize],
    mode: SweepMode,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<CriticalN> {
    let d = a0.dim();
    let cov =
        CovarianceModel::from_augmentation(a0.clone(), &AugmentationSpec::Isotropic { sigma })?;
    let axis = Axis::new("n", n_values.iter().map(|&n| n as f64).collect())?;
    let mut keys = smallest_keys(d);
    keys.push("collapsed_modes".into());
    let mut grid = SweepGrid::new(vec![axis], keys);
    fill_grid(&mut grid, |idx| {
        let n = n_values[idx[0]];
        let spec = LossSpec::weighted_infonce(alpha, n);
        let eigs = gram_eigs_for(&spec, &cov, d, mode, cfg, seed ^ idx[0] as u64)?;
        let report = solver::predict_collapse(&spec, &cov)?;
        let mut values = BTreeMap::new();
        insert_smallest(&mut values, &eigs);
        values.insert(
            "collapsed_modes".into(),
            report.modes.iter().filter(|m| m.collapses).count() as f64,
        );
        Ok(values)
    })?;

    let probe = LossSpec::weighted_infonce(alpha, n_values[0].max(2));
    let modes = solver::mode_analysis(&probe, &cov)?;
    let n_star = modes
        .a
        .iter()
        .zip(&modes.c)
        .map(|(a, c)| (1.0 - alpha) * c / a)
        .fold(0.0f64, f64::max);
    Ok(CriticalN { grid, n_star })
}

#[derive(Debug, Clone)]
pub enum BetaSweepAxis {
    /// Sweep the entropy weight at a fixed covariance model.
    Beta {
        values: Vec<f64>,
        cov: CovarianceModel,
    },
    /// Sweep isotropic augmentation strength at a fixed entropy weight.
    Sigma {
        values: Vec<f64>,
        beta: f64,
        a0: SymMatrix,
    },
}

#[derive(Debug, Clone)]
pub struct BetaCollapse {
    pub grid: SweepGrid,
    /// Per input mode, the swept value at which `(1 - beta) c_i = a_i`;
    /// NaN when the boundary is never crossed.
    pub boundaries: Vec<f64>,
}

/// All `d0` eigenvalues of `W^T W` across an entropy-weight or
/// augmentation-strength sweep, with the per-mode collapse boundaries.
pub fn beta_collapse_sweep(
    axis: &BetaSweepAxis,
    mode: SweepMode,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<BetaCollapse> {
    let (axis_def, d) = match axis {
        BetaSweepAxis::Beta { values, cov } => (Axis::new("beta", values.clone())?, cov.dim()),
        BetaSweepAxis::Sigma { values, a0, .. } => (Axis::new("sigma", values.clone())?, a0.dim()),
    };
    let keys: Vec<String> = (0..d).map(|k| format!("eig_{k}")).collect();
    let mut grid = SweepGrid::new(vec![axis_def], keys);
    fill_grid(&mut grid, |idx| {
        let (spec, cov) = match axis {
            BetaSweepAxis::Beta { values, cov } => {
                (LossSpec::beta_infonce(values[idx[0]]), cov.clone())
            }
            BetaSweepAxis::Sigma { values, beta, a0 } => (
                LossSpec::beta_infonce(*beta),
                CovarianceModel::from_augmentation(
                    a0.clone(),
                    &AugmentationSpec::Isotropic {
                        sigma: values[idx[0]],
                    },
                )?,
            ),
        };
        let eigs = gram_eigs_for(&spec, &cov, d, mode, cfg, seed ^ idx[0] as u64)?;
        let mut values_map = BTreeMap::new();
        for (k, v) in eigs.iter().enumerate() {
            values_map.insert(format!("eig_{k}"), *v);
        }
        Ok(values_map)
    })?;

    let boundaries = match axis {
        BetaSweepAxis::Beta { cov, .. } => {
            let modes = solver::mode_analysis(&LossSpec::beta_infonce(0.5), cov)?;
            (0..d)
                .map(|i| {
                    if modes.c[i] > 0.0 {
                        1.0 - modes.a[i] / modes.c[i]
                    } else {
                        f64::NAN
                    }
                })
                .collect()
        }
        BetaSweepAxis::Sigma { beta, a0, .. } => {
            let pair = spectra::eig_sym(a0)?;
            pair.eigenvalues
                .iter()
                .map(|a| {
                    if *beta < 1.0 {
                        (a / (1.0 - beta)).sqrt()
                    } else {
                        f64::NAN
                    }
                })
                .collect()
        }
    };
    Ok(BetaCollapse { grid, boundaries })
}

#[derive(Debug, Clone)]
pub struct NormalizationCollapse {
    pub grid: SweepGrid,
    /// Per canonical mode, the smallest sigma at which the hard-limit
    /// feasibility condition fails under the full retained set; NaN when
    /// it holds across the sweep range.
    pub first_failure_sigma: Vec<f64>,
}

/// Smallest three eigenvalues of the hard-norm-constrained solution as a
/// function of isotropic augmentation strength. In trained mode the run
/// uses a large finite constraint strength on the closed-form landscape.
pub fn normalization_collapse(
    a0: &SymMatrix,
    c_target: f64,
    sigma_values: &[f64],
    mode: SweepMode,
    trained_kappa: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<NormalizationCollapse> {
    use crate::losses::Kappa;
    let d = a0.dim();
    let axis = Axis::new("sigma", sigma_values.to_vec())?;
    let mut keys = smallest_keys(d);
    keys.push("n_collapsed".into());
    let mut grid = SweepGrid::new(vec![axis], keys);

    let modes_at = |sigma: f64| -> Result<Vec<f64>> {
        let cov = CovarianceModel::from_augmentation(
            a0.clone(),
            &AugmentationSpec::Isotropic { sigma },
        )?;
        let spec = LossSpec::infonce().with_normalization(Kappa::Infinite, c_target);
        Ok(solver::mode_analysis(&spec, &cov)?.lambda)
    };

    fill_grid(&mut grid, |idx| {
        let sigma = sigma_values[idx[0]];
        let cov = CovarianceModel::from_augmentation(
            a0.clone(),
            &AugmentationSpec::Isotropic { sigma },
        )?;
        let mut values = BTreeMap::new();
        let eigs = match mode {
            SweepMode::Analytic => {
                let spec = LossSpec::infonce().with_normalization(Kappa::Infinite, c_target);
                let lambda = solver::mode_analysis(&spec, &cov)?.lambda;
                let surviving = solver::hard_limit_surviving(&lambda, c_target);
                let mask = spectra::Mask::new(surviving.clone());
                if mask.is_empty() {
                    vec![0.0; d]
                } else {
                    let sol = solver::normalized_limit(&spec, &cov, &mask)?;
                    spectra::eig_sym(&sol.wtw)?.eigenvalues
                }
            }
            SweepMode::Trained => {
                let spec = LossSpec::infonce()
                    .with_normalization(Kappa::Finite(trained_kappa), c_target);
                let record = train(
                    &spec,
                    &LossSource::ClosedForm(&cov),
                    d,
                    &TrainConfig {
                        seed: seed ^ idx[0] as u64,
                        ..cfg.clone()
                    },
                )?;
                record.final_gram_eigenvalues()
            }
        };
        insert_smallest(&mut values, &eigs);
        let max = eigs.iter().cloned().fold(0.0f64, f64::max);
        let n_collapsed = eigs.iter().filter(|&&e| e < 1e-4 * max.max(1e-300)).count();
        values.insert("n_collapsed".into(), n_collapsed as f64);
        Ok(values)
    })?;

    // First feasibility failure per mode under the full retained set,
    // refined by bisection between neighbouring grid points.
    let full: Vec<usize> = (0..d).collect();
    let margin_at = |sigma: f64, mode_idx: usize| -> Result<f64> {
        let lambda = modes_at(sigma)?;
        Ok(solver::limit_margins(&lambda, &full, c_target)[mode_idx])
    };
    let mut first_failure = vec![f64::NAN; d];
    for m in 0..d {
        let mut prev: Option<(f64, f64)> = None;
        for &sigma in sigma_values {
            let margin = margin_at(sigma, m)?;
            if margin <= 0.0 {
                let (mut lo, mut hi) = match prev {
                    Some((ps, pm)) if pm > 0.0 => (ps, sigma),
                    _ => (0.0, sigma),
                };
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if margin_at(mid, m)? > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                first_failure[m] = hi;
                break;
            }
            prev = Some((sigma, margin));
        }
    }
    Ok(NormalizationCollapse {
        grid,
        first_failure_sigma: first_failure,
    })
}

/// Collapse pattern labels for the two-dimensional structured-augmentation
/// plane: 0 none, 1 content-mode collapse only, 2 style-mode collapse
/// only, 3 complete.
pub fn phase_diagram(
    a: [f64; 2],
    beta: f64,
    sigma_values: &[f64],
    theta_values: &[f64],
) -> Result<SweepGrid> {
    let axes = vec![
        Axis::new("sigma", sigma_values.to_vec())?,
        Axis::new("theta", theta_values.to_vec())?,
    ];
    let mut grid = SweepGrid::new(
        axes,
        vec!["pattern".into(), "b_content".into(), "b_style".into()],
    );
    let a0 = SymMatrix::diagonal(&a);
    fill_grid(&mut grid, |idx| {
        let sigma = sigma_values[idx[0]];
        let theta = theta_values[idx[1]];
        let s2 = sigma * sigma;
        let c = SymMatrix::diagonal(&[s2 * (1.0 - theta), s2 * theta]);
        let cov = CovarianceModel::new(a0.clone(), c)?;
        let spec = LossSpec::beta_infonce(beta);
        let report = solver::predict_collapse(&spec, &cov)?;
        // Map verdicts back to the input coordinates through (a, c) pairs.
        let mut content_collapsed = false;
        let mut style_collapsed = false;
        for mode in &report.modes {
            let cm = mode.c.unwrap_or(f64::NAN);
            let is_style = (cm - s2 * theta).abs() <= (cm - s2 * (1.0 - theta)).abs();
            let is_style = if (theta - 0.5).abs() < 1e-12 {
                // Isotropic augmentation: disambiguate by feature size.
                (mode.a.unwrap_or(f64::NAN) - a[1]).abs()
                    < (mode.a.unwrap_or(f64::NAN) - a[0]).abs()
            } else {
                is_style
            };
            if mode.collapses {
                if is_style {
                    style_collapsed = true;
                } else {
                    content_collapsed = true;
                }
            }
        }
        let pattern = match (content_collapsed, style_collapsed) {
            (false, false) => 0.0,
            (true, false) => 1.0,
            (false, true) => 2.0,
            (true, true) => 3.0,
        };
        let mut values = BTreeMap::new();
        values.insert("pattern".into(), pattern);
        values.insert("b_content".into(), a[0] - (1.0 - beta) * s2 * (1.0 - theta));
        values.insert("b_style".into(), a[1] - (1.0 - beta) * s2 * theta);
        Ok(values)
    })?;
    Ok(grid)
}

/// Downstream linear probe: content/style inputs, label `y = c_y * x1`,
/// ridge regression on the learned representation.
#[derive(Debug, Clone)]
pub struct DownstreamTask {
    pub d0: usize,
    pub d_c: usize,
    pub target_coeff: f64,
    pub ridge_lambda: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for DownstreamTask {
    fn default() -> Self {
        DownstreamTask {
            d0: 2,
            d_c: 1,
            target_coeff: 1.5,
            ridge_lambda: 0.001,
            n_train: 2048,
            n_test: 2048,
            seed: 7,
        }
    }
}

/// Closed-form ridge fit `G = S_yz (S_zz + lambda I)^{-1}` on the train
/// split; returns the test mean squared error.
fn ridge_mse(z_train: &Mat, y_train: &[f64], z_test: &Mat, y_test: &[f64], lambda: f64) -> f64 {
    let n = z_train.rows() as f64;
    let k = z_train.cols();
    let mut szz = Mat::zeros(k, k);
    let mut syz = vec![0.0; k];
    for i in 0..z_train.rows() {
        let z = z_train.row(i);
        for a in 0..k {
            syz[a] += y_train[i] * z[a];
            for b in 0..k {
                szz.set(a, b, szz.get(a, b) + z[a] * z[b]);
            }
        }
    }
    for a in 0..k {
        syz[a] /= n;
        for b in 0..k {
            szz.set(a, b, szz.get(a, b) / n);
        }
        szz.set(a, a, szz.get(a, a) + lambda);
    }
    // Solve (S_zz + lambda I) g = s_yz by eigendecomposition; the matrix is
    // symmetric positive definite for lambda > 0.
    let sym = SymMatrix::from_mat(&szz).expect("ridge system is square");
    let pair = spectra::eig_sym(&sym).expect("ridge system decomposes");
    let mut g = vec![0.0; k];
    for m in 0..k {
        let col = pair.eigenvectors.col(m);
        let proj: f64 = (0..k).map(|a| col[a] * syz[a]).sum();
        let w = proj / pair.eigenvalues[m];
        for a in 0..k {
            g[a] += w * col[a];
        }
    }
    let mut mse = 0.0;
    for i in 0..z_test.rows() {
        let z = z_test.row(i);
        let pred: f64 = (0..k).map(|a| g[a] * z[a]).sum();
        let d = pred - y_test[i];
        mse += d * d;
    }
    mse / z_test.rows() as f64
}

/// Test error of the ridge probe across augmentation strength and
/// orientation. Keys: `mse`, `var_y`, and `n_collapsed` of the upstream
/// representation.
pub fn downstream_eval(
    task: &DownstreamTask,
    a: [f64; 2],
    sigma_values: &[f64],
    theta_values: &[f64],
    beta: f64,
    mode: SweepMode,
    cfg: &TrainConfig,
) -> Result<SweepGrid> {
    if task.d0 != 2 || task.d_c != 1 {
        return Err(ExperimentError::InvalidSweep(
            "downstream task is defined for d0 = 2 with one content feature".into(),
        ));
    }
    let axes = vec![
        Axis::new("sigma", sigma_values.to_vec())?,
        Axis::new("theta", theta_values.to_vec())?,
    ];
    let mut grid = SweepGrid::new(
        axes,
        vec!["mse".into(), "var_y".into(), "n_collapsed".into()],
    );
    let a0 = SymMatrix::diagonal(&a);
    let train_ds = sample_gaussian(2, task.n_train, &a0, task.seed)?;
    let test_ds = sample_gaussian(2, task.n_test, &a0, task.seed ^ 0x9e3779b97f4a7c15)?;
    let y_of = |ds: &crate::datamodel::Dataset| -> Vec<f64> {
        (0..ds.n()).map(|i| task.target_coeff * ds.point(i)[0]).collect()
    };
    let y_train = y_of(&train_ds);
    let y_test = y_of(&test_ds);
    let var_y = y_test.iter().map(|v| v * v).sum::<f64>() / y_test.len() as f64;

    fill_grid(&mut grid, |idx| {
        let sigma = sigma_values[idx[0]];
        let theta = theta_values[idx[1]];
        let aug = AugmentationSpec::Structured { sigma, theta };
        let cov = CovarianceModel::from_augmentation(a0.clone(), &aug)?;
        let spec = LossSpec::beta_infonce(beta);
        let weights = match mode {
            SweepMode::Analytic => {
                let gm = solver::global_minimum(&spec, &cov, 2)?;
                Weights::new(spectra::lift_gram(&gm.wtw, 2)?)
            }
            SweepMode::Trained => {
                let record = train(
                    &spec,
                    &LossSource::ClosedForm(&cov),
                    2,
                    &TrainConfig {
                        seed: task.seed ^ (idx[0] * 64 + idx[1]) as u64,
                        ..cfg.clone()
                    },
                )?;
                record.final_weights
            }
        };
        let embed = |ds: &crate::datamodel::Dataset| -> Mat {
            let mut z = Mat::zeros(ds.n(), weights.d1());
            for i in 0..ds.n() {
                let x = ds.point(i);
                for r in 0..weights.d1() {
                    let mut s = 0.0;
                    for j in 0..2 {
                        s += weights.w.get(r, j) * x[j];
                    }
                    z.set(i, r, s);
                }
            }
            z
        };
        let z_train = embed(&train_ds);
        let z_test = embed(&test_ds);
        let mse = ridge_mse(&z_train, &y_train, &z_test, &y_test, task.ridge_lambda);

        let eigs = spectra::eig_sym(&weights.gram())?.eigenvalues;
        let max = eigs.iter().cloned().fold(0.0f64, f64::max);
        let n_collapsed = eigs.iter().filter(|&&e| e < 1e-4 * max.max(1e-300)).count();

        let mut values = BTreeMap::new();
        values.insert("mse".into(), mse);
        values.insert("var_y".into(), var_y);
        values.insert("n_collapsed".into(), n_collapsed as f64);
        Ok(values)
    })?;
    Ok(grid)
}

/// Two-class mixture template; the sweep varies the class proportion.
#[derive(Debug, Clone)]
pub struct ImbalanceFamily {
    pub class_means: [Vec<f64>; 2],
    pub class_covs: [SymMatrix; 2],
}

/// Largest principal angle between the dominant coefficient eigenspaces
/// at proportion `p` and at the balanced reference, for the
/// feature-driven and augmentation-driven losses side by side.
pub fn imbalance_robustness(
    family: &ImbalanceFamily,
    proportions: &[f64],
    c: &SymMatrix,
) -> Result<SweepGrid> {
    let d = c.dim();
    let spec_feature = LossSpec::infonce();
    let spec_aug = LossSpec::spectral_contrastive();

    let cov_at = |p: f64| -> Result<CovarianceModel> {
        let spec = ImbalanceSpec {
            proportions: [p, 1.0 - p],
            class_means: family.class_means.clone(),
            class_covs: family.class_covs.clone(),
        };
        Ok(CovarianceModel::new(imbalanced_cov(&spec)?, c.clone())?)
    };

    // Dominant-subspace size from the balanced reference: modes whose
    // coefficient exceeds half the largest.
    let top_subspace = |spec: &LossSpec, cov: &CovarianceModel, k_fixed: Option<usize>| -> Result<(Mat, usize)> {
        let b = crate::losses::origin_hessian(spec, cov)?;
        let pair = spectra::eig_sym(&b)?;
        let k = k_fixed.unwrap_or_else(|| {
            let top = pair.eigenvalues[0];
            pair.eigenvalues.iter().filter(|&&l| l > 0.5 * top).count().max(1)
        });
        let mut u = Mat::zeros(d, k);
        for col in 0..k {
            for r in 0..d {
                u.set(r, col, pair.eigenvectors.get(r, col));
            }
        }
        Ok((u, k))
    };

    let reference = cov_at(0.5)?;
    let (u_feat_ref, k_feat) = top_subspace(&spec_feature, &reference, None)?;
    let (u_aug_ref, k_aug) = top_subspace(&spec_aug, &reference, None)?;

    let axis = Axis::new("p", proportions.to_vec())?;
    let mut grid = SweepGrid::new(
        vec![axis],
        vec!["angle_feature_loss".into(), "angle_augmentation_loss".into()],
    );
    fill_grid(&mut grid, |idx| {
        let cov = cov_at(proportions[idx[0]])?;
        let (u_feat, _) = top_subspace(&spec_feature, &cov, Some(k_feat))?;
        let (u_aug, _) = top_subspace(&spec_aug, &cov, Some(k_aug))?;
        let mut values = BTreeMap::new();
        values.insert(
            "angle_feature_loss".into(),
            spectra::principal_angle(&u_feat, &u_feat_ref)?,
        );
        values.insert(
            "angle_augmentation_loss".into(),
            spectra::principal_angle(&u_aug, &u_aug_ref)?,
        );
        Ok(values)
    })?;
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OriginClass {
    LocalMax,
    Saddle,
    LocalMin,
}

impl OriginClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            OriginClass::LocalMax => "local_max",
            OriginClass::Saddle => "saddle",
            OriginClass::LocalMin => "local_min",
        }
    }
}

#[derive(Debug, Clone)]
pub enum SliceKind {
    /// Rescale a base weight matrix by a single factor.
    Scalar,
    /// Rescale the larger-half and smaller-half singular directions of the
    /// base weights independently.
    TwoD,
}

#[derive(Debug, Clone)]
pub struct SliceResult {
    pub grid: SweepGrid,
    pub origin_class: OriginClass,
}

fn slice_directions(
    spec: &LossSpec,
    cov: &CovarianceModel,
    w_base: Option<&Weights>,
) -> Result<(Mat, Mat)> {
    if let Some(w) = w_base {
        let gram = w.gram();
        let pair = spectra::eig_sym(&gram)?;
        let scale = pair.eigenvalues[0].abs().max(1e-300);
        let k = pair.eigenvalues.iter().filter(|&&l| l > 1e-10 * scale).count();
        if k >= 2 {
            // Split singular directions into halves by magnitude.
            let d1 = w.d1();
            let d0 = w.d0();
            let hi_count = k.div_ceil(2);
            let mut hi = Mat::zeros(d1, d0);
            let mut lo = Mat::zeros(d1, d0);
            for m in 0..k {
                let s = pair.eigenvalues[m].sqrt();
                let v = pair.eigenvectors.col(m);
                // u_m = W v_m / s
                let mut u = vec![0.0; d1];
                for r in 0..d1 {
                    let mut acc = 0.0;
                    for j in 0..d0 {
                        acc += w.w.get(r, j) * v[j];
                    }
                    u[r] = acc / s;
                }
                let target = if m < hi_count { &mut hi } else { &mut lo };
                for r in 0..d1 {
                    for j in 0..d0 {
                        target.set(r, j, target.get(r, j) + s * u[r] * v[j]);
                    }
                }
            }
            return Ok((hi, lo));
        }
    }
    // Degenerate or absent base weights: use the top two eigenmodes of the
    // origin coefficient as canonical slice directions.
    let b = crate::losses::origin_hessian(spec, cov)?;
    let pair = spectra::eig_sym(&b)?;
    let d0 = cov.dim();
    let mk = |mode: usize, row: usize| -> Mat {
        let mut m = Mat::zeros(d0.max(2), d0);
        for j in 0..d0 {
            m.set(row, j, pair.eigenvectors.get(j, mode));
        }
        m
    };
    Ok((mk(0, 0), mk(1.min(d0 - 1), 1.min(d0.max(2) - 1))))
}

/// Loss values over a one- or two-parameter slice through the landscape,
/// with the origin classified from the central second differences.
pub fn landscape_slice(
    spec: &LossSpec,
    cov: &CovarianceModel,
    w_base: Option<&Weights>,
    kind: SliceKind,
    half_range: f64,
    points_per_side: usize,
) -> Result<SliceResult> {
    if half_range <= 0.0 || points_per_side == 0 {
        return Err(ExperimentError::InvalidSweep(
            "slice needs a positive range and at least one point per side".into(),
        ));
    }
    let n = 2 * points_per_side + 1;
    let coords: Vec<f64> = (0..n)
        .map(|i| half_range * (i as f64 - points_per_side as f64) / points_per_side as f64)
        .collect();

    let loss_at = |w: &Mat| -> Result<f64> {
        Ok(crate::losses::effective_loss(spec, cov, &Weights::new(w.clone()))?)
    };

    match kind {
        SliceKind::Scalar => {
            let base = match w_base {
                Some(w) => w.w.clone(),
                None => {
                    let gm = solver::global_minimum(spec, cov, cov.dim())?;
                    spectra::lift_gram(&gm.wtw, cov.dim())?
                }
            };
            let axis = Axis::new("t", coords.clone())?;
            let mut grid = SweepGrid::new(vec![axis], vec!["loss".into()]);
            for (i, &t) in coords.iter().enumerate() {
                let mut values = BTreeMap::new();
                values.insert("loss".into(), loss_at(&base.scale(t))?);
                grid.set(&[i], &values);
            }
            let mid = points_per_side;
            let f0 = grid.get(&[mid], "loss");
            let d2 = grid.get(&[mid + 1], "loss") + grid.get(&[mid - 1], "loss") - 2.0 * f0;
            let tol = 1e-10 * (1.0 + f0.abs());
            let origin_class = if d2 < -tol {
                OriginClass::LocalMax
            } else {
                OriginClass::LocalMin
            };
            Ok(SliceResult { grid, origin_class })
        }
        SliceKind::TwoD => {
            let (hi, lo) = slice_directions(spec, cov, w_base)?;
            let axes = vec![
                Axis::new("r1", coords.clone())?,
                Axis::new("r2", coords.clone())?,
            ];
            let mut grid = SweepGrid::new(axes, vec!["loss".into()]);
            for i in 0..n {
                for j in 0..n {
                    let w = hi.scale(coords[i]).add(&lo.scale(coords[j]));
                    let mut values = BTreeMap::new();
                    values.insert("loss".into(), loss_at(&w)?);
                    grid.set(&[i, j], &values);
                }
            }
            let mid = points_per_side;
            let f0 = grid.get(&[mid, mid], "loss");
            let d2_1 =
                grid.get(&[mid + 1, mid], "loss") + grid.get(&[mid - 1, mid], "loss") - 2.0 * f0;
            let d2_2 =
                grid.get(&[mid, mid + 1], "loss") + grid.get(&[mid, mid - 1], "loss") - 2.0 * f0;
            let tol = 1e-10 * (1.0 + f0.abs());
            let down = [d2_1 < -tol, d2_2 < -tol];
            let origin_class = if down[0] && down[1] {
                OriginClass::LocalMax
            } else if !down[0] && !down[1] {
                OriginClass::LocalMin
            } else {
                OriginClass::Saddle
            };
            Ok(SliceResult { grid, origin_class })
        }
    }
}
