//! Full-batch first-order training on closed-form or sampled losses, with
//! spectrum tracking and verification against the analytic solution.
//!
//! The default configuration is full-batch Adam at learning rate 6e-4 for
//! 5000 iterations, plus a gradient-tolerance early stop to make the
//! verification tests crisp. Sampled sources redraw their augmentation
//! noise every iteration from a per-iteration substream, so a run is a
//! deterministic function of its seed.

use crate::datamodel::{stream_rng, streams, standard_normal, AugmentationSpec, CovarianceModel, Dataset};
use crate::losses::{
    effective_grad, effective_loss, sample_loss_and_grad, LossError, LossSpec, Weights,
};
use crate::solver::{self, SolverError};
use crate::spectra::{self, Mat, SpectraError};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at iteration {iteration} (loss {loss:.3e})")]
    Diverged {
        iteration: usize,
        loss: f64,
        last: Box<TrajectoryRecord>,
    },
    #[error("record did not converge")]
    NotConverged,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    GradientDescent {
        lr: f64,
    },
    /// Adam with bias correction.
    Adaptive {
        lr: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn adaptive(lr: f64) -> Optimizer {
        Optimizer::Adaptive {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            Optimizer::GradientDescent { lr } => *lr,
            Optimizer::Adaptive { lr, .. } => *lr,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub init_scale: f64,
    pub record_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::adaptive(6e-4),
            max_iters: 5000,
            grad_tol: 1e-9,
            seed: 0,
            init_scale: 0.1,
            record_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.optimizer.lr() <= 0.0 {
            return Err(TrainError::InvalidConfig("lr <= 0".into()));
        }
        if self.grad_tol <= 0.0 {
            return Err(TrainError::InvalidConfig("grad_tol <= 0".into()));
        }
        if self.init_scale <= 0.0 {
            return Err(TrainError::InvalidConfig("init_scale <= 0".into()));
        }
        if self.record_every == 0 {
            return Err(TrainError::InvalidConfig("record_every = 0".into()));
        }
        Ok(())
    }
}

/// What the trainer differentiates: the closed-form landscape of a
/// covariance model, or the Monte-Carlo sample loss on a dataset.
pub enum LossSource<'a> {
    ClosedForm(&'a CovarianceModel),
    Samples {
        ds: &'a Dataset,
        aug: &'a AugmentationSpec,
        mc_draws: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Eigenvalues of `W^T W`, descending.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub checkpoints: Vec<Checkpoint>,
    pub final_weights: Weights,
    pub converged: bool,
    pub iters_to_converge: Option<usize>,
}

impl TrajectoryRecord {
    pub fn final_gram_eigenvalues(&self) -> Vec<f64> {
        spectra::eig_sym(&self.final_weights.gram())
            .expect("finite gram")
            .eigenvalues
    }
}

fn gaussian_init(d1: usize, d0: usize, scale: f64, seed: u64) -> Mat {
    let mut rng = stream_rng(seed, streams::TRAIN_INIT, 0);
    let s = scale / (d0 as f64).sqrt();
    Mat::from_fn(d1, d0, |_, _| s * standard_normal(&mut rng))
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

fn apply_step(w: &mut Mat, grad: &Mat, opt: &Optimizer, adam: &mut AdamState) {
    match *opt {
        Optimizer::GradientDescent { lr } => {
            for i in 0..w.rows() {
                for j in 0..w.cols() {
                    w.set(i, j, w.get(i, j) - lr * grad.get(i, j));
                }
            }
        }
        Optimizer::Adaptive {
            lr,
            beta1,
            beta2,
            epsilon,
        } => {
            adam.t += 1;
            let bc1 = 1.0 - beta1.powi(adam.t as i32);
            let bc2 = 1.0 - beta2.powi(adam.t as i32);
            let cols = w.cols();
            for i in 0..w.rows() {
                for j in 0..cols {
                    let g = grad.get(i, j);
                    let idx = i * cols + j;
                    adam.m[idx] = beta1 * adam.m[idx] + (1.0 - beta1) * g;
                    adam.v[idx] = beta2 * adam.v[idx] + (1.0 - beta2) * g * g;
                    let mh = adam.m[idx] / bc1;
                    let vh = adam.v[idx] / bc2;
                    w.set(i, j, w.get(i, j) - lr * mh / (vh.sqrt() + epsilon));
                }
            }
        }
    }
}

/// Train `W` (d1 x d0) from a small Gaussian initialization. Stops early
/// once the gradient max-norm drops to `grad_tol`; `converged` reports
/// whether that happened by the final iterate. Loss above 1e12 or any
/// non-finite value aborts with the partial trajectory attached.
pub fn train(
    spec: &LossSpec,
    source: &LossSource,
    d1: usize,
    config: &TrainConfig,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    spec.validate()?;
    let d0 = match source {
        LossSource::ClosedForm(cov) => cov.dim(),
        LossSource::Samples { ds, .. } => ds.dim(),
    };
    let mut w = gaussian_init(d1, d0, config.init_scale, config.seed);
    let mut adam = AdamState {
        m: vec![0.0; d1 * d0],
        v: vec![0.0; d1 * d0],
        t: 0,
    };

    let mut checkpoints = Vec::new();
    let converged;
    let mut iters_to_converge = None;

    let mut iter = 0usize;
    loop {
        let weights = Weights::new(w.clone());
        let (loss, grad) = match source {
            LossSource::ClosedForm(cov) => (
                effective_loss(spec, cov, &weights)?,
                effective_grad(spec, cov, &weights)?,
            ),
            LossSource::Samples { ds, aug, mc_draws } => {
                let mut rng = stream_rng(config.seed, streams::TRAIN_ITER, iter as u64);
                sample_loss_and_grad(spec, ds, aug, &weights, *mc_draws, &mut rng)?
            }
        };
        let grad_norm = grad.max_abs();

        if !loss.is_finite() || loss > 1e12 || !grad_norm.is_finite() {
            let record = TrajectoryRecord {
                checkpoints,
                final_weights: weights,
                converged: false,
                iters_to_converge: None,
            };
            return Err(TrainError::Diverged {
                iteration: iter,
                loss,
                last: Box::new(record),
            });
        }

        let hit_tol = grad_norm <= config.grad_tol;
        let last_iter = iter == config.max_iters;
        if iter % config.record_every == 0 || hit_tol || last_iter {
            checkpoints.push(Checkpoint {
                iteration: iter,
                loss,
                grad_norm,
                eigenvalues: spectra::eig_sym(&weights.gram())?.eigenvalues,
            });
        }
        if hit_tol {
            converged = true;
            iters_to_converge = Some(iter);
            break;
        }
        if last_iter {
            converged = grad_norm <= config.grad_tol;
            break;
        }
        apply_step(&mut w, &grad, &config.optimizer, &mut adam);
        iter += 1;
    }

    Ok(TrajectoryRecord {
        checkpoints,
        final_weights: Weights::new(w),
        converged,
        iters_to_converge,
    })
}

#[derive(Debug, Clone)]
pub struct ModeCheck {
    pub theory: f64,
    pub trained: f64,
    pub abs_err: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub per_mode: Vec<ModeCheck>,
    pub collapse_match: bool,
    pub pass: bool,
    pub tol: f64,
}

/// Threshold below which a trained eigenvalue counts as collapsed.
pub const TRAINED_COLLAPSE_TOL: f64 = 1e-6;

/// Compare a converged run against the analytic global minimum: per-mode
/// spectrum errors at `tol` on the surviving modes, and agreement between
/// which modes trained to (near) zero and which the theory says collapse.
pub fn verify_against_theory(
    record: &TrajectoryRecord,
    spec: &LossSpec,
    cov: &CovarianceModel,
    d1: usize,
    tol: f64,
) -> Result<VerificationReport> {
    if !record.converged {
        return Err(TrainError::NotConverged);
    }
    let gm = solver::global_minimum(spec, cov, d1)?;
    let theory = spectra::eig_sym(&gm.wtw)?.eigenvalues;
    let trained = record.final_gram_eigenvalues();
    let n_survive = gm.rank;

    let mut per_mode = Vec::new();
    let mut pass = true;
    for k in 0..theory.len() {
        let t = theory[k];
        let tr = trained.get(k).copied().unwrap_or(0.0);
        let abs_err = (t - tr).abs();
        let rel_err = abs_err / t.abs().max(1e-300);
        if k < n_survive && rel_err > tol {
            pass = false;
        }
        per_mode.push(ModeCheck {
            theory: t,
            trained: tr,
            abs_err,
            rel_err,
        });
    }
    let mut collapse_match = true;
    for (k, &tr) in trained.iter().enumerate() {
        let should_survive = k < n_survive;
        if should_survive != (tr >= TRAINED_COLLAPSE_TOL) {
            collapse_match = false;
        }
    }
    Ok(VerificationReport {
        per_mode,
        collapse_match,
        pass: pass && collapse_match,
        tol,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SlowdownPoint {
    pub param: f64,
    pub iters: usize,
    pub hit_max: bool,
}

/// Iterations until a tracked eigenmode of `W^T W` stops moving
/// (per-iteration change below 1e-9), across a family of instances
/// parameterized by `param`. Near a collapse boundary the tracked mode's
/// curvature vanishes and the count diverges.
pub fn convergence_time_sweep(
    instances: &[(f64, LossSpec, CovarianceModel)],
    d1: usize,
    config: &TrainConfig,
    mode_index: usize,
) -> Result<Vec<SlowdownPoint>> {
    config.validate()?;
    let mut out = Vec::new();
    for (param, spec, cov) in instances {
        let d0 = cov.dim();
        let mut w = gaussian_init(d1, d0, config.init_scale, config.seed);
        let mut adam = AdamState {
            m: vec![0.0; d1 * d0],
            v: vec![0.0; d1 * d0],
            t: 0,
        };
        let mut prev = f64::NAN;
        let mut iters = config.max_iters;
        let mut hit_max = true;
        for iter in 0..=config.max_iters {
            let weights = Weights::new(w.clone());
            let eigs = spectra::eig_sym(&weights.gram())?.eigenvalues;
            let tracked = eigs[mode_index.min(eigs.len() - 1)];
            if iter > 10 && (tracked - prev).abs() < 1e-9 {
                iters = iter;
                hit_max = false;
                break;
            }
            prev = tracked;
            let grad = effective_grad(spec, cov, &weights)?;
            apply_step(&mut w, &grad, &config.optimizer, &mut adam);
        }
        out.push(SlowdownPoint {
            param: *param,
            iters,
            hit_max,
        });
    }
    Ok(out)
}

/// Columns `iter,loss,grad_norm,eig_0..eig_{d-1}`.
pub fn write_trajectory_csv(record: &TrajectoryRecord, w: &mut impl Write) -> Result<()> {
    let d = record
        .checkpoints
        .first()
        .map(|c| c.eigenvalues.len())
        .unwrap_or(0);
    let mut header = vec!["iter".to_string(), "loss".to_string(), "grad_norm".to_string()];
    for k in 0..d {
        header.push(format!("eig_{k}"));
    }
    write!(w, "{}\r\n", header.join(","))?;
    for c in &record.checkpoints {
        let mut row = vec![
            format!("{}", c.iteration),
            format!("{}", c.loss),
            format!("{}", c.grad_norm),
        ];
        for e in &c.eigenvalues {
            row.push(format!("{e}"));
        }
        write!(w, "{}\r\n", row.join(","))?;
    }
    Ok(())
}
