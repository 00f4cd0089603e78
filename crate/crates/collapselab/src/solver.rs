//! Analytic stationary points and collapse prediction.
//!
//! With Gaussian data the landscape `-Tr[W B W^T] + Tr[(W Sigma W^T)^2]`
//! has a fully enumerable stationary set: whiten `B` by `Sigma^{-1/2}`,
//! eigendecompose, and every stationary Gram matrix is
//! `W^T W = 1/2 Sigma^{-1/2} U (M . Lambda) U^T Sigma^{-1/2}` for a 0/1
//! mask `M` that never selects a negative eigenvalue and keeps at most
//! `min(d0, d1)` modes. When the clean and augmentation covariances
//! commute this reduces per mode to eigenvalues `b_i / (2 s_i^2)` of
//! `W^T W`, with stationary loss `-1/4 sum_i (b_i / s_i)^2`.
//!
//! Mode indices everywhere refer to the descending eigenvalue order of the
//! whitened coefficient `Sigma^{-1/2} B Sigma^{-1/2}`.

use crate::datamodel::CovarianceModel;
use crate::losses::{origin_hessian, Family, Kappa, LossError, LossSpec};
use crate::spectra::{self, Mask, Mat, SpectraError, SymMatrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("sigma is numerically singular: smallest eigenvalue {0:.3e}")]
    SingularSigma(f64),
    #[error("mask selects no modes")]
    EmptyMask,
    #[error("operation requires commuting covariances")]
    NonCommuting,
    #[error("invalid solver input: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

type Result<T> = std::result::Result<T, SolverError>;

/// Eigenvalue floor below which `Sigma` counts as singular.
const SIGMA_FLOOR: f64 = 1e-10;

/// Relative threshold: a coefficient eigenvalue at or below
/// `1e-12 * ||B||` counts as collapsed (boundary modes collapse).
const COLLAPSE_REL_TOL: f64 = 1e-12;

/// One stationary point of the quartic landscape.
#[derive(Debug, Clone)]
pub struct StationaryPoint {
    pub mask: Mask,
    pub wtw: SymMatrix,
    pub loss_value: f64,
    pub is_local_min: bool,
    pub rank: usize,
}

/// Per-mode collapse record. `a` and `c` are populated only when the
/// covariances commute, so the mode pairs up with one eigenvalue of each.
/// `pressure >= drive` (equivalently `b <= 0`) means the mode collapses;
/// `threshold = pressure - drive = -b`.
#[derive(Debug, Clone)]
pub struct ModeRecord {
    pub index: usize,
    pub a: Option<f64>,
    pub c: Option<f64>,
    pub b: f64,
    pub collapses: bool,
    pub pressure: f64,
    pub drive: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct CollapseReport {
    pub modes: Vec<ModeRecord>,
    pub complete_collapse: bool,
    pub dimensional_collapse: bool,
}

/// A stationary point of the norm-constrained landscape.
#[derive(Debug, Clone)]
pub struct NormalizedSolution {
    pub mask: Mask,
    pub wtw: SymMatrix,
    pub d_m: usize,
    pub rho: f64,
    pub feasible: bool,
}

/// Solution set under an active norm bound with a bias term: the
/// unconstrained stationary points filtered to `rho <= c`.
#[derive(Debug, Clone)]
pub struct BiasSolutions {
    pub points: Vec<StationaryPoint>,
    pub max_d_m: usize,
    pub complete_collapse_possible: bool,
}

/// Commuting-case mode data in canonical (descending `b/s`) order.
#[derive(Debug, Clone)]
pub struct Modes {
    /// Shared eigenbasis, one column per mode.
    pub basis: Mat,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    pub b: Vec<f64>,
    /// Whitened coefficient `b_i / s_i`.
    pub lambda: Vec<f64>,
}

impl Modes {
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Gram matrix with the given eigenvalue per mode.
    pub fn assemble(&self, eigs: &[f64]) -> SymMatrix {
        let n = self.dim();
        let mut data = vec![0.0; n * n];
        for (k, &e) in eigs.iter().enumerate() {
            if e == 0.0 {
                continue;
            }
            for i in 0..n {
                let ui = self.basis.get(i, k);
                for j in 0..n {
                    data[i * n + j] += e * ui * self.basis.get(j, k);
                }
            }
        }
        SymMatrix::new(n, data).expect("finite assembly")
    }
}

fn spec_without_constraints(spec: &LossSpec) -> LossSpec {
    LossSpec {
        normalization: None,
        bias_enabled: false,
        ..spec.clone()
    }
}

fn check_sigma(cov: &CovarianceModel) -> Result<()> {
    let pair = spectra::eig_sym(cov.sigma())?;
    let min = pair.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= SIGMA_FLOOR {
        return Err(SolverError::SingularSigma(min));
    }
    Ok(())
}

/// Shared-basis mode analysis for commuting covariances. Errors with
/// [`SolverError::NonCommuting`] when `A0` and `C` (or a user-supplied
/// coefficient matrix) do not share an eigenbasis.
pub fn mode_analysis(spec: &LossSpec, cov: &CovarianceModel) -> Result<Modes> {
    if !cov.commuting() {
        return Err(SolverError::NonCommuting);
    }
    check_sigma(cov)?;
    let (basis, a_vals, c_vals) = spectra::joint_eig(cov.a0(), cov.c(), 1e-8)?;
    let n = cov.dim();
    let b_mat = origin_hessian(&spec_without_constraints(spec), cov)?.to_mat();

    // Project the coefficient onto the joint basis; it must be diagonal
    // there, which holds by construction for the built-in families and is
    // a real restriction only for user-supplied coefficients.
    let mut b_vals = vec![0.0; n];
    let mut max_off = 0.0f64;
    let cols: Vec<Vec<f64>> = (0..n).map(|k| basis.col(k)).collect();
    for i in 0..n {
        let mut bi = vec![0.0; n];
        for r in 0..n {
            let mut s = 0.0;
            for t in 0..n {
                s += b_mat.get(r, t) * cols[i][t];
            }
            bi[r] = s;
        }
        for j in 0..n {
            let v: f64 = (0..n).map(|r| cols[j][r] * bi[r]).sum();
            if i == j {
                b_vals[i] = v;
            } else {
                max_off = max_off.max(v.abs());
            }
        }
    }
    if max_off > 1e-7 * (1.0 + b_mat.max_abs()) {
        return Err(SolverError::NonCommuting);
    }

    let s_vals: Vec<f64> = a_vals.iter().zip(&c_vals).map(|(a, c)| a + c).collect();
    let lambda: Vec<f64> = b_vals.iter().zip(&s_vals).map(|(b, s)| b / s).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| lambda[j].partial_cmp(&lambda[i]).unwrap().then(i.cmp(&j)));

    let pick = |v: &[f64]| -> Vec<f64> { order.iter().map(|&k| v[k]).collect() };
    let mut basis_sorted = Mat::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        for r in 0..n {
            basis_sorted.set(r, col, basis.get(r, k));
        }
    }
    Ok(Modes {
        basis: basis_sorted,
        a: pick(&a_vals),
        c: pick(&c_vals),
        s: pick(&s_vals),
        b: pick(&b_vals),
        lambda: pick(&lambda),
    })
}

struct WhitenedSpectrum {
    lambda: Vec<f64>,
    /// Columns of `Sigma^{-1/2} U`, the (non-orthonormal) directions the
    /// stationary Gram matrices are built from.
    directions: Mat,
}

fn whitened_spectrum(spec: &LossSpec, cov: &CovarianceModel) -> Result<WhitenedSpectrum> {
    check_sigma(cov)?;
    let b = origin_hessian(&spec_without_constraints(spec), cov)?;
    let sigma_inv_half = spectra::mat_pow(cov.sigma(), -0.5)?;
    let whitened = SymMatrix::from_mat(
        &sigma_inv_half
            .to_mat()
            .mul(&b.to_mat())
            .mul(&sigma_inv_half.to_mat()),
    )?;
    let pair = spectra::eig_sym(&whitened)?;
    let directions = sigma_inv_half.to_mat().mul(&pair.eigenvectors);
    Ok(WhitenedSpectrum {
        lambda: pair.eigenvalues,
        directions,
    })
}

fn gram_from_mask(ws: &WhitenedSpectrum, mask: &Mask) -> SymMatrix {
    let n = ws.lambda.len();
    let mut data = vec![0.0; n * n];
    for k in 0..n {
        if !mask.bit(k) {
            continue;
        }
        let l = 0.5 * ws.lambda[k];
        for i in 0..n {
            let di = ws.directions.get(i, k);
            for j in 0..n {
                data[i * n + j] += l * di * ws.directions.get(j, k);
            }
        }
    }
    SymMatrix::new(n, data).expect("finite gram")
}

fn stationary_loss(ws: &WhitenedSpectrum, mask: &Mask) -> f64 {
    -0.25
        * ws
            .lambda
            .iter()
            .enumerate()
            .filter(|(k, _)| mask.bit(*k))
            .map(|(_, l)| l * l)
            .sum::<f64>()
}

/// Subsets of the positive modes, capped at `d_star` selections. Positive
/// modes form a prefix of the descending spectrum.
fn enumerate_masks(lambda: &[f64], d_star: usize, pos_tol: f64) -> Vec<Mask> {
    let n = lambda.len();
    let m = lambda.iter().filter(|&&l| l > pos_tol).count();
    let cap = d_star.min(m);
    let mut masks = Vec::new();
    if m <= 20 {
        for bits in 0u64..(1u64 << m) {
            if (bits.count_ones() as usize) <= cap {
                masks.push(Mask::new((0..n).map(|i| i < m && (bits >> i) & 1 == 1).collect()));
            }
        }
        masks.sort_by_key(|mk| mk.encoding());
    } else {
        // Documented truncation for wide spectra: the empty mask, the
        // top-cap mask, and each of its single-mode-off neighbours.
        masks.push(Mask::none(n));
        let top = Mask::new((0..n).map(|i| i < cap).collect());
        for drop in 0..cap {
            masks.push(Mask::new((0..n).map(|i| i < cap && i != drop).collect()));
        }
        masks.push(top);
    }
    masks
}

fn classify_local_min(lambda: &[f64], mask: &Mask, d_star: usize, pos_tol: f64) -> bool {
    let m = lambda.iter().filter(|&&l| l > pos_tol).count();
    let want = m.min(d_star);
    if mask.popcount() != want {
        return false;
    }
    let tie = 1e-9 * (1.0 + lambda.iter().fold(0.0f64, |mx, l| mx.max(l.abs())));
    let selected_min = mask
        .indices()
        .iter()
        .map(|&i| lambda[i])
        .fold(f64::INFINITY, f64::min);
    let unselected_max = (0..lambda.len())
        .filter(|&i| !mask.bit(i) && lambda[i] > pos_tol)
        .map(|i| lambda[i])
        .fold(f64::NEG_INFINITY, f64::max);
    selected_min >= unselected_max - tie
}

/// Every stationary point of the unconstrained landscape, one per valid
/// mask. Valid masks never select a non-positive whitened eigenvalue and
/// keep at most `min(d0, d1)` modes. Exhaustive up to 20 positive modes;
/// wider spectra fall back to a documented truncated family (empty mask,
/// the global-minimum mask, and its single-mode-off neighbours).
pub fn stationary_points(
    spec: &LossSpec,
    cov: &CovarianceModel,
    d1: usize,
) -> Result<Vec<StationaryPoint>> {
    if spec.normalization.is_some() {
        return Err(SolverError::InvalidSpec(
            "norm-constrained landscapes have their own solvers".into(),
        ));
    }
    if d1 == 0 {
        return Err(SolverError::InvalidSpec("d1 = 0".into()));
    }
    let ws = whitened_spectrum(spec, cov)?;
    let scale = ws.lambda.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let pos_tol = COLLAPSE_REL_TOL * (1.0 + scale);
    let d_star = d1.min(cov.dim());
    let masks = enumerate_masks(&ws.lambda, d_star, pos_tol);
    Ok(masks
        .into_iter()
        .map(|mask| {
            let wtw = gram_from_mask(&ws, &mask);
            let rank = mask.popcount();
            StationaryPoint {
                is_local_min: classify_local_min(&ws.lambda, &mask, d_star, pos_tol),
                loss_value: stationary_loss(&ws, &mask),
                wtw,
                rank,
                mask,
            }
        })
        .collect())
}

/// The stationary point with the lowest loss; ties resolve to the mask
/// keeping lower-indexed (larger-eigenvalue) modes.
pub fn global_minimum(
    spec: &LossSpec,
    cov: &CovarianceModel,
    d1: usize,
) -> Result<StationaryPoint> {
    let pts = stationary_points(spec, cov, d1)?;
    pts.into_iter()
        .min_by(|x, y| {
            x.loss_value
                .partial_cmp(&y.loss_value)
                .unwrap()
                .then(x.mask.encoding().cmp(&y.mask.encoding()))
        })
        .ok_or_else(|| SolverError::InvalidSpec("no stationary points".into()))
}

fn family_pressure_drive(spec: &LossSpec, a: f64, c: f64, b: f64) -> (f64, f64) {
    let gamma = spec.weight_decay;
    match &spec.family {
        Family::InfoNce => (gamma, a),
        Family::WeightedInfoNce { alpha } => ((1.0 - alpha) * c / spec.n as f64 + gamma, a),
        Family::BetaInfoNce { beta } => ((1.0 - beta) * c + gamma, a),
        Family::SpectralContrastive => (gamma, 2.0 * c),
        Family::BarlowTwins => (gamma, 2.0 * (a + c)),
        Family::EffectiveQuartic { .. } => (gamma, b + gamma),
    }
}

/// Per-mode collapse verdicts from the signs of the coefficient spectrum.
///
/// Verdicts describe the unconstrained landscape; when a norm constraint
/// is active use the normalized solvers instead. With commuting
/// covariances each record carries its `(a_i, c_i)` pair; otherwise the
/// verdicts are per eigenvalue of the coefficient matrix alone.
pub fn predict_collapse(spec: &LossSpec, cov: &CovarianceModel) -> Result<CollapseReport> {
    let b_mat = origin_hessian(&spec_without_constraints(spec), cov)?;
    let tol = COLLAPSE_REL_TOL * b_mat.max_abs().max(f64::MIN_POSITIVE);

    let modes: Vec<ModeRecord> = match mode_analysis(spec, cov) {
        Ok(modes) => (0..modes.dim())
            .map(|i| {
                let (pressure, drive) = family_pressure_drive(spec, modes.a[i], modes.c[i], modes.b[i]);
                ModeRecord {
                    index: i,
                    a: Some(modes.a[i]),
                    c: Some(modes.c[i]),
                    b: modes.b[i],
                    collapses: modes.b[i] <= tol,
                    pressure,
                    drive,
                    threshold: pressure - drive,
                }
            })
            .collect(),
        Err(SolverError::NonCommuting) => {
            let pair = spectra::eig_sym(&b_mat)?;
            pair.eigenvalues
                .iter()
                .enumerate()
                .map(|(i, &b)| ModeRecord {
                    index: i,
                    a: None,
                    c: None,
                    b,
                    collapses: b <= tol,
                    pressure: spec.weight_decay,
                    drive: b + spec.weight_decay,
                    threshold: -b,
                })
                .collect()
        }
        Err(e) => return Err(e),
    };

    let collapsed = modes.iter().filter(|m| m.collapses).count();
    Ok(CollapseReport {
        complete_collapse: collapsed == modes.len(),
        dimensional_collapse: collapsed > 0 && collapsed < modes.len(),
        modes,
    })
}

fn require_infinite_norm(spec: &LossSpec) -> Result<f64> {
    match &spec.normalization {
        Some(norm) if matches!(norm.kappa, Kappa::Infinite) => Ok(norm.target),
        _ => Err(SolverError::InvalidSpec(
            "expected a norm constraint with infinite strength".into(),
        )),
    }
}

fn require_finite_norm(spec: &LossSpec) -> Result<(f64, f64)> {
    match &spec.normalization {
        Some(norm) => match norm.kappa {
            Kappa::Finite(k) => Ok((k, norm.target)),
            Kappa::Infinite => Err(SolverError::InvalidSpec(
                "expected a finite constraint strength".into(),
            )),
        },
        None => Err(SolverError::InvalidSpec("expected a norm constraint".into())),
    }
}

/// Hard-constraint limit of the norm-regularized landscape for one mask:
/// the retained modes get Gram eigenvalues `(lambda_i + g) / (2 s_i)` with
/// `g = (2c - sum_i lambda_i) / d_M`, which puts `Tr[W^T W Sigma]` exactly
/// at the target `c`. Feasible iff every retained `lambda_i + g > 0`,
/// i.e. no retained mode sits more than `2c/d_M` below the retained mean.
pub fn normalized_limit(
    spec: &LossSpec,
    cov: &CovarianceModel,
    mask: &Mask,
) -> Result<NormalizedSolution> {
    let c_target = require_infinite_norm(spec)?;
    let modes = mode_analysis(spec, cov)?;
    if mask.len() != modes.dim() {
        return Err(SolverError::InvalidSpec(format!(
            "mask length {} vs dim {}",
            mask.len(),
            modes.dim()
        )));
    }
    if mask.is_empty() {
        return Err(SolverError::EmptyMask);
    }
    let selected = mask.indices();
    let d_m = selected.len();
    let t: f64 = selected.iter().map(|&i| modes.lambda[i]).sum();
    let g = (2.0 * c_target - t) / d_m as f64;

    let scale = 1.0
        + modes
            .lambda
            .iter()
            .fold(0.0f64, |m, l| m.max(l.abs()))
            .max(g.abs());
    let mut feasible = true;
    let mut eigs = vec![0.0; modes.dim()];
    for &i in &selected {
        let bracket = modes.lambda[i] + g;
        if bracket <= 1e-12 * scale {
            feasible = false;
        }
        eigs[i] = bracket / (2.0 * modes.s[i]);
    }
    let wtw = modes.assemble(&eigs);
    let rho: f64 = selected.iter().map(|&i| eigs[i] * modes.s[i]).sum();
    Ok(NormalizedSolution {
        mask: mask.clone(),
        wtw,
        d_m,
        rho,
        feasible,
    })
}

/// Stationary points at finite constraint strength. For a candidate mask
/// the trace `rho` has the closed form
/// `c - rho = (c - 1/2 sum_i lambda_i) / (1 + kappa d_M)`, giving a
/// shifted coefficient `b'_i = b_i + 2 kappa (c - rho) s_i`. A mask is
/// kept when its selected shifted coefficients are positive and the
/// unselected ones are negative (unless the mask is already at full
/// rank). When nothing is self-consistent only the origin remains.
pub fn finite_norm_solutions(
    spec: &LossSpec,
    cov: &CovarianceModel,
    d1: usize,
) -> Result<Vec<NormalizedSolution>> {
    let (kappa, c_target) = require_finite_norm(spec)?;
    let modes = mode_analysis(spec, cov)?;
    let n = modes.dim();
    if n > 20 {
        return Err(SolverError::InvalidSpec(
            "finite-strength enumeration is limited to 20 modes".into(),
        ));
    }
    let d_star = d1.min(n);
    let scale = 1.0 + modes.b.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let tol = 1e-12 * scale;

    let mut out = Vec::new();
    for bits in 0u64..(1u64 << n) {
        let mask = Mask::new((0..n).map(|i| (bits >> i) & 1 == 1).collect());
        let d_m = mask.popcount();
        if d_m > d_star {
            continue;
        }
        let t_half: f64 = 0.5 * mask.indices().iter().map(|&i| modes.lambda[i]).sum::<f64>();
        let c_minus_rho = (c_target - t_half) / (1.0 + kappa * d_m as f64);
        let shift = 2.0 * kappa * c_minus_rho;
        let bp: Vec<f64> = (0..n).map(|i| modes.b[i] + shift * modes.s[i]).collect();

        let selected_ok = mask.indices().iter().all(|&i| bp[i] > tol);
        let unselected_ok =
            d_m == d_star || (0..n).filter(|i| !mask.bit(*i)).all(|i| bp[i] <= tol);
        if !(selected_ok && unselected_ok) {
            continue;
        }
        let mut eigs = vec![0.0; n];
        for &i in &mask.indices() {
            eigs[i] = 0.5 * bp[i] / (modes.s[i] * modes.s[i]);
        }
        let rho: f64 = (0..n).map(|i| eigs[i] * modes.s[i]).sum();
        out.push(NormalizedSolution {
            wtw: modes.assemble(&eigs),
            d_m,
            rho,
            feasible: true,
            mask,
        });
    }
    if out.is_empty() {
        out.push(NormalizedSolution {
            mask: Mask::none(n),
            wtw: SymMatrix::zeros(n),
            d_m: 0,
            rho: 0.0,
            feasible: false,
        });
    }
    out.sort_by_key(|s| s.mask.encoding());
    Ok(out)
}

/// Solution set when the model has both a norm constraint and a bias.
/// The bias soaks up the constraint, so the stationary points revert to
/// the unconstrained family subject to `rho = Tr[W^T W Sigma] <= c`;
/// `rho` per mask is `1/2 sum_i lambda_i`. The complete-collapse flag
/// uses the per-mode bound `c < lambda_i`: when every retainable mode
/// violates it, the origin can win outright despite the constraint.
pub fn bias_constrained_solutions(
    spec: &LossSpec,
    cov: &CovarianceModel,
    d1: usize,
) -> Result<BiasSolutions> {
    if spec.normalization.is_none() || !spec.bias_enabled {
        return Err(SolverError::InvalidSpec(
            "expected a norm constraint with bias enabled".into(),
        ));
    }
    let c_target = spec.normalization.as_ref().unwrap().target;
    let modes = mode_analysis(spec, cov)?;
    let unconstrained = stationary_points(&spec_without_constraints(spec), cov, d1)?;

    let mut points = Vec::new();
    let mut max_d_m = 0;
    for pt in unconstrained {
        let rho: f64 = 0.5
            * pt.mask
                .indices()
                .iter()
                .map(|&i| modes.lambda[i])
                .sum::<f64>();
        if rho <= c_target + 1e-12 {
            max_d_m = max_d_m.max(pt.mask.popcount());
            points.push(pt);
        }
    }

    let scale = 1.0 + modes.lambda.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let retainable: Vec<f64> = modes
        .lambda
        .iter()
        .cloned()
        .filter(|&l| l > 1e-12 * scale)
        .collect();
    let complete_collapse_possible =
        retainable.is_empty() || retainable.iter().all(|&l| c_target < l);

    Ok(BiasSolutions {
        points,
        max_d_m,
        complete_collapse_possible,
    })
}

/// Per-mode margin for the hard-constraint feasibility condition on a
/// retained set `sel`: `lambda_i + 2c/d - mean(lambda_sel)`. Positive
/// margins keep the mode alive in the hard-constraint limit.
pub fn limit_margins(lambda: &[f64], sel: &[usize], c: f64) -> Vec<f64> {
    let d = sel.len() as f64;
    let mean = sel.iter().map(|&i| lambda[i]).sum::<f64>() / d;
    sel.iter()
        .map(|&i| lambda[i] + 2.0 * c / d - mean)
        .collect()
}

/// Drop violating modes one at a time (worst margin first) until the
/// retained set is feasible under the hard norm constraint.
pub fn hard_limit_surviving(lambda: &[f64], c: f64) -> Vec<bool> {
    let n = lambda.len();
    let mut keep: Vec<usize> = (0..n).collect();
    loop {
        if keep.is_empty() {
            break;
        }
        let margins = limit_margins(lambda, &keep, c);
        let scale = 1.0 + lambda.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let mut worst = None;
        for (pos, &m) in margins.iter().enumerate() {
            if m <= 1e-12 * scale {
                worst = match worst {
                    None => Some((pos, m)),
                    Some((_, wm)) if m < wm => Some((pos, m)),
                    w => w,
                };
            }
        }
        match worst {
            Some((pos, _)) => {
                keep.remove(pos);
            }
            None => break,
        }
    }
    let mut out = vec![false; n];
    for &i in &keep {
        out[i] = true;
    }
    out
}

/// Per-mode data for the hard-constraint case analysis.
#[derive(Debug, Clone)]
pub struct CaseMode {
    pub a: f64,
    pub c: f64,
    pub lambda: f64,
    pub survives: bool,
    pub singleton_feasible: bool,
}

#[derive(Debug, Clone)]
pub struct StrongSingleMode {
    pub mode: usize,
    pub collapses_in_full_mask: bool,
    pub singleton_feasible: bool,
}

#[derive(Debug, Clone)]
pub struct WeakEpsilonCase {
    pub mode: usize,
    pub epsilon: f64,
    /// `(a+c)(d-3)/(a+c+d)`, the bound as usually quoted.
    pub quoted_bound: f64,
    pub quoted_predicts_collapse: bool,
    /// Direct evaluation of the feasibility condition under the full mask.
    pub limit_predicts_collapse: bool,
    pub agree: bool,
}

/// Structured case analysis of the hard-constraint collapse condition for
/// the energy-minus-entropy coefficient `b = a - c` (the convention the
/// condition is usually analyzed in):
///
/// 1. vanishing augmentation never collapses;
/// 2. one strongly augmented mode collapses out of any wider retained
///    set, and survives only as the sole retained mode;
/// 3. a weakly augmented mode (`a - c = eps` small) can still collapse;
///    the quoted closed-form bound on `eps` is evaluated alongside the
///    exact condition and the agreement recorded.
#[derive(Debug, Clone)]
pub struct CollapseCaseReport {
    pub modes: Vec<CaseMode>,
    pub small_augmentation_no_collapse: Option<bool>,
    pub strong_single_mode: Option<StrongSingleMode>,
    pub weak_epsilon: Option<WeakEpsilonCase>,
}

pub fn collapse_case_analysis(cov: &CovarianceModel, c_target: f64) -> Result<CollapseCaseReport> {
    if c_target <= 0.0 || !c_target.is_finite() {
        return Err(SolverError::InvalidSpec(format!("target c = {c_target}")));
    }
    let spec = LossSpec::beta_infonce(0.0); // b = a - c
    let modes = mode_analysis(&spec, cov)?;
    let n = modes.dim();

    let surviving = hard_limit_surviving(&modes.lambda, c_target);
    let scale = 1.0 + modes.lambda.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let case_modes: Vec<CaseMode> = (0..n)
        .map(|i| CaseMode {
            a: modes.a[i],
            c: modes.c[i],
            lambda: modes.lambda[i],
            survives: surviving[i],
            // A singleton retained set is feasible iff 2c > 0, but keep the
            // exact margin in case of pathological targets.
            singleton_feasible: limit_margins(&modes.lambda, &[i], c_target)[0] > 1e-12 * scale,
        })
        .collect();

    // Case 1: all augmentations negligible relative to the features.
    let small_aug = (0..n).all(|i| modes.c[i].abs() <= 1e-3 * modes.a[i].abs().max(1e-300));
    let small_augmentation_no_collapse = if small_aug {
        Some(case_modes.iter().all(|m| m.survives))
    } else {
        None
    };

    // Case 2: exactly one mode with overwhelming augmentation.
    let strong: Vec<usize> = (0..n).filter(|&i| modes.c[i] >= 1e3 * modes.a[i]).collect();
    let strong_single_mode = if strong.len() == 1 {
        let j = strong[0];
        let full: Vec<usize> = (0..n).collect();
        let margin_full = limit_margins(&modes.lambda, &full, c_target)
            [full.iter().position(|&i| i == j).unwrap()];
        Some(StrongSingleMode {
            mode: j,
            collapses_in_full_mask: margin_full <= 1e-12 * scale,
            singleton_feasible: case_modes[j].singleton_feasible,
        })
    } else {
        None
    };

    // Case 3: exactly one weakly augmented mode, others clean.
    let weak: Vec<usize> = (0..n)
        .filter(|&i| {
            modes.c[i] > 1e-9
                && modes.b[i] > 0.0
                && modes.b[i] <= 0.5 * modes.s[i]
                && (0..n).all(|k| k == i || modes.c[k].abs() <= 1e-9 * modes.a[k].abs())
        })
        .collect();
    let weak_epsilon = if weak.len() == 1 {
        let i = weak[0];
        let eps = modes.b[i];
        let s = modes.s[i];
        let d = n as f64;
        let quoted_bound = s * (d - 3.0) / (s + d);
        let full: Vec<usize> = (0..n).collect();
        let margin = limit_margins(&modes.lambda, &full, c_target)
            [full.iter().position(|&k| k == i).unwrap()];
        let limit_predicts_collapse = margin <= 1e-12 * scale;
        let quoted_predicts_collapse = eps < quoted_bound;
        Some(WeakEpsilonCase {
            mode: i,
            epsilon: eps,
            quoted_bound,
            quoted_predicts_collapse,
            limit_predicts_collapse,
            agree: quoted_predicts_collapse == limit_predicts_collapse,
        })
    } else {
        None
    };

    Ok(CollapseCaseReport {
        modes: case_modes,
        small_augmentation_no_collapse,
        strong_single_mode,
        weak_epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{stream_rng, streams};
    use crate::losses::{effective_grad, effective_loss, Weights};
    use rand::Rng;

    fn cov_diag(a: &[f64], c: &[f64]) -> CovarianceModel {
        CovarianceModel::new(SymMatrix::diagonal(a), SymMatrix::diagonal(c)).unwrap()
    }

    #[test]
    fn scalar_instance_matches_grid_search() {
        // a = 1, c = 1: minimum of -w^2 + 4 w^4 sits at w^2 = 1/8.
        let cov = cov_diag(&[1.0], &[1.0]);
        let pts = stationary_points(&LossSpec::infonce(), &cov, 1).unwrap();
        assert_eq!(pts.len(), 2);
        let nonempty = pts.iter().find(|p| !p.mask.is_empty()).unwrap();
        assert!((nonempty.wtw.get(0, 0) - 0.125).abs() < 1e-12);
        // Grid-search oracle over w.
        let spec = LossSpec::infonce();
        let mut best = (0.0f64, f64::INFINITY);
        let mut w = 0.0;
        while w <= 1.0 {
            let l =
                effective_loss(&spec, &cov, &Weights::new(Mat::from_rows(&[vec![w]]))).unwrap();
            if l < best.1 {
                best = (w, l);
            }
            w += 1e-4;
        }
        assert!((best.0 * best.0 - nonempty.wtw.get(0, 0)).abs() < 1e-3);
        assert!((best.1 - nonempty.loss_value).abs() < 1e-6);
    }

    #[test]
    fn negative_coefficient_leaves_only_origin() {
        let cov = cov_diag(&[1.0, 0.5], &[3.0, 2.0]);
        let spec = LossSpec::beta_infonce(0.0); // b = a - c < 0 in both modes
        let pts = stationary_points(&spec, &cov, 2).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].mask.is_empty());
        assert_eq!(pts[0].wtw.max_abs(), 0.0);
        assert_eq!(pts[0].loss_value, 0.0);
        assert!(pts[0].is_local_min);
    }

    #[test]
    fn narrow_output_keeps_strongest_mode() {
        let cov = cov_diag(&[2.0, 1.0], &[0.0, 0.0]);
        let pts = stationary_points(&LossSpec::infonce(), &cov, 1).unwrap();
        assert!(pts.iter().all(|p| p.mask.popcount() <= 1));
        let gm = global_minimum(&LossSpec::infonce(), &cov, 1).unwrap();
        // lambda_wtw = b / (2 s^2) = 2 / (2 * 4) = 0.25 on the a = 2 mode.
        assert!((gm.wtw.get(0, 0) - 0.25).abs() < 1e-12);
        assert!(gm.wtw.get(1, 1).abs() < 1e-12);
    }

    #[test]
    fn commuting_global_minimum_examples() {
        let cov = cov_diag(&[1.0, 1.0], &[0.0, 4.0]);
        let gm = global_minimum(&LossSpec::infonce(), &cov, 2).unwrap();
        let expect = SymMatrix::diagonal(&[0.5, 1.0 / 50.0]);
        assert!(gm.wtw.sub(&expect).max_abs() < 1e-12);

        let gm_beta = global_minimum(&LossSpec::beta_infonce(0.5), &cov, 2).unwrap();
        let expect_beta = SymMatrix::diagonal(&[0.5, 0.0]);
        assert!(gm_beta.wtw.sub(&expect_beta).max_abs() < 1e-12);
        assert_eq!(gm_beta.rank, 1);
    }

    #[test]
    fn stationary_points_have_zero_gradient() {
        let mut rng = stream_rng(7, streams::EXPERIMENT, 3);
        for case in 0..20u64 {
            let d0 = rng.gen_range(1..=4usize);
            let d1 = rng.gen_range(1..=5usize);
            let a: Vec<f64> = (0..d0).map(|_| rng.gen_range(0.2..2.5)).collect();
            let c: Vec<f64> = (0..d0).map(|_| rng.gen_range(0.0..2.5)).collect();
            let cov = cov_diag(&a, &c);
            let spec = match case % 4 {
                0 => LossSpec::infonce(),
                1 => LossSpec::weighted_infonce(rng.gen_range(0.0..1.0), 12),
                2 => LossSpec::beta_infonce(rng.gen_range(0.0..1.5)),
                _ => LossSpec::spectral_contrastive(),
            };
            for pt in stationary_points(&spec, &cov, d1).unwrap() {
                let w = Weights::new(spectra::lift_gram(&pt.wtw, d1).unwrap());
                let g = effective_grad(&spec, &cov, &w).unwrap();
                assert!(
                    g.max_abs() < 1e-7,
                    "case {case}: gradient {:.3e} at mask {}",
                    g.max_abs(),
                    pt.mask
                );
            }
        }
    }

    #[test]
    fn global_minimum_is_least_among_stationary_points() {
        let cov = cov_diag(&[1.5, 1.0, 0.5], &[0.2, 0.8, 0.1]);
        let spec = LossSpec::beta_infonce(0.4);
        let pts = stationary_points(&spec, &cov, 3).unwrap();
        let gm = global_minimum(&spec, &cov, 3).unwrap();
        for p in pts {
            assert!(gm.loss_value <= p.loss_value + 1e-15);
        }
    }

    #[test]
    fn commuting_and_general_routes_agree() {
        // Shared non-axis eigenbasis for A0 and C.
        let q = spectra::eig_sym(
            &SymMatrix::from_rows(&[
                vec![1.0, 0.4, -0.2],
                vec![0.4, 0.7, 0.1],
                vec![-0.2, 0.1, 1.3],
            ])
            .unwrap(),
        )
        .unwrap()
        .eigenvectors;
        let assemble = |vals: &[f64]| {
            let mut m = SymMatrix::zeros(3);
            for (k, &v) in vals.iter().enumerate() {
                let col = q.col(k);
                let outer = Mat::from_fn(3, 3, |i, j| v * col[i] * col[j]);
                m = m.add(&SymMatrix::from_mat(&outer).unwrap());
            }
            m
        };
        let cov = CovarianceModel::new(assemble(&[1.5, 1.0, 0.6]), assemble(&[0.1, 0.9, 0.4]))
            .unwrap();
        assert!(cov.commuting());
        let spec = LossSpec::beta_infonce(0.3);
        let gm = global_minimum(&spec, &cov, 3).unwrap();

        // Direct per-mode route in the joint eigenbasis.
        let modes = mode_analysis(&spec, &cov).unwrap();
        let eigs: Vec<f64> = (0..3)
            .map(|i| {
                if modes.b[i] > 0.0 {
                    0.5 * modes.b[i] / (modes.s[i] * modes.s[i])
                } else {
                    0.0
                }
            })
            .collect();
        let direct = modes.assemble(&eigs);
        assert!(gm.wtw.sub(&direct).max_abs() < 1e-9);
    }

    #[test]
    fn infonce_never_collapses() {
        let mut rng = stream_rng(11, streams::EXPERIMENT, 9);
        for _ in 0..20 {
            let d = rng.gen_range(1..=5usize);
            let a: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..3.0)).collect();
            let c: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..50.0)).collect();
            let report = predict_collapse(&LossSpec::infonce(), &cov_diag(&a, &c)).unwrap();
            assert!(report.modes.iter().all(|m| !m.collapses));
            assert!(!report.complete_collapse && !report.dimensional_collapse);
        }
    }

    #[test]
    fn weighted_family_flips_with_dataset_size() {
        // a = 1, c = 25, alpha = 0.1: pressure (1-alpha) c / n crosses the
        // drive a = 1 at n = 22.5.
        let cov = cov_diag(&[1.0], &[25.0]);
        let at_20 = predict_collapse(&LossSpec::weighted_infonce(0.1, 20), &cov).unwrap();
        assert!(at_20.modes[0].collapses);
        assert!((at_20.modes[0].pressure - 1.125).abs() < 1e-12);
        assert!(at_20.complete_collapse);
        let at_23 = predict_collapse(&LossSpec::weighted_infonce(0.1, 23), &cov).unwrap();
        assert!(!at_23.modes[0].collapses);
        assert!((at_23.modes[0].pressure - 0.9 * 25.0 / 23.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_contrastive_ignores_feature_spectrum() {
        let mut rng = stream_rng(13, streams::EXPERIMENT, 2);
        for _ in 0..10 {
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..5.0)).collect();
            let c: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..5.0)).collect();
            let report =
                predict_collapse(&LossSpec::spectral_contrastive(), &cov_diag(&a, &c)).unwrap();
            assert!(report.modes.iter().all(|m| !m.collapses));
        }
    }

    #[test]
    fn boundary_mode_counts_as_collapsed() {
        // b = a - (1-beta) c = 0 exactly.
        let cov = cov_diag(&[1.0, 1.0], &[2.0, 0.0]);
        let report = predict_collapse(&LossSpec::beta_infonce(0.5), &cov).unwrap();
        let boundary = report.modes.iter().find(|m| m.c == Some(2.0)).unwrap();
        assert!(boundary.collapses);
        assert!(report.dimensional_collapse);
    }

    #[test]
    fn masking_monotonicity_in_augmentation() {
        // Raising one c_i never rescues a collapsed mode.
        let spec = LossSpec::weighted_infonce(0.2, 10);
        for scale in [1.0, 1.5, 2.0, 4.0] {
            let cov = cov_diag(&[1.0, 1.0], &[10.0, 14.0 * scale]);
            let report = predict_collapse(&spec, &cov).unwrap();
            let strong = report.modes.iter().find(|m| m.c.unwrap() > 10.1).unwrap();
            assert!(strong.collapses);
        }
    }

    #[test]
    fn isotropic_limit_solution_is_half_identity() {
        let cov = cov_diag(&[1.0, 1.0], &[0.0, 0.0]);
        let spec = LossSpec::infonce().with_normalization(Kappa::Infinite, 1.0);
        let sol = normalized_limit(&spec, &cov, &Mask::all(2)).unwrap();
        assert!(sol.feasible);
        assert!(sol.wtw.sub(&SymMatrix::identity(2).scale(0.5)).max_abs() < 1e-12);
        assert!((sol.rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn limit_feasibility_example_with_negative_mode() {
        // b = a - c = (1, -8), s = (1, 10): lambda = (1, -0.8); with c = 1
        // and both modes retained the shifted value of the weak mode is
        // -0.8 + 1 = 0.2 > mean 0.1, so the solution stays feasible.
        let cov = cov_diag(&[1.0, 1.0], &[0.0, 9.0]);
        let spec = LossSpec::beta_infonce(0.0).with_normalization(Kappa::Infinite, 1.0);
        let sol = normalized_limit(&spec, &cov, &Mask::all(2)).unwrap();
        assert!(sol.feasible);
        assert!((sol.rho - 1.0).abs() < 1e-9);
        // Mode eigenvalues (lambda_i + g) / (2 s_i) with g = 0.9.
        let modes = mode_analysis(&spec, &cov).unwrap();
        assert!((modes.lambda[0] - 1.0).abs() < 1e-12);
        assert!((modes.lambda[1] + 0.8).abs() < 1e-12);
        let pair = spectra::eig_sym(&sol.wtw).unwrap();
        let expect_small = (-0.8f64 + 0.9) / (2.0 * 10.0);
        assert!(pair
            .eigenvalues
            .iter()
            .any(|&l| (l - expect_small).abs() < 1e-9));
    }

    #[test]
    fn strongly_augmented_mode_survives_only_alone() {
        let cov = cov_diag(&[1.0, 1.0, 1.0], &[0.0, 0.0, 1e4]);
        let spec = LossSpec::beta_infonce(0.0).with_normalization(Kappa::Infinite, 1.0);
        let full = normalized_limit(&spec, &cov, &Mask::all(3)).unwrap();
        assert!(!full.feasible);
        // The strongly augmented mode is the last in canonical order.
        let solo = normalized_limit(&spec, &cov, &Mask::from_indices(3, &[2])).unwrap();
        assert!(solo.feasible);
        let duo = normalized_limit(&spec, &cov, &Mask::from_indices(3, &[0, 2])).unwrap();
        // Retained together with a clean mode the margin is only the
        // finite-augmentation residue; at infinite strength it vanishes.
        let modes = mode_analysis(&spec, &cov).unwrap();
        assert!(modes.lambda[2] < -0.999);
        assert!(duo.rho > 0.0);
    }

    #[test]
    fn empty_mask_rejected_in_limit() {
        let cov = cov_diag(&[1.0], &[0.0]);
        let spec = LossSpec::infonce().with_normalization(Kappa::Infinite, 1.0);
        assert!(matches!(
            normalized_limit(&spec, &cov, &Mask::none(1)).unwrap_err(),
            SolverError::EmptyMask
        ));
    }

    #[test]
    fn weak_constraint_collapses_everything() {
        // Coefficient -A0 with a weak constraint: only the origin is
        // self-consistent.
        let a0 = SymMatrix::diagonal(&[1.0, 0.5]);
        let cov = CovarianceModel::new(a0.clone(), SymMatrix::zeros(2)).unwrap();
        let spec = LossSpec::effective_quartic(a0.scale(-1.0))
            .with_normalization(Kappa::Finite(0.01), 1.0);
        let sols = finite_norm_solutions(&spec, &cov, 2).unwrap();
        assert_eq!(sols.len(), 1);
        assert!(sols[0].mask.is_empty());
        assert_eq!(sols[0].wtw.max_abs(), 0.0);
    }

    #[test]
    fn finite_strength_approaches_hard_limit() {
        let cov = cov_diag(&[1.0, 2.0], &[0.5, 0.1]);
        let hard = LossSpec::infonce().with_normalization(Kappa::Infinite, 1.0);
        let limit = normalized_limit(&hard, &cov, &Mask::all(2)).unwrap();
        let mut errs = Vec::new();
        for kappa in [1e2, 1e3, 1e4] {
            let spec = LossSpec::infonce().with_normalization(Kappa::Finite(kappa), 1.0);
            let sols = finite_norm_solutions(&spec, &cov, 2).unwrap();
            let full = sols.iter().find(|s| s.mask.popcount() == 2).unwrap();
            errs.push(full.wtw.sub(&limit.wtw).max_abs());
        }
        assert!(errs[1] < errs[0] / 5.0);
        assert!(errs[2] < errs[1] / 5.0);
        assert!(errs[2] < 1e-5);
    }

    #[test]
    fn matched_target_reproduces_unconstrained_solution() {
        let cov = cov_diag(&[1.0, 2.0], &[0.5, 0.1]);
        let modes = mode_analysis(&LossSpec::infonce(), &cov).unwrap();
        let t_half = 0.5 * (modes.lambda[0] + modes.lambda[1]);
        let spec = LossSpec::infonce().with_normalization(Kappa::Finite(10.0), t_half);
        let sols = finite_norm_solutions(&spec, &cov, 2).unwrap();
        let full = sols.iter().find(|s| s.mask.popcount() == 2).unwrap();
        assert!((full.rho - t_half).abs() < 1e-12);
        let unconstrained = global_minimum(&LossSpec::infonce(), &cov, 2).unwrap();
        assert!(full.wtw.sub(&unconstrained.wtw).max_abs() < 1e-10);
    }

    #[test]
    fn finite_norm_solutions_are_stationary() {
        let cov = cov_diag(&[1.2, 0.8, 0.5], &[0.3, 0.6, 0.2]);
        let spec = LossSpec::beta_infonce(0.8).with_normalization(Kappa::Finite(5.0), 0.7);
        for sol in finite_norm_solutions(&spec, &cov, 3).unwrap() {
            let w = Weights::new(spectra::lift_gram(&sol.wtw, 3).unwrap());
            let g = effective_grad(&spec, &cov, &w).unwrap();
            assert!(g.max_abs() < 1e-7, "mask {} grad {:.2e}", sol.mask, g.max_abs());
        }
    }

    #[test]
    fn weak_augmentation_keeps_rank_two_with_bias() {
        // c = 1, c_i << a_i: every retained mode contributes ~1/2 to rho,
        // so at most two fit under the bound.
        let a: Vec<f64> = (0..8).map(|i| 1.0 + 0.1 * i as f64).collect();
        let c: Vec<f64> = a.iter().map(|v| 1e-3 * v).collect();
        let cov = cov_diag(&a, &c);
        let spec = LossSpec::infonce()
            .with_normalization(Kappa::Infinite, 1.0)
            .with_bias();
        let sols = bias_constrained_solutions(&spec, &cov, 8).unwrap();
        assert_eq!(sols.max_d_m, 2);
        assert!(!sols.complete_collapse_possible);
        for p in &sols.points {
            assert!(p.mask.popcount() <= 2);
        }
    }

    #[test]
    fn large_target_recovers_full_solution_set() {
        let cov = cov_diag(&[1.0, 0.8], &[0.1, 0.2]);
        let plain = LossSpec::infonce();
        let modes = mode_analysis(&plain, &cov).unwrap();
        let big_c = 0.5 * (modes.lambda[0] + modes.lambda[1]) + 0.1;
        let spec = LossSpec::infonce()
            .with_normalization(Kappa::Infinite, big_c)
            .with_bias();
        let sols = bias_constrained_solutions(&spec, &cov, 2).unwrap();
        let unconstrained = stationary_points(&plain, &cov, 2).unwrap();
        assert_eq!(sols.points.len(), unconstrained.len());
    }

    #[test]
    fn tight_target_flags_possible_complete_collapse() {
        // a = 1, c = 0.5 per mode: lambda = 1/3; target 0.2 < 1/3.
        let cov = cov_diag(&[1.0, 1.0], &[0.5, 0.5]);
        let spec = LossSpec::beta_infonce(0.0)
            .with_normalization(Kappa::Infinite, 0.2)
            .with_bias();
        let sols = bias_constrained_solutions(&spec, &cov, 2).unwrap();
        assert!(sols.complete_collapse_possible);
    }

    #[test]
    fn case_analysis_small_augmentation_never_collapses() {
        let a = [1.0, 0.7, 1.3, 0.4];
        let c: Vec<f64> = a.iter().map(|v| 1e-6 * v).collect();
        let report = collapse_case_analysis(&cov_diag(&a, &c), 1.0).unwrap();
        assert_eq!(report.small_augmentation_no_collapse, Some(true));
        assert!(report.modes.iter().all(|m| m.survives));
    }

    #[test]
    fn case_analysis_strong_mode_collapses_unless_alone() {
        let a = [1.0, 1.0, 1.0, 1.0];
        let mut c = vec![0.0; 4];
        c[3] = 1e4;
        let report = collapse_case_analysis(&cov_diag(&a, &c), 1.0).unwrap();
        let strong = report.strong_single_mode.unwrap();
        assert!(strong.collapses_in_full_mask);
        assert!(strong.singleton_feasible);
        assert!(!report.modes[strong.mode].survives);
    }

    #[test]
    fn case_analysis_weak_epsilon_mode_can_collapse() {
        // d = 4 modes, a + c = 2 on the weak mode, eps = 0.1 < 2/6 = 1/3:
        // collapse despite c < a, and the quoted bound agrees with the
        // direct evaluation here.
        let a = [1.05, 1.0, 1.0, 1.0];
        let c = [0.95, 0.0, 0.0, 0.0];
        let report = collapse_case_analysis(&cov_diag(&a, &c), 1.0).unwrap();
        let eps_case = report.weak_epsilon.unwrap();
        assert!((eps_case.epsilon - 0.1).abs() < 1e-12);
        assert!((eps_case.quoted_bound - 2.0 / 6.0).abs() < 1e-12);
        assert!(eps_case.quoted_predicts_collapse);
        assert!(eps_case.limit_predicts_collapse);
        assert!(eps_case.agree);
        assert!(!report.modes.iter().find(|m| m.c > 0.5).unwrap().survives);
    }

    #[test]
    fn normalized_limit_requires_infinite_strength() {
        let cov = cov_diag(&[1.0], &[0.0]);
        let spec = LossSpec::infonce().with_normalization(Kappa::Finite(10.0), 1.0);
        assert!(normalized_limit(&spec, &cov, &Mask::all(1)).is_err());
    }

    #[test]
    fn singular_sigma_detected() {
        let cov = CovarianceModel::new(SymMatrix::zeros(2), SymMatrix::diagonal(&[1.0, 0.0]))
            .unwrap();
        assert!(matches!(
            stationary_points(&LossSpec::infonce(), &cov, 2).unwrap_err(),
            SolverError::SingularSigma(_)
        ));
    }
}
