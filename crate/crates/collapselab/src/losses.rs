//! Loss landscapes in two forms.
//!
//! The closed-form path works at the covariance level: every family reduces
//! near the origin to `L = -Tr[W B W^T] + Tr[(W Sigma W^T)^2]`, optionally
//! plus a weight-decay term and a soft norm constraint
//! `kappa (Tr[W Sigma W^T] - c)^2`. [`origin_hessian`] returns the
//! family-specific `B` (weight decay folded in as `-gamma I`), and
//! [`effective_loss`] / [`effective_grad`] evaluate the landscape and its
//! exact gradient.
//!
//! The sample path evaluates the exact finite-sample contrastive losses by
//! Monte Carlo over augmentation draws, for cross-checking the closed form
//! against what a model would actually be trained on.

use crate::datamodel::{stream_rng, streams, AugmentationSpec, CovarianceModel, DataError, Dataset};
use crate::spectra::{Mat, SpectraError, SymMatrix};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("invalid loss specification: {0}")]
    InvalidSpec(String),
    #[error("effective loss is undefined at infinite constraint strength; use the solver's limit formulas")]
    UnsupportedInfiniteKappa,
    #[error("sample loss is only defined for the InfoNCE-type families")]
    UnsupportedFamily,
    #[error("contrastive sample losses need at least two data points")]
    NeedsNegatives,
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Data(#[from] DataError),
}

type Result<T> = std::result::Result<T, LossError>;

/// Loss family. The quadratic coefficient at the origin distinguishes them;
/// all share the Gaussian quartic `Tr[(W Sigma W^T)^2]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Plain contrastive loss; `B = A0`.
    InfoNce,
    /// Denominator self-term reweighted by `alpha`; `B = A0 - (1-alpha)/n C`.
    /// `alpha = 1` recovers `InfoNce`, `alpha = 0` is the NT-Xent form.
    WeightedInfoNce { alpha: f64 },
    /// Entropy/energy balance shifted by `beta`; `B = A0 - (1-beta) C`.
    /// `beta = 1` recovers `InfoNce`; `beta >= 1` can never collapse.
    BetaInfoNce { beta: f64 },
    /// Spectral contrastive loss; `B = 2C`.
    SpectralContrastive,
    /// Barlow-Twins-style redundancy reduction, modeled with the canonical
    /// quartic; `B = 2 Sigma`.
    BarlowTwins,
    /// A user-supplied quadratic coefficient.
    EffectiveQuartic { b: SymMatrix },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kappa {
    Finite(f64),
    Infinite,
}

/// Soft norm constraint `kappa (E||f(x)||^2 - c)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub kappa: Kappa,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub family: Family,
    pub weight_decay: f64,
    pub normalization: Option<Normalization>,
    pub bias_enabled: bool,
    /// Dataset size entering the weighted family's `1/n` term.
    pub n: usize,
}

impl LossSpec {
    pub fn infonce() -> LossSpec {
        LossSpec {
            family: Family::InfoNce,
            weight_decay: 0.0,
            normalization: None,
            bias_enabled: false,
            n: 0,
        }
    }

    pub fn weighted_infonce(alpha: f64, n: usize) -> LossSpec {
        LossSpec {
            family: Family::WeightedInfoNce { alpha },
            n,
            ..LossSpec::infonce()
        }
    }

    pub fn beta_infonce(beta: f64) -> LossSpec {
        LossSpec {
            family: Family::BetaInfoNce { beta },
            ..LossSpec::infonce()
        }
    }

    pub fn spectral_contrastive() -> LossSpec {
        LossSpec {
            family: Family::SpectralContrastive,
            ..LossSpec::infonce()
        }
    }

    pub fn barlow_twins() -> LossSpec {
        LossSpec {
            family: Family::BarlowTwins,
            ..LossSpec::infonce()
        }
    }

    pub fn effective_quartic(b: SymMatrix) -> LossSpec {
        LossSpec {
            family: Family::EffectiveQuartic { b },
            ..LossSpec::infonce()
        }
    }

    pub fn with_weight_decay(mut self, gamma: f64) -> LossSpec {
        self.weight_decay = gamma;
        self
    }

    pub fn with_normalization(mut self, kappa: Kappa, target: f64) -> LossSpec {
        self.normalization = Some(Normalization { kappa, target });
        self
    }

    pub fn with_bias(mut self) -> LossSpec {
        self.bias_enabled = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(LossError::InvalidSpec(format!(
                "weight_decay = {}",
                self.weight_decay
            )));
        }
        match &self.family {
            Family::WeightedInfoNce { alpha } => {
                if *alpha < 0.0 || !alpha.is_finite() {
                    return Err(LossError::InvalidSpec(format!("alpha = {alpha} < 0")));
                }
                if self.n < 2 {
                    return Err(LossError::InvalidSpec(
                        "weighted family needs n >= 2".into(),
                    ));
                }
            }
            Family::BetaInfoNce { beta } => {
                if *beta < 0.0 || !beta.is_finite() {
                    return Err(LossError::InvalidSpec(format!("beta = {beta} < 0")));
                }
            }
            _ => {}
        }
        if let Some(norm) = &self.normalization {
            if norm.target <= 0.0 || !norm.target.is_finite() {
                return Err(LossError::InvalidSpec(format!(
                    "normalization target = {}",
                    norm.target
                )));
            }
            if let Kappa::Finite(k) = norm.kappa {
                if k <= 0.0 || !k.is_finite() {
                    return Err(LossError::InvalidSpec(format!("kappa = {k}")));
                }
            }
        } else if self.bias_enabled {
            // Without the norm constraint a bias has no effect on the loss,
            // so requesting one is almost certainly a configuration error.
            return Err(LossError::InvalidSpec(
                "bias is only meaningful together with normalization".into(),
            ));
        }
        Ok(())
    }
}

/// Linear model parameters: `f(x) = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub w: Mat,
    pub b: Option<Vec<f64>>,
}

impl Weights {
    pub fn new(w: Mat) -> Weights {
        Weights { w, b: None }
    }

    pub fn with_bias(w: Mat, b: Vec<f64>) -> Weights {
        assert_eq!(w.rows(), b.len());
        Weights { w, b: Some(b) }
    }

    pub fn zeros(d1: usize, d0: usize) -> Weights {
        Weights::new(Mat::zeros(d1, d0))
    }

    pub fn d1(&self) -> usize {
        self.w.rows()
    }

    pub fn d0(&self) -> usize {
        self.w.cols()
    }

    /// `W^T W`.
    pub fn gram(&self) -> SymMatrix {
        SymMatrix::from_mat(&self.w.transpose().mul(&self.w)).expect("gram is square")
    }

    pub fn scale(&self, s: f64) -> Weights {
        Weights {
            w: self.w.scale(s),
            b: self.b.clone(),
        }
    }
}

/// Quadratic coefficient of the landscape at the origin, per family, with
/// weight decay folded in as `-gamma I`. The signs of its eigenvalues
/// decide the stability of `W = 0` mode by mode.
pub fn origin_hessian(spec: &LossSpec, cov: &CovarianceModel) -> Result<SymMatrix> {
    spec.validate()?;
    let d = cov.dim();
    let base = match &spec.family {
        Family::InfoNce => cov.a0().clone(),
        Family::WeightedInfoNce { alpha } => {
            let w = (1.0 - alpha) / spec.n as f64;
            cov.a0().sub(&cov.c().scale(w))
        }
        Family::BetaInfoNce { beta } => cov.a0().sub(&cov.c().scale(1.0 - beta)),
        Family::SpectralContrastive => cov.c().scale(2.0),
        Family::BarlowTwins => cov.sigma().scale(2.0),
        Family::EffectiveQuartic { b } => {
            if b.dim() != d {
                return Err(LossError::InvalidSpec(format!(
                    "quartic coefficient dim {} vs covariance dim {d}",
                    b.dim()
                )));
            }
            b.clone()
        }
    };
    Ok(if spec.weight_decay > 0.0 {
        base.sub(&SymMatrix::identity(d).scale(spec.weight_decay))
    } else {
        base
    })
}

fn tr_w_b_wt(w: &Mat, b: &SymMatrix) -> f64 {
    // Tr[W B W^T] = <W B, W>.
    w.mul(&b.to_mat()).dot(w)
}

fn w_sigma_wt(w: &Mat, sigma: &SymMatrix) -> Mat {
    w.mul(&sigma.to_mat()).mul(&w.transpose())
}

fn norm_rho(spec: &LossSpec, weights: &Weights, s: &Mat) -> f64 {
    let mut rho = (0..s.rows()).map(|i| s.get(i, i)).sum::<f64>();
    if spec.bias_enabled {
        if let Some(b) = &weights.b {
            // With zero-mean inputs, E||Wx + b||^2 = Tr[W Sigma W^T] + |b|^2.
            rho += b.iter().map(|v| v * v).sum::<f64>();
        }
    }
    rho
}

/// Closed-form landscape value for Gaussian data:
/// `-Tr[W B W^T] + Tr[(W Sigma W^T)^2] (+ kappa (rho - c)^2)`.
pub fn effective_loss(spec: &LossSpec, cov: &CovarianceModel, weights: &Weights) -> Result<f64> {
    let b = origin_hessian(spec, cov)?;
    if weights.d0() != cov.dim() {
        return Err(LossError::InvalidSpec(format!(
            "weights d0 {} vs covariance dim {}",
            weights.d0(),
            cov.dim()
        )));
    }
    let s = w_sigma_wt(&weights.w, cov.sigma());
    let quartic: f64 = s.dot(&s);
    let mut loss = -tr_w_b_wt(&weights.w, &b) + quartic;
    if let Some(norm) = &spec.normalization {
        let kappa = match norm.kappa {
            Kappa::Finite(k) => k,
            Kappa::Infinite => return Err(LossError::UnsupportedInfiniteKappa),
        };
        let rho = norm_rho(spec, weights, &s);
        loss += kappa * (rho - norm.target) * (rho - norm.target);
    }
    Ok(loss)
}

/// Exact gradient of [`effective_loss`] with respect to `W`:
/// `-2WB + 4 W Sigma W^T W Sigma + 4 kappa (rho - c) W Sigma`.
pub fn effective_grad(spec: &LossSpec, cov: &CovarianceModel, weights: &Weights) -> Result<Mat> {
    let b = origin_hessian(spec, cov)?;
    if weights.d0() != cov.dim() {
        return Err(LossError::InvalidSpec(format!(
            "weights d0 {} vs covariance dim {}",
            weights.d0(),
            cov.dim()
        )));
    }
    let w_sigma = weights.w.mul(&cov.sigma().to_mat());
    let s = w_sigma.mul(&weights.w.transpose());
    let mut grad = weights.w.mul(&b.to_mat()).scale(-2.0);
    grad = grad.add(&s.mul(&w_sigma).scale(4.0));
    if let Some(norm) = &spec.normalization {
        let kappa = match norm.kappa {
            Kappa::Finite(k) => k,
            Kappa::Infinite => return Err(LossError::UnsupportedInfiniteKappa),
        };
        let rho = norm_rho(spec, weights, &s);
        grad = grad.add(&w_sigma.scale(4.0 * kappa * (rho - norm.target)));
    }
    Ok(grad)
}

/// A Monte-Carlo estimate with its standard error across draws.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

fn mc_estimate(per_draw: &[f64]) -> McEstimate {
    let k = per_draw.len();
    let mean = per_draw.iter().sum::<f64>() / k as f64;
    let std_error = if k > 1 {
        let var = per_draw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    } else {
        0.0
    };
    McEstimate {
        value: mean,
        std_error,
    }
}

/// Denominator self-weight and energy coefficient for the sample families.
///
/// The entropy-reweighted family keeps a unit self-term and instead scales
/// the alignment energy by `2 - beta`, which is the form whose expansion
/// around the origin has quadratic coefficient `A0 - (1-beta) C` and which
/// reduces to plain InfoNCE at `beta = 1`.
fn sample_coefficients(spec: &LossSpec) -> Result<(f64, f64)> {
    match &spec.family {
        Family::InfoNce => Ok((1.0, 1.0)),
        Family::WeightedInfoNce { alpha } => Ok((*alpha, 1.0)),
        Family::BetaInfoNce { beta } => Ok((1.0, 2.0 - beta)),
        _ => Err(LossError::UnsupportedFamily),
    }
}

struct DrawStats {
    loss: f64,
    quadratic: f64,
    quartic: f64,
    residual: f64,
}

/// Per-anchor statistics of one augmentation draw: the exact loss, its
/// second- and fourth-order terms in `W`, and the remainder beyond fourth
/// order. Sharing one set of draws across all four keeps the remainder
/// free of Monte-Carlo noise.
fn sample_draw(
    spec: &LossSpec,
    ds: &Dataset,
    aug: &AugmentationSpec,
    weights: &Weights,
    seed: u64,
    draw: u64,
) -> Result<DrawStats> {
    let (alpha, energy) = sample_coefficients(spec)?;
    let n = ds.n();
    let d0 = ds.dim();
    let d1 = weights.d1();

    let mut rng = stream_rng(seed, streams::LOSS_DRAW, draw);
    let reps = |rng: &mut ChaCha12Rng| -> Mat {
        let mut out = Mat::zeros(n, d1);
        let mut noise = vec![0.0; d0];
        for i in 0..n {
            aug.sample_into(&mut noise, rng);
            let x = ds.point(i);
            for r in 0..d1 {
                let mut s = 0.0;
                for j in 0..d0 {
                    s += weights.w.get(r, j) * (x[j] + noise[j]);
                }
                if let Some(b) = &weights.b {
                    s += b[r];
                }
                out.set(i, r, s);
            }
        }
        out
    };
    // Anchor views, positive views, and the negatives' views, in a fixed
    // draw order so the objective is deterministic per (seed, draw).
    let r_anchor = reps(&mut rng);
    let r_positive = reps(&mut rng);
    let r_negative = reps(&mut rng);

    let denom_weight = (n - 1) as f64 + alpha;
    let log_denom_weight = denom_weight.ln();

    let mut loss = 0.0;
    let mut quadratic = 0.0;
    let mut quartic = 0.0;
    let mut residual = 0.0;
    let mut u_row = vec![0.0; n];

    for i in 0..n {
        let ai = r_anchor.row(i);
        let pi = r_positive.row(i);
        let mut u_self = 0.0;
        for r in 0..d1 {
            let d = ai[r] - pi[r];
            u_self += d * d;
        }
        u_self *= 0.5;

        let mut min_u = if alpha > 0.0 { u_self } else { f64::INFINITY };
        for j in 0..n {
            if j == i {
                u_row[j] = 0.0;
                continue;
            }
            let cj = r_negative.row(j);
            let mut u = 0.0;
            for r in 0..d1 {
                let d = ai[r] - cj[r];
                u += d * d;
            }
            u *= 0.5;
            u_row[j] = u;
            if u < min_u {
                min_u = u;
            }
        }

        // Log-sum-exp with max subtraction.
        let mut den = alpha * (-(u_self - min_u)).exp();
        let mut sum_u = alpha * u_self;
        let mut sum_u2 = alpha * u_self * u_self;
        for (j, &u) in u_row.iter().enumerate() {
            if j == i {
                continue;
            }
            den += (-(u - min_u)).exp();
            sum_u += u;
            sum_u2 += u * u;
        }
        let log_den = den.ln() - min_u;
        let l_i = energy * u_self + log_den;

        let mean_u = sum_u / denom_weight;
        let var_u = (sum_u2 / denom_weight - mean_u * mean_u).max(0.0);
        let q2 = energy * u_self - mean_u;
        let q4 = 0.5 * var_u;

        loss += l_i;
        quadratic += q2;
        quartic += q4;
        // l_i - ln(denom_weight) - q2 - q4, grouped to avoid cancellation:
        residual += (log_den - log_denom_weight) + mean_u - q4;
    }

    let inv = 1.0 / n as f64;
    Ok(DrawStats {
        loss: loss * inv,
        quadratic: quadratic * inv,
        quartic: quartic * inv,
        residual: residual * inv,
    })
}

fn check_sample_inputs(ds: &Dataset, weights: &Weights, mc_draws: usize) -> Result<()> {
    if ds.n() < 2 {
        return Err(LossError::NeedsNegatives);
    }
    if mc_draws == 0 {
        return Err(LossError::InvalidSpec("mc_draws = 0".into()));
    }
    if weights.d0() != ds.dim() {
        return Err(LossError::InvalidSpec(format!(
            "weights d0 {} vs data dim {}",
            weights.d0(),
            ds.dim()
        )));
    }
    Ok(())
}

/// Exact finite-sample contrastive loss, averaged over `mc_draws`
/// independent augmentation draws. At `W = 0` the value is
/// `ln(n - 1 + alpha)`: `ln n` for InfoNCE, `ln(n - 1)` at `alpha = 0`.
pub fn sample_loss(
    spec: &LossSpec,
    ds: &Dataset,
    aug: &AugmentationSpec,
    weights: &Weights,
    mc_draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    spec.validate()?;
    check_sample_inputs(ds, weights, mc_draws)?;
    if let Family::WeightedInfoNce { .. } = spec.family {
        if spec.n != ds.n() {
            return Err(LossError::InvalidSpec(format!(
                "spec.n = {} but dataset has {} points",
                spec.n,
                ds.n()
            )));
        }
    }
    aug.validate()?;
    let mut per_draw = Vec::with_capacity(mc_draws);
    for k in 0..mc_draws {
        per_draw.push(sample_draw(spec, ds, aug, weights, seed, k as u64)?.loss);
    }
    Ok(mc_estimate(&per_draw))
}

/// Second- and fourth-order terms of the sample loss around the origin,
/// estimated on the same draws [`sample_loss`] would use. `quadratic` is
/// the empirical-covariance quadratic form; `quartic` is the per-anchor
/// variance of the pairwise similarities.
#[derive(Debug, Clone, Copy)]
pub struct SampleExpansion {
    pub quadratic: f64,
    pub quartic: f64,
}

pub fn sample_expansion(
    spec: &LossSpec,
    ds: &Dataset,
    aug: &AugmentationSpec,
    weights: &Weights,
    mc_draws: usize,
    seed: u64,
) -> Result<SampleExpansion> {
    spec.validate()?;
    check_sample_inputs(ds, weights, mc_draws)?;
    let mut q2 = 0.0;
    let mut q4 = 0.0;
    for k in 0..mc_draws {
        let stats = sample_draw(spec, ds, aug, weights, seed, k as u64)?;
        q2 += stats.quadratic;
        q4 += stats.quartic;
    }
    Ok(SampleExpansion {
        quadratic: q2 / mc_draws as f64,
        quartic: q4 / mc_draws as f64,
    })
}

/// `sample_loss(W) - sample_loss(0) - quadratic(W) - quartic(W)` over the
/// same draws, accumulated per anchor so the sixth-order remainder is not
/// drowned by cancellation between large terms.
pub fn expansion_residual(
    spec: &LossSpec,
    ds: &Dataset,
    aug: &AugmentationSpec,
    weights: &Weights,
    mc_draws: usize,
    seed: u64,
) -> Result<f64> {
    spec.validate()?;
    check_sample_inputs(ds, weights, mc_draws)?;
    let mut r = 0.0;
    for k in 0..mc_draws {
        r += sample_draw(spec, ds, aug, weights, seed, k as u64)?.residual;
    }
    Ok(r / mc_draws as f64)
}

/// Loss value and exact gradient of the sampled objective for one batch of
/// `mc_draws` augmentation draws taken from `rng`. Used by the trainer,
/// which redraws the augmentations every iteration; the gradient is the
/// usual softmax form, so `W = 0` stays an exact fixed point and collapsed
/// directions decay multiplicatively rather than stalling on a noise floor.
pub fn sample_loss_and_grad(
    spec: &LossSpec,
    ds: &Dataset,
    aug: &AugmentationSpec,
    weights: &Weights,
    mc_draws: usize,
    rng: &mut ChaCha12Rng,
) -> Result<(f64, Mat)> {
    spec.validate()?;
    check_sample_inputs(ds, weights, mc_draws)?;
    let (alpha, energy) = sample_coefficients(spec)?;
    let n = ds.n();
    let d0 = ds.dim();
    let d1 = weights.d1();

    let mut loss = 0.0;
    let mut grad = Mat::zeros(d1, d0);
    let mut noise = vec![0.0; d0];
    let mut u_row = vec![0.0; n];

    for _ in 0..mc_draws {
        let mut view = |rng: &mut ChaCha12Rng| -> (Mat, Mat) {
            let mut pts = Mat::zeros(n, d0);
            let mut reps = Mat::zeros(n, d1);
            for i in 0..n {
                aug.sample_into(&mut noise, rng);
                let x = ds.point(i);
                for j in 0..d0 {
                    pts.set(i, j, x[j] + noise[j]);
                }
                for r in 0..d1 {
                    let mut s = 0.0;
                    for j in 0..d0 {
                        s += weights.w.get(r, j) * pts.get(i, j);
                    }
                    reps.set(i, r, s);
                }
            }
            (pts, reps)
        };
        let (x_a, r_a) = view(rng);
        let (x_p, r_p) = view(rng);
        let (x_n, r_n) = view(rng);

        for i in 0..n {
            let mut u_self = 0.0;
            for r in 0..d1 {
                let d = r_a.get(i, r) - r_p.get(i, r);
                u_self += d * d;
            }
            u_self *= 0.5;
            let mut min_u = if alpha > 0.0 { u_self } else { f64::INFINITY };
            for j in 0..n {
                if j == i {
                    u_row[j] = 0.0;
                    continue;
                }
                let mut u = 0.0;
                for r in 0..d1 {
                    let d = r_a.get(i, r) - r_n.get(j, r);
                    u += d * d;
                }
                u *= 0.5;
                u_row[j] = u;
                if u < min_u {
                    min_u = u;
                }
            }
            let mut den = alpha * (-(u_self - min_u)).exp();
            for (j, &u) in u_row.iter().enumerate() {
                if j != i {
                    den += (-(u - min_u)).exp();
                }
            }
            loss += energy * u_self + den.ln() - min_u;

            // d l / d u_self = energy - p_self, d l / d u_ij = -p_ij with
            // p the softmax weights of the denominator.
            let coeff_self = energy - alpha * (-(u_self - min_u)).exp() / den;
            for r in 0..d1 {
                let rep_d = r_a.get(i, r) - r_p.get(i, r);
                for cidx in 0..d0 {
                    let in_d = x_a.get(i, cidx) - x_p.get(i, cidx);
                    grad.set(r, cidx, grad.get(r, cidx) + coeff_self * rep_d * in_d);
                }
            }
            for j in 0..n {
                if j == i {
                    continue;
                }
                let p = (-(u_row[j] - min_u)).exp() / den;
                for r in 0..d1 {
                    let rep_d = r_a.get(i, r) - r_n.get(j, r);
                    for cidx in 0..d0 {
                        let in_d = x_a.get(i, cidx) - x_n.get(j, cidx);
                        grad.set(r, cidx, grad.get(r, cidx) - p * rep_d * in_d);
                    }
                }
            }
        }
    }
    let scale = 1.0 / (n * mc_draws) as f64;
    Ok((loss * scale, grad.scale(scale)))
}

/// Generic quartic term of the landscape: one eighth of the variance of
/// `|W(x - chi)|^2` over independent augmented pairs. For Gaussian data
/// this converges to `Tr[W Sigma W^T W Sigma W^T]`.
pub fn variance_quartic(
    ds: &Dataset,
    aug: &AugmentationSpec,
    weights: &Weights,
    mc_draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_sample_inputs(ds, weights, mc_draws)?;
    aug.validate()?;
    let n = ds.n();
    let d0 = ds.dim();
    let d1 = weights.d1();
    let mut per_draw = Vec::with_capacity(mc_draws);
    for k in 0..mc_draws {
        let mut rng = stream_rng(seed, streams::QUARTIC_DRAW, k as u64);
        let side = |rng: &mut ChaCha12Rng| -> Mat {
            let mut out = Mat::zeros(n, d1);
            let mut noise = vec![0.0; d0];
            for i in 0..n {
                aug.sample_into(&mut noise, rng);
                let x = ds.point(i);
                for r in 0..d1 {
                    let mut s = 0.0;
                    for j in 0..d0 {
                        s += weights.w.get(r, j) * (x[j] + noise[j]);
                    }
                    out.set(i, r, s);
                }
            }
            out
        };
        let rx = side(&mut rng);
        let rchi = side(&mut rng);
        // All n^2 ordered pairs; the diagonal pair is a re-augmentation of
        // the same point, matching independent sampling of (x, chi).
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for i in 0..n {
            let xi = rx.row(i);
            for j in 0..n {
                let cj = rchi.row(j);
                let mut v = 0.0;
                for r in 0..d1 {
                    let d = xi[r] - cj[r];
                    v += d * d;
                }
                m1 += v;
                m2 += v * v;
            }
        }
        let pairs = (n * n) as f64;
        m1 /= pairs;
        m2 /= pairs;
        per_draw.push((m2 - m1 * m1).max(0.0) / 8.0);
    }
    Ok(mc_estimate(&per_draw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{empirical_cov, sample_gaussian};
    use crate::spectra;
    use rand::Rng;

    fn cov_diag(a: &[f64], c: &[f64]) -> CovarianceModel {
        CovarianceModel::new(SymMatrix::diagonal(a), SymMatrix::diagonal(c)).unwrap()
    }

    fn random_weights(d1: usize, d0: usize, seed: u64, scale: f64) -> Weights {
        let mut rng = stream_rng(seed, streams::EXPERIMENT, 7);
        Weights::new(Mat::from_fn(d1, d0, |_, _| rng.gen_range(-scale..scale)))
    }

    #[test]
    fn infonce_hessian_is_clean_covariance() {
        let cov = cov_diag(&[1.0, 2.0], &[0.5, 3.0]);
        let b = origin_hessian(&LossSpec::infonce(), &cov).unwrap();
        assert!(b.sub(cov.a0()).max_abs() < 1e-15);
    }

    #[test]
    fn weighted_alpha_one_reduces_to_infonce() {
        let cov = cov_diag(&[1.0, 2.0], &[0.5, 3.0]);
        let b = origin_hessian(&LossSpec::weighted_infonce(1.0, 16), &cov).unwrap();
        assert!(b.sub(cov.a0()).max_abs() < 1e-15);
    }

    #[test]
    fn beta_half_mixes_in_augmentation() {
        let cov = cov_diag(&[1.0, 1.0], &[0.0, 4.0]);
        let b = origin_hessian(&LossSpec::beta_infonce(0.5), &cov).unwrap();
        assert!(b.sub(&SymMatrix::diagonal(&[1.0, -1.0])).max_abs() < 1e-15);
    }

    #[test]
    fn weight_decay_shifts_diagonal() {
        let cov = cov_diag(&[1.0, 2.0], &[0.0, 0.0]);
        let spec = LossSpec::infonce().with_weight_decay(0.25);
        let b = origin_hessian(&spec, &cov).unwrap();
        assert!(b.sub(&SymMatrix::diagonal(&[0.75, 1.75])).max_abs() < 1e-15);
    }

    #[test]
    fn loss_vanishes_at_origin() {
        let cov = cov_diag(&[1.0, 2.0], &[1.0, 0.5]);
        let w = Weights::zeros(2, 2);
        assert_eq!(effective_loss(&LossSpec::infonce(), &cov, &w).unwrap(), 0.0);
    }

    #[test]
    fn norm_constraint_value_at_origin() {
        let cov = cov_diag(&[1.0], &[0.0]);
        let spec = LossSpec::infonce().with_normalization(Kappa::Finite(1.0), 1.0);
        let w = Weights::zeros(1, 1);
        assert!((effective_loss(&spec, &cov, &w).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn infinite_kappa_rejected_in_closed_form() {
        let cov = cov_diag(&[1.0], &[0.0]);
        let spec = LossSpec::infonce().with_normalization(Kappa::Infinite, 1.0);
        let w = Weights::zeros(1, 1);
        assert!(matches!(
            effective_loss(&spec, &cov, &w).unwrap_err(),
            LossError::UnsupportedInfiniteKappa
        ));
    }

    #[test]
    fn scalar_minimum_matches_grid_search() {
        // a = 1, c = 0: the 1-d landscape -w^2 + w^4 has its minimum -1/4
        // at w^2 = 1/2. Grid search is the oracle.
        let cov = cov_diag(&[1.0], &[0.0]);
        let spec = LossSpec::infonce();
        let at = |w: f64| {
            effective_loss(&spec, &cov, &Weights::new(Mat::from_rows(&[vec![w]]))).unwrap()
        };
        let mut best = (0.0, f64::INFINITY);
        let mut w = 0.0;
        while w <= 1.5 {
            let l = at(w);
            if l < best.1 {
                best = (w, l);
            }
            w += 1e-4;
        }
        assert!((best.1 + 0.25).abs() < 1e-6);
        assert!((best.0 * best.0 - 0.5).abs() < 1e-3);
        assert!((at(0.5f64.sqrt()) + 0.25).abs() < 1e-12);
    }

    #[test]
    fn gradient_zero_at_origin() {
        let cov = cov_diag(&[1.0, 2.0], &[0.3, 0.1]);
        let g = effective_grad(&LossSpec::infonce(), &cov, &Weights::zeros(2, 2)).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    fn fd_grad(spec: &LossSpec, cov: &CovarianceModel, w: &Weights, h: f64) -> Mat {
        Mat::from_fn(w.d1(), w.d0(), |i, j| {
            let mut plus = w.clone();
            plus.w.set(i, j, w.w.get(i, j) + h);
            let mut minus = w.clone();
            minus.w.set(i, j, w.w.get(i, j) - h);
            (effective_loss(spec, cov, &plus).unwrap() - effective_loss(spec, cov, &minus).unwrap())
                / (2.0 * h)
        })
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_specs() {
        let mut rng = stream_rng(42, streams::EXPERIMENT, 1);
        for case in 0..100u64 {
            let d0 = rng.gen_range(1..=4);
            let d1 = rng.gen_range(1..=4);
            let a: Vec<f64> = (0..d0).map(|_| rng.gen_range(0.2..2.0)).collect();
            let c: Vec<f64> = (0..d0).map(|_| rng.gen_range(0.0..2.0)).collect();
            let cov = cov_diag(&a, &c);
            let spec = match case % 5 {
                0 => LossSpec::infonce(),
                1 => LossSpec::weighted_infonce(rng.gen_range(0.0..1.0), 16),
                2 => LossSpec::beta_infonce(rng.gen_range(0.0..2.0)),
                3 => LossSpec::spectral_contrastive().with_weight_decay(0.05),
                _ => LossSpec::barlow_twins()
                    .with_normalization(Kappa::Finite(rng.gen_range(0.5..3.0)), 1.0),
            };
            let w = random_weights(d1, d0, 100 + case, 0.8);
            let g = effective_grad(&spec, &cov, &w).unwrap();
            let fd = fd_grad(&spec, &cov, &w, 1e-5);
            let denom = 1.0 + g.max_abs();
            assert!(
                g.sub(&fd).max_abs() / denom < 1e-5,
                "case {case}: analytic {:.3e} vs fd mismatch {:.3e}",
                g.max_abs(),
                g.sub(&fd).max_abs()
            );
        }
    }

    #[test]
    fn left_rotation_leaves_loss_unchanged() {
        let cov = cov_diag(&[1.0, 0.5, 2.0], &[0.2, 0.0, 1.0]);
        let spec = LossSpec::beta_infonce(0.7);
        let w = random_weights(3, 3, 5, 1.0);
        // Orthogonal matrix from the eigenvectors of a random symmetric one.
        let sym = SymMatrix::from_mat(&random_weights(3, 3, 6, 1.0).w).unwrap();
        let r = spectra::eig_sym(&sym).unwrap().eigenvectors;
        let rotated = Weights::new(r.mul(&w.w));
        let l0 = effective_loss(&spec, &cov, &w).unwrap();
        let l1 = effective_loss(&spec, &cov, &rotated).unwrap();
        assert!((l0 - l1).abs() <= 1e-10 * (1.0 + l0.abs()));
    }

    #[test]
    fn loss_is_even_in_sign() {
        let cov = cov_diag(&[1.0, 0.5], &[0.4, 0.6]);
        let spec = LossSpec::infonce();
        let w = random_weights(2, 2, 9, 1.0);
        let neg = w.scale(-1.0);
        assert_eq!(
            effective_loss(&spec, &cov, &w).unwrap(),
            effective_loss(&spec, &cov, &neg).unwrap()
        );
    }

    #[test]
    fn sample_loss_at_origin_is_log_n() {
        let ds = sample_gaussian(3, 32, &SymMatrix::identity(3), 4).unwrap();
        let aug = AugmentationSpec::Isotropic { sigma: 1.0 };
        let w = Weights::zeros(3, 3);
        let l = sample_loss(&LossSpec::infonce(), &ds, &aug, &w, 2, 0).unwrap();
        assert!((l.value - 32f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nt_xent_origin_is_log_n_minus_one() {
        let ds = sample_gaussian(2, 16, &SymMatrix::identity(2), 4).unwrap();
        let aug = AugmentationSpec::Isotropic { sigma: 0.5 };
        let w = Weights::zeros(2, 2);
        let l = sample_loss(&LossSpec::weighted_infonce(0.0, 16), &ds, &aug, &w, 2, 0).unwrap();
        assert!((l.value - 15f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sample_loss_needs_two_points() {
        let ds = Dataset::new(Mat::from_rows(&[vec![1.0, 0.0]])).unwrap();
        let aug = AugmentationSpec::Isotropic { sigma: 1.0 };
        let w = Weights::zeros(2, 2);
        assert!(matches!(
            sample_loss(&LossSpec::infonce(), &ds, &aug, &w, 1, 0).unwrap_err(),
            LossError::NeedsNegatives
        ));
    }

    #[test]
    fn representation_shift_cancels_in_sample_loss() {
        let ds = sample_gaussian(2, 12, &SymMatrix::identity(2), 8).unwrap();
        let aug = AugmentationSpec::Isotropic { sigma: 0.7 };
        let w = random_weights(2, 2, 3, 0.5);
        let shifted = Weights::with_bias(w.w.clone(), vec![13.5, -4.25]);
        let a = sample_loss(&LossSpec::infonce(), &ds, &aug, &w, 3, 1).unwrap();
        let b = sample_loss(&LossSpec::infonce(), &ds, &aug, &shifted, 3, 1).unwrap();
        assert!((a.value - b.value).abs() < 1e-9 * (1.0 + a.value.abs()));
    }

    #[test]
    fn variance_quartic_zero_at_origin() {
        let ds = sample_gaussian(2, 8, &SymMatrix::identity(2), 2).unwrap();
        let aug = AugmentationSpec::Isotropic { sigma: 1.0 };
        let v = variance_quartic(&ds, &aug, &Weights::zeros(2, 2), 2, 0).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn variance_quartic_matches_pair_enumeration_without_noise() {
        // With zero augmentation the estimator must equal the brute-force
        // variance over the n^2 data pairs exactly.
        let ds = sample_gaussian(2, 24, &SymMatrix::diagonal(&[1.0, 0.3]), 77).unwrap();
        let w = random_weights(2, 2, 13, 1.0);
        let aug = AugmentationSpec::Isotropic { sigma: 0.0 };
        let est = variance_quartic(&ds, &aug, &w, 1, 0).unwrap();
        let mut vals = Vec::new();
        for i in 0..ds.n() {
            for j in 0..ds.n() {
                let xi = ds.point(i);
                let xj = ds.point(j);
                let mut v = 0.0;
                for r in 0..2 {
                    let d: f64 = (0..2).map(|k| w.w.get(r, k) * (xi[k] - xj[k])).sum();
                    v += d * d;
                }
                vals.push(v);
            }
        }
        let m1 = vals.iter().sum::<f64>() / vals.len() as f64;
        let m2 = vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64;
        let oracle = (m2 - m1 * m1) / 8.0;
        assert!((est.value - oracle).abs() < 1e-10 * (1.0 + oracle));
    }

    #[test]
    fn variance_quartic_rank_one_gaussian_oracle() {
        // For z = w.(x - chi) centered Gaussian, Var[z^2] = 2 Var[z]^2 with
        // Var[z] = 2 w Sigma w^T, so the estimator converges to
        // (w Sigma w^T)^2. Averaged over independent datasets so the
        // standard error covers data sampling too.
        let w = Weights::new(Mat::from_rows(&[vec![0.8, -0.5]]));
        let sigma2 = 0.25f64;
        let a0 = SymMatrix::diagonal(&[1.0, 0.6]);
        let aug = AugmentationSpec::Isotropic {
            sigma: sigma2.sqrt(),
        };
        let sigma = a0.add(&SymMatrix::identity(2).scale(sigma2));
        let ws = w.w.mul(&sigma.to_mat()).mul(&w.w.transpose()).get(0, 0);
        let expect = ws * ws;
        let reps = 12;
        let mut per_rep = Vec::new();
        for r in 0..reps {
            let ds = sample_gaussian(2, 1024, &a0, 500 + r).unwrap();
            per_rep.push(variance_quartic(&ds, &aug, &w, 8, r).unwrap().value);
        }
        let mean = per_rep.iter().sum::<f64>() / reps as f64;
        let var = per_rep.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * se + 1e-9,
            "mean {mean:.5} expect {expect:.5} se {se:.5}"
        );
    }

    #[test]
    fn variance_quartic_converges_to_gaussian_closed_form() {
        let a0 = SymMatrix::diagonal(&[1.0, 0.5, 1.5]);
        let aug = AugmentationSpec::Isotropic { sigma: 0.5 };
        let sigma = a0.add(&SymMatrix::identity(3).scale(0.25));
        let w = random_weights(2, 3, 21, 0.7);
        let s = w.w.mul(&sigma.to_mat()).mul(&w.w.transpose());
        let expect = s.dot(&s);
        let reps = 10;
        let mut per_rep = Vec::new();
        for r in 0..reps {
            let ds = sample_gaussian(3, 2048, &a0, 900 + r).unwrap();
            per_rep.push(variance_quartic(&ds, &aug, &w, 4, 10 + r).unwrap().value);
        }
        let mean = per_rep.iter().sum::<f64>() / reps as f64;
        let var = per_rep.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * se + 1e-9,
            "mean {mean:.5} expect {expect:.5} se {se:.5}"
        );
    }

    #[test]
    fn expansion_residual_is_sixth_order() {
        // Residual after removing the quadratic and quartic terms should
        // scale like t^6 along a ray t W0.
        let ds = sample_gaussian(3, 128, &SymMatrix::identity(3), 33).unwrap();
        let aug = AugmentationSpec::Isotropic { sigma: 0.5 };
        let w0 = random_weights(3, 3, 55, 1.0);
        let spec = LossSpec::infonce();
        let ts = [0.02, 0.04, 0.08, 0.16];
        let rs: Vec<f64> = ts
            .iter()
            .map(|&t| {
                expansion_residual(&spec, &ds, &aug, &w0.scale(t), 8, 3)
                    .unwrap()
                    .abs()
            })
            .collect();
        for k in 1..ts.len() {
            let slope = (rs[k] / rs[k - 1]).ln() / (ts[k] / ts[k - 1]).ln();
            assert!(
                slope > 5.5,
                "slope {slope:.2} between t={} and t={}",
                ts[k - 1],
                ts[k]
            );
        }
    }

    #[test]
    fn expansion_quadratic_matches_empirical_hessian_form() {
        // The draw-based quadratic term evaluated at W tracks
        // -Tr[W B_emp W^T] with B_emp the empirical clean second moment,
        // up to O(1/n) self-term corrections and augmentation sampling.
        let a0 = SymMatrix::diagonal(&[1.0, 0.4]);
        let ds = sample_gaussian(2, 2048, &a0, 71).unwrap();
        let aug = AugmentationSpec::Isotropic { sigma: 0.3 };
        let w = random_weights(2, 2, 91, 0.4);
        let exp = sample_expansion(&LossSpec::infonce(), &ds, &aug, &w, 32, 5).unwrap();
        let b_emp = empirical_cov(&ds);
        let expect = -w.w.mul(&b_emp.to_mat()).dot(&w.w);
        assert!(
            (exp.quadratic - expect).abs() < 0.05 * (1.0 + expect.abs()),
            "draw quadratic {:.5} vs moment form {:.5}",
            exp.quadratic,
            expect
        );
    }

    #[test]
    fn bias_without_normalization_rejected() {
        let spec = LossSpec {
            bias_enabled: true,
            ..LossSpec::infonce()
        };
        assert!(spec.validate().is_err());
    }
}
