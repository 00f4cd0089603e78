//! Analytic loss landscapes for linear self-supervised learning.
//!
//! For a linear model `f(x) = Wx` trained with a contrastive or
//! redundancy-reduction loss, the landscape near the origin takes the
//! quartic form `L = -Tr[W B W^T] + Tr[(W Σ W^T)^2]`, where `B` depends on
//! the loss family and `Σ` is the covariance of the augmented data. This
//! crate computes that landscape in closed form, enumerates its stationary
//! points, predicts per-eigenmode dimensional collapse, and cross-checks
//! everything numerically with a full-batch trainer and Monte-Carlo
//! estimators of the exact sample losses.
//!
//! The main entry points:
//!
//! - [`spectra`]: dense symmetric eigendecomposition (cyclic Jacobi),
//!   masked reconstruction, matrix powers, commutation tests.
//! - [`datamodel`]: Gaussian datasets, augmentation covariances, class
//!   imbalance mixtures, CSV import/export.
//! - [`losses`]: closed-form landscapes with analytic gradients, plus
//!   sample-based InfoNCE-family estimators for cross-validation.
//! - [`solver`]: stationary points, global minimum, collapse prediction,
//!   norm-constrained solutions at finite and infinite constraint strength,
//!   and the bias-constrained solution set.
//! - [`trainer`]: full-batch gradient descent / Adam on closed-form or
//!   sampled losses, with spectrum tracking and theory verification.
//! - [`experiments`]: scripted parameter sweeps (noise scaling, critical
//!   dataset size, entropy-weight control, phase diagrams, downstream
//!   regression, imbalance robustness, landscape slices).
//! - [`cli`]: a JSON-config command runner that writes `results.csv`,
//!   `meta.json`, and `plot.svg` artifacts.
//!
//! Each capability has a runnable example; see `examples/` or run e.g.
//!
//! ```text
//! cargo run --release --example stationary_points
//! cargo run --release --example phase_diagram
//! ```

pub mod cli;
pub mod datamodel;
pub mod experiments;
pub mod losses;
pub mod solver;
pub mod spectra;
pub mod svg;
pub mod trainer;
