//! JSON-config command runner.
//!
//! One entry point dispatches on `command`: `solve`, `predict`, `train`,
//! `verify`, `sweep:<name>`, or `slice`. Results land in an output
//! directory as `results.csv` (or `trajectory.csv` / `solutions.csv`),
//! `meta.json`, and `plot.svg` where a chart makes sense. `meta.json`
//! embeds the fully resolved configuration under `"config"`, and can be
//! fed back as `--config` to reproduce `results.csv` byte for byte.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure (an
//! `error.json` with the failure is written next to any partial output).

use crate::datamodel::{empirical_cov, CovarianceModel, Dataset};
use crate::experiments::{
    beta_collapse_sweep, critical_n_sweep, downstream_eval, imbalance_robustness,
    landscape_slice, normalization_collapse, phase_diagram, sigma_scaling, BetaSweepAxis,
    DownstreamTask, ImbalanceFamily, SliceKind, SweepGrid, SweepMode,
};
use crate::losses::{Kappa, LossSpec};
use crate::solver;
use crate::spectra::SymMatrix;
use crate::svg::{render_svg, RenderKind, RenderOptions};
use crate::trainer::{
    train, verify_against_theory, write_trajectory_csv, LossSource, Optimizer, TrainConfig,
};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

/// Documentation for every configuration key, shown under `--help`.
pub const CONFIG_HELP: &str = r#"CONFIG FILE (JSON; unknown keys are rejected)

Top level:
  command      string   one of: solve | predict | train | verify |
                        sweep:sigma_scaling | sweep:critical_n |
                        sweep:beta_collapse | sweep:normalization_collapse |
                        sweep:phase_diagram | sweep:downstream |
                        sweep:imbalance | slice          (required)
  seed         u64      master seed (default 0)
  out_dir      string   output directory (default "out"; --out overrides)
  threads      usize    worker threads (default: all cores; --threads or
                        COLLAPSELAB_THREADS override)
  verify_tol   f64      relative spectrum tolerance for `verify`
                        (default 1e-3)

instance (required for solve/predict/train/verify/slice):
  d0           usize    input dimension (required)
  d1           usize    output dimension (default d0)
  a0           object   clean second moment: {"kind":"identity"} |
                        {"kind":"diagonal","values":[..]} |
                        {"kind":"matrix","rows":[[..],..]} |
                        {"kind":"dataset_csv","path":"..."} (empirical)
  c            object   augmentation covariance: {"kind":"zero"} |
                        {"kind":"isotropic","sigma":s} |
                        {"kind":"diagonal","values":[..]} |
                        {"kind":"structured","sigma":s,"theta":t} |
                        {"kind":"matrix","rows":[[..],..]}
  loss         object   family + hyperparameters:
    family       string   infonce | weighted_infonce | beta_infonce |
                          spectral_contrastive | barlow_twins |
                          effective_quartic                  (required)
    alpha        f64      self-term weight, weighted_infonce (default 1)
    beta         f64      entropy weight, beta_infonce (default 1)
    n            usize    dataset size for weighted_infonce
    weight_decay f64      >= 0 (default 0)
    kappa        f64|"inf" norm-constraint strength (default: none)
    target       f64      norm-constraint target c (default 1)
    bias         bool     model has a bias term (default false)
    b_matrix     [[f64]]  coefficient for effective_quartic

trainer (train/verify; optional elsewhere):
  optimizer    string   "adam" | "gd" (default "adam")
  lr           f64      learning rate (default 6e-4)
  max_iters    usize    iteration cap (default 5000)
  grad_tol     f64      gradient max-norm stop (default 1e-9)
  init_scale   f64      initial weight scale (default 0.1)
  record_every usize    checkpoint cadence (default 100)
  source       string   "closed_form" | "samples" (default "closed_form")
  n_samples    usize    dataset size for the sampled source (default 256)
  mc_draws     usize    augmentation draws per step (default 4)
  data_seed    u64      dataset seed for the sampled source (default: seed)

sweep (per-experiment; unused keys may be omitted):
  mode            string  "analytic" | "trained" (default "analytic")
  sigma_values    [f64]   augmentation strengths (defaults per sweep)
  theta_values    [f64]   augmentation orientations in [0, 1]
  beta_values     [f64]   entropy weights (sweep:beta_collapse)
  n_values        [usize] dataset sizes (sweep:critical_n)
  proportions     [f64]   class proportions in [0, 1] (sweep:imbalance)
  alpha           f64     weighted family self-term (default 0.1)
  beta            f64     entropy weight (default 0.5)
  sigma           f64     fixed augmentation strength (default 5)
  a_values        [f64]   diagonal of the clean second moment
  target          f64     norm-constraint target c (default 1)
  trained_kappa   f64     finite strength used in trained mode (default 1e4)
  class_means     [[f64]] two class means (sweep:imbalance)
  class_covs      [[[f64]]] two class covariance matrices (sweep:imbalance)
  aug_rows        [[f64]] fixed augmentation covariance (sweep:imbalance)
  target_coeff    f64     label coefficient (sweep:downstream, default 1.5)
  ridge_lambda    f64     ridge penalty (default 0.001)
  n_train         usize   probe training points (default 2048)
  n_test          usize   probe test points (default 2048)

slice (command = slice):
  kind            string  "scalar" | "two_d" (default "two_d")
  half_range      f64     slice extent per direction (default 1.5)
  points_per_side usize   grid points each side of 0 (default 20)
  source          string  "analytic" | "trained" base weights
                          (default "analytic")
"#;

#[derive(Debug, Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainer: Option<TrainerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<SliceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_tol: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub d0: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<usize>,
    pub a0: MatrixSource,
    pub c: NoiseSource,
    pub loss: LossConfig,
}

#[derive(Debug, Serialize, Deserialize, Clone)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSource {
    Identity,
    Diagonal { values: Vec<f64> },
    Matrix { rows: Vec<Vec<f64>> },
    DatasetCsv { path: String },
}

#[derive(Debug, Serialize, Deserialize, Clone)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSource {
    Zero,
    Isotropic { sigma: f64 },
    Diagonal { values: Vec<f64> },
    Structured { sigma: f64, theta: f64 },
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proportions: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_means: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_covs: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aug_rows: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_per_side: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration: exit code 2.
    Config(String),
    /// Numeric or runtime failure after a valid configuration: exit 3.
    Numeric(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Config(msg.into()))
}

fn numeric<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numeric(e.to_string())
}

fn build_matrix(src: &MatrixSource, d0: usize, field: &str) -> Result<SymMatrix> {
    let m = match src {
        MatrixSource::Identity => SymMatrix::identity(d0),
        MatrixSource::Diagonal { values } => {
            if values.len() != d0 {
                return cfg_err(format!(
                    "{field}.values: expected {d0} entries, got {}",
                    values.len()
                ));
            }
            SymMatrix::diagonal(values)
        }
        MatrixSource::Matrix { rows } => SymMatrix::from_rows(rows)
            .map_err(|e| CliError::Config(format!("{field}.rows: {e}")))?,
        MatrixSource::DatasetCsv { path } => {
            let file = fs::File::open(path)
                .map_err(|e| CliError::Config(format!("{field}.path `{path}`: {e}")))?;
            let ds = Dataset::read_csv(&mut std::io::BufReader::new(file))
                .map_err(|e| CliError::Config(format!("{field}.path `{path}`: {e}")))?;
            empirical_cov(&ds)
        }
    };
    if m.dim() != d0 {
        return cfg_err(format!("{field}: dimension {} but d0 = {d0}", m.dim()));
    }
    Ok(m)
}

fn build_noise(src: &NoiseSource, d0: usize, field: &str) -> Result<SymMatrix> {
    match src {
        NoiseSource::Zero => Ok(SymMatrix::zeros(d0)),
        NoiseSource::Isotropic { sigma } => {
            if *sigma < 0.0 {
                return cfg_err(format!("{field}.sigma = {sigma}: must be >= 0"));
            }
            Ok(SymMatrix::identity(d0).scale(sigma * sigma))
        }
        NoiseSource::Diagonal { values } => {
            if values.len() != d0 {
                return cfg_err(format!(
                    "{field}.values: expected {d0} entries, got {}",
                    values.len()
                ));
            }
            if values.iter().any(|v| *v < 0.0) {
                return cfg_err(format!("{field}.values: variances must be >= 0"));
            }
            Ok(SymMatrix::diagonal(values))
        }
        NoiseSource::Structured { sigma, theta } => {
            if d0 != 2 {
                return cfg_err(format!("{field}: structured noise requires d0 = 2"));
            }
            if !(0.0..=1.0).contains(theta) {
                return cfg_err(format!("{field}.theta = {theta}: outside [0, 1]"));
            }
            if *sigma < 0.0 {
                return cfg_err(format!("{field}.sigma = {sigma}: must be >= 0"));
            }
            let s2 = sigma * sigma;
            Ok(SymMatrix::diagonal(&[s2 * (1.0 - theta), s2 * theta]))
        }
        NoiseSource::Matrix { rows } => {
            let m = SymMatrix::from_rows(rows)
                .map_err(|e| CliError::Config(format!("{field}.rows: {e}")))?;
            if m.dim() != d0 {
                return cfg_err(format!("{field}: dimension {} but d0 = {d0}", m.dim()));
            }
            Ok(m)
        }
    }
}

fn build_loss_spec(cfg: &LossConfig, d0: usize) -> Result<LossSpec> {
    let mut spec = match cfg.family.as_str() {
        "infonce" => LossSpec::infonce(),
        "weighted_infonce" => {
            let n = match cfg.n {
                Some(n) if n >= 2 => n,
                _ => return cfg_err("instance.loss.n: weighted_infonce needs n >= 2"),
            };
            LossSpec::weighted_infonce(cfg.alpha.unwrap_or(1.0), n)
        }
        "beta_infonce" => LossSpec::beta_infonce(cfg.beta.unwrap_or(1.0)),
        "spectral_contrastive" => LossSpec::spectral_contrastive(),
        "barlow_twins" => LossSpec::barlow_twins(),
        "effective_quartic" => {
            let rows = cfg
                .b_matrix
                .as_ref()
                .ok_or_else(|| CliError::Config("instance.loss.b_matrix: required".into()))?;
            let b = SymMatrix::from_rows(rows)
                .map_err(|e| CliError::Config(format!("instance.loss.b_matrix: {e}")))?;
            if b.dim() != d0 {
                return cfg_err(format!(
                    "instance.loss.b_matrix: dimension {} but d0 = {d0}",
                    b.dim()
                ));
            }
            LossSpec::effective_quartic(b)
        }
        other => {
            return cfg_err(format!("instance.loss.family: unknown family `{other}`"));
        }
    };
    if let Some(gamma) = cfg.weight_decay {
        spec = spec.with_weight_decay(gamma);
    }
    if let Some(kv) = &cfg.kappa {
        let kappa = match kv {
            serde_json::Value::String(s) if s == "inf" => Kappa::Infinite,
            serde_json::Value::Number(n) => Kappa::Finite(n.as_f64().unwrap_or(f64::NAN)),
            _ => return cfg_err("instance.loss.kappa: expected a number or \"inf\""),
        };
        spec = spec.with_normalization(kappa, cfg.target.unwrap_or(1.0));
    }
    if cfg.bias == Some(true) {
        spec = spec.with_bias();
    }
    spec.validate()
        .map_err(|e| CliError::Config(format!("instance.loss: {e}")))?;
    Ok(spec)
}

fn build_train_config(cfg: Option<&TrainerConfig>, seed: u64) -> Result<TrainConfig> {
    let mut out = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    if let Some(t) = cfg {
        let lr = t.lr.unwrap_or(6e-4);
        out.optimizer = match t.optimizer.as_deref().unwrap_or("adam") {
            "adam" => Optimizer::adaptive(lr),
            "gd" => Optimizer::GradientDescent { lr },
            other => return cfg_err(format!("trainer.optimizer: unknown `{other}`")),
        };
        if let Some(v) = t.max_iters {
            out.max_iters = v;
        }
        if let Some(v) = t.grad_tol {
            out.grad_tol = v;
        }
        if let Some(v) = t.init_scale {
            out.init_scale = v;
        }
        if let Some(v) = t.record_every {
            out.record_every = v;
        }
    }
    Ok(out)
}

fn parse_mode(s: Option<&str>) -> Result<SweepMode> {
    match s.unwrap_or("analytic") {
        "analytic" => Ok(SweepMode::Analytic),
        "trained" => Ok(SweepMode::Trained),
        other => cfg_err(format!("sweep.mode: unknown `{other}`")),
    }
}

/// Apply one `--set key.path=value` override to the raw JSON tree.
fn apply_override(root: &mut serde_json::Value, path: &str, raw: &str) -> Result<()> {
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("--set {path}: `{part}` is not an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

static POOL_INIT: OnceLock<()> = OnceLock::new();

fn init_threads(explicit: Option<usize>, config: Option<usize>) {
    let from_env = std::env::var("COLLAPSELAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    let n = explicit.or(from_env).or(config);
    if let Some(n) = n {
        if n > 0 {
            POOL_INIT.get_or_init(|| {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            });
        }
    }
}

struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Artifacts> {
        fs::create_dir_all(dir).map_err(numeric)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
        })
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(numeric)?;
        Ok(path)
    }

    fn write_grid(&self, name: &str, grid: &SweepGrid) -> Result<PathBuf> {
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).map_err(numeric)?;
        self.write_bytes(name, &buf)
    }

    /// `meta.json` with the resolved config, seed, and provenance; keys
    /// are emitted sorted, so the file is stable given stable values.
    fn write_meta(
        &self,
        config: &RunConfig,
        wall_time_s: f64,
        derived: serde_json::Value,
    ) -> Result<PathBuf> {
        let mut root = serde_json::Map::new();
        root.insert(
            "config".into(),
            serde_json::to_value(config).map_err(numeric)?,
        );
        root.insert("seed".into(), serde_json::json!(config.seed));
        root.insert("git_describe".into(), serde_json::json!(git_describe()));
        root.insert(
            "tool_version".into(),
            serde_json::json!(env!("CARGO_PKG_VERSION")),
        );
        root.insert("wall_time_s".into(), serde_json::json!(wall_time_s));
        if !derived.is_null() {
            root.insert("derived".into(), derived);
        }
        let text = serde_json::to_string_pretty(&serde_json::Value::Object(root))
            .map_err(numeric)?;
        self.write_bytes("meta.json", format!("{text}\n").as_bytes())
    }
}

struct Instance {
    cov: CovarianceModel,
    spec: LossSpec,
    d1: usize,
}

fn build_instance(cfg: &RunConfig) -> Result<Instance> {
    let inst = cfg
        .instance
        .as_ref()
        .ok_or_else(|| CliError::Config("instance: required for this command".into()))?;
    if inst.d0 == 0 {
        return cfg_err("instance.d0: must be positive");
    }
    let a0 = build_matrix(&inst.a0, inst.d0, "instance.a0")?;
    let c = build_noise(&inst.c, inst.d0, "instance.c")?;
    let cov = CovarianceModel::new(a0, c).map_err(|e| CliError::Config(format!("instance: {e}")))?;
    let spec = build_loss_spec(&inst.loss, inst.d0)?;
    Ok(Instance {
        cov,
        spec,
        d1: inst.d1.unwrap_or(inst.d0),
    })
}

fn run_solve(cfg: &RunConfig, artifacts: &Artifacts) -> Result<serde_json::Value> {
    let inst = build_instance(cfg)?;
    let points = solver::stationary_points(&inst.spec, &inst.cov, inst.d1).map_err(numeric)?;
    let mut csv = String::from("mask,rank,loss,local_min,eigenvalues\r\n");
    println!("{:<12} {:>4} {:>14} {:>9}  eigenvalues", "mask", "rank", "loss", "local_min");
    for p in &points {
        let eigs = crate::spectra::eig_sym(&p.wtw).map_err(numeric)?.eigenvalues;
        let eig_text = eigs
            .iter()
            .map(|e| format!("{e:.6e}"))
            .collect::<Vec<_>>()
            .join(" ");
        println!(
            "{:<12} {:>4} {:>14.6e} {:>9}  {}",
            p.mask.to_string(),
            p.rank,
            p.loss_value,
            p.is_local_min,
            eig_text
        );
        csv.push_str(&format!(
            "{},{},{},{},{}\r\n",
            p.mask,
            p.rank,
            p.loss_value,
            p.is_local_min,
            eigs.iter().map(|e| format!("{e}")).collect::<Vec<_>>().join(" ")
        ));
    }
    artifacts.write_bytes("solutions.csv", csv.as_bytes())?;
    Ok(serde_json::json!({ "stationary_points": points.len() }))
}

fn run_predict(cfg: &RunConfig, artifacts: &Artifacts) -> Result<serde_json::Value> {
    let inst = build_instance(cfg)?;
    let report = solver::predict_collapse(&inst.spec, &inst.cov).map_err(numeric)?;
    let mut csv = String::from("mode,a,c,b,collapses,pressure,drive\r\n");
    println!("{:>4} {:>12} {:>12} {:>12} {:>9}", "mode", "a", "c", "b", "collapses");
    for m in &report.modes {
        let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        println!(
            "{:>4} {:>12} {:>12} {:>12.5} {:>9}",
            m.index,
            m.a.map(|v| format!("{v:.5}")).unwrap_or_else(|| "-".into()),
            m.c.map(|v| format!("{v:.5}")).unwrap_or_else(|| "-".into()),
            m.b,
            m.collapses
        );
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\r\n",
            m.index,
            fmt_opt(m.a),
            fmt_opt(m.c),
            m.b,
            m.collapses,
            m.pressure,
            m.drive
        ));
    }
    println!(
        "complete_collapse = {}, dimensional_collapse = {}",
        report.complete_collapse, report.dimensional_collapse
    );
    artifacts.write_bytes("collapse.csv", csv.as_bytes())?;
    Ok(serde_json::json!({
        "complete_collapse": report.complete_collapse,
        "dimensional_collapse": report.dimensional_collapse,
    }))
}

fn run_training(cfg: &RunConfig) -> Result<(Instance, crate::trainer::TrajectoryRecord)> {
    let inst = build_instance(cfg)?;
    let tc = build_train_config(cfg.trainer.as_ref(), cfg.seed)?;
    let source_kind = cfg
        .trainer
        .as_ref()
        .and_then(|t| t.source.as_deref())
        .unwrap_or("closed_form");
    let record = match source_kind {
        "closed_form" => {
            train(&inst.spec, &LossSource::ClosedForm(&inst.cov), inst.d1, &tc).map_err(numeric)?
        }
        "samples" => {
            let t = cfg.trainer.as_ref();
            let n = t.and_then(|t| t.n_samples).unwrap_or(256);
            let mc = t.and_then(|t| t.mc_draws).unwrap_or(4);
            let data_seed = t.and_then(|t| t.data_seed).unwrap_or(cfg.seed);
            let ds = crate::datamodel::sample_gaussian(inst.cov.dim(), n, inst.cov.a0(), data_seed)
                .map_err(numeric)?;
            // The sampled path needs an explicit noise model, not just a
            // covariance; only simple diagonal augmentations are supported.
            let aug = noise_to_aug(cfg)?;
            let spec = match &inst.spec.family {
                crate::losses::Family::WeightedInfoNce { alpha } => {
                    LossSpec::weighted_infonce(*alpha, n)
                }
                _ => inst.spec.clone(),
            };
            train(
                &spec,
                &LossSource::Samples {
                    ds: &ds,
                    aug: &aug,
                    mc_draws: mc,
                },
                inst.d1,
                &tc,
            )
            .map_err(numeric)?
        }
        other => return cfg_err(format!("trainer.source: unknown `{other}`")),
    };
    Ok((inst, record))
}

fn noise_to_aug(cfg: &RunConfig) -> Result<crate::datamodel::AugmentationSpec> {
    use crate::datamodel::AugmentationSpec as A;
    let inst = cfg.instance.as_ref().unwrap();
    Ok(match &inst.c {
        NoiseSource::Zero => A::Isotropic { sigma: 0.0 },
        NoiseSource::Isotropic { sigma } => A::Isotropic { sigma: *sigma },
        NoiseSource::Diagonal { values } => A::Diagonal {
            variances: values.clone(),
        },
        NoiseSource::Structured { sigma, theta } => A::Structured {
            sigma: *sigma,
            theta: *theta,
        },
        NoiseSource::Matrix { .. } => {
            return cfg_err(
                "trainer.source = samples needs a diagonal/isotropic/structured noise model",
            )
        }
    })
}

fn run_train_cmd(cfg: &RunConfig, artifacts: &Artifacts) -> Result<serde_json::Value> {
    let (_, record) = run_training(cfg)?;
    let mut buf = Vec::new();
    write_trajectory_csv(&record, &mut buf).map_err(numeric)?;
    artifacts.write_bytes("trajectory.csv", &buf)?;
    let eigs = record.final_gram_eigenvalues();
    println!(
        "converged = {}, final spectrum = {:?}",
        record.converged, eigs
    );
    Ok(serde_json::json!({
        "converged": record.converged,
        "iters_to_converge": record.iters_to_converge,
        "final_eigenvalues": eigs,
    }))
}

fn run_verify(cfg: &RunConfig, artifacts: &Artifacts) -> Result<(serde_json::Value, bool)> {
    let (inst, record) = run_training(cfg)?;
    let tol = cfg.verify_tol.unwrap_or(1e-3);
    let report =
        verify_against_theory(&record, &inst.spec, &inst.cov, inst.d1, tol).map_err(numeric)?;
    let per_mode: Vec<serde_json::Value> = report
        .per_mode
        .iter()
        .map(|m| {
            serde_json::json!({
                "theory": m.theory,
                "trained": m.trained,
                "abs_err": m.abs_err,
                "rel_err": m.rel_err,
            })
        })
        .collect();
    let value = serde_json::json!({
        "pass": report.pass,
        "collapse_match": report.collapse_match,
        "tol": report.tol,
        "per_mode": per_mode,
    });
    artifacts.write_bytes(
        "verification.json",
        format!("{}\n", serde_json::to_string_pretty(&value).map_err(numeric)?).as_bytes(),
    )?;
    println!("verification pass = {}", report.pass);
    Ok((value, report.pass))
}

fn sweep_a0(sweep: &SweepConfig, default_dim: usize) -> SymMatrix {
    match &sweep.a_values {
        Some(values) => SymMatrix::diagonal(values),
        None => SymMatrix::identity(default_dim),
    }
}

fn validate_unit_interval(values: &[f64], field: &str) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !(0.0..=1.0).contains(v) {
            return cfg_err(format!("{field}[{i}] = {v}: outside [0, 1]"));
        }
    }
    Ok(())
}

fn run_sweep(
    cfg: &RunConfig,
    name: &str,
) -> Result<(serde_json::Value, SweepGrid, RenderKind, RenderOptions)> {
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let mode = parse_mode(sweep.mode.as_deref())?;
    let tc = build_train_config(cfg.trainer.as_ref(), cfg.seed)?;
    match name {
        "sigma_scaling" => {
            let a0 = sweep_a0(&sweep, 8);
            let sigmas = sweep
                .sigma_values
                .clone()
                .unwrap_or_else(|| (0..=24).map(|k| 10f64.powf(-0.5 + k as f64 * 0.15)).collect());
            let out = sigma_scaling(&a0, &sigmas, mode, &tc, cfg.seed).map_err(numeric)?;
            Ok((
                serde_json::json!({ "tail_slope": out.tail_slope }),
                out.grid,
                RenderKind::Lines,
                RenderOptions {
                    log_x: true,
                    log_y: true,
                    title: Some("smallest spectrum vs augmentation strength".into()),
                    ..RenderOptions::default()
                },
            ))
        }
        "critical_n" => {
            let a0 = sweep_a0(&sweep, 4);
            let ns = sweep
                .n_values
                .clone()
                .unwrap_or_else(|| (5..=60).collect());
            let alpha = sweep.alpha.unwrap_or(0.1);
            let sigma = sweep.sigma.unwrap_or(5.0);
            let out = critical_n_sweep(alpha, sigma, &a0, &ns, mode, &tc, cfg.seed)
                .map_err(numeric)?;
            Ok((
                serde_json::json!({ "n_star": out.n_star }),
                out.grid,
                RenderKind::Lines,
                RenderOptions {
                    log_y: true,
                    title: Some("smallest spectrum vs dataset size".into()),
                    ..RenderOptions::default()
                },
            ))
        }
        "beta_collapse" => {
            let axis = if let Some(betas) = sweep.beta_values.clone() {
                let a0 = sweep_a0(&sweep, 5);
                let c_diag = sweep
                    .sigma_values
                    .clone()
                    .unwrap_or_else(|| vec![0.0, 1.0, 2.0, 4.0, 8.0]);
                if c_diag.len() != a0.dim() {
                    return cfg_err(format!(
                        "sweep.sigma_values: expected {} per-mode variances for the beta axis",
                        a0.dim()
                    ));
                }
                let cov = CovarianceModel::new(a0, SymMatrix::diagonal(&c_diag))
                    .map_err(|e| CliError::Config(format!("sweep: {e}")))?;
                BetaSweepAxis::Beta {
                    values: betas,
                    cov,
                }
            } else {
                BetaSweepAxis::Sigma {
                    values: sweep
                        .sigma_values
                        .clone()
                        .unwrap_or_else(|| (1..=16).map(|k| 0.25 * k as f64).collect()),
                    beta: sweep.beta.unwrap_or(0.5),
                    a0: sweep_a0(&sweep, 5),
                }
            };
            let out = beta_collapse_sweep(&axis, mode, &tc, cfg.seed).map_err(numeric)?;
            Ok((
                serde_json::json!({ "boundaries": out.boundaries }),
                out.grid,
                RenderKind::Lines,
                RenderOptions {
                    log_y: true,
                    title: Some("spectrum under entropy-weight control".into()),
                    ..RenderOptions::default()
                },
            ))
        }
        "normalization_collapse" => {
            let a0 = sweep_a0(&sweep, 8);
            let sigmas = sweep
                .sigma_values
                .clone()
                .unwrap_or_else(|| (1..=30).map(|k| 0.05 * k as f64).collect());
            let target = sweep.target.unwrap_or(1.0);
            let kappa = sweep.trained_kappa.unwrap_or(1e4);
            let out =
                normalization_collapse(&a0, target, &sigmas, mode, kappa, &tc, cfg.seed)
                    .map_err(numeric)?;
            Ok((
                serde_json::json!({ "first_failure_sigma": out.first_failure_sigma }),
                out.grid,
                RenderKind::Lines,
                RenderOptions {
                    title: Some("norm-constrained spectrum vs augmentation".into()),
                    ..RenderOptions::default()
                },
            ))
        }
        "phase_diagram" => {
            let a = match sweep.a_values.as_deref() {
                Some([a1, a2]) => [*a1, *a2],
                Some(other) => {
                    return cfg_err(format!(
                        "sweep.a_values: phase diagram needs exactly 2 values, got {}",
                        other.len()
                    ))
                }
                None => [1.0, 0.5],
            };
            let sigmas = sweep
                .sigma_values
                .clone()
                .unwrap_or_else(|| (0..17).map(|k| 0.25 * k as f64).collect());
            let thetas = sweep
                .theta_values
                .clone()
                .unwrap_or_else(|| (0..21).map(|k| 0.05 * k as f64).collect());
            validate_unit_interval(&thetas, "sweep.theta_values")?;
            let beta = sweep.beta.unwrap_or(0.5);
            let grid = phase_diagram(a, beta, &sigmas, &thetas).map_err(numeric)?;
            Ok((
                serde_json::json!({ "a": a, "beta": beta }),
                grid,
                RenderKind::Heatmap,
                RenderOptions {
                    key: Some("pattern".into()),
                    title: Some("collapse phase diagram".into()),
                    ..RenderOptions::default()
                },
            ))
        }
        "downstream" => {
            let a = match sweep.a_values.as_deref() {
                Some([a1, a2]) => [*a1, *a2],
                Some(other) => {
                    return cfg_err(format!(
                        "sweep.a_values: downstream needs exactly 2 values, got {}",
                        other.len()
                    ))
                }
                None => [1.0, 0.5],
            };
            let sigmas = sweep
                .sigma_values
                .clone()
                .unwrap_or_else(|| (0..=8).map(|k| 0.5 * k as f64).collect());
            let thetas = sweep.theta_values.clone().unwrap_or_else(|| vec![0.5, 1.0]);
            validate_unit_interval(&thetas, "sweep.theta_values")?;
            let task = DownstreamTask {
                target_coeff: sweep.target_coeff.unwrap_or(1.5),
                ridge_lambda: sweep.ridge_lambda.unwrap_or(0.001),
                n_train: sweep.n_train.unwrap_or(2048),
                n_test: sweep.n_test.unwrap_or(2048),
                seed: cfg.seed,
                ..DownstreamTask::default()
            };
            let beta = sweep.beta.unwrap_or(0.5);
            let grid = downstream_eval(&task, a, &sigmas, &thetas, beta, mode, &tc)
                .map_err(numeric)?;
            Ok((
                serde_json::json!({ "a": a, "beta": beta }),
                grid,
                RenderKind::Heatmap,
                RenderOptions {
                    key: Some("mse".into()),
                    title: Some("downstream probe error".into()),
                    ..RenderOptions::default()
                },
            ))
        }
        "imbalance" => {
            let means = sweep
                .class_means
                .clone()
                .unwrap_or_else(|| vec![vec![1.5, 0.9], vec![-1.5, -0.9]]);
            if means.len() != 2 {
                return cfg_err("sweep.class_means: exactly two class means required");
            }
            let covs = match sweep.class_covs.clone() {
                Some(rows) => {
                    if rows.len() != 2 {
                        return cfg_err("sweep.class_covs: exactly two covariances required");
                    }
                    [
                        SymMatrix::from_rows(&rows[0])
                            .map_err(|e| CliError::Config(format!("sweep.class_covs[0]: {e}")))?,
                        SymMatrix::from_rows(&rows[1])
                            .map_err(|e| CliError::Config(format!("sweep.class_covs[1]: {e}")))?,
                    ]
                }
                None => [
                    SymMatrix::diagonal(&[0.5, 0.2]),
                    SymMatrix::diagonal(&[0.3, 0.6]),
                ],
            };
            let family = ImbalanceFamily {
                class_means: [means[0].clone(), means[1].clone()],
                class_covs: covs,
            };
            let c = match sweep.aug_rows.clone() {
                Some(rows) => SymMatrix::from_rows(&rows)
                    .map_err(|e| CliError::Config(format!("sweep.aug_rows: {e}")))?,
                None => {
                    let th = 0.5f64;
                    let rot = crate::spectra::Mat::from_rows(&[
                        vec![th.cos(), -th.sin()],
                        vec![th.sin(), th.cos()],
                    ]);
                    SymMatrix::from_mat(
                        &rot.mul(&SymMatrix::diagonal(&[0.3, 0.1]).to_mat())
                            .mul(&rot.transpose()),
                    )
                    .map_err(numeric)?
                }
            };
            let ps = sweep
                .proportions
                .clone()
                .unwrap_or_else(|| vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.95]);
            validate_unit_interval(&ps, "sweep.proportions")?;
            let grid = imbalance_robustness(&family, &ps, &c).map_err(numeric)?;
            Ok((
                serde_json::Value::Null,
                grid,
                RenderKind::Lines,
                RenderOptions {
                    title: Some("dominant-subspace drift under imbalance".into()),
                    ..RenderOptions::default()
                },
            ))
        }
        other => cfg_err(format!("command: unknown sweep `{other}`")),
    }
}

fn run_slice(cfg: &RunConfig, artifacts: &Artifacts) -> Result<serde_json::Value> {
    let inst = build_instance(cfg)?;
    let slice = cfg.slice.clone().unwrap_or_default();
    let kind = match slice.kind.as_deref().unwrap_or("two_d") {
        "scalar" => SliceKind::Scalar,
        "two_d" => SliceKind::TwoD,
        other => return cfg_err(format!("slice.kind: unknown `{other}`")),
    };
    let half_range = slice.half_range.unwrap_or(1.5);
    let points = slice.points_per_side.unwrap_or(20);
    let base = match slice.source.as_deref().unwrap_or("analytic") {
        "analytic" => None,
        "trained" => {
            let tc = build_train_config(cfg.trainer.as_ref(), cfg.seed)?;
            let record = train(&inst.spec, &LossSource::ClosedForm(&inst.cov), inst.d1, &tc)
                .map_err(numeric)?;
            Some(record.final_weights)
        }
        other => return cfg_err(format!("slice.source: unknown `{other}`")),
    };
    let out = landscape_slice(&inst.spec, &inst.cov, base.as_ref(), kind, half_range, points)
        .map_err(numeric)?;
    artifacts.write_grid("results.csv", &out.grid)?;
    let render_kind = if out.grid.axes.len() == 1 {
        RenderKind::Lines
    } else {
        RenderKind::Heatmap
    };
    let svg = render_svg(
        &out.grid,
        render_kind,
        &RenderOptions {
            key: Some("loss".into()),
            title: Some(format!("landscape slice (origin: {})", out.origin_class.as_str())),
            ..RenderOptions::default()
        },
    )
    .map_err(numeric)?;
    artifacts.write_bytes("plot.svg", svg.as_bytes())?;
    println!("origin classification: {}", out.origin_class.as_str());
    Ok(serde_json::json!({ "origin_class": out.origin_class.as_str() }))
}

/// Load, override, validate, dispatch, and write artifacts. Returns the
/// process exit code.
pub fn run(
    config_path: &Path,
    overrides: &[(String, String)],
    out_dir: Option<&str>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> i32 {
    match run_inner(config_path, overrides, out_dir, seed, threads) {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            2
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            // Best-effort error artifact next to whatever was written.
            let dir = out_dir.unwrap_or("out");
            if fs::create_dir_all(dir).is_ok() {
                let payload = serde_json::json!({ "error": msg });
                let _ = fs::write(
                    Path::new(dir).join("error.json"),
                    format!("{}\n", serde_json::to_string_pretty(&payload).unwrap()),
                );
            }
            3
        }
    }
}

fn run_inner(
    config_path: &Path,
    overrides: &[(String, String)],
    out_dir: Option<&str>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> Result<i32> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let mut raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!(
            "{} is not valid JSON (line {}, column {})",
            config_path.display(),
            e.line(),
            e.column()
        ))
    })?;
    // A meta.json from a previous run embeds the config under "config".
    if let Some(inner) = raw.get("config") {
        raw = inner.clone();
    }
    for (path, value) in overrides {
        apply_override(&mut raw, path, value)?;
    }
    let mut config: RunConfig = serde_json::from_value(raw)
        .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = out_dir {
        config.out_dir = Some(o.to_string());
    }
    init_threads(threads, config.threads);

    let dir = config.out_dir.clone().unwrap_or_else(|| "out".into());
    let artifacts = Artifacts::new(Path::new(&dir))?;
    let started = Instant::now();

    let command = config.command.clone();
    let (derived, exit) = if let Some(name) = command.strip_prefix("sweep:") {
        let (derived, grid, kind, opts) = run_sweep(&config, name)?;
        artifacts.write_grid("results.csv", &grid)?;
        let svg = render_svg(&grid, kind, &opts).map_err(numeric)?;
        artifacts.write_bytes("plot.svg", svg.as_bytes())?;
        println!(
            "sweep `{name}`: {} cells -> {}",
            grid.n_cells(),
            artifacts.dir.display()
        );
        (derived, 0)
    } else {
        match command.as_str() {
            "solve" => (run_solve(&config, &artifacts)?, 0),
            "predict" => (run_predict(&config, &artifacts)?, 0),
            "train" => (run_train_cmd(&config, &artifacts)?, 0),
            "verify" => {
                let (value, pass) = run_verify(&config, &artifacts)?;
                (value, if pass { 0 } else { 1 })
            }
            "slice" => (run_slice(&config, &artifacts)?, 0),
            other => {
                return cfg_err(format!("command: unknown command `{other}`"));
            }
        }
    };
    artifacts.write_meta(&config, started.elapsed().as_secs_f64(), derived)?;
    Ok(exit)
}

/// Write a ready-to-run example config next to nothing in particular;
/// handy for `--help` examples and tests.
pub fn example_config() -> RunConfig {
    RunConfig {
        command: "solve".into(),
        seed: 0,
        out_dir: None,
        threads: None,
        instance: Some(InstanceConfig {
            d0: 2,
            d1: None,
            a0: MatrixSource::Diagonal {
                values: vec![1.0, 1.0],
            },
            c: NoiseSource::Diagonal {
                values: vec![0.0, 4.0],
            },
            loss: LossConfig {
                family: "beta_infonce".into(),
                alpha: None,
                beta: Some(0.5),
                n: None,
                weight_decay: None,
                kappa: None,
                target: None,
                bias: None,
                b_matrix: None,
            },
        }),
        trainer: None,
        sweep: None,
        slice: None,
        verify_tol: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_scalars_and_paths() {
        let mut v = serde_json::json!({ "command": "solve", "seed": 1 });
        apply_override(&mut v, "seed", "42").unwrap();
        apply_override(&mut v, "sweep.beta", "0.25").unwrap();
        assert_eq!(v["seed"], serde_json::json!(42));
        assert_eq!(v["sweep"]["beta"], serde_json::json!(0.25));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let raw = serde_json::json!({ "command": "solve", "bogus": 1 });
        let parsed: std::result::Result<RunConfig, _> = serde_json::from_value(raw);
        assert!(parsed.is_err());
    }

    #[test]
    fn example_config_round_trips_through_json() {
        let cfg = example_config();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.command, "solve");
    }

    #[test]
    fn help_text_documents_every_top_level_key() {
        for key in [
            "command", "seed", "out_dir", "threads", "instance", "trainer", "sweep", "slice",
            "verify_tol", "sigma_values", "theta_values", "n_values", "proportions",
            "half_range", "points_per_side", "mc_draws", "grad_tol",
        ] {
            assert!(CONFIG_HELP.contains(key), "help is missing `{key}`");
        }
    }
}
