//! Experiment configuration: parsing, validation, and defaults.
//!
//! Configs are TOML documents. Unknown keys are rejected so typos fail
//! loudly, and every semantic violation is reported with its key path.
//! The emitted run manifest reuses this same schema (plus a `[report]`
//! table), so a manifest can be fed straight back into `run`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use dpmix::data::ShardMode;
use dpmix::optimizer::{HyperParams, Method};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(Violations),
}

/// All semantic violations found in one pass.
#[derive(Debug)]
pub struct Violations(pub Vec<String>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid config ({} problem(s)):", self.0.len())?;
        for v in &self.0 {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

fn default_true() -> bool {
    true
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_flip_fraction() -> f64 {
    0.05
}

fn default_shard_mode() -> ShardMode {
    ShardMode::Iid
}

fn default_c() -> f64 {
    1.0
}

fn default_batch() -> usize {
    20
}

fn default_inner_steps() -> usize {
    200
}

fn default_inner_tol() -> f64 {
    1e-8
}

/// Where the training data comes from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// LIBSVM text file on disk.
    Libsvm {
        path: PathBuf,
        /// Force the feature dimension (otherwise max index + 1).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
        /// Fail at load time unless the sample count matches.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_samples: Option<usize>,
        #[serde(default = "default_true")]
        normalize: bool,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default)]
        split_seed: u64,
        #[serde(default = "default_shard_mode")]
        shard_mode: ShardMode,
        #[serde(default)]
        data_seed: u64,
    },
    /// Generated binary data; no files needed.
    Synthetic {
        n: usize,
        d: usize,
        margin: f64,
        #[serde(default = "default_flip_fraction")]
        flip_fraction: f64,
        #[serde(default)]
        data_seed: u64,
        #[serde(default = "default_true")]
        normalize: bool,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default)]
        split_seed: u64,
        #[serde(default = "default_shard_mode")]
        shard_mode: ShardMode,
    },
}

impl DatasetSpec {
    pub fn test_fraction(&self) -> f64 {
        match self {
            DatasetSpec::Libsvm { test_fraction, .. } => *test_fraction,
            DatasetSpec::Synthetic { test_fraction, .. } => *test_fraction,
        }
    }

    pub fn split_seed(&self) -> u64 {
        match self {
            DatasetSpec::Libsvm { split_seed, .. } => *split_seed,
            DatasetSpec::Synthetic { split_seed, .. } => *split_seed,
        }
    }

    pub fn shard_mode(&self) -> ShardMode {
        match self {
            DatasetSpec::Libsvm { shard_mode, .. } => *shard_mode,
            DatasetSpec::Synthetic { shard_mode, .. } => *shard_mode,
        }
    }

    pub fn data_seed(&self) -> u64 {
        match self {
            DatasetSpec::Libsvm { data_seed, .. } => *data_seed,
            DatasetSpec::Synthetic { data_seed, .. } => *data_seed,
        }
    }

    pub fn normalize(&self) -> bool {
        match self {
            DatasetSpec::Libsvm { normalize, .. } => *normalize,
            DatasetSpec::Synthetic { normalize, .. } => *normalize,
        }
    }
}

/// The sweep grid: the cross product of every axis runs once per seed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub methods: Vec<Method>,
    /// Agent counts m.
    pub agents: Vec<usize>,
    /// Sparsity levels p of the communication graph.
    pub sparsity: Vec<f64>,
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub topology_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PrivacySpec {
    /// Calibration constant c.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Override the problem's estimated gradient-norm bound L_g.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_bound: Option<f64>,
    /// Bypass calibration entirely with a fixed noise scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_override: Option<f64>,
}

impl Default for PrivacySpec {
    fn default() -> Self {
        Self { c: default_c(), grad_bound: None, sigma_override: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Manual,
    Theorem1,
}

/// Hyperparameters, either explicit or derived from the accuracy target.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HyperSpec {
    #[serde(default)]
    pub preset: Preset,
    /// Target accuracy for the `theorem1` preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Horizon, as epochs over the local shard...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// ...or as an explicit update count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LoggingSpec {
    /// Row interval in parameter updates; default is once per epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_iters: Option<usize>,
    #[serde(default = "default_true")]
    pub stationarity: bool,
    #[serde(default = "default_inner_steps")]
    pub inner_steps: usize,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    /// Record wall-clock times in the results CSV. Off by default so that
    /// re-running a config reproduces the output byte for byte.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl Default for LoggingSpec {
    fn default() -> Self {
        Self {
            interval_iters: None,
            stationarity: true,
            inner_steps: default_inner_steps(),
            inner_tol: default_inner_tol(),
            record_wall_time: false,
        }
    }
}

/// Per-sweep-point resolution details, written into the manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct ReportInfo {
    #[serde(default)]
    pub points: Vec<PointReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PointReport {
    pub m: usize,
    pub p: f64,
    pub theta: f64,
    pub gamma: f64,
    /// Measured spectral gap of the mixing matrix.
    pub lambda: f64,
    pub edges: usize,
    /// Realized sparsity 2|E| / (m(m-1)) after any connectivity repair.
    pub effective_p: f64,
    pub repaired: bool,
    /// Edge list, one `i j` pair per line.
    pub edge_list: String,
    pub grad_bound: f64,
    pub sigma: f64,
    pub iters_per_epoch: usize,
    pub hyper: HyperParams,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub privacy: PrivacySpec,
    pub hyper: HyperSpec,
    #[serde(default)]
    pub logging: LoggingSpec,
    /// Present only in emitted manifests; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportInfo>,
}

impl ExperimentConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Parse and validate a config document.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Check every invariant, collecting violations with key paths.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad = Vec::new();
        let mut check = |ok: bool, path: &str, reason: String| {
            if !ok {
                bad.push(format!("{path}: {reason}"));
            }
        };

        match &self.dataset {
            DatasetSpec::Libsvm { path, test_fraction, .. } => {
                check(path.exists(), "dataset.path", format!("file {path:?} does not exist"));
                check(
                    (0.0..1.0).contains(test_fraction),
                    "dataset.test_fraction",
                    format!("must lie in [0, 1), got {test_fraction}"),
                );
            }
            DatasetSpec::Synthetic { n, d, margin, flip_fraction, test_fraction, .. } => {
                check(*n >= 1, "dataset.n", "must be at least 1".into());
                check(*d >= 1, "dataset.d", "must be at least 1".into());
                check(*margin >= 0.0, "dataset.margin", format!("must be nonnegative, got {margin}"));
                check(
                    (0.0..=1.0).contains(flip_fraction),
                    "dataset.flip_fraction",
                    format!("must lie in [0, 1], got {flip_fraction}"),
                );
                check(
                    (0.0..1.0).contains(test_fraction),
                    "dataset.test_fraction",
                    format!("must lie in [0, 1), got {test_fraction}"),
                );
            }
        }

        check(!self.sweep.methods.is_empty(), "sweep.methods", "at least one method".into());
        check(!self.sweep.agents.is_empty(), "sweep.agents", "at least one agent count".into());
        check(!self.sweep.sparsity.is_empty(), "sweep.sparsity", "at least one sparsity level".into());
        check(!self.sweep.theta.is_empty(), "sweep.theta", "at least one theta".into());
        check(!self.sweep.gamma.is_empty(), "sweep.gamma", "at least one gamma".into());
        check(!self.sweep.seeds.is_empty(), "sweep.seeds", "at least one seed".into());
        for (i, &m) in self.sweep.agents.iter().enumerate() {
            check(m >= 1, &format!("sweep.agents[{i}]"), format!("must be positive, got {m}"));
        }
        for (i, &p) in self.sweep.sparsity.iter().enumerate() {
            check(
                (0.0..=1.0).contains(&p),
                &format!("sweep.sparsity[{i}]"),
                format!("must lie in [0, 1], got {p}"),
            );
        }
        for (i, &theta) in self.sweep.theta.iter().enumerate() {
            check(theta > 0.0, &format!("sweep.theta[{i}]"), format!("theta must be positive, got {theta}"));
        }
        for (i, &gamma) in self.sweep.gamma.iter().enumerate() {
            check(
                gamma > 0.0 && gamma < 1.0,
                &format!("sweep.gamma[{i}]"),
                format!("gamma must lie in (0, 1), got {gamma}"),
            );
        }

        check(self.privacy.c > 0.0, "privacy.c", format!("must be positive, got {}", self.privacy.c));
        if let Some(lg) = self.privacy.grad_bound {
            check(lg > 0.0, "privacy.grad_bound", format!("must be positive, got {lg}"));
        }
        if let Some(s) = self.privacy.sigma_override {
            check(s >= 0.0, "privacy.sigma_override", format!("must be nonnegative, got {s}"));
        }

        let h = &self.hyper;
        check(h.batch >= 1, "hyper.batch", "must be at least 1".into());
        match h.preset {
            Preset::Manual => {
                for (name, val) in [
                    ("hyper.eta_x", h.eta_x),
                    ("hyper.eta_y", h.eta_y),
                    ("hyper.beta_x", h.beta_x),
                    ("hyper.beta_y", h.beta_y),
                ] {
                    match val {
                        None => check(false, name, "required for the manual preset".into()),
                        Some(v) => check(v > 0.0, name, format!("must be positive, got {v}")),
                    }
                }
                for (name, val) in [("hyper.beta_x", h.beta_x), ("hyper.beta_y", h.beta_y)] {
                    if let Some(v) = val {
                        check(v <= 1.0, name, format!("must be at most 1, got {v}"));
                    }
                }
                check(h.b0.is_some(), "hyper.b0", "required for the manual preset".into());
                check(
                    h.epochs.is_some() ^ h.iterations.is_some(),
                    "hyper.epochs",
                    "exactly one of epochs or iterations must be set".into(),
                );
                check(h.epsilon.is_none(), "hyper.epsilon", "only meaningful with preset = \"theorem1\"".into());
            }
            Preset::Theorem1 => {
                match h.epsilon {
                    None => check(false, "hyper.epsilon", "required for the theorem1 preset".into()),
                    Some(e) => check(e > 0.0, "hyper.epsilon", format!("must be positive, got {e}")),
                }
                check(
                    !(h.epochs.is_some() && h.iterations.is_some()),
                    "hyper.epochs",
                    "set at most one of epochs or iterations".into(),
                );
            }
        }
        if let Some(b0) = h.b0 {
            check(b0 >= 1, "hyper.b0", "must be at least 1".into());
        }
        if let Some(e) = h.epochs {
            check(e >= 1, "hyper.epochs", "must be at least 1".into());
        }
        if let Some(t) = h.iterations {
            check(t >= 1, "hyper.iterations", "must be at least 1".into());
        }
        if let Some(c) = h.clip {
            check(c > 0.0, "hyper.clip", format!("must be positive, got {c}"));
        }

        check(
            self.logging.interval_iters.is_none_or(|i| i >= 1),
            "logging.interval_iters",
            "must be at least 1".into(),
        );
        check(self.logging.inner_steps >= 1, "logging.inner_steps", "must be at least 1".into());
        check(self.logging.inner_tol >= 0.0, "logging.inner_tol", "must be nonnegative".into());

        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(Violations(bad)))
        }
    }
}
