use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::filter::{FilterConfig, FilterMode};
use crate::model::{zoo, ModelError, ModelSpec};
use crate::oracles::grid_zakai::GridConfig;
use crate::oracles::kalman::LinearModel;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    GirsanovCheck,
    FilterRun,
    ZakaiResidual,
    FkkResidual,
    KalmanCompare,
    GridCompare,
    ProjectionTest,
    AssumptionCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        Self::Simulate,
        Self::GirsanovCheck,
        Self::FilterRun,
        Self::ZakaiResidual,
        Self::FkkResidual,
        Self::KalmanCompare,
        Self::GridCompare,
        Self::ProjectionTest,
        Self::AssumptionCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::GirsanovCheck => "girsanov_check",
            Self::FilterRun => "filter_run",
            Self::ZakaiResidual => "zakai_residual",
            Self::FkkResidual => "fkk_residual",
            Self::KalmanCompare => "kalman_compare",
            Self::GridCompare => "grid_compare",
            Self::ProjectionTest => "projection_test",
            Self::AssumptionCheck => "assumption_check",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Self::Simulate => "simulate paths; check the observation decomposition round trip and jump detection",
            Self::GirsanovCheck => "Monte-Carlo mean of the likelihood process at the horizon against 1",
            Self::FilterRun => "run the particle filter and stream per-node summaries",
            Self::ZakaiResidual => "residual of the unnormalized filtering equation along a zakai-mode run",
            Self::FkkResidual => "residual of the normalized filtering equation along a run",
            Self::KalmanCompare => "particle filter against the Kalman-Bucy filter on a linear-Gaussian model",
            Self::GridCompare => "particle filter against the 1-D grid solver on a jump model",
            Self::ProjectionTest => "conditional-expectation tests of stochastic integrals of simple processes",
            Self::AssumptionCheck => "sampled check of the growth and boundedness conditions",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionChoice {
    #[default]
    Oracle,
    Detect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub horizon: f64,
    pub n_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
    #[serde(default = "one")]
    pub n_replicas: usize,
}

fn one() -> usize {
    1
}

/// Calibrated constant `C` in the residual bound `C (Δt + 1/√M) · scale`.
pub const DEFAULT_RESIDUAL_CONSTANT: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    pub precision: Precision,
    /// Paths for `girsanov_check`.
    pub n_paths: usize,
    pub jump_adapted: bool,
    pub decomposition: DecompositionChoice,
    /// Write every node's particles and log-weights.
    pub dump_particles: bool,
    pub residual_constant: f64,
    /// Also run with 4× particles and half the step and require a smaller residual.
    pub refine: bool,
    /// Draws per projection fixture.
    pub n_mc: usize,
    pub mesh: GridConfig,
    pub assumption_samples: usize,
    pub assumption_radius: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            precision: Precision::F64,
            n_paths: 10_000,
            jump_adapted: false,
            decomposition: DecompositionChoice::Oracle,
            dump_particles: false,
            residual_constant: DEFAULT_RESIDUAL_CONSTANT,
            refine: false,
            n_mc: 100_000,
            mesh: GridConfig { x_min: -4.0, x_max: 6.0, n_cells: 400, substeps: 1 },
            assumption_samples: 10_000,
            assumption_radius: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelConfig,
    pub grid: GridSpec,
    #[serde(default)]
    pub filter: FilterConfig,
    pub seeds: Seeds,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub options: Options,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{} {}", self.path, self.message)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config:")?;
        for issue in &self.0 {
            write!(f, "\n  {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ConfigErrors {
    pub fn single(path: &str, message: impl Into<String>) -> Self {
        Self(vec![ConfigIssue { path: path.into(), message: message.into() }])
    }

    pub fn paths(&self) -> Vec<&str> {
        self.0.iter().map(|i| i.path.as_str()).collect()
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() || prefix == "." {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn between<'a>(s: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = s.find(open)? + open.len();
    let end = s[start..].find(close)? + start;
    Some(&s[start..end])
}

/// Turns a serde message at `path` into an issue that names the offending key.
fn issue_from_serde(path: &str, message: &str) -> ConfigIssue {
    if let Some(field) = message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
        return ConfigIssue { path: join(path, field), message: "required".into() };
    }
    if message.starts_with("unknown field `") {
        let field = between(message, "`", "`").unwrap_or("?");
        let expected = message.split_once(", expected ").map(|(_, e)| e).unwrap_or("");
        let hint = if expected.is_empty() { String::new() } else { format!(" (expected {expected})") };
        let path = if path == field || path.ends_with(&format!(".{field}")) { path.to_string() } else { join(path, field) };
        return ConfigIssue { path, message: format!("is not a recognized key{hint}") };
    }
    ConfigIssue { path: path.to_string(), message: message.trim().to_string() }
}

impl ExperimentConfig {
    /// Parses and fully validates a TOML config.
    pub fn from_toml(raw: &str) -> Result<Self, ConfigErrors> {
        let value: toml::Value = toml::from_str::<toml::Table>(raw)
            .map(toml::Value::Table)
            .map_err(|e| ConfigErrors::single("", format!("syntax error: {}", e.message())))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            ConfigErrors(vec![issue_from_serde(&path, &e.inner().to_string())])
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every default made explicit, in a stable key order.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_model<S: Scalar>(&self) -> Result<ModelSpec<S>, ModelError> {
        let mut spec = zoo::build::<S>(&self.model.name, &self.model.params)?;
        spec.horizon = S::lit(self.grid.horizon);
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut issues = Vec::new();
        let mut push = |path: &str, message: String| issues.push(ConfigIssue { path: path.into(), message });

        if self.model.name.trim().is_empty() {
            push("model.name", "required".into());
        } else {
            match self.build_model::<f64>() {
                Err(ModelError::UnknownModel(name)) => push(
                    "model.name",
                    format!("'{name}' is not in the model zoo (one of {})", zoo::ZOO.iter().map(|e| e.name).collect::<Vec<_>>().join(", ")),
                ),
                Err(ModelError::InvalidParameter { param, reason, .. }) => push(&format!("model.params.{param}"), reason),
                Err(e) => push("model", e.to_string()),
                Ok(spec) => self.check_model_fits(&spec, &mut push),
            }
        }
        if !(self.grid.horizon > 0.0 && self.grid.horizon.is_finite()) {
            push("grid.horizon", format!("must be positive and finite, got {}", self.grid.horizon));
        }
        if self.grid.n_steps == 0 {
            push("grid.n_steps", "must be at least 1".into());
        }
        if self.filter.n_particles < 2 {
            push("filter.n_particles", format!("must be at least 2, got {}", self.filter.n_particles));
        }
        if !(self.filter.resample_threshold > 0.0 && self.filter.resample_threshold <= 1.0) {
            push("filter.resample_threshold", format!("must lie in (0, 1], got {}", self.filter.resample_threshold));
        }
        if self.filter.mode == FilterMode::Zakai && self.filter.resampling != crate::filter::Resampling::None {
            push("filter.resampling", "must be \"none\" in zakai mode".into());
        }
        if self.seeds.n_replicas == 0 {
            push("seeds.n_replicas", "must be at least 1".into());
        }
        let o = &self.options;
        if o.n_paths < 2 {
            push("options.n_paths", format!("must be at least 2, got {}", o.n_paths));
        }
        if o.n_mc < 100 {
            push("options.n_mc", format!("must be at least 100, got {}", o.n_mc));
        }
        if !(o.residual_constant > 0.0 && o.residual_constant.is_finite()) {
            push("options.residual_constant", format!("must be positive, got {}", o.residual_constant));
        }
        if !(o.mesh.x_min.is_finite() && o.mesh.x_max.is_finite() && o.mesh.x_max > o.mesh.x_min) {
            push("options.mesh", format!("needs x_min < x_max, got [{}, {}]", o.mesh.x_min, o.mesh.x_max));
        }
        if o.mesh.n_cells < 3 {
            push("options.mesh.n_cells", "must be at least 3".into());
        }
        if o.mesh.substeps == 0 {
            push("options.mesh.substeps", "must be at least 1".into());
        }
        if o.assumption_samples == 0 {
            push("options.assumption_samples", "must be at least 1".into());
        }
        if !(o.assumption_radius > 0.0 && o.assumption_radius.is_finite()) {
            push("options.assumption_radius", "must be positive".into());
        }
        if self.experiment == ExperimentKind::ZakaiResidual && self.filter.mode != FilterMode::Zakai {
            push("filter.mode", "must be \"zakai\" for zakai_residual".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            push("output_dir", "must not be empty".into());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(issues))
        }
    }

    fn check_model_fits(&self, spec: &ModelSpec<f64>, push: &mut impl FnMut(&str, String)) {
        match self.experiment {
            ExperimentKind::KalmanCompare => {
                if let Err(e) = LinearModel::from_spec(spec) {
                    push("model.name", format!("kalman_compare needs a linear-Gaussian model: {e}"));
                }
            }
            ExperimentKind::GridCompare if (spec.dim_x != 1 || spec.dim_y != 1) => {
                push("model.name", "grid_compare needs a one-dimensional model".into());
            }
            _ => {}
        }
    }
}
