//! Run configuration: an optional JSON or TOML file, overridden by flags.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use persist_core::certify::{BasinConfig, CertifyConfig, ClosenessConfig, PositivityConfig};
use persist_core::sampling::SamplingConfig;
use persist_core::spectral::ContinuationConfig;
use persist_core::IntegratorConfig;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("missing required field `{field}` for command {command}")]
    Missing { field: &'static str, command: Command },
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Equilibrium,
    Continue,
    Simulate,
    Absorbing,
    Attractor,
    Certify,
    Closeness,
    Persistence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Equilibrium => "equilibrium",
            Command::Continue => "continue",
            Command::Simulate => "simulate",
            Command::Absorbing => "absorbing",
            Command::Attractor => "attractor",
            Command::Certify => "certify",
            Command::Closeness => "closeness",
            Command::Persistence => "persistence",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Builtin(String),
    Path(PathBuf),
}

impl ModelSource {
    pub fn parse(s: &str) -> Self {
        match s.strip_prefix("builtin:") {
            Some(name) => ModelSource::Builtin(name.to_string()),
            None => ModelSource::Path(PathBuf::from(s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsSpec {
    Value(f64),
    Range(f64),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifySection {
    pub eps_hat_resolution: f64,
    pub basin: BasinConfig,
    pub attractor_burn_in: f64,
    pub sweep_horizon: f64,
    pub sweep_tolerance: f64,
}

impl Default for CertifySection {
    fn default() -> Self {
        let d = CertifyConfig::default();
        Self {
            eps_hat_resolution: d.eps_hat_resolution,
            basin: d.basin,
            attractor_burn_in: d.attractor_burn_in,
            sweep_horizon: d.sweep_horizon,
            sweep_tolerance: d.sweep_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClosenessSection {
    pub time_grid_intervals: usize,
    pub tail_factor: f64,
}

impl Default for ClosenessSection {
    fn default() -> Self {
        let d = ClosenessConfig::default();
        Self { time_grid_intervals: d.time_grid_intervals, tail_factor: d.tail_factor }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PersistenceSection {
    pub floor_horizon: f64,
    pub floor: Option<f64>,
    pub extra_starts: Vec<Vec<f64>>,
}

impl Default for PersistenceSection {
    fn default() -> Self {
        let d = PositivityConfig::default();
        Self { floor_horizon: d.floor_horizon, floor: d.floor, extra_starts: d.extra_starts }
    }
}

/// Numerical settings shared by all commands.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub integrator: IntegratorConfig,
    pub sampling: SamplingConfig,
    pub continuation: ContinuationConfig,
    pub grid_nodes: usize,
    /// Horizon for entry-and-remain searches.
    pub horizon: f64,
    /// Burn-in for the attractor command.
    pub t_burn: f64,
    pub certify: CertifySection,
    pub closeness: ClosenessSection,
    pub persistence: PersistenceSection,
}

impl Settings {
    pub fn certify_config(&self) -> CertifyConfig {
        CertifyConfig {
            integrator: self.integrator.clone(),
            sampling: self.sampling.clone(),
            continuation: self.continuation.clone(),
            grid_nodes: self.grid_nodes,
            horizon: self.horizon,
            eps_hat_resolution: self.certify.eps_hat_resolution,
            basin: self.certify.basin.clone(),
            attractor_burn_in: self.certify.attractor_burn_in,
            sweep_horizon: self.certify.sweep_horizon,
            sweep_tolerance: self.certify.sweep_tolerance,
        }
    }

    pub fn closeness_config(&self) -> ClosenessConfig {
        ClosenessConfig {
            integrator: self.integrator.clone(),
            sampling: self.sampling.clone(),
            continuation: self.continuation.clone(),
            horizon: self.horizon,
            time_grid_intervals: self.closeness.time_grid_intervals,
            tail_factor: self.closeness.tail_factor,
        }
    }

    pub fn positivity_config(&self) -> PositivityConfig {
        PositivityConfig {
            integrator: self.integrator.clone(),
            sampling: self.sampling.clone(),
            continuation: self.continuation.clone(),
            grid_nodes: self.grid_nodes,
            floor_horizon: self.persistence.floor_horizon,
            floor: self.persistence.floor,
            extra_starts: self.persistence.extra_starts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelSource,
    pub eta: Option<f64>,
    pub eps: Option<EpsSpec>,
    pub output_dir: PathBuf,
    pub emit_plot_data: bool,
    /// Initial state for `simulate`; the working-box center when absent.
    pub x0: Option<Vec<f64>>,
    pub t_end: f64,
    pub settings: Settings,
}

pub const DEFAULT_OUTPUT_DIR: &str = "out";
pub const DEFAULT_T_END: f64 = 20.0;
pub const DEFAULT_T_BURN: f64 = 50.0;

/// Config document; every key optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<Command>,
    pub model: Option<String>,
    pub eta: Option<f64>,
    pub eps: Option<f64>,
    pub eps_range: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub emit_plot_data: Option<bool>,
    pub x0: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub grid_nodes: Option<usize>,
    pub horizon: Option<f64>,
    pub t_burn: Option<f64>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub continuation: ContinuationConfig,
    #[serde(default)]
    pub certify: CertifySection,
    #[serde(default)]
    pub closeness: ClosenessSection,
    #[serde(default)]
    pub persistence: PersistenceSection,
}

impl FileConfig {
    /// TOML for `.toml` files, JSON otherwise.
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let malformed = |message: String| ConfigError::Malformed { path: path.to_path_buf(), message };
        if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| malformed(e.to_string()))
        } else {
            serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))
        }
    }
}

/// Values given on the command line; each one overrides the file.
#[derive(Debug, Default, Clone)]
pub struct FlagValues {
    pub command: Option<Command>,
    pub model: Option<String>,
    pub eta: Option<f64>,
    pub eps: Option<f64>,
    pub eps_range: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub emit_plot_data: bool,
    pub x0: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub config: Option<PathBuf>,
}

fn positive(field: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::Invalid { field, message: format!("must be positive and finite, got {v}") })
    }
}

pub fn load_config(flags: &FlagValues) -> Result<RunConfig, ConfigError> {
    let file = match &flags.config {
        Some(p) => FileConfig::read(p)?,
        None => FileConfig::default(),
    };
    merge(file, flags)
}

pub fn merge(file: FileConfig, flags: &FlagValues) -> Result<RunConfig, ConfigError> {
    let command = flags.command.or(file.command).ok_or(ConfigError::Invalid {
        field: "command",
        message: "no command given on the command line or in the config".into(),
    })?;
    let model = flags
        .model
        .clone()
        .or(file.model)
        .map(|m| ModelSource::parse(&m))
        .ok_or(ConfigError::Missing { field: "model", command })?;
    if file.eps.is_some() && file.eps_range.is_some() {
        return Err(ConfigError::Invalid {
            field: "eps",
            message: "`eps` and `eps_range` are mutually exclusive".into(),
        });
    }
    let eps = match (flags.eps, flags.eps_range) {
        (Some(v), _) => Some(EpsSpec::Value(v)),
        (None, Some(r)) => Some(EpsSpec::Range(r)),
        (None, None) => file.eps.map(EpsSpec::Value).or(file.eps_range.map(EpsSpec::Range)),
    };
    match eps {
        Some(EpsSpec::Value(v)) if !v.is_finite() => {
            return Err(ConfigError::Invalid { field: "eps", message: format!("must be finite, got {v}") })
        }
        Some(EpsSpec::Range(r)) => {
            positive("eps_range", r)?;
        }
        _ => {}
    }
    let eta = flags.eta.or(file.eta).map(|v| positive("eta", v)).transpose()?;
    let t_end = positive("t_end", flags.t_end.or(file.t_end).unwrap_or(DEFAULT_T_END))?;
    let defaults = CertifyConfig::default();
    let settings = Settings {
        integrator: file.integrator,
        sampling: file.sampling,
        continuation: file.continuation,
        grid_nodes: file.grid_nodes.unwrap_or(defaults.grid_nodes),
        horizon: positive("horizon", file.horizon.unwrap_or(defaults.horizon))?,
        t_burn: positive("t_burn", file.t_burn.unwrap_or(DEFAULT_T_BURN))?,
        certify: file.certify,
        closeness: file.closeness,
        persistence: file.persistence,
    };
    let cfg = RunConfig {
        command,
        model,
        eta,
        eps,
        output_dir: flags.output_dir.clone().or(file.output_dir).unwrap_or_else(|| DEFAULT_OUTPUT_DIR.into()),
        emit_plot_data: flags.emit_plot_data || file.emit_plot_data.unwrap_or(false),
        x0: flags.x0.clone().or(file.x0),
        t_end,
        settings,
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    use Command::*;
    let command = cfg.command;
    if matches!(command, Certify | Closeness | Absorbing) && cfg.eta.is_none() {
        return Err(ConfigError::Missing { field: "eta", command });
    }
    if command == Closeness && cfg.eps.is_none() {
        return Err(ConfigError::Missing { field: "eps", command });
    }
    let wrong = |field: &'static str, message: &str| Err(ConfigError::Invalid { field, message: message.to_string() });
    match (command, cfg.eps) {
        (Equilibrium | Simulate | Absorbing | Attractor, Some(EpsSpec::Range(_))) => {
            wrong("eps_range", "this command takes a single --eps value")
        }
        (Continue | Persistence, Some(EpsSpec::Value(_))) => wrong("eps", "this command takes --eps-range"),
        (Certify, Some(_)) => wrong("eps", "certify derives its eps range from the model"),
        _ => Ok(()),
    }
}
