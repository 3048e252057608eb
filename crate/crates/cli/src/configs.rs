//! Config files of the subcommands. Every struct is echoed back into the run
//! manifest after defaults are filled in.

use std::path::{Path, PathBuf};

use nshvi::config::{read_json, LawConfig, LawError, SolveSettings, ThetaSpec};
use nshvi::control::OptimConfig;
use nshvi::superpotential::{JumpFunction, RauchCertificate};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Reads a config, returning it with the directory relative paths resolve against.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, PathBuf), CliError> {
    let cfg = read_json(path).map_err(|e| CliError::Config(e.to_string()))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, dir))
}

/// Resolves a law and certifies its sign condition. The returned threshold is
/// the configured one or the one found by the search.
pub fn resolve_law(
    theta: &ThetaSpec,
    t0: Option<f64>,
    dir: &Path,
) -> Result<(JumpFunction, RauchCertificate), CliError> {
    LawConfig {
        theta: theta.clone(),
        t0,
    }
    .resolve(dir)
    .map_err(|e| match e {
        LawError::Config(e) => CliError::Config(e.to_string()),
        LawError::Rauch(v) => CliError::Hypothesis(v.to_string()),
    })
}

pub fn check_settings(settings: &SolveSettings) -> Result<(), CliError> {
    settings
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn default_mu() -> f64 {
    0.1
}

fn default_points() -> usize {
    9
}

/// Grid of envelope samples printed by `check-theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSamples {
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Samples cover `[-half_range, half_range]`; defaults to twice the
    /// largest of `t0`, `1` and the breakpoint magnitudes.
    #[serde(default)]
    pub half_range: Option<f64>,
}

impl Default for EnvelopeSamples {
    fn default() -> Self {
        EnvelopeSamples {
            mu: default_mu(),
            points: default_points(),
            half_range: None,
        }
    }
}

/// Accepts any config carrying a law, so run configs can be checked directly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckConfig {
    pub theta: ThetaSpec,
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub envelope: EnvelopeSamples,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub theta: ThetaSpec,
    #[serde(default)]
    pub t0: Option<f64>,
    pub solve: SolveSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub theta: ThetaSpec,
    #[serde(default)]
    pub t0: Option<f64>,
    pub solve: SolveSettings,
    /// Strictly increasing mode cutoffs; defaults to `[solve.n_max_energy]`.
    #[serde(default)]
    pub cutoffs: Option<Vec<u32>>,
}

fn default_graph_points() -> usize {
    801
}

fn default_delta_scale() -> f64 {
    2.0
}

/// Grid and tolerance `delta_k = delta_scale / k` of the graph-inclusion check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphCheck {
    #[serde(default = "default_graph_points")]
    pub points: usize,
    /// Defaults to `4 * max(t0, 1)`.
    #[serde(default)]
    pub half_range: Option<f64>,
    #[serde(default = "default_delta_scale")]
    pub delta_scale: f64,
}

impl Default for GraphCheck {
    fn default() -> Self {
        GraphCheck {
            points: default_graph_points(),
            half_range: None,
            delta_scale: default_delta_scale(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// Laws `theta + perturbation / k` against `theta`.
    Theta {
        perturbation: ThetaSpec,
        indices: Vec<u32>,
        #[serde(default)]
        graph: GraphCheck,
    },
    /// Forces `solve.force + amplitude * mode(n, l)` against `solve.force`.
    Force {
        amplitude: f64,
        indices: Vec<u32>,
        #[serde(default)]
        l: u32,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependConfig {
    pub theta: ThetaSpec,
    #[serde(default)]
    pub t0: Option<f64>,
    pub solve: SolveSettings,
    pub experiment: Experiment,
}

/// Tracking target in solver coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    /// State of the control `g_star`, so the optimal value is known.
    InverseCrime {
        g_star: Vec<f64>,
    },
    Coefficients {
        values: Vec<f64>,
    },
    /// JSON array of coefficients, relative to the config file.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSettings {
    /// Number of control fields (leading solver modes).
    pub m: usize,
    /// Radius of the admissible ball; give this or `radius_factor`.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Radius as a multiple of the norm of `g_star` (inverse-crime targets only).
    #[serde(default)]
    pub radius_factor: Option<f64>,
    #[serde(default)]
    pub beta: f64,
    pub target: Target,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub theta: ThetaSpec,
    #[serde(default)]
    pub t0: Option<f64>,
    pub solve: SolveSettings,
    pub control: ControlSettings,
    pub optimizer: OptimConfig,
}
