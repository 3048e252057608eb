//! JSON-facing run settings shared by the experiment drivers, the control loop
//! and the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::galerkin::ForceSpec;
use crate::solver::{
    ContinuationSchedule, InclusionOptions, NewtonOptions, ProblemFamily, SolverError,
};
use crate::superpotential::{JumpFunction, LawDefinition, RauchCertificate};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Parses a JSON file into `T`.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// A boundary law: a built-in name, a file holding a piecewise definition, or
/// an inline parametrised law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSpec {
    /// `"sign"`, `"zero"` or `"orifice"` (with `p_tilde = 2, a = 0, b = 1`).
    Name(String),
    Law(NamedLaw),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NamedLaw {
    Zero,
    Sign,
    Constant {
        value: f64,
    },
    Linear {
        slope: f64,
    },
    Orifice {
        p_tilde: f64,
        a: f64,
        b: f64,
    },
    Bump {
        center: f64,
        half_width: f64,
        height: f64,
    },
    /// Piecewise-polynomial definition, relative paths resolved against the config file.
    File {
        path: PathBuf,
    },
    Pieces {
        definition: LawDefinition,
    },
    /// Pointwise sum of laws.
    Sum {
        terms: Vec<NamedLaw>,
    },
}

impl ThetaSpec {
    pub fn resolve(&self, base_dir: &Path) -> Result<JumpFunction, ConfigError> {
        match self {
            ThetaSpec::Name(name) => match name.as_str() {
                "zero" => Ok(JumpFunction::zero()),
                "sign" => Ok(JumpFunction::sign()),
                "orifice" => NamedLaw::Orifice {
                    p_tilde: 2.0,
                    a: 0.0,
                    b: 1.0,
                }
                .resolve(base_dir),
                other => Err(ConfigError::Invalid(format!(
                    "unknown law name {other:?} (expected zero, sign or orifice)"
                ))),
            },
            ThetaSpec::Law(law) => law.resolve(base_dir),
        }
    }
}

impl NamedLaw {
    pub fn resolve(&self, base_dir: &Path) -> Result<JumpFunction, ConfigError> {
        let invalid =
            |e: crate::superpotential::SuperpotentialError| ConfigError::Invalid(e.to_string());
        let finite = |vals: &[f64]| {
            if vals.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(ConfigError::Invalid("law parameters must be finite".into()))
            }
        };
        match self {
            NamedLaw::Zero => Ok(JumpFunction::zero()),
            NamedLaw::Sign => Ok(JumpFunction::sign()),
            NamedLaw::Constant { value } => {
                finite(&[*value]).map(|_| JumpFunction::constant(*value))
            }
            NamedLaw::Linear { slope } => finite(&[*slope]).map(|_| JumpFunction::linear(*slope)),
            NamedLaw::Orifice { p_tilde, a, b } => {
                finite(&[*p_tilde, *a, *b])?;
                JumpFunction::orifice(*p_tilde, *a, *b).map_err(invalid)
            }
            NamedLaw::Bump {
                center,
                half_width,
                height,
            } => {
                finite(&[*center, *half_width, *height])?;
                JumpFunction::bump(*center, *half_width, *height).map_err(invalid)
            }
            NamedLaw::File { path } => {
                let full = base_dir.join(path);
                let def: LawDefinition = read_json(&full)?;
                JumpFunction::try_from(def).map_err(invalid)
            }
            NamedLaw::Pieces { definition } => {
                JumpFunction::try_from(definition.clone()).map_err(invalid)
            }
            NamedLaw::Sum { terms } => {
                let mut acc = JumpFunction::zero();
                for t in terms {
                    acc = acc.add(&t.resolve(base_dir)?);
                }
                Ok(acc)
            }
        }
    }
}

/// Law together with the threshold of its sign condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub theta: ThetaSpec,
    /// Threshold `t0`; searched over powers of two when absent.
    #[serde(default)]
    pub t0: Option<f64>,
}

impl LawConfig {
    pub fn resolve(&self, base_dir: &Path) -> Result<(JumpFunction, RauchCertificate), LawError> {
        let theta = self.theta.resolve(base_dir)?;
        let cert = match self.t0 {
            Some(t0) if t0 > 0.0 && t0.is_finite() => theta.check_rauch(t0)?,
            Some(t0) => {
                return Err(ConfigError::Invalid(format!("t0 must be positive, got {t0}")).into())
            }
            None => theta.find_rauch_threshold().ok_or_else(|| {
                theta
                    .check_rauch(1.0)
                    .expect_err("no threshold found, so t0 = 1 fails")
            })?,
        };
        Ok((theta, cert))
    }
}

#[derive(Debug, Error)]
pub enum LawError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Rauch(#[from] crate::superpotential::RauchViolation),
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iters() -> usize {
    100
}

/// Everything a continuation solve needs except the boundary law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSettings {
    pub viscosity: f64,
    pub n_max_energy: u32,
    pub epsilon_schedule: Vec<f64>,
    pub force: ForceSpec,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Extra seeded random starts for multi-start at the final step.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub inclusion: InclusionOptions,
}

impl SolveSettings {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.viscosity > 0.0 && self.viscosity.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "viscosity must be positive, got {}",
                self.viscosity
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(ConfigError::Invalid("max_iters must be at least 1".into()));
        }
        let inc = &self.inclusion;
        if !(inc.tol_u > 0.0
            && inc.tol_xi >= 0.0
            && inc.tol_u.is_finite()
            && inc.tol_xi.is_finite())
        {
            return Err(ConfigError::Invalid(
                "inclusion tolerances must be positive".into(),
            ));
        }
        self.force
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.schedule()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<ContinuationSchedule, ConfigError> {
        ContinuationSchedule::fixed_modes(&self.epsilon_schedule, self.n_max_energy)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions::new(self.tol, self.max_iters)
    }

    pub fn family(&self, theta: JumpFunction, t0: f64) -> Result<ProblemFamily, SolverError> {
        ProblemFamily::new(self.viscosity, theta, t0, self.force.clone())
    }

    pub fn with_force(&self, force: ForceSpec) -> Self {
        SolveSettings {
            force,
            ..self.clone()
        }
    }
}
