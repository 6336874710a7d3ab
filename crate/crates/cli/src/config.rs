//! Experiment configuration (JSON).
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "method": "altmin",
//!   "system": { "A": [[0.5]], "C": [[1.0]], "x": [1.0], "T": 3, "noise": 0.0 },
//!   "data": { "observations": "obs.csv", "sidecar": "obs.json" },
//!   "truth": [[0.5]],
//!   "params": { "gamma": 10.0, "mu": 10.0, "rho": 0.0, "grad_tol": 1e-9 },
//!   "sweep": { "gamma": [1.0, 10.0, 100.0] },
//!   "seed": 7
//! }
//! ```
//!
//! Matrices are nested rows; a bare number stands for a 1x1 matrix (or a
//! length-1 vector). Relative paths resolve against the config file's
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sysid_core::linalg;
use sysid_core::partial_obs::StepRule;
use sysid_core::{Matrix, Vector};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Simulate,
    Ls,
    Ridge,
    Dual,
    Gd,
    Neumann,
    Lift,
    Pgd,
    Altmin,
    Dualstep,
    Realize,
    Silverman,
    Asymptotics,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Simulate => "simulate",
            Method::Ls => "ls",
            Method::Ridge => "ridge",
            Method::Dual => "dual",
            Method::Gd => "gd",
            Method::Neumann => "neumann",
            Method::Lift => "lift",
            Method::Pgd => "pgd",
            Method::Altmin => "altmin",
            Method::Dualstep => "dualstep",
            Method::Realize => "realize",
            Method::Silverman => "silverman",
            Method::Asymptotics => "asymptotics",
        }
    }

    /// Methods that work on a fully observed trajectory.
    pub fn full_observation(self) -> bool {
        matches!(self, Method::Ls | Method::Ridge | Method::Dual | Method::Gd | Method::Neumann)
    }

    pub fn partial_observation(self) -> bool {
        matches!(self, Method::Lift | Method::Pgd | Method::Altmin | Method::Dualstep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn to_matrix(&self, name: &str) -> Result<Matrix> {
        match self {
            MatrixSpec::Scalar(v) => Ok(Matrix::from_element(1, 1, *v)),
            MatrixSpec::Rows(rows) => {
                linalg::from_rows(rows).with_context(|| format!("field `{name}`: rows must be non-empty and of equal length"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Scalar(f64),
    Entries(Vec<f64>),
}

impl VectorSpec {
    pub fn to_vector(&self) -> Vector {
        match self {
            VectorSpec::Scalar(v) => Vector::from_element(1, *v),
            VectorSpec::Entries(v) => Vector::from_vec(v.clone()),
        }
    }
}

/// Ground-truth system used for synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(rename = "A")]
    pub a: MatrixSpec,
    /// Input matrix, only used to build an impulse response.
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<MatrixSpec>,
    /// Observation matrix; identity when absent.
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<MatrixSpec>,
    pub x: VectorSpec,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Half-width of the uniform perturbation added to states `x_2..x_T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<PathBuf>,
    /// Defaults to the observation CSV path with a `.json` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impulse_response: Option<PathBuf>,
}

fn default_gamma() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Observation weight; equal to `gamma` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default)]
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    /// Fixed step for `gd`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_rule: Option<StepRule>,
    /// Starting matrix for `gd`, `pgd`, `altmin`; the current iterate for `dualstep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<MatrixSpec>,
    /// Truncation order for `neumann`, realization order for `realize`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Number of starts for `pgd`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    /// Largest Hankel depth for `silverman` / `realize`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            mu: None,
            rho: 0.0,
            grad_tol: None,
            max_iters: None,
            step: None,
            step_rule: None,
            init: None,
            order: None,
            starts: None,
            depth: None,
            rank_tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub gamma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<MatrixSpec>,
    #[serde(default)]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A parsed config together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let config = parse(&text).with_context(|| format!("config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn sidecar_path(&self) -> Option<PathBuf> {
        let data = self.config.data.as_ref()?;
        match (&data.sidecar, &data.observations) {
            (Some(s), _) => Some(self.resolve(s)),
            (None, Some(o)) => Some(self.resolve(&o.with_extension("json"))),
            _ => None,
        }
    }

    /// Fails when a referenced input file does not exist.
    pub fn check_paths(&self) -> Result<()> {
        let Some(data) = &self.config.data else {
            return Ok(());
        };
        let mut paths: Vec<PathBuf> = [&data.trajectory, &data.observations, &data.impulse_response]
            .into_iter()
            .flatten()
            .map(|p| self.resolve(p))
            .collect();
        if data.observations.is_some() {
            paths.extend(self.sidecar_path());
        }
        for p in paths {
            if !p.is_file() {
                bail!("input file {} does not exist", p.display());
            }
        }
        Ok(())
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = serde_json::from_str(text)?;
    if config.schema_version != SCHEMA_VERSION {
        bail!(
            "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
            config.schema_version
        );
    }
    Ok(config)
}
