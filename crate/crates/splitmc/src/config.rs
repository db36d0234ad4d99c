//! Run configuration: TOML-backed, fully echoed into every output.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Mat;
use crate::model::{ArrheniusRates, DenseGenerator, LatticeDims, SchemeKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub decomposition: DecompositionConfig,
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SystemConfig {
    /// Adsorption/desorption lattice with Arrhenius spin-flip rates.
    Lattice {
        /// "1d" ring or "2d" periodic square.
        dims: String,
        /// Side length.
        n: usize,
        c1: f64,
        c2: f64,
        beta: f64,
        j0: f64,
        h: f64,
    },
    /// Explicit generator matrix, row-major, rows summing to zero.
    Dense {
        rates: Vec<Vec<f64>>,
        /// Ordered state pairs kept by the first restriction L1; L2 is
        /// the complement.
        split_pairs: Vec<(usize, usize)>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecompositionConfig {
    /// Sublattices per axis.
    pub m: usize,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        DecompositionConfig { m: 1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Strang estimator denominator variant; the conservative default
    /// over-estimates the coefficient, the exact variant converges to
    /// it.
    #[serde(default = "default_true")]
    pub conservative: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// dt grid for sweeps/fits; defaults to the dyadic 2^-k, k=4..10.
    #[serde(default)]
    pub dt_grid: Option<Vec<f64>>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Observables for the UQ bounds, one vector per observable;
    /// defaults to coordinate indicators.
    #[serde(default)]
    pub observables: Option<Vec<Vec<f64>>>,
    /// Emit a per-event CSV (debugging; large).
    #[serde(default)]
    pub emit_events: bool,
}

fn default_dt() -> f64 {
    0.1
}
fn default_t_end() -> f64 {
    100.0
}
fn default_burn_in() -> f64 {
    10.0
}
fn default_tolerance() -> f64 {
    1e-3
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            dt: default_dt(),
            dt_grid: None,
            t_end: default_t_end(),
            burn_in: default_burn_in(),
            seed: 0,
            tolerance: default_tolerance(),
            observables: None,
            emit_events: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: RunConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match &self.system {
            SystemConfig::Lattice { dims, n, c1, c2, .. } => {
                if dims != "1d" && dims != "2d" {
                    return Err(ConfigError::Invalid(format!(
                        "dims must be \"1d\" or \"2d\", got {dims:?}"
                    )));
                }
                if *n == 0 {
                    return Err(ConfigError::Invalid("lattice side must be positive".into()));
                }
                if *c1 < 0.0 || *c2 < 0.0 {
                    return Err(ConfigError::Invalid("rate prefactors must be non-negative".into()));
                }
            }
            SystemConfig::Dense { rates, split_pairs } => {
                let n = rates.len();
                if n == 0 || rates.iter().any(|r| r.len() != n) {
                    return Err(ConfigError::Invalid("rates must be a square matrix".into()));
                }
                for &(i, j) in split_pairs {
                    if i >= n || j >= n || i == j {
                        return Err(ConfigError::Invalid(format!(
                            "split pair ({i},{j}) out of range for {n} states"
                        )));
                    }
                }
                // Row-sum / sign validation happens on construction.
                self.dense_generator()?;
            }
        }
        if !(self.run.dt > 0.0 && self.run.dt <= 1.0) {
            return Err(ConfigError::Invalid(format!("dt={} outside (0,1]", self.run.dt)));
        }
        if let Some(grid) = &self.run.dt_grid {
            if grid.iter().any(|&dt| !(dt > 0.0 && dt < 1.0)) {
                return Err(ConfigError::Invalid("dt_grid values must lie in (0,1)".into()));
            }
        }
        if self.run.t_end < self.run.burn_in || self.run.burn_in < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "need t_end >= burn_in >= 0, got t_end={}, burn_in={}",
                self.run.t_end, self.run.burn_in
            )));
        }
        Ok(())
    }

    pub fn lattice_dims(&self) -> Option<LatticeDims> {
        match &self.system {
            SystemConfig::Lattice { dims, n, .. } => Some(if dims == "1d" {
                LatticeDims::OneD(*n)
            } else {
                LatticeDims::TwoD(*n)
            }),
            SystemConfig::Dense { .. } => None,
        }
    }

    pub fn arrhenius(&self) -> Option<ArrheniusRates> {
        match &self.system {
            SystemConfig::Lattice { c1, c2, beta, j0, h, .. } => Some(ArrheniusRates {
                c1: *c1,
                c2: *c2,
                beta: *beta,
                j0: *j0,
                h: *h,
            }),
            SystemConfig::Dense { .. } => None,
        }
    }

    /// Full generator of a dense-system config.
    pub fn dense_generator(&self) -> Result<DenseGenerator, ConfigError> {
        match &self.system {
            SystemConfig::Dense { rates, .. } => {
                Ok(DenseGenerator::try_from_matrix(Mat::from_rows(rates))?)
            }
            SystemConfig::Lattice { .. } => {
                Err(ConfigError::Invalid("system is a lattice, not a dense matrix".into()))
            }
        }
    }

    /// Split-pair mask of a dense-system config.
    pub fn split_mask(&self) -> Option<BTreeSet<(usize, usize)>> {
        match &self.system {
            SystemConfig::Dense { split_pairs, .. } => {
                Some(split_pairs.iter().copied().collect())
            }
            SystemConfig::Lattice { .. } => None,
        }
    }

    /// dt grid to use for fits: configured grid, or dyadic 2^-k for
    /// k = 4..10 (Richardson extraction and slope fits are most stable
    /// on dyadic grids).
    pub fn grid(&self) -> Vec<f64> {
        match &self.run.dt_grid {
            Some(g) => {
                let mut g = g.clone();
                g.sort_by(|a, b| a.partial_cmp(b).unwrap());
                g
            }
            None => (4..=10).rev().map(|k| 2f64.powi(-k)).collect(),
        }
    }
}
