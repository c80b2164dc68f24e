//! Pipeline configuration, read from JSON. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collision::{Tolerances, DEFAULT_EPS_D, DEFAULT_EPS_INT};
use crate::inversion::{DEFAULT_EPS_JOIN, DEFAULT_K_INTERVAL};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanConfig {
    pub n_u: usize,
    pub n_theta: usize,
    /// Add the reversed exit vector of every fan geodesic.
    #[serde(default = "yes")]
    pub augment_exits: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub h: f64,
    #[serde(rename = "L_max")]
    pub l_max: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { h: 1e-3, l_max: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default = "default_eps_int")]
    pub eps_int: f64,
    #[serde(rename = "eps_D", default = "default_eps_d")]
    pub eps_d: f64,
    #[serde(default = "default_k_interval")]
    pub k_interval: usize,
    #[serde(default = "default_eps_join")]
    pub eps_join: f64,
}

fn default_eps_int() -> f64 {
    DEFAULT_EPS_INT
}
fn default_eps_d() -> f64 {
    DEFAULT_EPS_D
}
fn default_k_interval() -> usize {
    DEFAULT_K_INTERVAL
}
fn default_eps_join() -> f64 {
    DEFAULT_EPS_JOIN
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            eps_int: DEFAULT_EPS_INT,
            eps_d: DEFAULT_EPS_D,
            k_interval: DEFAULT_K_INTERVAL,
            eps_join: DEFAULT_EPS_JOIN,
        }
    }
}

impl ToleranceConfig {
    pub fn collision(&self) -> Tolerances {
        Tolerances {
            eps_int: self.eps_int,
            eps_d: self.eps_d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    /// Repeat the confirmation stage of relation recovery to a fixpoint.
    #[serde(default = "yes")]
    pub iterate: bool,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self { iterate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollarConfig {
    /// Requested collar radius; checked against the numerical estimate.
    #[serde(rename = "r_C", default)]
    pub r_c: Option<f64>,
    #[serde(default = "default_collar_samples")]
    pub n_u: usize,
    #[serde(default = "default_collar_samples")]
    pub n_t: usize,
}

fn default_collar_samples() -> usize {
    64
}

impl Default for CollarConfig {
    fn default() -> Self {
        Self {
            r_c: None,
            n_u: 64,
            n_t: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryConfig {
    /// Number of node pairs in the distance table.
    #[serde(default = "default_pairs")]
    pub n_pairs: usize,
    /// Fast-marching grid for scenarios without a closed-form distance.
    #[serde(default = "default_fmm_grid")]
    pub fmm_grid: usize,
}

fn default_pairs() -> usize {
    25
}
fn default_fmm_grid() -> usize {
    super::oracle::FMM_GRID
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            n_pairs: 25,
            fmm_grid: super::oracle::FMM_GRID,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Write the sampled geodesics to `traces.csv`.
    #[serde(default = "yes")]
    pub traces: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { traces: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub fan: FanConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub inversion: InversionConfig,
    #[serde(default)]
    pub collar: CollarConfig,
    #[serde(default)]
    pub queries: QueryConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Config {
    /// A configuration with default settings for the given scenario and fan.
    pub fn new(scenario: &str, n_u: usize, n_theta: usize) -> Self {
        Self {
            scenario: scenario.to_string(),
            params: BTreeMap::new(),
            fan: FanConfig {
                n_u,
                n_theta,
                augment_exits: true,
            },
            integrator: IntegratorConfig::default(),
            tolerances: ToleranceConfig::default(),
            inversion: InversionConfig::default(),
            collar: CollarConfig::default(),
            queries: QueryConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Config = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.fan.n_u < 8 || self.fan.n_theta < 4 {
            return bad(format!(
                "fan {}x{} is below the minimum 8x4",
                self.fan.n_u, self.fan.n_theta
            ));
        }
        if !(self.integrator.h > 0.0 && self.integrator.h <= 1e-2) {
            return bad(format!("step h = {} outside (0, 1e-2]", self.integrator.h));
        }
        if !(self.integrator.l_max > 0.0 && self.integrator.l_max.is_finite()) {
            return bad(format!("L_max = {} must be positive", self.integrator.l_max));
        }
        let t = &self.tolerances;
        for (name, v) in [("eps_int", t.eps_int), ("eps_D", t.eps_d), ("eps_join", t.eps_join)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        if t.k_interval < 2 {
            return bad(format!("k_interval = {} must be at least 2", t.k_interval));
        }
        if let Some(r) = self.collar.r_c {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("r_C = {r} must be positive"));
            }
        }
        if self.collar.n_u < 16 || self.collar.n_t < 16 {
            return bad("collar sampling needs at least 16x16 samples".to_string());
        }
        if self.queries.fmm_grid < 16 {
            return bad(format!("fmm_grid = {} is below 16", self.queries.fmm_grid));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = Config::from_json(
            r#"{"scenario": "sphere_cap", "params": {"R": 2.5},
                "fan": {"n_u": 64, "n_theta": 16},
                "integrator": {"h": 1e-3, "L_max": 20.0},
                "tolerances": {"eps_int": 1e-4, "eps_D": 1e-4}}"#,
        )
        .unwrap();
        assert_eq!(c.params["R"], 2.5);
        assert!(c.fan.augment_exits);
        assert_eq!(c.tolerances.k_interval, 50);
        assert_eq!(c.tolerances.eps_join, 1e-7);
        assert_eq!(c.queries.n_pairs, 25);
        assert!(c.inversion.iterate);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::from_json(r#"{"scenario": "flat_disk", "fan": {"n_u": 8, "n_theta": 4}, "extra": 1}"#)
            .unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        let err = Config::from_json(r#"{"scenario": "flat_disk", "fan": {"n_u": 8, "n_theta": 4, "m": 1}}"#)
            .unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            r#"{"scenario": "flat_disk", "fan": {"n_u": 4, "n_theta": 4}}"#,
            r#"{"scenario": "flat_disk", "fan": {"n_u": 8, "n_theta": 4}, "integrator": {"h": 0.1, "L_max": 1}}"#,
            r#"{"scenario": "flat_disk", "fan": {"n_u": 8, "n_theta": 4}, "tolerances": {"eps_int": -1}}"#,
            r#"{"scenario": "flat_disk", "fan": {"n_u": 8, "n_theta": 4}, "collar": {"r_C": 0}}"#,
        ] {
            assert!(matches!(Config::from_json(text), Err(ConfigError::Invalid(_))), "{text}");
        }
    }

    #[test]
    fn roundtrip_through_json() {
        let c = Config::new("sphere_cap", 16, 4).with_param("R", 1.0);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(Config::from_json(&text).unwrap(), c);
    }
}
