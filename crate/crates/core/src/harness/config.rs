use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_model::{validate_feasibility, CorrelationSpec};
use crate::regression::TeacherSource;

/// Only schema understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Sigma12,
    Lambda,
    NoiseLevel,
}

impl SweepVariable {
    pub fn label(self) -> &'static str {
        match self {
            SweepVariable::Sigma12 => "sigma12",
            SweepVariable::Lambda => "lambda",
            SweepVariable::NoiseLevel => "noise level",
        }
    }
}

fn default_n_train() -> usize {
    10_000
}
fn default_n_test() -> usize {
    5_000
}
fn default_lambda() -> f64 {
    0.5
}
fn default_teacher() -> TeacherSource {
    TeacherSource::PopulationOptimal
}
fn default_ksg_k() -> usize {
    3
}
fn default_mi_subsample() -> usize {
    5_000
}

/// JSON sweep description.
///
/// ```json
/// {
///   "schema_version": 1,
///   "spec_base": { "sigma12": 0.0, "sigma13": 0.9, "sigma23": 0.4, "p": 100 },
///   "sweep_variable": "sigma12",
///   "grid": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
///   "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
/// }
/// ```
///
/// Optional keys and defaults: `n_train` 10000, `n_test` 5000, `lambda` 0.5,
/// `teacher_source` `"population_optimal"` (or `"empirical_ls"`), `ksg_k` 3,
/// `mi_subsample` 5000, `master_seed` 0. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub spec_base: CorrelationSpec,
    pub sweep_variable: SweepVariable,
    pub grid: Vec<f64>,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// Distillation weight when λ is not the swept variable.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_teacher")]
    pub teacher_source: TeacherSource,
    #[serde(default = "default_ksg_k")]
    pub ksg_k: usize,
    #[serde(default = "default_mi_subsample")]
    pub mi_subsample: usize,
    #[serde(default)]
    pub master_seed: u64,
}

impl SweepConfig {
    /// The σ12 sweep with every default: grid 0..0.7 step 0.1, ten seeds.
    pub fn sigma12_default() -> Self {
        SweepConfig {
            schema_version: SCHEMA_VERSION,
            spec_base: CorrelationSpec { sigma12: 0.0, sigma13: 0.9, sigma23: 0.4, p: 100 },
            sweep_variable: SweepVariable::Sigma12,
            grid: (0..8).map(|i| i as f64 / 10.0).collect(),
            n_train: default_n_train(),
            n_test: default_n_test(),
            lambda: default_lambda(),
            seeds: (0..10).collect(),
            teacher_source: default_teacher(),
            ksg_k: default_ksg_k(),
            mi_subsample: default_mi_subsample(),
            master_seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The correlation spec used at grid point `value`.
    pub fn spec_at(&self, value: f64) -> CorrelationSpec {
        match self.sweep_variable {
            SweepVariable::Sigma12 => self.spec_base.with_sigma12(value),
            _ => self.spec_base,
        }
    }

    /// Structural checks, then feasibility of every grid point. Nothing is sampled.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("grid is empty".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("grid must be finite and strictly increasing".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds is empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("seeds contain duplicates".into()));
        }
        if self.n_train == 0 || self.n_test == 0 || self.spec_base.p == 0 {
            return Err(Error::Config("n_train, n_test and p must be positive".into()));
        }
        if self.n_train == self.spec_base.p {
            return Err(Error::Config("n_train = p is not covered by either student fit".into()));
        }
        if self.teacher_source == TeacherSource::Explicit {
            return Err(Error::Config("teacher_source must be population_optimal or empirical_ls".into()));
        }
        if self.teacher_source == TeacherSource::EmpiricalLs && self.n_train <= self.spec_base.p {
            return Err(Error::Config("empirical_ls teacher needs n_train > p".into()));
        }
        if self.ksg_k == 0 || self.mi_subsample <= self.ksg_k || self.n_test <= self.ksg_k {
            return Err(Error::Config("ksg_k must be positive and below mi_subsample and n_test".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda {} must be finite and non-negative", self.lambda)));
        }
        match self.sweep_variable {
            SweepVariable::Lambda if self.grid[0] < 0.0 => {
                return Err(Error::Config("lambda grid must be non-negative".into()));
            }
            SweepVariable::NoiseLevel if self.grid[0] < 0.0 || *self.grid.last().unwrap() > 1.0 => {
                return Err(Error::Config("noise grid must lie in [0, 1]".into()));
            }
            _ => {}
        }
        for &value in &self.grid {
            let spec = self.spec_at(value);
            spec.check()?;
            let report = validate_feasibility(&spec);
            if !report.feasible {
                return Err(Error::Infeasible {
                    sigma12: spec.sigma12,
                    sigma13: spec.sigma13,
                    sigma23: spec.sigma23,
                    v: report.v,
                });
            }
            if spec.sigma23 == 0.0 {
                return Err(Error::Config(
                    "sigma23 = 0 leaves the student without label signal; the MI criterion is undefined".into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "spec_base": {"sigma12": 0.0, "sigma13": 0.9, "sigma23": 0.4, "p": 100},
        "sweep_variable": "sigma12",
        "grid": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
        "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = SweepConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg, SweepConfig::sigma12_default());
        assert_eq!(SweepConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = MINIMAL.replace("\"seeds\"", "\"lamda\": 0.3, \"seeds\"");
        assert!(matches!(SweepConfig::from_json(&text), Err(Error::Config(_))));
        let nested = MINIMAL.replace("\"p\": 100", "\"p\": 100, \"q\": 1");
        assert!(matches!(SweepConfig::from_json(&nested), Err(Error::Config(_))));
    }

    #[test]
    fn infeasible_grid_point_is_reported() {
        let text = MINIMAL.replace("0.7]", "0.7, 0.99]");
        assert!(matches!(SweepConfig::from_json(&text), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn structural_checks() {
        let mut cfg = SweepConfig::sigma12_default();
        cfg.grid = vec![0.1, 0.1];
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::sigma12_default();
        cfg.schema_version = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::sigma12_default();
        cfg.sweep_variable = SweepVariable::NoiseLevel;
        cfg.grid = vec![0.5, 1.5];
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::sigma12_default();
        cfg.spec_base.sigma23 = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::sigma12_default();
        cfg.seeds = vec![1, 1];
        assert!(cfg.validate().is_err());
    }
}
