//! JSON experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// `n` draws with `Pr[x] ∝ x^exponent` on `1..=support`. Without a
    /// fixed `seed` every trial draws a fresh dataset.
    Synthetic {
        n: u64,
        #[serde(default = "default_support")]
        support: usize,
        #[serde(default = "default_exponent")]
        exponent: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// `key,count` rows.
    CountsCsv { path: PathBuf },
    /// `author,thread` rows, aggregated to unique authors per thread.
    ContributionsCsv { path: PathBuf },
}

fn default_support() -> usize {
    300
}

fn default_exponent() -> f64 {
    -0.75
}

impl DatasetSource {
    pub fn label(&self) -> String {
        match self {
            DatasetSource::Synthetic { n, .. } => format!("S{n}"),
            DatasetSource::CountsCsv { path } | DatasetSource::ContributionsCsv { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        }
    }
}

/// Budgets `base * ratio^i` for `i` in `first..=last`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub base: f64,
    pub ratio: f64,
    pub first: u32,
    pub last: u32,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            base: 0.001,
            ratio: std::f64::consts::SQRT_2,
            first: 0,
            last: 30,
        }
    }
}

impl Schedule {
    /// Ascending budgets.
    pub fn values(&self) -> Vec<f64> {
        (self.first..=self.last)
            .map(|i| self.base * self.ratio.powi(i as i32))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.base > 0.0 && self.base.is_finite()) {
            return Err(BenchError::Config("schedule base must be positive".into()));
        }
        if !(self.ratio > 1.0 && self.ratio.is_finite()) {
            return Err(BenchError::Config("schedule ratio must exceed 1".into()));
        }
        if self.first > self.last {
            return Err(BenchError::Config("schedule range is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TotalBudget {
    Pure { epsilon: f64 },
    Approx { epsilon: f64, delta: f64 },
}

impl TotalBudget {
    pub fn epsilon(&self) -> f64 {
        match *self {
            TotalBudget::Pure { epsilon } | TotalBudget::Approx { epsilon, .. } => epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Doubling,
    TunerLaplace,
    TunerGaussian,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Doubling => "doubling",
            Algorithm::TunerLaplace => "tuner_laplace",
            Algorithm::TunerGaussian => "tuner_gaussian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub schedule: Schedule,
    pub total_budget: TotalBudget,
    pub eps_prime: f64,
    pub trials: usize,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub seed: u64,
    /// Rényi order of the Gaussian tuner's filter.
    #[serde(default = "default_rdp_order")]
    pub rdp_order: f64,
    /// Number of consecutive schedule budgets offered to each Gaussian
    /// tuner run.
    #[serde(default = "default_window")]
    pub window: usize,
}

pub fn default_rdp_order() -> f64 {
    8.0
}

pub fn default_window() -> usize {
    4
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.trials == 0 {
            return Err(BenchError::Config("trials must be at least 1".into()));
        }
        if !(self.eps_prime > 0.0 && self.eps_prime.is_finite()) {
            return Err(BenchError::Config("eps_prime must be positive".into()));
        }
        let eps = self.total_budget.epsilon();
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(BenchError::Config(
                "total epsilon must be finite and nonnegative".into(),
            ));
        }
        match (self.algorithm, self.total_budget) {
            (Algorithm::TunerGaussian, TotalBudget::Approx { delta, .. }) => {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(BenchError::Config("delta must lie in (0, 1)".into()));
                }
                if self.window == 0 {
                    return Err(BenchError::Config("window must be at least 1".into()));
                }
                if !(self.rdp_order > 1.0 && self.rdp_order.is_finite()) {
                    return Err(BenchError::Config(
                        "rdp_order must be finite and above 1".into(),
                    ));
                }
            }
            (Algorithm::TunerGaussian, TotalBudget::Pure { .. }) => {
                return Err(BenchError::Config(
                    "tuner_gaussian needs an approx budget".into(),
                ));
            }
            (_, TotalBudget::Approx { .. }) => {
                return Err(BenchError::Config(format!(
                    "{} needs a pure budget",
                    self.algorithm.name()
                )));
            }
            _ => {}
        }
        if let DatasetSource::Synthetic { n, support, .. } = self.dataset {
            if n == 0 || support == 0 {
                return Err(BenchError::Config(
                    "synthetic n and support must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    One(ExperimentConfig),
    Many(Vec<ExperimentConfig>),
}

/// Reads one configuration or a list of them, validating each.
pub fn load_configs(path: &Path) -> Result<Vec<ExperimentConfig>> {
    let text = fs::read_to_string(path)?;
    parse_configs(&text)
}

pub fn parse_configs(text: &str) -> Result<Vec<ExperimentConfig>> {
    let configs = match serde_json::from_str(text)? {
        ConfigFile::One(c) => vec![c],
        ConfigFile::Many(cs) => cs,
    };
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}
