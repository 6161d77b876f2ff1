use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::{CovariateKind, ModelSpec};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::simgen::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Fit,
    Reproduce,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    EpsPoisson,
    ZeroBinomial,
    ProbitSynthetic,
}

impl Benchmark {
    pub fn as_str(self) -> &'static str {
        match self {
            Benchmark::EpsPoisson => "eps-poisson",
            Benchmark::ZeroBinomial => "zero-binomial",
            Benchmark::ProbitSynthetic => "probit-synthetic",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Poisson,
    Binomial,
    Probit,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Claim {
    Robustness,
    Concentration,
    Consistency,
}

impl Claim {
    pub const ALL: [Claim; 3] = [Claim::Robustness, Claim::Concentration, Claim::Consistency];
}

/// Fully resolved settings of one run. Every command writes this back to
/// `run_config.toml` in its output directory; feeding that file to
/// `--config` repeats the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    /// Posterior draws per fit (`--B`).
    #[serde(rename = "B")]
    pub draws: usize,
    pub parallelism: usize,
    /// `None` runs both losses where that makes sense.
    pub loss: Option<LossKind>,
    pub out: PathBuf,

    pub benchmark: Option<Benchmark>,
    pub scenario: Option<Scenario>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub repeats: usize,
    pub k_grid: Vec<u64>,
    pub eps_grid: Vec<f64>,
    pub paper_scale: bool,

    pub input: Option<PathBuf>,
    pub outcome: String,
    pub covariates: CovariateKind,
    pub model: Option<ModelChoice>,
    /// Trials `m` of the binomial model.
    pub trials: u64,
    pub hidden: usize,

    pub claims: Vec<Claim>,
    /// Monte Carlo trials of the concentration and consistency checks.
    pub verify_trials: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Verify,
            seed: 0,
            draws: 200,
            parallelism: 1,
            loss: None,
            out: PathBuf::from("out"),
            benchmark: None,
            scenario: None,
            n_train: None,
            n_test: None,
            repeats: 20,
            k_grid: Vec::new(),
            eps_grid: Vec::new(),
            paper_scale: false,
            input: None,
            outcome: "y".into(),
            covariates: CovariateKind::Continuous,
            model: None,
            trials: 1,
            hidden: 8,
            claims: Vec::new(),
            verify_trials: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let path = dir.join("run_config.toml");
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))
    }

    pub fn losses(&self) -> Vec<LossKind> {
        match self.loss {
            Some(l) => vec![l],
            None => LossKind::ALL.to_vec(),
        }
    }

    /// Model for `dim` covariates, defaulting by benchmark when unset.
    pub fn model_spec(&self, dim: usize) -> Result<ModelSpec> {
        let choice = self.model.ok_or_else(|| Error::Config("no model selected".into()))?;
        let spec = match choice {
            ModelChoice::Poisson => ModelSpec::poisson(dim),
            ModelChoice::Binomial => ModelSpec::binomial(self.trials, dim),
            ModelChoice::Probit => ModelSpec::probit(dim),
            ModelChoice::Mlp => ModelSpec::mlp(self.hidden, dim),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::Config("B must be at least 1".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        match self.command {
            Command::Simulate if self.scenario.is_none() => {
                Err(Error::Config("simulate needs a scenario".into()))
            }
            Command::Fit if self.input.is_none() => Err(Error::Config("fit needs an input file".into())),
            Command::Fit if self.model.is_none() => Err(Error::Config("fit needs a model".into())),
            Command::Reproduce if self.benchmark.is_none() => {
                Err(Error::Config("reproduce needs a benchmark name".into()))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(Command::Simulate),
            "fit" => Ok(Command::Fit),
            "reproduce" => Ok(Command::Reproduce),
            "verify" => Ok(Command::Verify),
            _ => Err(Error::Config(format!("unknown command '{s}'"))),
        }
    }
}
