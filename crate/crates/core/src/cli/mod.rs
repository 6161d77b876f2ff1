//! Command-line front end: `simulate`, `fit`, `reproduce` and `verify`.
//!
//! Settings come from an optional TOML file (`--config`) overridden by
//! flags. The resolved [`RunConfig`] is written next to every output.

mod config;
mod reproduce;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::{Benchmark, Claim, Command, ModelChoice, RunConfig};
pub use reproduce::{cmd_reproduce, resolve, run_reproduce, write_outcome, ReproduceOutcome, SummaryRow};

use crate::distributions::{CovariateKind, Dataset};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::npl::{posterior_bootstrap, NplConfig};
use crate::simgen::{generate, train_test_split, Scenario, SimConfig};
use crate::verify::{
    check_concentration, check_consistency, check_robustness_bound, BoundReport, ConcentrationSetup,
    ConsistencySetup, FiniteJoint, RobustnessSetup,
};

/// Mixes `parts` into `base` (splitmix64 finalizer per part).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(p.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[derive(Debug, Parser)]
#[command(name = "tvd-npl", version, about = "Robust posterior bootstrap with TVD and KLD losses")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Posterior draws per fit.
    #[arg(long = "B", global = true)]
    pub draws: Option<usize>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Cmd>,
}

fn parse_loss(s: &str) -> std::result::Result<LossKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Draw a synthetic dataset and write train/test CSV files.
    Simulate {
        #[arg(long, value_enum)]
        scenario: Benchmark,
        #[arg(long)]
        k: Option<u64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
    },
    /// Draw posterior samples for a CSV dataset.
    Fit {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum)]
        model: Option<ModelChoice>,
        /// Name of the outcome column.
        #[arg(long)]
        outcome: Option<String>,
        /// Trials of the binomial model.
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        hidden: Option<usize>,
        /// Treat covariates as discrete levels.
        #[arg(long)]
        discrete: bool,
    },
    /// Run a benchmark grid under both losses and summarize it.
    Reproduce {
        #[arg(value_enum)]
        name: Benchmark,
        #[arg(long, value_delimiter = ',')]
        k: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long)]
        repeats: Option<usize>,
        /// 100 repeats with 1000 draws each unless overridden.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long, value_enum)]
        model: Option<ModelChoice>,
        #[arg(long)]
        hidden: Option<usize>,
    },
    /// Check the estimator's theoretical guarantees by simulation.
    Verify {
        #[arg(long, value_enum, value_delimiter = ',')]
        claim: Vec<Claim>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

fn default_scenario(b: Benchmark, k: Option<u64>, eps: Option<f64>) -> Scenario {
    use reproduce::*;
    match b {
        Benchmark::EpsPoisson => Scenario::EpsPoisson {
            lambda: POISSON_LAMBDA,
            eps: eps.unwrap_or(POISSON_EPS),
            k: k.unwrap_or(0),
        },
        Benchmark::ZeroBinomial => Scenario::ZeroInfBinomial {
            beta0: BINOMIAL_BETA.0,
            beta1: BINOMIAL_BETA.1,
            m: BINOMIAL_TRIALS,
            eps: eps.unwrap_or(0.0),
            levels: BINOMIAL_LEVELS,
        },
        Benchmark::ProbitSynthetic => {
            Scenario::NoisyProbit { beta: PROBIT_BETA.to_vec(), flip_eps: eps.unwrap_or(0.1) }
        }
    }
}

impl Cli {
    /// Config file (or defaults) with every given flag applied.
    pub fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        match self.command {
            Some(Cmd::Simulate { scenario, k, eps, n_train, n_test }) => {
                cfg.command = Command::Simulate;
                cfg.benchmark = Some(scenario);
                cfg.scenario = Some(default_scenario(scenario, k, eps));
                cfg.n_train = n_train.or(cfg.n_train).or(Some(400));
                cfg.n_test = n_test.or(cfg.n_test).or(Some(100));
            }
            Some(Cmd::Fit { input, model, outcome, trials, hidden, discrete }) => {
                cfg.command = Command::Fit;
                cfg.input = input.or(cfg.input);
                cfg.model = model.or(cfg.model);
                if let Some(o) = outcome {
                    cfg.outcome = o;
                }
                cfg.trials = trials.unwrap_or(cfg.trials);
                cfg.hidden = hidden.unwrap_or(cfg.hidden);
                if discrete {
                    cfg.covariates = CovariateKind::Discrete;
                }
            }
            Some(Cmd::Reproduce { name, k, eps, repeats, paper_scale, model, hidden }) => {
                cfg.command = Command::Reproduce;
                cfg.benchmark = Some(name);
                if paper_scale {
                    cfg.paper_scale = true;
                    cfg.repeats = 100;
                    cfg.draws = 1000;
                }
                if !k.is_empty() {
                    cfg.k_grid = k;
                }
                if !eps.is_empty() {
                    cfg.eps_grid = eps;
                }
                cfg.repeats = repeats.unwrap_or(cfg.repeats);
                cfg.model = model.or(cfg.model);
                cfg.hidden = hidden.unwrap_or(cfg.hidden);
            }
            Some(Cmd::Verify { claim, trials }) => {
                cfg.command = Command::Verify;
                if !claim.is_empty() {
                    cfg.claims = claim;
                }
                cfg.verify_trials = trials.or(cfg.verify_trials);
            }
            None if self.config.is_none() => {
                return Err(Error::Config("give a subcommand or --config".into()));
            }
            None => {}
        }
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.draws = self.draws.unwrap_or(cfg.draws);
        cfg.parallelism = self.parallelism.unwrap_or(cfg.parallelism);
        cfg.loss = self.loss.or(cfg.loss);
        cfg.out = self.out.unwrap_or(cfg.out);
        Ok(cfg)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let scenario = cfg.scenario.clone().expect("validated");
    let n_train = cfg.n_train.unwrap_or(400);
    let n_test = cfg.n_test.unwrap_or(0);
    let sim = SimConfig::new(scenario, n_train, n_test, cfg.seed);
    let data = generate(&sim)?;
    create_dir(&cfg.out)?;
    let mut resolved = cfg.clone();
    resolved.n_train = Some(n_train);
    resolved.n_test = Some(n_test);
    resolved.write_to(&cfg.out)?;
    if n_test == 0 {
        data.write_csv(create(&cfg.out.join("train.csv"))?)?;
    } else {
        let (train, test) = train_test_split(&data, n_train, derive_seed(cfg.seed, &[1]))?;
        train.write_csv(create(&cfg.out.join("train.csv"))?)?;
        test.write_csv(create(&cfg.out.join("test.csv"))?)?;
    }
    Ok(cfg.out.clone())
}

/// Writes `posterior.csv`: one line per draw in index order with the
/// parameters, the objective and the convergence flag.
pub fn cmd_fit(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let input = cfg.input.as_ref().expect("validated");
    let data = Dataset::read_csv(input, &cfg.outcome, cfg.covariates)?;
    let model = cfg.model_spec(data.dim())?;
    let mut resolved = cfg.clone();
    let loss = *resolved.loss.get_or_insert(LossKind::Tvd);
    let npl = NplConfig {
        draws: cfg.draws,
        master_seed: cfg.seed,
        parallelism: cfg.parallelism,
        ..Default::default()
    };
    let samples = posterior_bootstrap(&data, &model, loss, &npl)?;

    create_dir(&cfg.out)?;
    resolved.write_to(&cfg.out)?;
    let path = cfg.out.join("posterior.csv");
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    let header: Vec<String> = (0..model.param_dim()).map(|i| format!("theta_{i}")).collect();
    writeln!(w, "{},objective,converged", header.join(",")).map_err(io)?;
    for d in samples.all_draws() {
        let params: Vec<String> = d.params.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{},{:?},{}", params.join(","), d.objective, d.converged).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(path)
}

/// Runs the selected checks (all when none are selected).
pub fn run_verify(cfg: &RunConfig) -> Result<Vec<BoundReport>> {
    let claims = if cfg.claims.is_empty() { Claim::ALL.to_vec() } else { cfg.claims.clone() };
    let mut reports = Vec::new();
    for claim in claims {
        match claim {
            Claim::Robustness => {
                let point = FiniteJoint::new(2, 2, vec![0.0, 0.0, 1.0, 0.0])?;
                let spread = FiniteJoint::new(2, 2, vec![0.1, 0.4, 0.4, 0.1])?;
                for (ci, q) in [point, spread].into_iter().enumerate() {
                    let setup = RobustnessSetup::bernoulli_2x2(q);
                    for (ei, eps) in [0.0, 0.05, 0.15, 0.3].into_iter().enumerate() {
                        let seed = derive_seed(cfg.seed, &[0, ci as u64, ei as u64]);
                        reports.push(check_robustness_bound(&setup, eps, seed)?);
                    }
                }
            }
            Claim::Concentration => {
                let trials = cfg.verify_trials.unwrap_or(2000);
                let seed = derive_seed(cfg.seed, &[1]);
                reports.push(check_concentration(
                    &ConcentrationSetup::two_by_two(),
                    &[125, 500, 2000],
                    trials,
                    seed,
                )?);
            }
            Claim::Consistency => {
                let trials = cfg.verify_trials.unwrap_or(50);
                let setups = [
                    ConsistencySetup::contaminated_poisson(3.0, 0.15, 5),
                    ConsistencySetup::contaminated_bernoulli(0.3, 0.1),
                ];
                for (i, setup) in setups.iter().enumerate() {
                    let seed = derive_seed(cfg.seed, &[2, i as u64]);
                    reports.push(check_consistency(setup, &[100, 400, 1600], trials, seed)?);
                }
            }
        }
    }
    Ok(reports)
}

/// Writes `bounds.jsonl` and fails with a verification error if any check
/// fails.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Vec<BoundReport>> {
    let reports = run_verify(cfg)?;
    create_dir(&cfg.out)?;
    cfg.write_to(&cfg.out)?;
    BoundReport::write_jsonl(&reports, create(&cfg.out.join("bounds.jsonl"))?)?;
    for r in &reports {
        println!("{}", r.summary_line());
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.pass).map(|r| r.claim.clone()).collect();
    if failed.is_empty() {
        Ok(reports)
    } else {
        Err(Error::Verification(failed.join(", ")))
    }
}

pub fn execute(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.parallelism > 1 {
        // draw-level pools are built per fit; this sizes the verify trials
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.parallelism).build_global();
    }
    match cfg.command {
        Command::Simulate => cmd_simulate(cfg).map(|p| println!("wrote {}", p.display())),
        Command::Fit => cmd_fit(cfg).map(|p| println!("wrote {}", p.display())),
        Command::Reproduce => {
            let outcome = run_reproduce(cfg)?;
            write_outcome(&outcome, &cfg.out)?;
            for r in &outcome.summary {
                println!(
                    "{} cell={} loss={} param_error_q50={} pred_lik_q50={:.4}",
                    r.benchmark,
                    r.cell,
                    r.loss,
                    r.param_error_q50.map_or("-".to_string(), |v| format!("{v:.4}")),
                    r.pred_lik_q50
                );
            }
            Ok(())
        }
        Command::Verify => cmd_verify(cfg).map(|_| ()),
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.resolve().and_then(|cfg| execute(&cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_by_part() {
        let a = derive_seed(1, &[0, 1]);
        assert_ne!(a, derive_seed(1, &[1, 0]));
        assert_ne!(a, derive_seed(2, &[0, 1]));
        assert_eq!(a, derive_seed(1, &[0, 1]));
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from(["tvd-npl", "--B", "9", "--loss", "kld", "reproduce", "eps-poisson", "--k", "0,5"])
            .unwrap();
        let cfg = cli.resolve().unwrap();
        assert_eq!(cfg.draws, 9);
        assert_eq!(cfg.loss, Some(LossKind::Kld));
        assert_eq!(cfg.k_grid, vec![0, 5]);
        assert_eq!(cfg.benchmark, Some(Benchmark::EpsPoisson));
    }

    #[test]
    fn paper_scale_then_explicit_override() {
        let cli = Cli::try_parse_from(["tvd-npl", "reproduce", "zero-binomial", "--paper-scale", "--repeats", "3"])
            .unwrap();
        let cfg = cli.resolve().unwrap();
        assert_eq!((cfg.repeats, cfg.draws), (3, 1000));
    }

    #[test]
    fn bad_loss_is_usage_error() {
        assert_eq!(run(["tvd-npl", "--loss", "hellinger", "verify"]), 2);
    }
}
