use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Benchmark, ModelChoice, RunConfig};
use super::derive_seed;
use crate::distributions::{Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::metrics::{quantile_summary, EvalRecord, EvalReport, Quartiles};
use crate::npl::{posterior_bootstrap, NplConfig};
use crate::simgen::{generate, train_test_split, Scenario, SimConfig};

pub const POISSON_LAMBDA: f64 = 3.0;
pub const POISSON_EPS: f64 = 0.15;
pub const BINOMIAL_BETA: (f64, f64) = (0.8, 0.25);
pub const BINOMIAL_TRIALS: u64 = 8;
pub const BINOMIAL_LEVELS: usize = 4;
pub const PROBIT_BETA: [f64; 3] = [0.5, 2.0, -1.0];
pub const PROBIT_N: usize = 500;

/// Fills benchmark-specific defaults left unset in `cfg`.
pub fn resolve(cfg: &RunConfig) -> Result<RunConfig> {
    let mut cfg = cfg.clone();
    let bench = cfg
        .benchmark
        .ok_or_else(|| Error::Config("reproduce needs a benchmark name".into()))?;
    match bench {
        Benchmark::EpsPoisson => {
            if cfg.k_grid.is_empty() {
                cfg.k_grid = vec![0, 5, 10, 15, 20];
            }
            cfg.n_train.get_or_insert(400);
            cfg.n_test.get_or_insert(100);
            cfg.model.get_or_insert(ModelChoice::Poisson);
        }
        Benchmark::ZeroBinomial => {
            if cfg.eps_grid.is_empty() {
                cfg.eps_grid = vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25];
            }
            cfg.n_train.get_or_insert(800);
            cfg.n_test.get_or_insert(200);
            cfg.model.get_or_insert(ModelChoice::Binomial);
            cfg.trials = BINOMIAL_TRIALS;
        }
        Benchmark::ProbitSynthetic => {
            if cfg.eps_grid.is_empty() {
                cfg.eps_grid = vec![0.1];
            }
            cfg.n_train.get_or_insert(PROBIT_N * 9 / 10);
            cfg.n_test.get_or_insert(PROBIT_N - PROBIT_N * 9 / 10);
            cfg.model.get_or_insert(ModelChoice::Probit);
        }
    }
    Ok(cfg)
}

/// One row of `summary.csv`: a grid cell under one loss, aggregated over
/// repeats. Parameter errors are summarized across repeats; absolute errors
/// and predictive likelihoods are pooled over all test rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub benchmark: String,
    pub cell: f64,
    pub loss: LossKind,
    pub model: String,
    pub repeats: usize,
    pub draws: usize,
    pub excluded: usize,
    pub param_error_q25: Option<f64>,
    pub param_error_q50: Option<f64>,
    pub param_error_q75: Option<f64>,
    pub abs_error_q25: f64,
    pub abs_error_q50: f64,
    pub abs_error_q75: f64,
    pub pred_lik_q25: f64,
    pub pred_lik_q50: f64,
    pub pred_lik_q75: f64,
}

impl SummaryRow {
    fn from_records(bench: Benchmark, cell: f64, loss: LossKind, model: &ModelSpec, recs: &[&EvalRecord]) -> Result<Self> {
        let param: Vec<f64> = recs.iter().filter_map(|r| r.param_error).collect();
        let param = if param.is_empty() { None } else { Some(quantile_summary(&param)?) };
        let pooled = |f: fn(&EvalRecord) -> &[f64]| -> Result<Quartiles> {
            let v: Vec<f64> = recs.iter().flat_map(|r| f(r).iter().copied()).collect();
            quantile_summary(&v)
        };
        let abs = pooled(|r| &r.abs_errors)?;
        let lik = pooled(|r| &r.likelihoods)?;
        Ok(Self {
            benchmark: bench.to_string(),
            cell,
            loss,
            model: model.name().to_string(),
            repeats: recs.len(),
            draws: recs.iter().map(|r| r.draws).sum(),
            excluded: recs.iter().map(|r| r.excluded).sum(),
            param_error_q25: param.map(|q| q.q25),
            param_error_q50: param.map(|q| q.q50),
            param_error_q75: param.map(|q| q.q75),
            abs_error_q25: abs.q25,
            abs_error_q50: abs.q50,
            abs_error_q75: abs.q75,
            pred_lik_q25: lik.q25,
            pred_lik_q50: lik.q50,
            pred_lik_q75: lik.q75,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReproduceOutcome {
    pub config: RunConfig,
    pub records: Vec<EvalRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ReproduceOutcome {
    pub fn row(&self, cell: f64, loss: LossKind) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.cell == cell && r.loss == loss)
    }
}

struct Cell {
    value: f64,
    scenario: Scenario,
    truth: Option<(f64, usize)>,
}

fn cells(cfg: &RunConfig, bench: Benchmark) -> Vec<Cell> {
    match bench {
        Benchmark::EpsPoisson => cfg
            .k_grid
            .iter()
            .map(|&k| Cell {
                value: k as f64,
                scenario: Scenario::EpsPoisson { lambda: POISSON_LAMBDA, eps: POISSON_EPS, k },
                truth: Some((POISSON_LAMBDA, 0)),
            })
            .collect(),
        Benchmark::ZeroBinomial => cfg
            .eps_grid
            .iter()
            .map(|&eps| Cell {
                value: eps,
                scenario: Scenario::ZeroInfBinomial {
                    beta0: BINOMIAL_BETA.0,
                    beta1: BINOMIAL_BETA.1,
                    m: BINOMIAL_TRIALS,
                    eps,
                    levels: BINOMIAL_LEVELS,
                },
                truth: Some((BINOMIAL_BETA.1, 1)),
            })
            .collect(),
        Benchmark::ProbitSynthetic => cfg
            .eps_grid
            .iter()
            .map(|&flip_eps| Cell {
                value: flip_eps,
                scenario: Scenario::NoisyProbit { beta: PROBIT_BETA.to_vec(), flip_eps },
                truth: None,
            })
            .collect(),
    }
}

/// Train/test data of one repeat. The probit benchmark draws one dataset
/// per cell and re-splits it; the others draw a fresh dataset per repeat.
fn repeat_data(cfg: &RunConfig, bench: Benchmark, cell_idx: usize, cell: &Cell, repeat: usize) -> Result<(Dataset, Dataset)> {
    let n_train = cfg.n_train.expect("resolved");
    let n_test = cfg.n_test.expect("resolved");
    let ci = cell_idx as u64;
    let r = repeat as u64;
    let data_seed = match bench {
        Benchmark::ProbitSynthetic => derive_seed(cfg.seed, &[ci]),
        _ => derive_seed(cfg.seed, &[ci, r]),
    };
    let data = generate(&SimConfig::new(cell.scenario.clone(), n_train, n_test, data_seed))?;
    train_test_split(&data, n_train, derive_seed(cfg.seed, &[ci, r, 1]))
}

/// Runs every cell, repeat and loss of the benchmark without touching the
/// file system.
pub fn run_reproduce(cfg: &RunConfig) -> Result<ReproduceOutcome> {
    let cfg = resolve(cfg)?;
    cfg.validate()?;
    let bench = cfg.benchmark.expect("resolved");
    let losses = cfg.losses();
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for (ci, cell) in cells(&cfg, bench).iter().enumerate() {
        let mut cell_records: Vec<EvalRecord> = Vec::new();
        let mut model = None;
        for repeat in 0..cfg.repeats {
            let (train, test) = repeat_data(&cfg, bench, ci, cell, repeat)?;
            let spec = cfg.model_spec(train.dim())?;
            model = Some(spec);
            let master_seed = derive_seed(cfg.seed, &[ci as u64, repeat as u64, 2]);
            let npl = NplConfig {
                draws: cfg.draws,
                master_seed,
                parallelism: cfg.parallelism,
                ..Default::default()
            };
            for &loss in &losses {
                let samples = posterior_bootstrap(&train, &spec, loss, &npl)?;
                cell_records.push(EvalRecord::evaluate(
                    bench.as_str(),
                    Some(cell.value),
                    repeat,
                    master_seed,
                    &samples,
                    &test,
                    cell.truth,
                )?);
            }
        }
        let model = model.expect("at least one repeat");
        for &loss in &losses {
            let recs: Vec<&EvalRecord> = cell_records.iter().filter(|r| r.loss == loss).collect();
            summary.push(SummaryRow::from_records(bench, cell.value, loss, &model, &recs)?);
        }
        records.extend(cell_records);
    }
    Ok(ReproduceOutcome { config: cfg, records, summary })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_outcome(outcome: &ReproduceOutcome, dir: &Path) -> Result<()> {
    let reports = dir.join("reports");
    std::fs::create_dir_all(&reports).map_err(|e| Error::io(&reports, e))?;
    outcome.config.write_to(dir)?;
    let bench = outcome.config.benchmark.expect("resolved");
    for row in &outcome.summary {
        let records: Vec<EvalRecord> = outcome
            .records
            .iter()
            .filter(|r| r.cell == Some(row.cell) && r.loss == row.loss)
            .cloned()
            .collect();
        let path = reports.join(format!("{bench}_{}_{}.jsonl", row.cell, row.loss));
        EvalReport { records }.write_jsonl(create(&path)?)?;
    }
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    for row in &outcome.summary {
        w.serialize(row).map_err(|e| Error::Config(format!("cannot write summary: {e}")))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn cmd_reproduce(cfg: &RunConfig) -> Result<PathBuf> {
    let outcome = run_reproduce(cfg)?;
    write_outcome(&outcome, &cfg.out)?;
    Ok(cfg.out.clone())
}
