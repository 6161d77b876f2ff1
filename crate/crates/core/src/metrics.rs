//! Evaluation criteria for posterior samples against known truths and
//! held-out data.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distributions::{model_mean, Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::npl::PosteriorSamples;

fn nonempty(samples: &PosteriorSamples) -> Result<()> {
    if samples.draws.is_empty() {
        return Err(Error::InvalidData("posterior sample is empty".into()));
    }
    Ok(())
}

/// Mean absolute deviation of component `idx` from `truth` over the draws,
/// on the natural parameter scale (rate for a covariate-free Poisson).
pub fn param_error(samples: &PosteriorSamples, truth: f64, idx: usize) -> Result<f64> {
    nonempty(samples)?;
    if idx >= samples.model.param_dim() {
        return Err(Error::InvalidParams(format!("no parameter component {idx}")));
    }
    let total: f64 = samples
        .params()
        .map(|p| (samples.model.natural_param(p, idx) - truth).abs())
        .sum();
    Ok(total / samples.draws.len() as f64)
}

/// Per test row: mean over draws of `|E_θ[y | x] − y|`.
pub fn abs_error(samples: &PosteriorSamples, test: &Dataset, model: &ModelSpec) -> Result<Vec<f64>> {
    nonempty(samples)?;
    let b = samples.draws.len() as f64;
    test.rows()
        .map(|(x, y)| {
            let mut s = 0.0;
            for p in samples.params() {
                s += (model_mean(model, p, x)? - y as f64).abs();
            }
            Ok(s / b)
        })
        .collect()
}

/// Per test row: mean over draws of `f_θ(y | x)`.
pub fn predictive_likelihood(
    samples: &PosteriorSamples,
    test: &Dataset,
    model: &ModelSpec,
) -> Result<Vec<f64>> {
    nonempty(samples)?;
    if test.dim() != model.covariate_dim {
        return Err(Error::DimensionMismatch {
            expected: model.covariate_dim,
            got: test.dim(),
            context: "test covariates",
        });
    }
    let b = samples.draws.len() as f64;
    test.rows()
        .map(|(x, y)| {
            let mut s = 0.0;
            for p in samples.params() {
                model.check_params(p)?;
                let f = model.prob(model.predictor(p, x), y);
                if !f.is_finite() {
                    return Err(Error::Numerical(format!("pmf evaluated to {f}")));
                }
                s += f;
            }
            Ok((s / b).clamp(0.0, 1.0))
        })
        .collect()
}

/// Linear interpolation between order statistics (`h = (n − 1) p`).
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    Ok(quantiles(values, &[p])?[0])
}

pub fn quantiles(values: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidData("quantiles of an empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidData("quantiles of a sample containing NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let last = (sorted.len() - 1) as f64;
    probs
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidData(format!("quantile level {p} outside [0, 1]")));
            }
            let h = last * p;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
        })
        .collect()
}

/// Lower quartile, median and upper quartile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

pub fn quantile_summary(values: &[f64]) -> Result<Quartiles> {
    let q = quantiles(values, &[0.25, 0.5, 0.75])?;
    Ok(Quartiles { q25: q[0], q50: q[1], q75: q[2] })
}

/// One dataset (or split) evaluated under one loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scenario: String,
    pub loss: LossKind,
    /// Grid value of the cell (`k`, `eps`, ...), if any.
    pub cell: Option<f64>,
    pub repeat: usize,
    pub seed: u64,
    pub draws: usize,
    pub excluded: usize,
    pub param_error: Option<f64>,
    pub abs_error: Quartiles,
    pub predictive_likelihood: Quartiles,
    /// Per-test-row values, kept for pooled summaries.
    pub abs_errors: Vec<f64>,
    pub likelihoods: Vec<f64>,
}

impl EvalRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        scenario: &str,
        cell: Option<f64>,
        repeat: usize,
        seed: u64,
        samples: &PosteriorSamples,
        test: &Dataset,
        truth: Option<(f64, usize)>,
    ) -> Result<Self> {
        let model = samples.model;
        let abs_errors = abs_error(samples, test, &model)?;
        let likelihoods = predictive_likelihood(samples, test, &model)?;
        let param_error = truth.map(|(t, idx)| param_error(samples, t, idx)).transpose()?;
        Ok(Self {
            scenario: scenario.to_string(),
            loss: samples.loss,
            cell,
            repeat,
            seed,
            draws: samples.draws.len(),
            excluded: samples.excluded_count(),
            param_error,
            abs_error: quantile_summary(&abs_errors)?,
            predictive_likelihood: quantile_summary(&likelihoods)?,
            abs_errors,
            likelihoods,
        })
    }
}

/// A collection of records written as JSON Lines, one record per line with
/// fields in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(r)
                .map_err(|e| Error::Numerical(format!("cannot serialize record: {e}")))?;
            writeln!(w, "{line}").map_err(|e| Error::io("<report>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    path: "<report>".into(),
                    line: i as u64 + 1,
                    msg: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }
}
