//! Weighted maximum-likelihood initializers, BFGS, and the per-draw fit.

mod bfgs;

pub use bfgs::{bfgs, BfgsOptions, OptimResult, Termination};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::{build_empirical, Dataset, Family, ModelSpec, WeightedEmpirical};
use crate::error::{Error, Result};
use crate::losses::{kld_loss, loss_grad, tvd_loss, LossKind};

/// Floor applied to the closed-form Poisson rate before taking logs.
pub const POISSON_RATE_FLOOR: f64 = 1e-8;

/// Minibatch SGD schedule for the network initializer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for SgdOptions {
    fn default() -> Self {
        Self { epochs: 200, learning_rate: 0.1, batch_size: 32 }
    }
}

/// Coarse scan used to pick the TVD starting point of one-parameter models,
/// whose TVD surface can have several local minima near the MLE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Scan covers `mle ± half_width` on the unconstrained scale.
    pub half_width: f64,
    pub points: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { half_width: 3.0, points: 601 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FitOptions {
    pub bfgs: BfgsOptions,
    pub sgd: SgdOptions,
    pub scan: ScanOptions,
    /// Seeds the network initialization and minibatch order.
    pub seed: u64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Weighted maximum-likelihood estimate of `model` on `data`.
///
/// - covariate-free Poisson: closed form `ln(Σ w_i y_i / Σ w_i)`
/// - other GLMs: BFGS on the weighted negative log-likelihood from zero
/// - network: minibatch SGD from a seeded random initialization
pub fn weighted_mle(
    model: &ModelSpec,
    data: &Dataset,
    weights: &[f64],
    opts: &FitOptions,
) -> Result<OptimResult> {
    let emp = build_empirical(data, weights)?;
    mle_from_empirical(&emp, model, opts)
}

pub(crate) fn mle_from_empirical(
    emp: &WeightedEmpirical,
    model: &ModelSpec,
    opts: &FitOptions,
) -> Result<OptimResult> {
    model.validate()?;
    match model.family {
        Family::Poisson if model.covariate_dim == 0 => poisson_closed_form(emp, model),
        Family::Mlp { .. } => sgd_nll(emp, model, &opts.sgd, opts.seed),
        _ => {
            let mut x0 = vec![0.0; model.param_dim()];
            if model.family == Family::Poisson {
                let mean: f64 = emp.rows().iter().map(|r| r.weight * r.y as f64).sum();
                x0[0] = mean.max(POISSON_RATE_FLOOR).ln();
            }
            minimize_loss(LossKind::Kld, emp, model, &x0, &opts.bfgs)
        }
    }
}

fn poisson_closed_form(emp: &WeightedEmpirical, model: &ModelSpec) -> Result<OptimResult> {
    let (num, den) = emp
        .rows()
        .iter()
        .fold((0.0, 0.0), |(n, d), r| (n + r.weight * r.y as f64, d + r.weight));
    let params = vec![(num / den).max(POISSON_RATE_FLOOR).ln()];
    let objective = kld_loss(emp, model, &params)?.value;
    let grad_norm = norm(&loss_grad(LossKind::Kld, emp, model, &params)?);
    Ok(OptimResult {
        params,
        objective,
        converged: true,
        iterations: 0,
        grad_norm,
        termination: Termination::Completed,
    })
}

fn minimize_loss(
    kind: LossKind,
    emp: &WeightedEmpirical,
    model: &ModelSpec,
    x0: &[f64],
    opts: &BfgsOptions,
) -> Result<OptimResult> {
    let objective = |p: &[f64]| match kind {
        LossKind::Tvd => tvd_loss(emp, model, p).unwrap_or(f64::NAN),
        LossKind::Kld => kld_loss(emp, model, p).map_or(f64::NAN, |k| k.value),
    };
    let gradient = |p: &[f64]| {
        loss_grad(kind, emp, model, p).unwrap_or_else(|_| vec![f64::NAN; p.len()])
    };
    bfgs(objective, gradient, x0, opts)
}

fn sgd_nll(
    emp: &WeightedEmpirical,
    model: &ModelSpec,
    opts: &SgdOptions,
    seed: u64,
) -> Result<OptimResult> {
    let Family::Mlp { hidden } = model.family else {
        return Err(Error::Config("SGD initializer is only used for networks".into()));
    };
    let d = model.covariate_dim;
    let p = model.param_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let hidden_scale = 1.0 / ((d + 1) as f64).sqrt();
    let out_scale = 1.0 / ((hidden + 1) as f64).sqrt();
    let mut params: Vec<f64> = (0..p)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * if i < hidden * (d + 1) { hidden_scale } else { out_scale }
        })
        .collect();

    let rows = emp.rows();
    let n = rows.len() as f64;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut deta = vec![0.0; p];
    let mut step = vec![0.0; p];
    let batch = opts.batch_size.max(1);
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            step.iter_mut().for_each(|s| *s = 0.0);
            for &i in chunk {
                let r = rows[i];
                let x = &emp.groups()[r.group].x;
                let eta = model.predictor_grad(&params, x, &mut deta);
                // n·w_i rescales the weighted loss to a per-row average
                let c = -n * r.weight * model.dlog_prob(eta, r.y) / chunk.len() as f64;
                for (s, g) in step.iter_mut().zip(&deta) {
                    *s += c * g;
                }
            }
            for (w, s) in params.iter_mut().zip(&step) {
                *w -= opts.learning_rate * s;
            }
        }
        if params.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("SGD diverged".into()));
        }
    }

    let objective = kld_loss(emp, model, &params)?.value;
    let grad_norm = norm(&loss_grad(LossKind::Kld, emp, model, &params)?);
    Ok(OptimResult {
        params,
        objective,
        converged: objective.is_finite(),
        iterations: opts.epochs,
        grad_norm,
        termination: Termination::Completed,
    })
}

/// Fits one posterior draw: the weighted MLE for `Kld`, or BFGS on the TVD
/// loss started from the weighted MLE for `Tvd`.
pub fn fit_theta(
    emp: &WeightedEmpirical,
    model: &ModelSpec,
    loss: LossKind,
    opts: &FitOptions,
) -> Result<OptimResult> {
    let mle = mle_from_empirical(emp, model, opts)?;
    match loss {
        LossKind::Kld => Ok(mle),
        LossKind::Tvd if model.param_dim() == 1 && opts.scan.points > 1 => {
            let start = scan_start(emp, model, mle.params[0], &opts.scan)?;
            let from_mle = minimize_loss(LossKind::Tvd, emp, model, &mle.params, &opts.bfgs)?;
            if start == mle.params[0] {
                return Ok(from_mle);
            }
            let from_scan = minimize_loss(LossKind::Tvd, emp, model, &[start], &opts.bfgs)?;
            Ok(if from_scan.objective < from_mle.objective { from_scan } else { from_mle })
        }
        LossKind::Tvd => minimize_loss(LossKind::Tvd, emp, model, &mle.params, &opts.bfgs),
    }
}

/// Best scan point, or the MLE itself when no scan point improves on it.
fn scan_start(emp: &WeightedEmpirical, model: &ModelSpec, mle: f64, scan: &ScanOptions) -> Result<f64> {
    let mut best = (mle, tvd_loss(emp, model, &[mle])?);
    let step = 2.0 * scan.half_width / (scan.points - 1) as f64;
    for i in 0..scan.points {
        let t = mle - scan.half_width + i as f64 * step;
        let v = tvd_loss(emp, model, &[t])?;
        if v < best.1 {
            best = (t, v);
        }
    }
    Ok(best.0)
}
