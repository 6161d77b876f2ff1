//! Posterior bootstrap sampling.
//!
//! Each draw re-weights the data with Dirichlet weights and minimizes the
//! chosen loss under that weighting. With `alpha = 0` (the default) the
//! weights are `Dir(1, …, 1)` over the observed rows, i.e. a Bayesian
//! bootstrap. With `alpha > 0`, `T` pseudo-observations drawn from a prior
//! sampler are appended and the joint weight vector is
//! `Dir(1, …, 1, α/T, …, α/T)`; pseudo-observations are weighted by their
//! own Dirichlet components.
//!
//! Draw `j` uses its own ChaCha stream seeded from `(master_seed, j)`, so the
//! output does not depend on how draws are scheduled across workers.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, Open01};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{build_empirical, Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::optimizer::{fit_theta, FitOptions, Termination};

/// Source of pseudo-observations `(x̃, ỹ)` for `alpha > 0`.
pub trait PriorSampler: Send + Sync {
    fn sample(&self, rng: &mut dyn RngCore) -> (Vec<f64>, u64);
}

impl<F> PriorSampler for F
where
    F: Fn(&mut dyn RngCore) -> (Vec<f64>, u64) + Send + Sync,
{
    fn sample(&self, rng: &mut dyn RngCore) -> (Vec<f64>, u64) {
        self(rng)
    }
}

#[derive(Clone)]
pub struct NplConfig {
    /// Number of draws `B`.
    pub draws: usize,
    pub alpha: f64,
    /// Number of pseudo-observations `T`, used only when `alpha > 0`.
    pub truncation: usize,
    pub prior_sampler: Option<Arc<dyn PriorSampler>>,
    pub master_seed: u64,
    pub parallelism: usize,
    pub fit: FitOptions,
}

impl fmt::Debug for NplConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NplConfig")
            .field("draws", &self.draws)
            .field("alpha", &self.alpha)
            .field("truncation", &self.truncation)
            .field("prior_sampler", &self.prior_sampler.is_some())
            .field("master_seed", &self.master_seed)
            .field("parallelism", &self.parallelism)
            .finish()
    }
}

impl Default for NplConfig {
    fn default() -> Self {
        Self {
            draws: 200,
            alpha: 0.0,
            truncation: 0,
            prior_sampler: None,
            master_seed: 0,
            parallelism: 1,
            fit: FitOptions::default(),
        }
    }
}

impl NplConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::Config("number of draws must be at least 1".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if self.alpha > 0.0 {
            if self.truncation == 0 {
                return Err(Error::Config("alpha > 0 requires truncation T >= 1".into()));
            }
            if self.prior_sampler.is_none() {
                return Err(Error::Config("alpha > 0 requires a prior sampler".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub index: usize,
    pub params: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    /// Converged draws in draw-index order.
    pub draws: Vec<Draw>,
    /// Draws that failed to converge or hit a numerical error.
    pub excluded: Vec<Draw>,
    pub loss: LossKind,
    pub model: ModelSpec,
}

impl PosteriorSamples {
    pub fn excluded_count(&self) -> usize {
        self.excluded.len()
    }

    pub fn requested(&self) -> usize {
        self.draws.len() + self.excluded.len()
    }

    /// Every attempted draw, converged or not, in index order.
    pub fn all_draws(&self) -> Vec<&Draw> {
        let mut all: Vec<&Draw> = self.draws.iter().chain(&self.excluded).collect();
        all.sort_by_key(|d| d.index);
        all
    }

    pub fn params(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.draws.iter().map(|d| d.params.as_slice())
    }
}

/// RNG stream for draw `index`.
pub fn draw_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// `Dir(1, …, 1)` weights via normalized standard exponentials.
pub fn dirichlet_uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let g: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Log of a `Gamma(shape, 1)` variate, accurate for tiny shapes where the
/// variate itself underflows.
fn log_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        return g.ln();
    }
    // G(a) = G(a + 1) · U^{1/a}
    let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
    let u: f64 = Open01.sample(rng);
    g.ln() + u.ln() / shape
}

/// Joint `Dir(1, …, 1, α/T, …, α/T)` draw split into the `n` data weights and
/// the `T` pseudo-observation weights.
pub fn dirichlet_augmented<R: Rng + ?Sized>(
    n: usize,
    truncation: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(alpha > 0.0) || truncation == 0 {
        return Err(Error::Config("augmented Dirichlet needs alpha > 0 and T >= 1".into()));
    }
    let shape = alpha / truncation as f64;
    let mut logs: Vec<f64> = Vec::with_capacity(n + truncation);
    for _ in 0..n {
        let e: f64 = Exp1.sample(rng);
        logs.push(e.ln());
    }
    for _ in 0..truncation {
        logs.push(log_gamma_variate(shape, rng));
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    let pseudo = w.split_off(n);
    Ok((w, pseudo))
}

fn run_draw(data: &Dataset, model: &ModelSpec, loss: LossKind, cfg: &NplConfig, index: usize) -> Draw {
    let mut rng = draw_rng(cfg.master_seed, index as u64);
    let failed = |index| Draw {
        index,
        params: vec![f64::NAN; model.param_dim()],
        objective: f64::NAN,
        converged: false,
        iterations: 0,
        grad_norm: f64::NAN,
        termination: None,
    };

    let (data, weights) = if cfg.alpha > 0.0 {
        let sampler = cfg.prior_sampler.as_ref().expect("validated");
        let pseudo: Vec<(Vec<f64>, u64)> =
            (0..cfg.truncation).map(|_| sampler.sample(&mut rng)).collect();
        let Ok(pseudo) = Dataset::from_rows(&pseudo, data.kind()) else {
            return failed(index);
        };
        let Ok(joined) = data.concat(&pseudo) else {
            return failed(index);
        };
        let Ok((mut w, wp)) = dirichlet_augmented(data.len(), cfg.truncation, cfg.alpha, &mut rng)
        else {
            return failed(index);
        };
        w.extend(wp);
        (std::borrow::Cow::Owned(joined), w)
    } else {
        (std::borrow::Cow::Borrowed(data), dirichlet_uniform(data.len(), &mut rng))
    };

    let fit_opts = FitOptions { seed: rng.next_u64(), ..cfg.fit };
    let result = build_empirical(&data, &weights).and_then(|emp| fit_theta(&emp, model, loss, &fit_opts));
    match result {
        Ok(r) => Draw {
            index,
            converged: r.converged && r.objective.is_finite(),
            params: r.params,
            objective: r.objective,
            iterations: r.iterations,
            grad_norm: r.grad_norm,
            termination: Some(r.termination),
        },
        Err(_) => failed(index),
    }
}

/// Runs `cfg.draws` posterior bootstrap draws of `model` under `loss`.
///
/// Draws that fail to converge are excluded from the returned sample and
/// kept in [`PosteriorSamples::excluded`].
pub fn posterior_bootstrap(
    data: &Dataset,
    model: &ModelSpec,
    loss: LossKind,
    cfg: &NplConfig,
) -> Result<PosteriorSamples> {
    cfg.validate()?;
    model.validate()?;
    if data.dim() != model.covariate_dim {
        return Err(Error::DimensionMismatch {
            expected: model.covariate_dim,
            got: data.dim(),
            context: "model covariate dimension vs data",
        });
    }
    let run = || -> Vec<Draw> {
        (0..cfg.draws)
            .into_par_iter()
            .map(|j| run_draw(data, model, loss, cfg, j))
            .collect()
    };
    let all = if cfg.parallelism <= 1 {
        (0..cfg.draws).map(|j| run_draw(data, model, loss, cfg, j)).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
            .install(run)
    };
    let (draws, excluded): (Vec<Draw>, Vec<Draw>) = all.into_iter().partition(|d| d.converged);
    if draws.is_empty() {
        return Err(Error::AllDrawsFailed(cfg.draws));
    }
    Ok(PosteriorSamples { draws, excluded, loss, model: *model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::weighted_mle;

    #[test]
    fn dirichlet_uniform_normalized() {
        let mut rng = draw_rng(1, 0);
        assert_eq!(dirichlet_uniform(1, &mut rng), vec![1.0]);
        for n in [2, 5, 100] {
            let w = dirichlet_uniform(n, &mut rng);
            assert!(w.iter().all(|v| *v >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn augmented_edge_cases() {
        let mut rng = draw_rng(2, 0);
        let (w, wp) = dirichlet_augmented(0, 1, 1.0, &mut rng).unwrap();
        assert!(w.is_empty());
        assert_eq!(wp, vec![1.0]);
        // n = 0 with a vanishing alpha still normalizes in log space
        let (_, wp) = dirichlet_augmented(0, 3, 1e-12, &mut rng).unwrap();
        assert!((wp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(dirichlet_augmented(3, 0, 1.0, &mut rng).is_err());
        assert!(dirichlet_augmented(3, 2, 0.0, &mut rng).is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = NplConfig { alpha: 1.0, truncation: 5, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = NplConfig { draws: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn single_draw_equals_weighted_mle_under_its_weights() {
        let data = Dataset::from_outcomes(vec![1, 4, 2, 7, 3]).unwrap();
        let cfg = NplConfig { draws: 1, master_seed: 99, ..Default::default() };
        let s = posterior_bootstrap(&data, &ModelSpec::poisson(0), LossKind::Kld, &cfg).unwrap();
        let w = dirichlet_uniform(data.len(), &mut draw_rng(99, 0));
        let mle = weighted_mle(&ModelSpec::poisson(0), &data, &w, &FitOptions::default()).unwrap();
        assert_eq!(s.draws.len(), 1);
        assert!((s.draws[0].params[0] - mle.params[0]).abs() < 1e-14);
    }

    #[test]
    fn pseudo_samples_enter_with_their_weights() {
        let data = Dataset::from_outcomes(vec![2, 2, 2]).unwrap();
        let sampler: Arc<dyn PriorSampler> = Arc::new(|_: &mut dyn RngCore| (Vec::new(), 20u64));
        let cfg = NplConfig {
            draws: 50,
            alpha: 3.0,
            truncation: 4,
            prior_sampler: Some(sampler),
            master_seed: 5,
            ..Default::default()
        };
        let s = posterior_bootstrap(&data, &ModelSpec::poisson(0), LossKind::Kld, &cfg).unwrap();
        for d in &s.draws {
            let mut rng = draw_rng(5, d.index as u64);
            let (w, wp) = dirichlet_augmented(3, 4, 3.0, &mut rng).unwrap();
            let expected = 2.0 * w.iter().sum::<f64>() + 20.0 * wp.iter().sum::<f64>();
            assert!((d.params[0].exp() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let data = Dataset::from_outcomes(vec![0, 1]).unwrap();
        let cfg = NplConfig { draws: 2, ..Default::default() };
        assert!(posterior_bootstrap(&data, &ModelSpec::probit(1), LossKind::Kld, &cfg).is_err());
    }
}
