//! Synthetic benchmark generators and random train/test splits.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Binomial, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::special::{normal_cdf, sigmoid};
use crate::distributions::{CovariateKind, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// `y = Poisson(λ) + k · Bernoulli(ε)`, no covariates.
    EpsPoisson { lambda: f64, eps: f64, k: u64 },
    /// `y = Binomial(m, logistic(β₀ + β₁ ℓ)) · (1 − Bernoulli(ε))` with the
    /// level `ℓ` uniform on `0..levels` and stored as the single covariate.
    ZeroInfBinomial { beta0: f64, beta1: f64, m: u64, eps: f64, levels: usize },
    /// `x ~ N(0, I)`, `y ~ Bernoulli(Φ(β₀ + β·x))`, then each label flipped
    /// with probability `flip_eps`. `beta[0]` is the intercept.
    NoisyProbit { beta: Vec<f64>, flip_eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(scenario: Scenario, n_train: usize, n_test: usize, seed: u64) -> Self {
        Self { scenario, n: n_train + n_test, n_train, n_test, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n != self.n_train + self.n_test {
            return Err(Error::Config(format!(
                "n = {} must be positive and equal n_train + n_test = {}",
                self.n,
                self.n_train + self.n_test
            )));
        }
        let eps_ok = |e: f64| (0.0..1.0).contains(&e);
        match &self.scenario {
            Scenario::EpsPoisson { lambda, eps, .. } => {
                if !(*lambda > 0.0) || !eps_ok(*eps) {
                    return Err(Error::Config("need lambda > 0 and eps in [0, 1)".into()));
                }
            }
            Scenario::ZeroInfBinomial { eps, levels, m, .. } => {
                if !(0.0..=1.0).contains(eps) || *levels == 0 || *m == 0 {
                    return Err(Error::Config(
                        "need eps in [0, 1], at least one level and one trial".into(),
                    ));
                }
            }
            Scenario::NoisyProbit { beta, flip_eps } => {
                if beta.is_empty() || !(0.0..=1.0).contains(flip_eps) {
                    return Err(Error::Config(
                        "need an intercept and flip probability in [0, 1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn bernoulli<R: Rng>(p: f64, rng: &mut R) -> bool {
    Bernoulli::new(p.clamp(0.0, 1.0)).expect("clamped").sample(rng)
}

pub fn gen_eps_poisson(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let Scenario::EpsPoisson { lambda, eps, k } = cfg.scenario else {
        return Err(Error::Config("expected an eps-Poisson scenario".into()));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pois = Poisson::new(lambda).map_err(|e| Error::Config(e.to_string()))?;
    let y = (0..cfg.n)
        .map(|_| {
            let base = pois.sample(&mut rng) as u64;
            let outlier = bernoulli(eps, &mut rng);
            base + if outlier { k } else { 0 }
        })
        .collect();
    Dataset::from_outcomes(y)
}

pub fn gen_zero_inflated_binomial(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let Scenario::ZeroInfBinomial { beta0, beta1, m, eps, levels } = cfg.scenario else {
        return Err(Error::Config("expected a zero-inflated binomial scenario".into()));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = Vec::with_capacity(cfg.n);
    let mut y = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let level = rng.random_range(0..levels);
        let pi = sigmoid(beta0 + beta1 * level as f64);
        let count = Binomial::new(m, pi).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng);
        let zeroed = bernoulli(eps, &mut rng);
        x.push(level as f64);
        y.push(if zeroed { 0 } else { count });
    }
    Dataset::new(1, x, y, CovariateKind::Discrete)?
        .with_names(vec!["level".into()], "y".into())
}

pub fn gen_noisy_probit(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let Scenario::NoisyProbit { beta, flip_eps } = &cfg.scenario else {
        return Err(Error::Config("expected a noisy probit scenario".into()));
    };
    let d = beta.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = Vec::with_capacity(cfg.n * d);
    let mut y = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let mut eta = beta[0];
        for b in &beta[1..] {
            let z: f64 = StandardNormal.sample(&mut rng);
            eta += b * z;
            x.push(z);
        }
        let label = bernoulli(normal_cdf(eta), &mut rng);
        let flip = bernoulli(*flip_eps, &mut rng);
        y.push(u64::from(label ^ flip));
    }
    Dataset::new(d, x, y, CovariateKind::Continuous)
}

/// Dispatches on the scenario.
pub fn generate(cfg: &SimConfig) -> Result<Dataset> {
    match cfg.scenario {
        Scenario::EpsPoisson { .. } => gen_eps_poisson(cfg),
        Scenario::ZeroInfBinomial { .. } => gen_zero_inflated_binomial(cfg),
        Scenario::NoisyProbit { .. } => gen_noisy_probit(cfg),
    }
}

/// Uniformly random permutation; the first `n_train` rows form the training
/// set.
pub fn train_test_split(data: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_train >= data.len() {
        return Err(Error::Config(format!(
            "n_train = {n_train} must lie in 1..{}",
            data.len()
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((data.subset(&idx[..n_train])?, data.subset(&idx[n_train..])?))
}
