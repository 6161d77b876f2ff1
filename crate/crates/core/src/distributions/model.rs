use serde::{Deserialize, Serialize};

use super::special::{
    ln_choose, ln_factorial, log_normal_cdf, log_sigmoid, normal_cdf, normal_hazard_ratio,
    normal_pdf, sigmoid,
};
use crate::error::{Error, Result};

/// Parametric conditional families `f_θ(y | x)`.
///
/// - `Poisson`: log link, `λ = exp(θ₀ + θ₁·x)`.
/// - `Binomial`: logit link over `trials` trials.
/// - `Probit`: binary outcome, `P(y=1) = Φ(θ₀ + θ₁·x)`.
/// - `Mlp`: binary outcome, one tanh hidden layer and a logistic output unit
///   with bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Poisson,
    Binomial { trials: u64 },
    Probit,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub family: Family,
    pub covariate_dim: usize,
}

impl ModelSpec {
    pub fn poisson(covariate_dim: usize) -> Self {
        Self { family: Family::Poisson, covariate_dim }
    }

    pub fn binomial(trials: u64, covariate_dim: usize) -> Self {
        Self { family: Family::Binomial { trials }, covariate_dim }
    }

    pub fn probit(covariate_dim: usize) -> Self {
        Self { family: Family::Probit, covariate_dim }
    }

    pub fn mlp(hidden: usize, covariate_dim: usize) -> Self {
        Self { family: Family::Mlp { hidden }, covariate_dim }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            Family::Binomial { trials: 0 } => {
                Err(Error::Config("binomial model needs at least one trial".into()))
            }
            Family::Mlp { hidden: 0 } => {
                Err(Error::Config("network needs at least one hidden unit".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn param_dim(&self) -> usize {
        let d = self.covariate_dim;
        match self.family {
            Family::Poisson | Family::Binomial { .. } | Family::Probit => 1 + d,
            Family::Mlp { hidden } => (d + 1) * hidden + hidden + 1,
        }
    }

    /// Largest outcome with positive probability, `None` for unbounded support.
    pub fn max_outcome(&self) -> Option<u64> {
        match self.family {
            Family::Poisson => None,
            Family::Binomial { trials } => Some(trials),
            Family::Probit | Family::Mlp { .. } => Some(1),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Poisson => "poisson",
            Family::Binomial { .. } => "binomial",
            Family::Probit => "probit",
            Family::Mlp { .. } => "mlp",
        }
    }

    pub(crate) fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: params.len(),
                context: "parameter vector",
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParams("parameters must be finite".into()));
        }
        Ok(())
    }

    pub(crate) fn check_covariates(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.covariate_dim {
            return Err(Error::DimensionMismatch {
                expected: self.covariate_dim,
                got: x.len(),
                context: "covariate vector",
            });
        }
        Ok(())
    }

    /// Scalar predictor `η(θ, x)` the outcome distribution depends on.
    pub(crate) fn predictor(&self, params: &[f64], x: &[f64]) -> f64 {
        match self.family {
            Family::Mlp { hidden } => {
                let d = self.covariate_dim;
                let out = hidden * (d + 1);
                let mut o = params[out + hidden];
                for k in 0..hidden {
                    let unit = &params[k * (d + 1)..(k + 1) * (d + 1)];
                    let a = unit[0] + dot(&unit[1..], x);
                    o += params[out + k] * a.tanh();
                }
                o
            }
            _ => params[0] + dot(&params[1..], x),
        }
    }

    /// Writes `∂η/∂θ` into `grad` and returns `η`.
    pub(crate) fn predictor_grad(&self, params: &[f64], x: &[f64], grad: &mut [f64]) -> f64 {
        match self.family {
            Family::Mlp { hidden } => {
                let d = self.covariate_dim;
                let out = hidden * (d + 1);
                let mut o = params[out + hidden];
                for k in 0..hidden {
                    let unit = &params[k * (d + 1)..(k + 1) * (d + 1)];
                    let t = (unit[0] + dot(&unit[1..], x)).tanh();
                    let v = params[out + k];
                    o += v * t;
                    let back = v * (1.0 - t * t);
                    let g = &mut grad[k * (d + 1)..(k + 1) * (d + 1)];
                    g[0] = back;
                    for (gj, xj) in g[1..].iter_mut().zip(x) {
                        *gj = back * xj;
                    }
                    grad[out + k] = t;
                }
                grad[out + hidden] = 1.0;
                o
            }
            _ => {
                grad[0] = 1.0;
                grad[1..].copy_from_slice(x);
                params[0] + dot(&params[1..], x)
            }
        }
    }

    /// `ln f(y | η)`; `-∞` outside the support.
    pub(crate) fn log_prob(&self, eta: f64, y: u64) -> f64 {
        match self.family {
            Family::Poisson => {
                let lambda = eta.exp();
                if y == 0 {
                    -lambda
                } else {
                    y as f64 * eta - lambda - ln_factorial(y)
                }
            }
            Family::Binomial { trials } => {
                if y > trials {
                    return f64::NEG_INFINITY;
                }
                let mut lp = ln_choose(trials, y);
                if y > 0 {
                    lp += y as f64 * log_sigmoid(eta);
                }
                if y < trials {
                    lp += (trials - y) as f64 * log_sigmoid(-eta);
                }
                lp
            }
            Family::Probit => match y {
                0 => log_normal_cdf(-eta),
                1 => log_normal_cdf(eta),
                _ => f64::NEG_INFINITY,
            },
            Family::Mlp { .. } => match y {
                0 => log_sigmoid(-eta),
                1 => log_sigmoid(eta),
                _ => f64::NEG_INFINITY,
            },
        }
    }

    pub(crate) fn prob(&self, eta: f64, y: u64) -> f64 {
        match self.family {
            Family::Probit => match y {
                0 => normal_cdf(-eta),
                1 => normal_cdf(eta),
                _ => 0.0,
            },
            Family::Mlp { .. } => match y {
                0 => sigmoid(-eta),
                1 => sigmoid(eta),
                _ => 0.0,
            },
            _ => self.log_prob(eta, y).exp(),
        }
    }

    /// `∂ ln f(y | η) / ∂η`; zero outside the support.
    pub(crate) fn dlog_prob(&self, eta: f64, y: u64) -> f64 {
        match self.family {
            Family::Poisson => y as f64 - eta.exp(),
            Family::Binomial { trials } => {
                if y > trials {
                    0.0
                } else {
                    y as f64 - trials as f64 * sigmoid(eta)
                }
            }
            Family::Probit => match y {
                0 => -normal_hazard_ratio(-eta),
                1 => normal_hazard_ratio(eta),
                _ => 0.0,
            },
            Family::Mlp { .. } => match y {
                0 => -sigmoid(eta),
                1 => sigmoid(-eta),
                _ => 0.0,
            },
        }
    }

    /// `∂ f(y | η) / ∂η`.
    pub(crate) fn dprob(&self, eta: f64, y: u64) -> f64 {
        match self.family {
            Family::Probit => match y {
                0 => -normal_pdf(eta),
                1 => normal_pdf(eta),
                _ => 0.0,
            },
            Family::Mlp { .. } => {
                let s = sigmoid(eta) * sigmoid(-eta);
                match y {
                    0 => -s,
                    1 => s,
                    _ => 0.0,
                }
            }
            _ => {
                let f = self.prob(eta, y);
                if f == 0.0 {
                    0.0
                } else {
                    f * self.dlog_prob(eta, y)
                }
            }
        }
    }

    pub(crate) fn mean_from_predictor(&self, eta: f64) -> f64 {
        match self.family {
            Family::Poisson => eta.exp(),
            Family::Binomial { trials } => trials as f64 * sigmoid(eta),
            Family::Probit => normal_cdf(eta),
            Family::Mlp { .. } => sigmoid(eta),
        }
    }

    /// Component `idx` of `params` on its natural scale: the Poisson rate for
    /// a covariate-free Poisson model, the raw coefficient otherwise.
    pub fn natural_param(&self, params: &[f64], idx: usize) -> f64 {
        match self.family {
            Family::Poisson if self.covariate_dim == 0 && idx == 0 => params[0].exp(),
            _ => params[idx],
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `f_θ(·|x)` on an explicit finite outcome set plus the mass of everything
/// else.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPmf {
    /// `(outcome, probability)`, sorted by outcome, no duplicates.
    pub head: Vec<(u64, f64)>,
    pub tail_mass: f64,
}

impl ConditionalPmf {
    pub fn prob(&self, y: u64) -> Option<f64> {
        self.head
            .binary_search_by_key(&y, |&(o, _)| o)
            .ok()
            .map(|i| self.head[i].1)
    }

    pub fn head_mass(&self) -> f64 {
        self.head.iter().map(|h| h.1).sum()
    }
}

/// True when `head` (sorted, deduplicated) lists every outcome of a
/// bounded family.
pub(crate) fn head_covers_support(model: &ModelSpec, head: &[(u64, f64)]) -> bool {
    model
        .max_outcome()
        .is_some_and(|max| head.iter().filter(|h| h.0 <= max).count() as u64 == max + 1)
}

pub(crate) fn tail_mass(model: &ModelSpec, head: &[(u64, f64)]) -> f64 {
    if head_covers_support(model, head) {
        return 0.0;
    }
    (1.0 - head.iter().map(|h| h.1).sum::<f64>()).max(0.0)
}

pub fn model_pmf(
    model: &ModelSpec,
    params: &[f64],
    x: &[f64],
    head_set: &[u64],
) -> Result<ConditionalPmf> {
    model.check_params(params)?;
    model.check_covariates(x)?;
    if head_set.is_empty() {
        return Err(Error::InvalidData("head outcome set must be nonempty".into()));
    }
    let mut outcomes = head_set.to_vec();
    outcomes.sort_unstable();
    outcomes.dedup();
    let eta = model.predictor(params, x);
    let head: Vec<(u64, f64)> = outcomes.into_iter().map(|y| (y, model.prob(eta, y))).collect();
    if let Some(&(y, p)) = head.iter().find(|h| !h.1.is_finite()) {
        return Err(Error::Numerical(format!("pmf at outcome {y} evaluated to {p}")));
    }
    let tail_mass = tail_mass(model, &head);
    Ok(ConditionalPmf { head, tail_mass })
}

pub fn model_mean(model: &ModelSpec, params: &[f64], x: &[f64]) -> Result<f64> {
    model.check_params(params)?;
    model.check_covariates(x)?;
    let m = model.mean_from_predictor(model.predictor(params, x));
    if !m.is_finite() {
        return Err(Error::Numerical(format!("model mean evaluated to {m}")));
    }
    Ok(m)
}
