//! Loss functions over a weighted empirical measure.
//!
//! The TVD loss compares each covariate group's empirical conditional with
//! the model conditional, weighting by the group's share of the covariate
//! marginal:
//!
//! ```text
//! TVD(p̂, p̂_θ) = Σ_g W_g · ½ [ Σ_{y ∈ S_g} |p̂(y|x_g) − f_θ(y|x_g)| + f_θ(𝒴 \ S_g | x_g) ]
//! ```
//!
//! where `S_g` is the set of outcomes observed in group `g`. The model mass
//! outside `S_g` enters exactly through the tail, so no truncation of the
//! outcome space is needed.
//!
//! The KLD loss is the weighted negative log-likelihood, which differs from
//! `E_x KLD(p̂(·|x) ‖ f_θ(·|x))` only by a θ-free entropy term.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::{head_covers_support, tail_mass, ConditionalPmf, ModelSpec, WeightedEmpirical};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Tvd,
    Kld,
}

impl LossKind {
    pub const ALL: [LossKind; 2] = [LossKind::Tvd, LossKind::Kld];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Tvd => "tvd",
            LossKind::Kld => "kld",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tvd" => Ok(LossKind::Tvd),
            "kld" => Ok(LossKind::Kld),
            other => Err(Error::Config(format!("unknown loss {other:?} (expected tvd or kld)"))),
        }
    }
}

/// TVD between a finitely supported pmf `p` and a model conditional `q`
/// whose head contains the support of `p`.
pub fn tvd_between(p: &[(u64, f64)], q: &ConditionalPmf) -> Result<f64> {
    if p.iter().any(|e| !(e.1 >= 0.0)) {
        return Err(Error::InvalidData("pmf has a negative or NaN probability".into()));
    }
    let psum: f64 = p.iter().map(|e| e.1).sum();
    if (psum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidData(format!("pmf sums to {psum}, expected 1")));
    }
    let qsum = q.head_mass() + q.tail_mass;
    if q.tail_mass < 0.0 || (qsum - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidData(format!(
            "model pmf head plus tail is {qsum}, expected 1"
        )));
    }
    let mut dist = q.tail_mass;
    for &(y, qy) in &q.head {
        dist += (qy - p.iter().find(|e| e.0 == y).map_or(0.0, |e| e.1)).abs();
    }
    if let Some(&(y, _)) = p.iter().find(|e| e.1 > 0.0 && q.prob(e.0).is_none()) {
        return Err(Error::InvalidData(format!(
            "outcome {y} is in the support of p but not in the model head"
        )));
    }
    Ok((0.5 * dist).clamp(0.0, 1.0))
}

fn check_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("{what} evaluated to {v}")))
    }
}

fn check_inputs(emp: &WeightedEmpirical, model: &ModelSpec, params: &[f64]) -> Result<()> {
    model.check_params(params)?;
    if emp.dim() != model.covariate_dim {
        return Err(Error::DimensionMismatch {
            expected: model.covariate_dim,
            got: emp.dim(),
            context: "model covariate dimension vs data",
        });
    }
    Ok(())
}

/// Shared TVD value and (optionally) subgradient evaluation.
fn tvd_eval(
    emp: &WeightedEmpirical,
    model: &ModelSpec,
    params: &[f64],
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    check_inputs(emp, model, params)?;
    let p = params.len();
    let mut deta = vec![0.0; p];
    let mut total = 0.0;
    let mut head = Vec::new();
    for g in emp.groups() {
        let eta = if grad.is_some() {
            model.predictor_grad(params, &g.x, &mut deta)
        } else {
            model.predictor(params, &g.x)
        };
        head.clear();
        let mut abs_diff = 0.0;
        let mut slope = 0.0;
        let mut tail_slope = 0.0;
        for &(y, py) in &g.conditional {
            let f = check_finite(model.prob(eta, y), "model pmf")?;
            head.push((y, f));
            abs_diff += (py - f).abs();
            if grad.is_some() {
                let df = model.dprob(eta, y);
                // sign(0) = 0 at ties
                if f > py {
                    slope += df;
                } else if f < py {
                    slope -= df;
                }
                tail_slope -= df;
            }
        }
        let tail = tail_mass(model, &head);
        total += g.weight * 0.5 * (abs_diff + tail);
        if let Some(gr) = grad.as_deref_mut() {
            if head_covers_support(model, &head) {
                tail_slope = 0.0;
            }
            let coef = 0.5 * g.weight * (slope + tail_slope);
            for (gi, di) in gr.iter_mut().zip(&deta) {
                *gi += coef * di;
            }
        }
    }
    Ok(check_finite(total, "TVD loss")?.clamp(0.0, 1.0))
}

/// Estimated TVD between the weighted empirical joint and the model joint
/// built on the empirical covariate marginal. Always in `[0, 1]`.
pub fn tvd_loss(emp: &WeightedEmpirical, model: &ModelSpec, params: &[f64]) -> Result<f64> {
    tvd_eval(emp, model, params, None)
}

/// Weighted negative log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KldLoss {
    /// `-Σ w_i ln f_θ(y_i|x_i)`; `+∞` when some weighted row has zero
    /// model probability.
    pub value: f64,
    /// Number of weighted rows the model assigns zero probability.
    pub zero_likelihood_rows: usize,
}

impl KldLoss {
    pub fn is_finite(&self) -> bool {
        self.zero_likelihood_rows == 0 && self.value.is_finite()
    }
}

fn group_predictors(emp: &WeightedEmpirical, model: &ModelSpec, params: &[f64]) -> Vec<f64> {
    emp.groups().iter().map(|g| model.predictor(params, &g.x)).collect()
}

/// Weighted negative log-likelihood over the individual weighted rows.
pub fn kld_loss(emp: &WeightedEmpirical, model: &ModelSpec, params: &[f64]) -> Result<KldLoss> {
    check_inputs(emp, model, params)?;
    let etas = group_predictors(emp, model, params);
    let mut value = 0.0;
    let mut zero_likelihood_rows = 0;
    for r in emp.rows() {
        let lp = model.log_prob(etas[r.group], r.y);
        if lp.is_nan() {
            return Err(Error::Numerical("log-likelihood evaluated to NaN".into()));
        }
        if lp == f64::NEG_INFINITY {
            zero_likelihood_rows += 1;
            value = f64::INFINITY;
        } else {
            value -= r.weight * lp;
        }
    }
    Ok(KldLoss { value, zero_likelihood_rows })
}

/// Loss value as a plain number (`+∞` for a zero-likelihood KLD).
pub fn loss_value(
    kind: LossKind,
    emp: &WeightedEmpirical,
    model: &ModelSpec,
    params: &[f64],
) -> Result<f64> {
    match kind {
        LossKind::Tvd => tvd_loss(emp, model, params),
        LossKind::Kld => kld_loss(emp, model, params).map(|k| k.value),
    }
}

/// Analytic gradient of the KLD loss or a subgradient of the TVD loss.
pub fn loss_grad(
    kind: LossKind,
    emp: &WeightedEmpirical,
    model: &ModelSpec,
    params: &[f64],
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.len()];
    match kind {
        LossKind::Tvd => {
            tvd_eval(emp, model, params, Some(&mut grad))?;
        }
        LossKind::Kld => {
            check_inputs(emp, model, params)?;
            let mut deta = vec![0.0; params.len()];
            // accumulate Σ_rows w · dlogf/dη per group first
            let mut coef = vec![0.0; emp.groups().len()];
            let etas = group_predictors(emp, model, params);
            for r in emp.rows() {
                coef[r.group] -= r.weight * model.dlog_prob(etas[r.group], r.y);
            }
            for (g, c) in emp.groups().iter().zip(&coef) {
                if *c == 0.0 {
                    continue;
                }
                model.predictor_grad(params, &g.x, &mut deta);
                for (gi, di) in grad.iter_mut().zip(&deta) {
                    *gi += c * di;
                }
            }
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("loss gradient is not finite".into()));
    }
    Ok(grad)
}
