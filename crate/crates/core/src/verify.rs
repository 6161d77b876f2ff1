//! Monte Carlo checks of the estimator's theoretical guarantees on small,
//! exactly computable discrete problems.
//!
//! All "truth side" quantities are exact sums over a finite outcome space;
//! only the estimator side is sampled.
//!
//! - robustness: under `c = (1 − ε) p_θ̲ + ε q`, the TVD to any model member
//!   moves by at most `2ε`, exactly and (up to `η`) for the estimator
//! - concentration: `P(|TVD(p̂_n, p̂_θn) − TVD(p, p_θ)| ≥ ε) ≤ δ_n` with
//!   `δ_n = (2^{K_y + K_x + 1} − 4) e^{−nε²/2}`, and the RMS error decays
//!   like `n^{−1/2}`
//! - consistency: the minimizer of the estimated TVD approaches the grid
//!   minimizer of the exact TVD as `n` grows

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{build_empirical, CovariateKind, Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::losses::{tvd_loss, LossKind};
use crate::metrics::quantile_summary;
use crate::optimizer::{fit_theta, FitOptions};

/// Outcome of one check, optionally broken down into per-setting rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub claim: String,
    pub setting: String,
    pub seed: u64,
    pub trials: usize,
    /// Worst observed statistic across rows (meaning depends on the claim).
    pub observed: f64,
    pub bound: f64,
    pub pass: bool,
    pub rows: Vec<BoundRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub label: String,
    pub observed: f64,
    /// `None` when the row only takes part in a relative comparison.
    pub bound: Option<f64>,
    pub pass: bool,
    pub note: String,
}

impl BoundReport {
    pub fn write_jsonl<W: Write>(reports: &[BoundReport], mut w: W) -> Result<()> {
        for r in reports {
            let line = serde_json::to_string(r)
                .map_err(|e| Error::Numerical(format!("cannot serialize report: {e}")))?;
            writeln!(w, "{line}").map_err(|e| Error::io("<bound report>", e))?;
        }
        Ok(())
    }

    pub fn summary_line(&self) -> String {
        format!(
            "[{}] {} ({}): observed {:.6e} vs bound {:.6e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.claim,
            self.setting,
            self.observed,
            self.bound
        )
    }
}

/// A discrete joint pmf on `{0..kx} × {0..ky}`, row-major in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteJoint {
    pub kx: usize,
    pub ky: usize,
    pub p: Vec<f64>,
}

impl FiniteJoint {
    pub fn new(kx: usize, ky: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != kx * ky || kx == 0 || ky == 0 {
            return Err(Error::InvalidData("joint pmf has the wrong shape".into()));
        }
        let s: f64 = p.iter().sum();
        if p.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidData(format!("joint pmf must be nonnegative and sum to 1 (sum {s})")));
        }
        Ok(Self { kx, ky, p })
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        (0..self.kx).map(|x| self.p[x * self.ky..(x + 1) * self.ky].iter().sum()).collect()
    }

    /// `(1 − ε) self + ε other`.
    pub fn mix(&self, other: &FiniteJoint, eps: f64) -> Result<Self> {
        if other.kx != self.kx || other.ky != self.ky {
            return Err(Error::InvalidData("mixture components have different shapes".into()));
        }
        let p = self.p.iter().zip(&other.p).map(|(a, b)| (1.0 - eps) * a + eps * b).collect();
        Ok(Self { kx: self.kx, ky: self.ky, p })
    }

    pub fn tvd(&self, other: &FiniteJoint) -> f64 {
        0.5 * self.p.iter().zip(&other.p).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// One row per cell `(x, y)` with its probability as weight. Cells with
    /// zero weight are dropped by the empirical builder.
    fn cell_dataset(&self) -> Result<Dataset> {
        let rows: Vec<(Vec<f64>, u64)> = (0..self.kx)
            .flat_map(|x| (0..self.ky).map(move |y| (vec![x as f64], y as u64)))
            .collect();
        Dataset::from_rows(&rows, CovariateKind::Discrete)
    }

    /// Multinomial cell counts of an i.i.d. sample of size `n`, as weights.
    fn sample_weights<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let mut remaining = n as u64;
        let mut mass_left = 1.0;
        let mut w = Vec::with_capacity(self.p.len());
        for (i, &pi) in self.p.iter().enumerate() {
            let c = if i + 1 == self.p.len() || remaining == 0 {
                remaining
            } else {
                let q = (pi / mass_left).clamp(0.0, 1.0);
                Binomial::new(remaining, q).expect("valid binomial").sample(rng)
            };
            remaining -= c;
            mass_left -= pi;
            w.push(c as f64 / n as f64);
        }
        w
    }
}

/// Model joint `f_θ(y|x) p^x(x)` on the finite space, with the level index
/// as the single covariate.
pub fn model_joint(model: &ModelSpec, params: &[f64], px: &[f64], ky: usize) -> Result<FiniteJoint> {
    let mut p = Vec::with_capacity(px.len() * ky);
    for (x, &w) in px.iter().enumerate() {
        let head: Vec<u64> = (0..ky as u64).collect();
        let pmf = crate::distributions::model_pmf(model, params, &[x as f64], &head)?;
        if pmf.tail_mass > 1e-12 {
            return Err(Error::InvalidData(format!(
                "model puts mass {} outside the {ky}-outcome space",
                pmf.tail_mass
            )));
        }
        p.extend(pmf.head.iter().map(|h| h.1 * w));
    }
    FiniteJoint::new(px.len(), ky, p)
}

#[derive(Debug, Clone)]
pub struct RobustnessSetup {
    /// Bounded family whose support is exactly `0..ky`, level covariate.
    pub model: ModelSpec,
    pub px: Vec<f64>,
    pub ky: usize,
    pub theta_true: Vec<f64>,
    pub contaminant: FiniteJoint,
    pub theta_grid: Vec<Vec<f64>>,
    /// Sample sizes of the estimator-side check.
    pub sample_sizes: Vec<usize>,
    /// Slack `η` of the estimator-side check.
    pub eta: f64,
}

impl RobustnessSetup {
    /// Logistic Bernoulli on a 2 × 2 space with a 101-point grid over the
    /// intercept.
    pub fn bernoulli_2x2(contaminant: FiniteJoint) -> Self {
        Self {
            model: ModelSpec::binomial(1, 1),
            px: vec![0.4, 0.6],
            ky: 2,
            theta_true: vec![0.3, -0.8],
            contaminant,
            theta_grid: (0..101).map(|i| vec![-3.0 + 0.06 * i as f64, 0.5]).collect(),
            sample_sizes: vec![1_000, 10_000],
            eta: 0.05,
        }
    }
}

/// Exact and sampled robustness check for one contamination level `eps`.
pub fn check_robustness_bound(setup: &RobustnessSetup, eps: f64, seed: u64) -> Result<BoundReport> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Config(format!("eps must lie in [0, 1), got {eps}")));
    }
    let clean = model_joint(&setup.model, &setup.theta_true, &setup.px, setup.ky)?;
    let c = clean.mix(&setup.contaminant, eps)?;
    let bound = 2.0 * eps;

    let mut rows = Vec::new();
    let mut exact_max = 0.0f64;
    for theta in &setup.theta_grid {
        let member = model_joint(&setup.model, theta, &setup.px, setup.ky)?;
        exact_max = exact_max.max((c.tvd(&member) - clean.tvd(&member)).abs());
    }
    let exact_pass = exact_max - bound <= 1e-12;
    rows.push(BoundRow {
        label: "exact".into(),
        observed: exact_max,
        bound: Some(bound),
        pass: exact_pass,
        note: format!("max over {} grid points", setup.theta_grid.len()),
    });

    let cells = c.cell_dataset()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &n in &setup.sample_sizes {
        let w = c.sample_weights(n, &mut rng);
        let emp = build_empirical(&cells, &w)?;
        let mut worst = 0.0f64;
        for theta in &setup.theta_grid {
            let member = model_joint(&setup.model, theta, &setup.px, setup.ky)?;
            let est = tvd_loss(&emp, &setup.model, theta)?;
            worst = worst.max((est - clean.tvd(&member)).abs());
        }
        rows.push(BoundRow {
            label: format!("n={n}"),
            observed: worst,
            bound: Some(bound + setup.eta),
            pass: worst <= bound + setup.eta,
            note: "estimated TVD vs clean TVD".into(),
        });
    }

    Ok(BoundReport {
        claim: "robustness".into(),
        setting: format!("eps={eps}"),
        seed,
        trials: 1,
        observed: exact_max,
        bound,
        pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

/// `δ_n = (2^{K_y + K_x + 1} − 4) e^{−nε²/2}`.
pub fn concentration_delta(kx: usize, ky: usize, n: usize, eps: f64) -> f64 {
    (2f64.powi((kx + ky + 1) as i32) - 4.0) * (-(n as f64) * eps * eps / 2.0).exp()
}

#[derive(Debug, Clone)]
pub struct ConcentrationSetup {
    pub truth: FiniteJoint,
    pub model: ModelSpec,
    pub theta: Vec<f64>,
    pub eps: f64,
    /// Allowed relative deviation of the RMS ratio from `√(n'/n)`.
    pub rate_tolerance: f64,
}

impl ConcentrationSetup {
    /// `K_x = K_y = 2`, truth not in the model, `ε = 0.2`.
    pub fn two_by_two() -> Self {
        Self {
            truth: FiniteJoint::new(2, 2, vec![0.3, 0.15, 0.2, 0.35]).expect("valid pmf"),
            model: ModelSpec::binomial(1, 1),
            theta: vec![0.2, 0.4],
            eps: 0.2,
            rate_tolerance: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConcentrationStats {
    n: usize,
    exceed_freq: f64,
    rms: f64,
    delta: f64,
}

pub fn check_concentration(
    setup: &ConcentrationSetup,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    if n_grid.is_empty() || trials == 0 {
        return Err(Error::Config("need at least one sample size and one trial".into()));
    }
    let truth = &setup.truth;
    let px = truth.marginal_x();
    let target = truth.tvd(&model_joint(&setup.model, &setup.theta, &px, truth.ky)?);
    let cells = truth.cell_dataset()?;

    let mut stats = Vec::new();
    for (gi, &n) in n_grid.iter().enumerate() {
        let errors: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(gi as u64));
                rng.set_stream(t as u64);
                let w = truth.sample_weights(n, &mut rng);
                let emp = build_empirical(&cells, &w)?;
                Ok(tvd_loss(&emp, &setup.model, &setup.theta)? - target)
            })
            .collect::<Result<_>>()?;
        let exceed = errors.iter().filter(|e| e.abs() >= setup.eps).count();
        let rms = (errors.iter().map(|e| e * e).sum::<f64>() / trials as f64).sqrt();
        stats.push(ConcentrationStats {
            n,
            exceed_freq: exceed as f64 / trials as f64,
            rms,
            delta: concentration_delta(truth.kx, truth.ky, n, setup.eps),
        });
    }

    let mut rows = Vec::new();
    for s in &stats {
        if s.delta >= 1.0 {
            rows.push(BoundRow {
                label: format!("n={}", s.n),
                observed: s.exceed_freq,
                bound: Some(s.delta),
                pass: true,
                note: format!("vacuous bound, skipped; rms {:.5}", s.rms),
            });
        } else {
            rows.push(BoundRow {
                label: format!("n={}", s.n),
                observed: s.exceed_freq,
                bound: Some(s.delta),
                pass: s.exceed_freq <= s.delta,
                note: format!("exceedance frequency; rms {:.5}", s.rms),
            });
        }
    }
    for pair in stats.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let sigma = (a.exceed_freq * (1.0 - a.exceed_freq) / trials as f64).sqrt();
        rows.push(BoundRow {
            label: format!("monotone n={}->{}", a.n, b.n),
            observed: b.exceed_freq,
            bound: Some(a.exceed_freq + 2.0 * sigma),
            pass: b.exceed_freq <= a.exceed_freq + 2.0 * sigma,
            note: "exceedance must not grow beyond 2 sigma".into(),
        });
        let expected = (a.n as f64 / b.n as f64).sqrt();
        let ratio = b.rms / a.rms;
        rows.push(BoundRow {
            label: format!("rate n={}->{}", a.n, b.n),
            observed: ratio,
            bound: Some(expected),
            pass: (ratio / expected - 1.0).abs() <= setup.rate_tolerance,
            note: format!("rms ratio vs sqrt(n/n') within {:.0}%", setup.rate_tolerance * 100.0),
        });
    }

    let worst = stats
        .iter()
        .filter(|s| s.delta < 1.0)
        .map(|s| s.exceed_freq - s.delta)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(BoundReport {
        claim: "concentration".into(),
        setting: format!(
            "Kx={} Ky={} eps={} target TVD={:.6}",
            truth.kx, truth.ky, setup.eps, target
        ),
        seed,
        trials,
        observed: worst,
        bound: 0.0,
        pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

/// A finite outcome distribution `truth[y]` on `0..truth.len()` and a
/// covariate-free one-parameter model.
#[derive(Debug, Clone)]
pub struct ConsistencySetup {
    pub name: String,
    pub model: ModelSpec,
    pub truth: Vec<f64>,
    /// Parameter grid `lo..=hi` with spacing `step` for the exact minimizer.
    pub grid: (f64, f64, f64),
    /// Required median error at the largest sample size.
    pub tolerance: f64,
}

impl ConsistencySetup {
    /// `0.85 Poisson(λ) + 0.15 (Poisson(λ) + k)`, truncated to `0..=60` and
    /// renormalized; parameter `ln λ`.
    pub fn contaminated_poisson(lambda: f64, eps: f64, k: usize) -> Self {
        let max = 60;
        let pois: Vec<f64> = (0..=max)
            .map(|y| (y as f64 * lambda.ln() - lambda - crate::distributions::special::ln_factorial(y as u64)).exp())
            .collect();
        let mut truth: Vec<f64> = (0..=max)
            .map(|y| (1.0 - eps) * pois[y] + if y >= k { eps * pois[y - k] } else { 0.0 })
            .collect();
        let s: f64 = truth.iter().sum();
        truth.iter_mut().for_each(|v| *v /= s);
        Self {
            name: format!("poisson lambda={lambda} eps={eps} k={k}"),
            model: ModelSpec::poisson(0),
            truth,
            grid: (0.5f64.ln(), 15f64.ln(), 1e-4),
            tolerance: 0.05,
        }
    }

    /// Bernoulli truth `P(y=1) = (1 − ε) p + ε` (contamination at 1);
    /// parameter is the logit.
    pub fn contaminated_bernoulli(p: f64, eps: f64) -> Self {
        let p1 = (1.0 - eps) * p + eps;
        Self {
            name: format!("bernoulli p={p} eps={eps}"),
            model: ModelSpec::binomial(1, 0),
            truth: vec![1.0 - p1, p1],
            grid: (-5.0, 5.0, 1e-4),
            tolerance: 0.05,
        }
    }

    fn exact_tvd(&self, theta: f64) -> Result<f64> {
        let head: Vec<u64> = (0..self.truth.len() as u64).collect();
        let pmf = crate::distributions::model_pmf(&self.model, &[theta], &[], &head)?;
        let diff: f64 = pmf.head.iter().zip(&self.truth).map(|(h, t)| (h.1 - t).abs()).sum();
        Ok(0.5 * (diff + pmf.tail_mass))
    }

    /// Grid minimizer of the exact TVD.
    pub fn theta_star(&self) -> Result<(f64, f64)> {
        let (lo, hi, step) = self.grid;
        let steps = ((hi - lo) / step).floor() as usize;
        let mut best = (lo, f64::INFINITY);
        for i in 0..=steps {
            let t = lo + i as f64 * step;
            let v = self.exact_tvd(t)?;
            if v < best.1 {
                best = (t, v);
            }
        }
        Ok(best)
    }
}

pub fn check_consistency(
    setup: &ConsistencySetup,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    if n_grid.is_empty() || trials == 0 {
        return Err(Error::Config("need at least one sample size and one trial".into()));
    }
    if setup.model.param_dim() != 1 || setup.model.covariate_dim != 0 {
        return Err(Error::Config("consistency check needs a covariate-free one-parameter model".into()));
    }
    let (theta_star, _) = setup.theta_star()?;
    let joint = FiniteJoint::new(1, setup.truth.len(), setup.truth.clone())?;
    let outcomes: Vec<u64> = (0..setup.truth.len() as u64).collect();
    let cells = Dataset::from_outcomes(outcomes)?;
    let opts = FitOptions::default();

    let mut rows = Vec::new();
    let mut medians = Vec::new();
    for (gi, &n) in n_grid.iter().enumerate() {
        let fits: Vec<(f64, f64)> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(gi as u64));
                rng.set_stream(t as u64);
                let w = joint.sample_weights(n, &mut rng);
                let emp = build_empirical(&cells, &w)?;
                let tvd = fit_theta(&emp, &setup.model, LossKind::Tvd, &opts)?;
                let mle = fit_theta(&emp, &setup.model, LossKind::Kld, &opts)?;
                Ok((tvd.params[0], mle.params[0]))
            })
            .collect::<Result<_>>()?;
        let errs: Vec<f64> = fits.iter().map(|f| (f.0 - theta_star).abs()).collect();
        let q = quantile_summary(&errs)?;
        let mle_errs: Vec<f64> = fits.iter().map(|f| (f.1 - theta_star).abs()).collect();
        let mle_q = quantile_summary(&mle_errs)?;
        medians.push(q.q50);
        rows.push(BoundRow {
            label: format!("n={n}"),
            observed: q.q50,
            bound: (gi + 1 == n_grid.len()).then_some(setup.tolerance),
            pass: true,
            note: format!(
                "|theta_n - theta*| quartiles {:.4}/{:.4}/{:.4}; MLE median distance {:.4}",
                q.q25, q.q50, q.q75, mle_q.q50
            ),
        });
    }
    let monotone = medians.windows(2).all(|w| w[1] < w[0]);
    let last = *medians.last().expect("nonempty");
    let last_ok = last < setup.tolerance;
    for (i, row) in rows.iter_mut().enumerate() {
        row.pass = (i == 0 || medians[i] < medians[i - 1]) && (i + 1 < medians.len() || last_ok);
    }
    Ok(BoundReport {
        claim: "consistency".into(),
        setting: format!("{} theta*={theta_star:.5}", setup.name),
        seed,
        trials,
        observed: last,
        bound: setup.tolerance,
        pass: monotone && last_ok,
        rows,
    })
}
