//! Dense BFGS with a backtracking Armijo line search.
//!
//! The TVD objective is only piecewise smooth, so a line search can stall at
//! a kink where the gradient does not vanish. When that happens the
//! minimizer resets the inverse-Hessian approximation, retries along the
//! steepest-descent direction, and finally probes each coordinate with a
//! small relative step. If no probe lowers the objective the point is
//! reported as a nonsmooth stationary point and counted as converged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step contraction per backtracking step.
    pub contraction: f64,
    pub max_backtracks: usize,
    /// Relative size of the coordinate probes used at stalled line searches.
    pub probe_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            armijo: 1e-4,
            contraction: 0.5,
            max_backtracks: 60,
            probe_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    /// Line search stalled and no coordinate probe decreased the objective.
    NonsmoothStationary,
    LineSearchFailure,
    MaxIterations,
    /// Set by non-BFGS routines that ran a fixed schedule (closed forms, SGD).
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub params: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub termination: Termination,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inverse-Hessian approximation, row-major.
struct InverseHessian {
    n: usize,
    h: Vec<f64>,
    fresh: bool,
}

impl InverseHessian {
    fn scaled_identity(n: usize, scale: f64) -> Self {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = scale;
        }
        Self { n, h, fresh: true }
    }

    fn direction(&self, g: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| -dot(&self.h[i * self.n..(i + 1) * self.n], g))
            .collect()
    }

    /// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`. Skipped when the curvature
    /// condition fails.
    fn update(&mut self, s: &[f64], y: &[f64]) {
        let n = self.n;
        let sy = dot(s, y);
        if !(sy > 1e-12 * norm(s) * norm(y)) {
            return;
        }
        if self.fresh {
            let scale = sy / dot(y, y);
            *self = Self::scaled_identity(n, scale);
            self.fresh = false;
        }
        let rho = 1.0 / sy;
        let hy: Vec<f64> = (0..n).map(|i| dot(&self.h[i * n..(i + 1) * n], y)).collect();
        let yhy = dot(y, &hy);
        for i in 0..n {
            for j in 0..n {
                self.h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                    + (rho * rho * yhy + rho) * s[i] * s[j];
            }
        }
    }
}

/// Minimizes `objective` starting from `x0`.
///
/// `objective` may return a non-finite value (or `NaN`) to reject a trial
/// point; the line search then contracts. The returned objective never
/// exceeds `objective(x0)`.
pub fn bfgs<F, G>(mut objective: F, mut gradient: G, x0: &[f64], opts: &BfgsOptions) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("initial point is not finite".into()));
    }
    let mut x = x0.to_vec();
    let mut f = objective(&x);
    if !f.is_finite() {
        return Err(Error::Numerical(format!("objective at the initial point is {f}")));
    }
    let mut g = gradient(&x);
    if g.len() != n || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("gradient at the initial point is not finite".into()));
    }
    let mut gnorm = norm(&g);
    let initial_scale = 1.0 / gnorm.max(1.0);
    let mut hess = InverseHessian::scaled_identity(n, initial_scale);

    let finish = |x: Vec<f64>, f: f64, gnorm: f64, iterations: usize, termination: Termination| {
        let converged = matches!(
            termination,
            Termination::GradientTolerance | Termination::NonsmoothStationary
        );
        Ok(OptimResult { params: x, objective: f, converged, iterations, grad_norm: gnorm, termination })
    };

    if gnorm < opts.grad_tol {
        return finish(x, f, gnorm, 0, Termination::GradientTolerance);
    }

    let mut xn = vec![0.0; n];
    for iter in 1..=opts.max_iter {
        let mut d = hess.direction(&g);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hess = InverseHessian::scaled_identity(n, initial_scale);
            d = hess.direction(&g);
            slope = dot(&g, &d);
        }

        let mut accepted = line_search(&mut objective, &x, f, &d, slope, opts, &mut xn);
        if accepted.is_none() && !hess.fresh {
            // retry along the (scaled) steepest-descent direction
            hess = InverseHessian::scaled_identity(n, initial_scale);
            d = hess.direction(&g);
            slope = dot(&g, &d);
            accepted = line_search(&mut objective, &x, f, &d, slope, opts, &mut xn);
        }
        let fnew = match accepted {
            Some(v) => v,
            None => match coordinate_probe(&mut objective, &x, f, opts.probe_step) {
                Some((xp, fp)) => {
                    xn.copy_from_slice(&xp);
                    hess = InverseHessian::scaled_identity(n, initial_scale);
                    fp
                }
                None => return finish(x, f, gnorm, iter - 1, Termination::NonsmoothStationary),
            },
        };

        let gnew = gradient(&xn);
        if gnew.iter().any(|v| !v.is_finite()) {
            return finish(x, f, gnorm, iter - 1, Termination::LineSearchFailure);
        }
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        hess.update(&s, &y);

        x.copy_from_slice(&xn);
        f = fnew;
        g = gnew;
        gnorm = norm(&g);
        if gnorm < opts.grad_tol {
            return finish(x, f, gnorm, iter, Termination::GradientTolerance);
        }
    }
    finish(x, f, gnorm, opts.max_iter, Termination::MaxIterations)
}

/// Backtracking Armijo search from `x` along `d`. On success writes the
/// accepted point into `out` and returns its objective.
fn line_search<F: FnMut(&[f64]) -> f64>(
    objective: &mut F,
    x: &[f64],
    f: f64,
    d: &[f64],
    slope: f64,
    opts: &BfgsOptions,
    out: &mut [f64],
) -> Option<f64> {
    let mut t = 1.0;
    for _ in 0..=opts.max_backtracks {
        for i in 0..x.len() {
            out[i] = x[i] + t * d[i];
        }
        if out == x {
            return None;
        }
        let ft = objective(out);
        if ft.is_finite() && ft <= f + opts.armijo * t * slope && ft < f {
            return Some(ft);
        }
        t *= opts.contraction;
    }
    None
}

/// Tries `x ± h e_i` for every coordinate and returns the best strictly
/// improving point, if any.
fn coordinate_probe<F: FnMut(&[f64]) -> f64>(
    objective: &mut F,
    x: &[f64],
    f: f64,
    rel_step: f64,
) -> Option<(Vec<f64>, f64)> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trial = x.to_vec();
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(1.0);
        for sign in [1.0, -1.0] {
            trial[i] = x[i] + sign * h;
            let ft = objective(&trial);
            let target = best.as_ref().map_or(f, |b| b.1);
            if ft.is_finite() && ft < target {
                best = Some((trial.clone(), ft));
            }
        }
        trial[i] = x[i];
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(a: &[f64]) -> (impl Fn(&[f64]) -> f64 + '_, impl Fn(&[f64]) -> Vec<f64> + '_) {
        (
            move |x: &[f64]| x.iter().zip(a).map(|(u, v)| (u - v) * (u - v)).sum(),
            move |x: &[f64]| x.iter().zip(a).map(|(u, v)| 2.0 * (u - v)).collect(),
        )
    }

    #[test]
    fn quadratic_minimum() {
        let a = [1.5, -2.0, 0.25];
        let (f, g) = quad(&a);
        for x0 in [[0.0, 0.0, 0.0], [10.0, -30.0, 4.0], [-1e3, 1e2, 5.0]] {
            let r = bfgs(&f, &g, &x0, &BfgsOptions::default()).unwrap();
            assert!(r.converged);
            for (p, t) in r.params.iter().zip(&a) {
                assert!((p - t).abs() < 1e-8, "{:?}", r);
            }
        }
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let g = |x: &[f64]| {
            vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ]
        };
        let opts = BfgsOptions { grad_tol: 1e-9, ..Default::default() };
        let r = bfgs(f, g, &[-1.2, 1.0], &opts).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.params[0] - 1.0).abs() < 1e-5 && (r.params[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let a = [2.0];
        let (f, g) = quad(&a);
        let r = bfgs(&f, &g, &[2.0], &BfgsOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 1);
    }

    #[test]
    fn kinked_minimum_is_detected() {
        // |x − 1| + 0.1 (x − 1)² has a kink at its minimum
        let f = |x: &[f64]| (x[0] - 1.0).abs() + 0.1 * (x[0] - 1.0).powi(2);
        let g = |x: &[f64]| vec![(x[0] - 1.0).signum() + 0.2 * (x[0] - 1.0)];
        let r = bfgs(f, g, &[4.3], &BfgsOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.termination, Termination::NonsmoothStationary);
        assert!((r.params[0] - 1.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let (f, g) = quad(&[0.0]);
        assert!(bfgs(&f, &g, &[f64::NAN], &BfgsOptions::default()).is_err());
        let inf = |_: &[f64]| f64::INFINITY;
        assert!(bfgs(inf, &g, &[0.0], &BfgsOptions::default()).is_err());
    }

    #[test]
    fn never_worse_than_start() {
        // bounded-below function with a flat region and a rejected domain
        let f = |x: &[f64]| if x[0] < -1.0 { f64::NAN } else { (x[0] * 3.0).sin() + 0.01 * x[0] * x[0] };
        let g = |x: &[f64]| vec![3.0 * (x[0] * 3.0).cos() + 0.02 * x[0]];
        for x0 in [-0.9, 0.0, 2.0, 7.5] {
            let r = bfgs(f, g, &[x0], &BfgsOptions::default()).unwrap();
            assert!(r.objective <= f(&[x0]));
        }
    }
}
