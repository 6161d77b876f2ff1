//! Scalar special functions used by the model families.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(t) = -ln(1 + e^{-t})`, stable for large `|t|`.
pub fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

pub fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t * FRAC_1_SQRT_2)
}

/// `ln Φ(t)`. Uses the asymptotic series below -30 where `erfc` underflows.
pub fn log_normal_cdf(t: f64) -> f64 {
    if t > 0.0 {
        (-0.5 * libm::erfc(t * FRAC_1_SQRT_2)).ln_1p()
    } else if t > -30.0 {
        (0.5 * libm::erfc(-t * FRAC_1_SQRT_2)).ln()
    } else {
        let z = 1.0 / (t * t);
        let series = 1.0 - z + 3.0 * z * z - 15.0 * z * z * z;
        -0.5 * t * t - LN_SQRT_2PI - (-t).ln() + series.ln()
    }
}

/// `φ(t) / Φ(t)`, finite for all finite `t`.
pub fn normal_hazard_ratio(t: f64) -> f64 {
    (-0.5 * t * t - LN_SQRT_2PI - log_normal_cdf(t)).exp()
}

pub fn ln_factorial(k: u64) -> f64 {
    libm::lgamma(k as f64 + 1.0)
}

pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}
