//! Tail probabilities for the standard normal and Student-t distributions.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

/// A p-value with its base-10 logarithm, which stays finite after `p` underflows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValue {
    pub p: f64,
    pub log10_p: f64,
}

impl PValue {
    pub fn from_p(p: f64) -> Self {
        Self {
            p,
            log10_p: p.log10(),
        }
    }

    /// `-log10(p)`, the usual "significance" scale.
    pub fn neg_log10(&self) -> f64 {
        -self.log10_p
    }
}

/// `1 - Phi(z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// `Phi(z)`.
pub fn normal_cdf(z: f64) -> f64 {
    normal_sf(-z)
}

/// `log10(1 - Phi(z))`, switching to the asymptotic tail series once the
/// direct value would lose range.
pub fn log10_normal_sf(z: f64) -> f64 {
    if z < 30.0 {
        return normal_sf(z).log10();
    }
    // ln Q(z) = -z^2/2 - ln z - ln(2 pi)/2 + ln(1 - 1/z^2 + 3/z^4 - 15/z^6 + ...)
    let inv_z2 = 1.0 / (z * z);
    let mut term = 1.0;
    let mut series = 1.0;
    for n in 1..12 {
        let next = -term * (2 * n - 1) as f64 * inv_z2;
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        series += term;
    }
    let ln_q = -0.5 * z * z - z.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln();
    ln_q / std::f64::consts::LN_10
}

/// One-sided upper-tail p-value of a standard normal statistic.
pub fn normal_upper_p(z: f64) -> PValue {
    let log10_p = log10_normal_sf(z);
    let p = if z < 30.0 {
        normal_sf(z)
    } else {
        10f64.powf(log10_p)
    };
    PValue { p, log10_p }
}

/// One-sided lower-tail p-value of a standard normal statistic.
pub fn normal_lower_p(z: f64) -> PValue {
    normal_upper_p(-z)
}

/// `P(T <= t)` for Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return 1.0;
    }
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    let x = df / (df + t * t);
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, x);
    if t <= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// `P(T >= t)`, computed without cancellation for large positive `t`.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    student_t_cdf(-t, df)
}
