use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{normal_cdf, normal_sf, student_t_cdf, student_t_sf};

/// Direction of a one-sided two-sample alternative, stated for the positive group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// H1: the positive group's mean (or proportion) is smaller.
    PosLess,
    /// H1: the positive group's mean (or proportion) is larger.
    PosGreater,
}

impl Alternative {
    pub fn flipped(self) -> Self {
        match self {
            Alternative::PosLess => Alternative::PosGreater,
            Alternative::PosGreater => Alternative::PosLess,
        }
    }
}

pub const FLAG_DEGENERATE: &str = "DEGENERATE";
pub const FLAG_SMALL_SAMPLE: &str = "SMALL_SAMPLE";
pub const FLAG_RIDGE: &str = "RIDGE_FALLBACK";

/// Outcome of a dataset-level two-sample test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitTestResult {
    pub method: String,
    pub statistic: Option<f64>,
    pub degrees_of_freedom: Option<f64>,
    pub p_value: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
    pub alternative: Alternative,
    pub flags: Vec<String>,
    /// Free-form `key=value` settings that shaped the result.
    pub notes: Vec<String>,
}

impl SplitTestResult {
    fn new(method: &str, n_pos: usize, n_neg: usize, alternative: Alternative) -> Self {
        Self {
            method: method.to_string(),
            statistic: None,
            degrees_of_freedom: None,
            p_value: None,
            n_pos,
            n_neg,
            alternative,
            flags: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn is_flagged(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value.is_some_and(|p| p < alpha)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_finite(xs: &[f64], what: &'static str) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite value in {what}")));
    }
    Ok(())
}

pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Welch's unequal-variance t-test with a one-sided alternative.
///
/// `t = (mean_pos - mean_neg) / sqrt(s_pos^2/n_pos + s_neg^2/n_neg)`, df by
/// Welch-Satterthwaite. Groups smaller than two or with zero variance give a
/// flagged result without a p-value.
pub fn welch_t_one_sided(pos: &[f64], neg: &[f64], alternative: Alternative) -> Result<SplitTestResult> {
    check_finite(pos, "positive scores")?;
    check_finite(neg, "negative scores")?;
    let mut res = SplitTestResult::new("welch-t", pos.len(), neg.len(), alternative);
    if pos.len() < 2 || neg.len() < 2 {
        res.flags.push(FLAG_DEGENERATE.into());
        res.notes.push("fewer than 2 samples in a group".into());
        return Ok(res);
    }
    let (m_pos, v_pos) = mean_var(pos);
    let (m_neg, v_neg) = mean_var(neg);
    if v_pos == 0.0 || v_neg == 0.0 {
        res.flags.push(FLAG_DEGENERATE.into());
        res.notes.push("zero variance in a group".into());
        return Ok(res);
    }
    let a = v_pos / pos.len() as f64;
    let b = v_neg / neg.len() as f64;
    let t = (m_pos - m_neg) / (a + b).sqrt();
    let df = (a + b).powi(2) / (a * a / (pos.len() - 1) as f64 + b * b / (neg.len() - 1) as f64);
    let p = match alternative {
        Alternative::PosLess => student_t_cdf(t, df),
        Alternative::PosGreater => student_t_sf(t, df),
    };
    res.statistic = Some(t);
    res.degrees_of_freedom = Some(df);
    res.p_value = Some(p.clamp(0.0, 1.0));
    Ok(res)
}

/// Pooled two-proportion z-test.
///
/// `z = (p_neg - p_pos) / sqrt(p_hat (1 - p_hat) (1/n_neg + 1/n_pos))` with
/// `p_hat = (x_neg + x_pos) / (n_neg + n_pos)`. `PosGreater` is the usual
/// "training split is recognised more often" alternative and gives `p = Phi(z)`.
pub fn two_proportion_z(
    x_pos: u64,
    n_pos: u64,
    x_neg: u64,
    n_neg: u64,
    alternative: Alternative,
) -> Result<SplitTestResult> {
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidConfig("two-proportion test needs n >= 1 per group".into()));
    }
    if x_pos > n_pos || x_neg > n_neg {
        return Err(Error::InvalidConfig("success count exceeds trials".into()));
    }
    let mut res = SplitTestResult::new("two-proportion-z", n_pos as usize, n_neg as usize, alternative);
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let p_hat = (x_pos + x_neg) as f64 / (np + nn);
    if p_hat == 0.0 || p_hat == 1.0 {
        res.flags.push(FLAG_DEGENERATE.into());
        res.notes.push(format!("pooled proportion {p_hat}"));
        return Ok(res);
    }
    let se = (p_hat * (1.0 - p_hat) * (1.0 / nn + 1.0 / np)).sqrt();
    let z = (x_neg as f64 / nn - x_pos as f64 / np) / se;
    let p = match alternative {
        Alternative::PosGreater => normal_cdf(z),
        Alternative::PosLess => normal_sf(z),
    };
    res.statistic = Some(z);
    res.p_value = Some(p);
    Ok(res)
}

#[cfg(test)]
mod unit {
    use super::*;

    #[test]
    fn welch_reference() {
        let r = welch_t_one_sided(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::PosLess).unwrap();
        assert!((r.statistic.unwrap() + 3.674_234_614_174_767).abs() < 1e-12);
        assert!((r.degrees_of_freedom.unwrap() - 4.0).abs() < 1e-12);
        assert!((r.p_value.unwrap() - 0.010_655_820_564_378_363).abs() < 1e-10);
    }

    #[test]
    fn welch_unequal_reference() {
        let r = welch_t_one_sided(
            &[1.5, 2.25, 3.0, 0.5, 2.0],
            &[2.0, 4.5, 3.25, 5.0],
            Alternative::PosLess,
        )
        .unwrap();
        assert!((r.statistic.unwrap() + 2.325_534_085_864_268_6).abs() < 1e-12);
        assert!((r.degrees_of_freedom.unwrap() - 5.163_523_136_602_555).abs() < 1e-10);
        assert!((r.p_value.unwrap() - 0.032_972_551_682_236_72).abs() < 1e-10);
    }

    #[test]
    fn welch_identical_and_swapped() {
        let xs = [1.0, 4.0, 2.5, 3.0];
        let r = welch_t_one_sided(&xs, &xs, Alternative::PosLess).unwrap();
        assert_eq!(r.statistic, Some(0.0));
        assert!((r.p_value.unwrap() - 0.5).abs() < 1e-15);

        let a = [0.3, 1.2, 0.8, 2.0];
        let b = [1.0, 1.9, 2.7];
        let p1 = welch_t_one_sided(&a, &b, Alternative::PosLess).unwrap().p_value.unwrap();
        let p2 = welch_t_one_sided(&b, &a, Alternative::PosLess).unwrap().p_value.unwrap();
        assert!((p1 + p2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn welch_degenerate() {
        let r = welch_t_one_sided(&[1.0, 1.0], &[2.0, 3.0], Alternative::PosLess).unwrap();
        assert!(r.is_flagged(FLAG_DEGENERATE) && r.p_value.is_none());
        let r = welch_t_one_sided(&[1.0], &[2.0, 3.0], Alternative::PosLess).unwrap();
        assert!(r.is_flagged(FLAG_DEGENERATE));
        assert!(welch_t_one_sided(&[f64::NAN, 1.0], &[2.0, 3.0], Alternative::PosLess).is_err());
    }

    #[test]
    fn two_proportion_reference() {
        let r = two_proportion_z(80, 100, 50, 100, Alternative::PosGreater).unwrap();
        assert!((r.statistic.unwrap() + 4.447_495_899_966_607).abs() < 1e-12);
        assert!((r.p_value.unwrap() - 4.343_855_838_500_025e-6).abs() < 1e-15);

        let doubled = two_proportion_z(160, 200, 100, 200, Alternative::PosGreater).unwrap();
        let ratio = doubled.statistic.unwrap() / r.statistic.unwrap();
        assert!((ratio - 2f64.sqrt()).abs() < 1e-12);

        let eq = two_proportion_z(30, 60, 15, 30, Alternative::PosGreater).unwrap();
        assert_eq!(eq.statistic, Some(0.0));
        assert_eq!(eq.p_value, Some(0.5));
    }

    #[test]
    fn two_proportion_degenerate() {
        let r = two_proportion_z(0, 10, 0, 12, Alternative::PosGreater).unwrap();
        assert!(r.is_flagged(FLAG_DEGENERATE) && r.p_value.is_none());
        let r = two_proportion_z(10, 10, 12, 12, Alternative::PosGreater).unwrap();
        assert!(r.is_flagged(FLAG_DEGENERATE));
        assert!(two_proportion_z(11, 10, 1, 12, Alternative::PosGreater).is_err());
        assert!(two_proportion_z(0, 0, 1, 12, Alternative::PosGreater).is_err());
    }
}
