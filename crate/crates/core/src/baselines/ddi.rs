use nalgebra::{DMatrix, DVector};

use super::features::SampleFeatures;
use super::split::{welch_t_one_sided, Alternative, SplitTestResult, FLAG_RIDGE, FLAG_SMALL_SAMPLE};
use crate::digest::sub_seed;
use crate::error::{Error, Result};

/// Two-sided winsorization tail.
pub const WINSOR_TAIL: f64 = 0.025;
/// Diagonal added to the normal equations when they are numerically singular.
pub const RIDGE: f64 = 1e-6;
/// Below this many samples per side the result is flagged.
pub const MIN_PER_SIDE: usize = 20;

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n-1) p`), on already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Clamp each column to its pooled `[2.5%, 97.5%]` quantiles, then center and
/// scale it to unit sample variance. Constant columns become zero.
fn winsorize_standardize(x: &mut DMatrix<f64>) {
    let n = x.nrows();
    for mut col in x.column_iter_mut() {
        let mut s: Vec<f64> = col.iter().copied().collect();
        s.sort_by(f64::total_cmp);
        let (lo, hi) = (quantile_sorted(&s, WINSOR_TAIL), quantile_sorted(&s, 1.0 - WINSOR_TAIL));
        col.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        let sd = var.sqrt();
        // relative threshold: clamping can leave round-off spread in a constant column
        let scale = mean.abs().max(1.0);
        col.iter_mut().for_each(|v| {
            *v = if sd > 1e-12 * scale { (*v - mean) / sd } else { 0.0 };
        });
    }
}

/// Fit `y ~ [1, X]` by least squares; falls back to ridge when `X'X` is singular.
fn fit_linear(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, bool) {
    let design = x.clone().insert_column(0, 1.0);
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * y;
    let eig = xtx.clone().symmetric_eigen().eigenvalues;
    let max = eig.iter().copied().fold(0.0f64, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let well_posed = max > 0.0 && min > 1e-12 * max;
    if well_posed {
        if let Some(ch) = xtx.clone().cholesky() {
            return (ch.solve(&xty), false);
        }
    }
    let mut reg = xtx;
    for i in 1..reg.nrows() {
        reg[(i, i)] += RIDGE;
    }
    // intercept left unpenalised
    let beta = reg
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&xty))
        .or_else(|| reg.lu().solve(&xty))
        .unwrap_or_else(|| DVector::zeros(design.ncols()));
    (beta, true)
}

fn split_rank(rng_seed: u64, side: u64, id: &str) -> u64 {
    sub_seed(rng_seed, &format!("ddi-split/{id}"), &[side])
}

/// Indices of one side's samples that land in half A. Depends only on the
/// seed and the ids, not on their order.
fn half_a(samples: &[SampleFeatures], side: u64, rng_seed: u64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by_key(|&i| (split_rank(rng_seed, side, &samples[i].id), samples[i].id.clone()));
    let mut in_a = vec![false; samples.len()];
    for &i in &order[..samples.len() / 2] {
        in_a[i] = true;
    }
    in_a
}

/// Dataset inference from a learned linear combination of sample features.
///
/// Features are winsorized and standardized on the pooled data, each side is
/// halved by a seeded hash of the sample ids, a least-squares combiner
/// (intercept included) is fit on half A against labels suspect = 0 and
/// validation = 1, and half B is scored and compared with a one-sided Welch
/// test (H1: suspect scores are lower).
pub fn ddi_test(
    suspect: &[SampleFeatures],
    validation: &[SampleFeatures],
    rng_seed: u64,
) -> Result<SplitTestResult> {
    if suspect.len() < 2 || validation.len() < 2 {
        return Err(Error::InvalidConfig("DDI needs at least 2 samples per side".into()));
    }
    for side in [suspect, validation] {
        let mut ids: Vec<&str> = side.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("duplicate sample id in DDI input".into()));
        }
    }
    let all: Vec<&SampleFeatures> = suspect.iter().chain(validation).collect();
    let nf = SampleFeatures::NAMES.len();
    let mut x = DMatrix::from_fn(all.len(), nf, |i, j| all[i].vector()[j]);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("non-finite DDI feature".into()));
    }
    winsorize_standardize(&mut x);

    let mut in_a = half_a(suspect, 0, rng_seed);
    in_a.extend(half_a(validation, 1, rng_seed));
    let labels: Vec<f64> = (0..all.len())
        .map(|i| if i < suspect.len() { 0.0 } else { 1.0 })
        .collect();

    let rows_a: Vec<usize> = (0..all.len()).filter(|&i| in_a[i]).collect();
    let xa = x.select_rows(rows_a.iter());
    let ya = DVector::from_iterator(rows_a.len(), rows_a.iter().map(|&i| labels[i]));
    let (beta, ridge) = fit_linear(&xa, &ya);

    let score = |i: usize| beta[0] + (0..nf).map(|j| beta[j + 1] * x[(i, j)]).sum::<f64>();
    let b_suspect: Vec<f64> = (0..suspect.len()).filter(|&i| !in_a[i]).map(score).collect();
    let b_val: Vec<f64> = (suspect.len()..all.len()).filter(|&i| !in_a[i]).map(score).collect();

    let mut res = welch_t_one_sided(&b_suspect, &b_val, Alternative::PosLess)?;
    res.method = "ddi".into();
    res.n_pos = suspect.len();
    res.n_neg = validation.len();
    if suspect.len() < MIN_PER_SIDE || validation.len() < MIN_PER_SIDE {
        res.flags.push(FLAG_SMALL_SAMPLE.into());
    }
    if ridge {
        res.flags.push(FLAG_RIDGE.into());
        res.notes.push(format!("ridge={RIDGE}"));
    }
    res.notes.push("intercept=true".into());
    res.notes.push(format!("winsor_tail={WINSOR_TAIL}"));
    res.notes.push(format!("half_b={}+{}", b_suspect.len(), b_val.len()));
    Ok(res)
}
