//! Grey-box comparison detectors and the two-sample tests they feed.

mod ddi;
mod features;
mod mia;
mod split;

pub use ddi::{ddi_test, quantile_sorted, MIN_PER_SIDE, RIDGE, WINSOR_TAIL};
pub use features::{
    compress_ratio, maxk_logp, mink_score, SampleFeatures, COMPRESSION_LEVEL, FEATURE_TAIL_FRACTION,
    MINK_FRACTION,
};
pub use mia::{mia_scores, mia_split_test, mia_split_test_k, sample_features, write_features_csv, MiaMethod};
pub use split::{
    two_proportion_z, welch_t_one_sided, Alternative, SplitTestResult, FLAG_DEGENERATE, FLAG_RIDGE,
    FLAG_SMALL_SAMPLE,
};
