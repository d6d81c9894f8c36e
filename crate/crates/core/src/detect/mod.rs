//! Entropy-gated radioactivity test and multi-key attribution.

mod gate;
mod run;
mod score;

pub use gate::{entropy_gate, gate_size, p_value, z_from_mean, z_statistic, GatedSet};
pub use run::{
    attribute, attribute_outputs, collect_outputs, distinct_tuples, detect, detect_outputs, outputs_digest,
    report_from_scored, truncate_outputs, write_scored_csv, Attribution, AttributionReport, DetectConfig,
    DetectionReport, Prepared, FLAG_LOW_POWER, MIN_SCORED,
};
pub use score::{score_outputs, EntropyTable, ModelOutput, ScoredToken};
