//! Corpus handling, watermark rewriting and experiment orchestration.

pub mod config;
pub mod corpus;
pub mod experiment;
pub mod prompts;
pub mod synth;
pub mod watermark;

pub use config::FlatConfig;
pub use corpus::{CorpusMode, CorpusRecord, Ingested, MalformedLine};
pub use experiment::{
    run_experiment, run_seed, summary_csv, summary_text, write_bundle, AttributionFixture, ExperimentBundle, ExperimentMode, ExperimentSpec, Fixture,
    Radioactive, RunRecord, SeedResult,
};
pub use prompts::{build_prompts, PromptMode, PromptSet};
pub use synth::{synth_corpus, SynthConfig, SynthDomain};
pub use watermark::{
    select_for_rewrite, watermark_corpus, RewriteConfig, RewriteFailure, WatermarkManifest,
};
