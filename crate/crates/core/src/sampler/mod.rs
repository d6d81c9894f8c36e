//! Distribution shaping and key-guided tournament sampling.

mod distribution;
mod generate;
mod tournament;

pub use distribution::{CumulativeSampler, TokenDistribution};
pub use generate::{
    generate_plain, generate_sequence, score_sequence_unweighted, shape_distribution,
    GSummary, GenerationRecord, SamplerConfig, Shaping,
};
pub use tournament::tournament_select;
