//! Distortion-free text watermarking by key-guided tournament sampling, and
//! black-box detection of models fine-tuned on watermarked corpora.

pub mod baselines;
pub mod detect;
pub mod digest;
pub mod error;
pub mod lm;
pub mod pipeline;
pub mod sampler;
pub mod stats;
pub mod wm;

pub use error::{Error, Result};

pub type TokenId = u32;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const UNK: TokenId = 2;
