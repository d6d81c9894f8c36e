//! Count-based autoregressive models standing in for the rewrite, suspect and
//! auxiliary models.

mod ngram;
mod tokenizer;

pub use ngram::{NgramConfig, NgramModel, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use tokenizer::{segment, Tokenizer, BOS_STR, EOS_STR, UNK_STR};

use crate::error::Result;
use crate::sampler::TokenDistribution;
use crate::TokenId;

/// A source of next-token distributions.
///
/// `context` is the full history (prompt plus generated tokens) without BOS
/// padding. Implementations must be safe for concurrent read-only queries.
pub trait LanguageModel: Sync {
    fn next_token_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution>;

    /// Shannon entropy of the next-token distribution, in nats.
    fn entropy(&self, context: &[TokenId]) -> Result<f64> {
        Ok(self.next_token_distribution(context)?.entropy())
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn next_token_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution> {
        (**self).next_token_distribution(context)
    }

    fn entropy(&self, context: &[TokenId]) -> Result<f64> {
        (**self).entropy(context)
    }
}

/// A model that ignores its context and always returns the same distribution.
#[derive(Debug, Clone)]
pub struct FixedModel {
    dist: TokenDistribution,
}

impl FixedModel {
    pub fn new(dist: TokenDistribution) -> Self {
        Self { dist }
    }
}

impl LanguageModel for FixedModel {
    fn next_token_distribution(&self, _context: &[TokenId]) -> Result<TokenDistribution> {
        Ok(self.dist.clone())
    }
}
