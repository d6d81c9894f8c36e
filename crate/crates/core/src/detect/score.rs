use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::wm::{DepthWeights, GVector, WatermarkKey, WatermarkParams};
use crate::TokenId;

/// A prompt and the tokens a model produced after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub prompt: Vec<TokenId>,
    pub generated: Vec<TokenId>,
}

impl ModelOutput {
    pub fn new(prompt: Vec<TokenId>, generated: Vec<TokenId>) -> Self {
        Self { prompt, generated }
    }
}

/// One generated token with its auxiliary entropy and keyed score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredToken {
    pub token: TokenId,
    pub seq_id: usize,
    /// Index within the generated part of the sequence.
    pub offset: usize,
    /// Auxiliary-model entropy in nats.
    pub entropy: f64,
    pub gbar: f64,
    pub gvector: GVector,
    /// Seed of the position; equal `(seed, token)` pairs share their g-values.
    pub seed: u64,
}

/// Key-independent part of scoring: where the generated tokens are and how
/// uncertain the auxiliary model was at each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTable {
    rows: Vec<EntropyRow>,
    skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct EntropyRow {
    seq_id: usize,
    offset: usize,
    entropy: f64,
}

impl EntropyTable {
    /// Entropy of the auxiliary model at every generated position, given the
    /// full preceding context. Sequences with no generated tokens are counted
    /// in [`skipped`](Self::skipped).
    pub fn compute<M: LanguageModel + ?Sized>(outputs: &[ModelOutput], aux: &M) -> Result<Self> {
        let mut rows = Vec::new();
        let mut skipped = 0;
        let mut history = Vec::new();
        for (seq_id, out) in outputs.iter().enumerate() {
            if out.generated.is_empty() {
                skipped += 1;
                continue;
            }
            history.clear();
            history.extend_from_slice(&out.prompt);
            for (offset, &tok) in out.generated.iter().enumerate() {
                let entropy = aux.entropy(&history)?.max(0.0);
                rows.push(EntropyRow {
                    seq_id,
                    offset,
                    entropy,
                });
                history.push(tok);
            }
        }
        Ok(Self { rows, skipped })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Attach keyed scores. `outputs` must be the slice the table was computed from.
    pub fn score(
        &self,
        outputs: &[ModelOutput],
        key: &WatermarkKey,
        params: &WatermarkParams,
        weights: &DepthWeights,
    ) -> Result<Vec<ScoredToken>> {
        params.validate()?;
        if weights.d() != params.d {
            return Err(Error::DepthMismatch {
                gvector: params.d,
                weights: weights.d(),
            });
        }
        let mut scored = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let out = outputs.get(row.seq_id).ok_or_else(mismatch)?;
            let token = *out.generated.get(row.offset).ok_or_else(mismatch)?;
            let seed = params.seed_for_split(key, &out.prompt, &out.generated[..row.offset])?;
            let gvector = params.g_vector(seed, token)?;
            let gbar = weights.weighted_g(&gvector)?;
            scored.push(ScoredToken {
                token,
                seq_id: row.seq_id,
                offset: row.offset,
                entropy: row.entropy,
                gbar,
                gvector,
                seed,
            });
        }
        Ok(scored)
    }
}

fn mismatch() -> Error {
    Error::InvalidConfig("entropy table does not match outputs".into())
}

/// Entropy and depth-weighted score for every generated token.
pub fn score_outputs<M: LanguageModel + ?Sized>(
    outputs: &[ModelOutput],
    key: &WatermarkKey,
    aux: &M,
    params: &WatermarkParams,
) -> Result<Vec<ScoredToken>> {
    let weights = DepthWeights::new(params.d)?;
    EntropyTable::compute(outputs, aux)?.score(outputs, key, params, &weights)
}
