use serde::{Deserialize, Serialize};

use super::key::WatermarkKey;
use super::prf::{derive_seed, g_vector, GVector, SeedContext};
use crate::error::{Error, Result};
use crate::{TokenId, BOS};

/// Parameters shared by watermark embedding and detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatermarkParams {
    /// Number of g-value layers (tournament rounds).
    pub d: usize,
    /// Context window length feeding the seed.
    pub w: usize,
    /// Mix the absolute position into the seed instead of the constant salt 0.
    pub salt_with_position: bool,
}

impl Default for WatermarkParams {
    fn default() -> Self {
        Self {
            d: 4,
            w: 4,
            salt_with_position: false,
        }
    }
}

impl WatermarkParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::ZeroDepth);
        }
        if self.d > 16 {
            return Err(Error::InvalidConfig(format!("depth {} exceeds 16", self.d)));
        }
        if self.w == 0 {
            return Err(Error::InvalidConfig("context window length must be >= 1".into()));
        }
        Ok(())
    }

    /// Seed for the token at index `history.len()` of a sequence.
    pub fn seed_for(&self, key: &WatermarkKey, history: &[TokenId]) -> Result<u64> {
        let ctx = SeedContext::from_history(history, self.w)?;
        let salt = if self.salt_with_position {
            history.len() as u64
        } else {
            0
        };
        Ok(derive_seed(key, &ctx, salt))
    }

    /// The seed window and salt for the token following `head ++ tail`.
    pub fn context_of(&self, head: &[TokenId], tail: &[TokenId]) -> Result<(SeedContext, u64)> {
        let from_tail = tail.len().min(self.w);
        let from_head = head.len().min(self.w - from_tail);
        let mut window = Vec::with_capacity(self.w);
        window.extend(std::iter::repeat_n(BOS, self.w - from_tail - from_head));
        window.extend_from_slice(&head[head.len() - from_head..]);
        window.extend_from_slice(&tail[tail.len() - from_tail..]);
        let salt = if self.salt_with_position {
            (head.len() + tail.len()) as u64
        } else {
            0
        };
        Ok((SeedContext::new(window)?, salt))
    }

    /// Same as [`seed_for`](Self::seed_for) on `head ++ tail`, without concatenating.
    pub fn seed_for_split(&self, key: &WatermarkKey, head: &[TokenId], tail: &[TokenId]) -> Result<u64> {
        let (ctx, salt) = self.context_of(head, tail)?;
        Ok(derive_seed(key, &ctx, salt))
    }

    pub fn g_vector(&self, seed: u64, token: TokenId) -> Result<GVector> {
        g_vector(seed, token, self.d)
    }
}
