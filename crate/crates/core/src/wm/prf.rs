//! Keyed pseudorandom functions behind the watermark.
//!
//! Both functions are SHA-256 with a domain-separation prefix, big-endian
//! fixed-width integer encodings, and truncation:
//!
//! ```text
//! seed   = be_u64(SHA256("radiomark/seed/v1" || key[32] || be_u32(w) || be_u32(tok)*w || be_u64(salt))[0..8])
//! g(j,x) = SHA256("radiomark/g/v1" || be_u64(seed) || be_u32(x) || be_u32(j))[0] & 1     (j = 1..=d)
//! ```
//!
//! Golden vectors for this construction live in `testdata/prf_golden.tsv`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::key::WatermarkKey;
use crate::error::{Error, Result};
use crate::{TokenId, BOS};

/// Version tag recorded in every report that depends on g-values.
pub const PRF_VERSION: &str = "sha256-v1";

const SEED_TAG: &[u8] = b"radiomark/seed/v1";
const G_TAG: &[u8] = b"radiomark/g/v1";

/// The `w` most recent tokens preceding a position, left-padded with BOS.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SeedContext {
    window: Vec<TokenId>,
}

impl SeedContext {
    pub fn new(window: Vec<TokenId>) -> Result<Self> {
        if window.is_empty() {
            return Err(Error::InvalidConfig("context window length must be >= 1".into()));
        }
        Ok(Self { window })
    }

    /// Window ending just before `history.len()`, BOS-padded when the history is short.
    pub fn from_history(history: &[TokenId], w: usize) -> Result<Self> {
        if w == 0 {
            return Err(Error::InvalidConfig("context window length must be >= 1".into()));
        }
        let mut window = Vec::with_capacity(w);
        let have = history.len().min(w);
        window.extend(std::iter::repeat_n(BOS, w - have));
        window.extend_from_slice(&history[history.len() - have..]);
        Ok(Self { window })
    }

    pub fn window(&self) -> &[TokenId] {
        &self.window
    }

    pub fn w(&self) -> usize {
        self.window.len()
    }
}

/// The `d` binary watermark values of one token at one position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GVector {
    bits: Vec<u8>,
}

impl GVector {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::ZeroDepth);
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidConfig("g-values must be 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn d(&self) -> usize {
        self.bits.len()
    }

    /// Bit at 1-based layer `layer`.
    pub fn layer(&self, layer: usize) -> u8 {
        self.bits[layer - 1]
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

pub fn derive_seed(key: &WatermarkKey, ctx: &SeedContext, position_salt: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(SEED_TAG);
    h.update(key.bytes());
    h.update((ctx.w() as u32).to_be_bytes());
    for &tok in ctx.window() {
        h.update(tok.to_be_bytes());
    }
    h.update(position_salt.to_be_bytes());
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

pub fn g_bit(seed: u64, token: TokenId, layer: u32) -> u8 {
    let mut h = Sha256::new();
    h.update(G_TAG);
    h.update(seed.to_be_bytes());
    h.update(token.to_be_bytes());
    h.update(layer.to_be_bytes());
    h.finalize()[0] & 1
}

pub fn g_vector(seed: u64, token: TokenId, d: usize) -> Result<GVector> {
    if d == 0 {
        return Err(Error::ZeroDepth);
    }
    let bits = (1..=d as u32).map(|j| g_bit(seed, token, j)).collect();
    Ok(GVector { bits })
}
