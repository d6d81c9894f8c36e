//! Content digests and derived RNG seeds.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::TokenId;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the canonical JSON encoding of `value`.
pub fn json_digest<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

/// Digest of a list of token sequences; sequence boundaries are length-prefixed.
pub fn token_digest<'a, I>(sequences: I) -> String
where
    I: IntoIterator<Item = &'a [TokenId]>,
{
    let mut h = Sha256::new();
    for seq in sequences {
        h.update((seq.len() as u64).to_be_bytes());
        for t in seq {
            h.update(t.to_be_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// A child seed for the stream labelled `tag` and indexed by `parts`.
pub fn sub_seed(base: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(b"radiomark/subseed/v1");
    h.update(base.to_be_bytes());
    h.update((tag.len() as u32).to_be_bytes());
    h.update(tag.as_bytes());
    for p in parts {
        h.update(p.to_be_bytes());
    }
    let d = h.finalize();
    u64::from_be_bytes(d[..8].try_into().expect("sha256 digest is 32 bytes"))
}
