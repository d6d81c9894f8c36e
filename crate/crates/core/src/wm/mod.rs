//! Deterministic keyed pseudorandomness: keys, seeds, g-values and depth weights.

mod key;
mod params;
mod prf;
mod weights;

pub use key::{KeyStore, WatermarkKey, KEY_LEN};
pub use params::WatermarkParams;
pub use prf::{derive_seed, g_bit, g_vector, GVector, SeedContext, PRF_VERSION};
pub use weights::{depth_weights, effective_depth, weighted_g, DepthWeights};
