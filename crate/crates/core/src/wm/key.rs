use std::fmt;
use std::fs;
use std::path::Path;

use rand::RngCore;

use crate::error::{Error, Result};

pub const KEY_LEN: usize = 32;

/// A secret watermark key together with a human-readable label.
///
/// The key bytes never appear in `Debug` output.
#[derive(Clone, PartialEq, Eq)]
pub struct WatermarkKey {
    bytes: [u8; KEY_LEN],
    key_id: String,
}

impl WatermarkKey {
    pub fn new(bytes: [u8; KEY_LEN], key_id: impl Into<String>) -> Result<Self> {
        let key_id = key_id.into();
        validate_key_id(&key_id)?;
        Ok(Self { bytes, key_id })
    }

    pub fn from_slice(bytes: &[u8], key_id: impl Into<String>) -> Result<Self> {
        let bytes: [u8; KEY_LEN] = bytes.try_into().map_err(|_| {
            Error::InvalidKey(format!("expected {KEY_LEN} bytes, got {}", bytes.len()))
        })?;
        Self::new(bytes, key_id)
    }

    pub fn generate<R: RngCore + ?Sized>(rng: &mut R, key_id: impl Into<String>) -> Result<Self> {
        let mut bytes = [0u8; KEY_LEN];
        rng.fill_bytes(&mut bytes);
        Self::new(bytes, key_id)
    }

    pub fn bytes(&self) -> &[u8; KEY_LEN] {
        &self.bytes
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    /// Key file: hex bytes on line 1, key id on line 2, newline-terminated.
    pub fn to_file_string(&self) -> String {
        format!("{}\n{}\n", hex::encode(self.bytes), self.key_id)
    }

    pub fn parse_file(contents: &str) -> Result<Self> {
        let mut lines = contents.lines();
        let hex_line = lines
            .next()
            .ok_or_else(|| Error::InvalidKey("key file is empty".into()))?;
        let id_line = lines
            .next()
            .ok_or_else(|| Error::InvalidKey("key file has no key_id line".into()))?;
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::InvalidKey("trailing content after key_id".into()));
        }
        let bytes = hex::decode(hex_line.trim())
            .map_err(|e| Error::InvalidKey(format!("bad hex: {e}")))?;
        Self::from_slice(&bytes, id_line.trim())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_file(&fs::read_to_string(path)?)
    }
}

impl fmt::Debug for WatermarkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WatermarkKey")
            .field("key_id", &self.key_id)
            .finish_non_exhaustive()
    }
}

fn validate_key_id(key_id: &str) -> Result<()> {
    if key_id.is_empty() {
        return Err(Error::InvalidKey("key_id must be nonempty".into()));
    }
    if key_id.chars().any(|c| c.is_control() || c == '\n') {
        return Err(Error::InvalidKey("key_id must be a single printable line".into()));
    }
    Ok(())
}

/// A set of keys with unique ids.
#[derive(Debug, Default, Clone)]
pub struct KeyStore {
    keys: Vec<WatermarkKey>,
}

impl KeyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: WatermarkKey) -> Result<()> {
        if self.get(key.key_id()).is_some() {
            return Err(Error::InvalidKey(format!(
                "duplicate key_id `{}`",
                key.key_id()
            )));
        }
        self.keys.push(key);
        Ok(())
    }

    pub fn get(&self, key_id: &str) -> Option<&WatermarkKey> {
        self.keys.iter().find(|k| k.key_id() == key_id)
    }

    pub fn keys(&self) -> &[WatermarkKey] {
        &self.keys
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn key_file_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let key = WatermarkKey::generate(&mut rng, "owner-a").unwrap();
        let text = key.to_file_string();
        assert!(text.ends_with('\n'));
        assert_eq!(text.lines().count(), 2);
        assert_eq!(WatermarkKey::parse_file(&text).unwrap(), key);
    }

    #[test]
    fn rejects_wrong_length_and_empty_id() {
        assert!(WatermarkKey::from_slice(&[0u8; 31], "x").is_err());
        assert!(WatermarkKey::new([0u8; 32], "").is_err());
        assert!(WatermarkKey::parse_file(&format!("{}\n", "00".repeat(32))).is_err());
        assert!(WatermarkKey::parse_file("zz\nid\n").is_err());
    }

    #[test]
    fn debug_hides_secret() {
        let key = WatermarkKey::new([0xab; 32], "k").unwrap();
        assert!(!format!("{key:?}").contains("ab"));
    }

    #[test]
    fn store_rejects_duplicate_ids() {
        let mut store = KeyStore::new();
        store.insert(WatermarkKey::new([1; 32], "a").unwrap()).unwrap();
        assert!(store.insert(WatermarkKey::new([2; 32], "a").unwrap()).is_err());
        assert!(store.get("a").is_some());
    }
}
