use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// zlib level used by [`compress_ratio`].
pub const COMPRESSION_LEVEL: u32 = 6;
/// Default Min-K% fraction.
pub const MINK_FRACTION: f64 = 0.2;
/// Tail fraction for the `kmin_logp` / `kmax_logp` features.
pub const FEATURE_TAIL_FRACTION: f64 = 0.1;

fn tail_count(len: usize, k: f64) -> Result<usize> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::InvalidConfig(format!("k fraction {k} outside (0, 1]")));
    }
    // tolerate representation error in k * len before rounding up
    let m = (k * len as f64 - 1e-9).ceil().max(0.0) as usize;
    if m == 0 || m > len {
        return Err(Error::Empty("Min-K selection"));
    }
    Ok(m)
}

fn check_logprobs(logprobs: &[f64]) -> Result<()> {
    if logprobs.iter().any(|lp| lp.is_nan() || *lp > 0.0) {
        return Err(Error::InvalidConfig("log-probabilities must be <= 0".into()));
    }
    Ok(())
}

fn sorted(logprobs: &[f64]) -> Vec<f64> {
    let mut v = logprobs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Mean negative log-likelihood of the `ceil(k T)` least likely tokens.
pub fn mink_score(logprobs: &[f64], k: f64) -> Result<f64> {
    check_logprobs(logprobs)?;
    let m = tail_count(logprobs.len(), k)?;
    let v = sorted(logprobs);
    Ok(-v[..m].iter().sum::<f64>() / m as f64)
}

/// Mean log-probability of the `ceil(k T)` most likely tokens.
pub fn maxk_logp(logprobs: &[f64], k: f64) -> Result<f64> {
    check_logprobs(logprobs)?;
    let m = tail_count(logprobs.len(), k)?;
    let v = sorted(logprobs);
    Ok(v[v.len() - m..].iter().sum::<f64>() / m as f64)
}

/// zlib-compressed length over raw length, at [`COMPRESSION_LEVEL`].
pub fn compress_ratio(bytes: &[u8]) -> Result<f64> {
    if bytes.is_empty() {
        return Err(Error::Empty("bytes to compress"));
    }
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(COMPRESSION_LEVEL));
    enc.write_all(bytes)?;
    let out = enc.finish()?;
    Ok(out.len() as f64 / bytes.len() as f64)
}

/// Reference-free, loss-based features of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFeatures {
    pub id: String,
    pub ppl: f64,
    pub mean_logp: f64,
    pub kmin_logp: f64,
    pub kmax_logp: f64,
    pub compress_ratio: f64,
    pub length: usize,
}

impl SampleFeatures {
    pub const NAMES: [&'static str; 6] = [
        "ppl",
        "mean_logp",
        "kmin_logp",
        "kmax_logp",
        "compress_ratio",
        "length",
    ];

    /// Features from per-token log-probabilities and the raw text.
    pub fn compute(id: impl Into<String>, logprobs: &[f64], text: &[u8]) -> Result<Self> {
        if logprobs.is_empty() {
            return Err(Error::Empty("sample tokens"));
        }
        check_logprobs(logprobs)?;
        let mean_logp = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
        Ok(Self {
            id: id.into(),
            ppl: (-mean_logp).exp(),
            mean_logp,
            kmin_logp: -mink_score(logprobs, FEATURE_TAIL_FRACTION)?,
            kmax_logp: maxk_logp(logprobs, FEATURE_TAIL_FRACTION)?,
            compress_ratio: compress_ratio(text)?,
            length: logprobs.len(),
        })
    }

    pub fn vector(&self) -> [f64; 6] {
        [
            self.ppl,
            self.mean_logp,
            self.kmin_logp,
            self.kmax_logp,
            self.compress_ratio,
            self.length as f64,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn mink_examples() {
        assert!((mink_score(&[-1.0, -2.0, -3.0, -4.0], 0.5).unwrap() - 3.5).abs() < 1e-15);
        let flat = vec![0.25f64.ln(); 7];
        for k in [0.1, 0.2, 0.5, 1.0] {
            assert!((mink_score(&flat, k).unwrap() + 0.25f64.ln()).abs() < 1e-12);
        }
        let lp = [-0.5, -2.0, -0.1, -3.3, -1.1];
        let mean_nll = -lp.iter().sum::<f64>() / lp.len() as f64;
        assert!((mink_score(&lp, 1.0).unwrap() - mean_nll).abs() < 1e-12);
        // ceil(0.2 * 5) = 1: the single worst token
        assert!((mink_score(&lp, 0.2).unwrap() - 3.3).abs() < 1e-15);
    }

    #[test]
    fn mink_rejects_bad_input() {
        assert!(mink_score(&[], 0.2).is_err());
        assert!(mink_score(&[-1.0], 0.0).is_err());
        assert!(mink_score(&[-1.0], 1.5).is_err());
        assert!(mink_score(&[0.5], 0.5).is_err());
    }

    #[test]
    fn compression_bounds() {
        let rep = vec![b'a'; 10_000];
        assert!(compress_ratio(&rep).unwrap() < 0.05);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let noise: Vec<u8> = (0..10_000).map(|_| rng.random()).collect();
        assert!(compress_ratio(&noise).unwrap() >= 0.9);
        assert_eq!(compress_ratio(&noise).unwrap(), compress_ratio(&noise).unwrap());
        assert!(compress_ratio(b"").is_err());
    }

    #[test]
    fn feature_vector() {
        let f = SampleFeatures::compute("x", &[-1.0, -2.0, -3.0], b"some text").unwrap();
        assert!((f.ppl - 2f64.exp()).abs() < 1e-12);
        assert_eq!(f.kmin_logp, -3.0);
        assert_eq!(f.kmax_logp, -1.0);
        assert_eq!(f.length, 3);
        assert!(f.ppl >= 1.0 && f.compress_ratio > 0.0);
    }
}
