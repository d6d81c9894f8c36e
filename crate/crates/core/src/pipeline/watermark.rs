use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::corpus::CorpusRecord;
use crate::digest::{json_digest, sub_seed};
use crate::error::{Error, Result};
use crate::lm::NgramModel;
use crate::sampler::{generate_sequence, SamplerConfig};
use crate::wm::WatermarkKey;
use crate::EOS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteConfig {
    pub sampler: SamplerConfig,
    /// Fraction of records to rewrite.
    pub rho: f64,
    /// Cap on generated tokens per response.
    pub max_tokens: usize,
    /// Seeds both record selection and the per-record sampling streams.
    pub seed: u64,
}

impl Default for RewriteConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            rho: 1.0,
            max_tokens: 128,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteFailure {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatermarkManifest {
    pub key_id: String,
    pub rho: f64,
    pub selected: usize,
    /// Ids whose responses were replaced, in corpus order.
    pub rewritten: Vec<String>,
    /// Selected records kept unchanged because generation failed.
    pub failed: Vec<RewriteFailure>,
    pub config_digest: String,
}

/// Indices of the `round(rho * n)` records chosen by a seeded shuffle, ascending.
pub fn select_for_rewrite(n: usize, rho: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("rho={rho} outside [0, 1]")));
    }
    let k = (rho * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha20Rng::seed_from_u64(sub_seed(seed, "select", &[])));
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

/// Regenerate the responses of a seeded `rho` fraction of records with
/// tournament sampling under `key`, conditioned on each record's prompt.
/// Ids, prompts and unselected records pass through untouched.
pub fn watermark_corpus(
    records: &[CorpusRecord],
    key: &WatermarkKey,
    model: &NgramModel,
    cfg: &RewriteConfig,
) -> Result<(Vec<CorpusRecord>, WatermarkManifest)> {
    cfg.sampler.validate()?;
    if cfg.max_tokens == 0 {
        return Err(Error::InvalidConfig("max_tokens must be >= 1".into()));
    }
    let selected = select_for_rewrite(records.len(), cfg.rho, cfg.seed)?;
    let tok = model.tokenizer();
    let mut out = records.to_vec();
    let mut rewritten = Vec::new();
    let mut failed = Vec::new();
    for &i in &selected {
        let rec = &records[i];
        let sampler = SamplerConfig {
            rng_seed: sub_seed(cfg.seed, "rewrite", &[i as u64]),
            ..cfg.sampler.clone()
        };
        let result = generate_sequence(
            model,
            &rec.prompt_tokens(tok),
            key,
            &sampler,
            cfg.max_tokens,
            &[EOS],
        );
        match result {
            Ok(g) if !g.generated().is_empty() => {
                out[i].response = tok.decode(g.generated());
                rewritten.push(rec.id.clone());
            }
            Ok(_) => failed.push(RewriteFailure {
                id: rec.id.clone(),
                reason: "empty generation".into(),
            }),
            Err(e) => failed.push(RewriteFailure {
                id: rec.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    let manifest = WatermarkManifest {
        key_id: key.key_id().to_string(),
        rho: cfg.rho,
        selected: selected.len(),
        rewritten,
        failed,
        config_digest: json_digest(cfg)?,
    };
    Ok((out, manifest))
}
