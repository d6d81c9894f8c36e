use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::distribution::TokenDistribution;
use super::tournament::tournament_select;
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::wm::{GVector, WatermarkKey, WatermarkParams};
use crate::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub d: usize,
    pub num_candidates: usize,
    pub w: usize,
    pub temperature: f64,
    pub top_k: usize,
    pub top_p: f64,
    pub mask_repeated_context: bool,
    pub salt_with_position: bool,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            d: 4,
            num_candidates: 16,
            w: 4,
            temperature: 0.8,
            top_k: 50,
            top_p: 0.95,
            mask_repeated_context: false,
            salt_with_position: false,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn with_depth(mut self, d: usize) -> Self {
        self.d = d;
        self.num_candidates = 1 << d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.watermark_params().validate()?;
        if self.num_candidates != 1 << self.d {
            return Err(Error::InvalidConfig(format!(
                "num_candidates {} must equal 2^d = {}",
                self.num_candidates,
                1usize << self.d
            )));
        }
        self.shaping().validate()
    }

    pub fn watermark_params(&self) -> WatermarkParams {
        WatermarkParams {
            d: self.d,
            w: self.w,
            salt_with_position: self.salt_with_position,
        }
    }

    pub fn shaping(&self) -> Shaping {
        Shaping {
            temperature: self.temperature,
            top_k: self.top_k,
            top_p: self.top_p,
        }
    }
}

/// Temperature / top-k / top-p settings for plain sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shaping {
    pub temperature: f64,
    pub top_k: usize,
    pub top_p: f64,
}

impl Shaping {
    /// Settings used when querying a suspect model at detection time.
    pub fn detection() -> Self {
        Self {
            temperature: 0.5,
            top_k: usize::MAX,
            top_p: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidConfig("temperature must be > 0".into()));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be >= 1".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::InvalidConfig("top_p must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn apply(&self, dist: &TokenDistribution) -> Result<TokenDistribution> {
        dist.shape(self.temperature, self.top_k, self.top_p)
    }
}

pub fn shape_distribution(
    dist: &TokenDistribution,
    temperature: f64,
    top_k: usize,
    top_p: f64,
) -> Result<TokenDistribution> {
    dist.shape(temperature, top_k, top_p)
}

/// A watermarked generation with per-token audit data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    /// Prompt followed by the generated tokens.
    pub tokens: Vec<TokenId>,
    pub prompt_len: usize,
    /// One g-vector per generated token.
    pub gvectors: Vec<GVector>,
    /// One seed per generated token.
    pub seeds: Vec<u64>,
}

impl GenerationRecord {
    pub fn generated(&self) -> &[TokenId] {
        &self.tokens[self.prompt_len..]
    }

    pub fn prompt(&self) -> &[TokenId] {
        &self.tokens[..self.prompt_len]
    }

    pub fn g_summary(&self) -> GSummary {
        let positions = self.gvectors.len();
        let d = self.gvectors.first().map_or(0, GVector::d);
        let mut layer_means = vec![0.0; d];
        for gv in &self.gvectors {
            for (acc, &b) in layer_means.iter_mut().zip(gv.bits()) {
                *acc += b as f64;
            }
        }
        let total: f64 = layer_means.iter().sum();
        for m in &mut layer_means {
            *m /= positions.max(1) as f64;
        }
        GSummary {
            positions,
            mean_g: if positions == 0 {
                0.0
            } else {
                total / (positions * d) as f64
            },
            layer_means,
        }
    }

    /// One JSON object: `{tokens, prompt_len, key_id, config, g_summary}`.
    pub fn to_json_line(&self, key_id: &str, config: &SamplerConfig) -> Result<String> {
        let line = GenerationLine {
            tokens: &self.tokens,
            prompt_len: self.prompt_len,
            key_id,
            config,
            g_summary: self.g_summary(),
        };
        Ok(serde_json::to_string(&line)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GSummary {
    pub positions: usize,
    pub mean_g: f64,
    pub layer_means: Vec<f64>,
}

#[derive(Serialize)]
struct GenerationLine<'a> {
    tokens: &'a [TokenId],
    prompt_len: usize,
    key_id: &'a str,
    config: &'a SamplerConfig,
    g_summary: GSummary,
}

fn model_step<M: LanguageModel + ?Sized>(
    model: &M,
    history: &[TokenId],
) -> Result<TokenDistribution> {
    model
        .next_token_distribution(history)
        .map_err(|e| Error::Model {
            position: history.len(),
            reason: e.to_string(),
        })
}

/// Autoregressive tournament sampling under `key`.
///
/// Stops after `max_tokens` generated tokens or when a token in `stop_ids`
/// wins; the stop token is not appended.
pub fn generate_sequence<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    key: &WatermarkKey,
    cfg: &SamplerConfig,
    max_tokens: usize,
    stop_ids: &[TokenId],
) -> Result<GenerationRecord> {
    cfg.validate()?;
    let params = cfg.watermark_params();
    let shaping = cfg.shaping();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.rng_seed);
    let mut tokens = prompt.to_vec();
    let mut gvectors = Vec::new();
    let mut seeds = Vec::new();
    let mut seen_windows: HashSet<Vec<TokenId>> = HashSet::new();
    let mut candidates = vec![0; cfg.num_candidates];
    let mut cand_gvs: Vec<GVector> = Vec::with_capacity(cfg.num_candidates);
    let mut cache: Vec<(TokenId, GVector)> = Vec::new();

    for _ in 0..max_tokens {
        let shaped = shaping.apply(&model_step(model, &tokens)?)?;
        let seed = params.seed_for(key, &tokens)?;
        let repeated = cfg.mask_repeated_context && {
            let start = tokens.len().saturating_sub(cfg.w);
            !seen_windows.insert(tokens[start..].to_vec())
        };
        let sampler = shaped.sampler();
        let winner = if repeated {
            sampler.sample(&mut rng)
        } else {
            for c in candidates.iter_mut() {
                *c = sampler.sample(&mut rng);
            }
            cache.clear();
            cand_gvs.clear();
            for &c in &candidates {
                let gv = match cache.iter().find(|(t, _)| *t == c) {
                    Some((_, gv)) => gv.clone(),
                    None => {
                        let gv = params.g_vector(seed, c)?;
                        cache.push((c, gv.clone()));
                        gv
                    }
                };
                cand_gvs.push(gv);
            }
            tournament_select(&candidates, &cand_gvs, &mut rng)?
        };
        if stop_ids.contains(&winner) {
            break;
        }
        let gv = match cache.iter().find(|(t, _)| *t == winner) {
            Some((_, gv)) if !repeated => gv.clone(),
            _ => params.g_vector(seed, winner)?,
        };
        tokens.push(winner);
        gvectors.push(gv);
        seeds.push(seed);
    }
    Ok(GenerationRecord {
        tokens,
        prompt_len: prompt.len(),
        gvectors,
        seeds,
    })
}

/// Plain shaped sampling with no watermark; returns only the generated tokens.
pub fn generate_plain<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    shaping: &Shaping,
    max_tokens: usize,
    stop_ids: &[TokenId],
    rng_seed: u64,
) -> Result<Vec<TokenId>> {
    shaping.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let mut history = prompt.to_vec();
    for _ in 0..max_tokens {
        let shaped = shaping.apply(&model_step(model, &history)?)?;
        let tok = shaped.sample(&mut rng);
        if stop_ids.contains(&tok) {
            break;
        }
        history.push(tok);
    }
    Ok(history.split_off(prompt.len()))
}

/// Grand mean of all `T * d` g-values of the generated tokens, recomputed from the key.
pub fn score_sequence_unweighted(
    tokens: &[TokenId],
    prompt_len: usize,
    key: &WatermarkKey,
    params: &WatermarkParams,
) -> Result<f64> {
    params.validate()?;
    if prompt_len >= tokens.len() {
        return Err(Error::Empty("no generated tokens to score"));
    }
    let mut ones = 0usize;
    for t in prompt_len..tokens.len() {
        let seed = params.seed_for(key, &tokens[..t])?;
        ones += params.g_vector(seed, tokens[t])?.ones();
    }
    Ok(ones as f64 / ((tokens.len() - prompt_len) * params.d) as f64)
}
