use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenizer::Tokenizer;
use super::LanguageModel;
use crate::error::{Error, Result};
use crate::sampler::TokenDistribution;
use crate::{TokenId, BOS};

pub const MODEL_FORMAT: &str = "radiomark-ngram";
pub const MODEL_FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramConfig {
    pub order: usize,
    pub add_k: f64,
    /// Interpolation weight per order, lowest order first.
    pub lambdas: Vec<f64>,
}

impl Default for NgramConfig {
    fn default() -> Self {
        Self {
            order: 3,
            add_k: 0.1,
            lambdas: vec![0.1, 0.3, 0.6],
        }
    }
}

impl NgramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidConfig("n-gram order must be >= 1".into()));
        }
        if self.lambdas.len() != self.order {
            return Err(Error::InvalidConfig(format!(
                "{} interpolation weights for order {}",
                self.lambdas.len(),
                self.order
            )));
        }
        if self.lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidConfig("interpolation weights must be >= 0".into()));
        }
        let sum: f64 = self.lambdas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "interpolation weights sum to {sum}"
            )));
        }
        if !self.add_k.is_finite() || self.add_k < 0.0 {
            return Err(Error::InvalidConfig("add_k must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

/// Interpolated add-k smoothed n-gram model.
///
/// The predictive support is every vocabulary id except BOS. Contexts are
/// left-padded with `order - 1` BOS tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    config: NgramConfig,
    tokenizer: Tokenizer,
    /// `tables[i]` holds contexts of length `i`.
    tables: Vec<HashMap<Box<[TokenId]>, ContextCounts>>,
}

impl NgramModel {
    pub fn new(tokenizer: Tokenizer, config: NgramConfig) -> Result<Self> {
        config.validate()?;
        tokenizer.validate().map_err(Error::InvalidConfig)?;
        let tables = (0..config.order).map(|_| HashMap::new()).collect();
        Ok(Self {
            config,
            tokenizer,
            tables,
        })
    }

    /// A fresh model sharing this model's tokenizer and hyperparameters.
    pub fn fresh(&self) -> Self {
        Self {
            config: self.config.clone(),
            tokenizer: self.tokenizer.clone(),
            tables: (0..self.config.order).map(|_| HashMap::new()).collect(),
        }
    }

    pub fn config(&self) -> &NgramConfig {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn vocab_size(&self) -> usize {
        self.tokenizer.len()
    }

    /// Number of ids that can be predicted (every id except BOS).
    pub fn support_size(&self) -> usize {
        self.tokenizer.len() - 1
    }

    /// Accumulates counts; calling again continues training from the current counts.
    pub fn train<S: AsRef<[TokenId]>>(&mut self, corpus: &[S]) -> Result<()> {
        let v = self.vocab_size() as TokenId;
        let pad = self.order() - 1;
        let mut padded: Vec<TokenId> = Vec::new();
        for seq in corpus {
            let seq = seq.as_ref();
            if let Some(&bad) = seq.iter().find(|&&t| t >= v || t == BOS) {
                return Err(Error::InvalidConfig(format!(
                    "token id {bad} cannot be a training target (vocab size {v})"
                )));
            }
            padded.clear();
            padded.resize(pad, BOS);
            padded.extend_from_slice(seq);
            for pos in pad..padded.len() {
                let target = padded[pos];
                for (len, table) in self.tables.iter_mut().enumerate() {
                    let ctx = &padded[pos - len..pos];
                    let counts = match table.get_mut(ctx) {
                        Some(c) => c,
                        None => table.entry(ctx.into()).or_default(),
                    };
                    counts.total += 1;
                    *counts.next.entry(target).or_default() += 1;
                }
            }
        }
        Ok(())
    }

    pub fn count(&self, context: &[TokenId], token: TokenId) -> u64 {
        let len = context.len();
        self.tables
            .get(len)
            .and_then(|t| t.get(context))
            .and_then(|c| c.next.get(&token).copied())
            .unwrap_or(0)
    }

    pub fn context_total(&self, context: &[TokenId]) -> u64 {
        self.tables
            .get(context.len())
            .and_then(|t| t.get(context))
            .map_or(0, |c| c.total)
    }

    fn padded_context<'a>(&self, history: &'a [TokenId], len: usize, buf: &'a mut Vec<TokenId>) -> &'a [TokenId] {
        if history.len() >= len {
            &history[history.len() - len..]
        } else {
            buf.clear();
            buf.resize(len - history.len(), BOS);
            buf.extend_from_slice(history);
            buf
        }
    }

    /// Dense probabilities, index `i` holding token id `i + 1`.
    pub fn dense_distribution(&self, history: &[TokenId]) -> Vec<f64> {
        let support = self.support_size();
        let k = self.config.add_k;
        let mut probs = vec![0.0; support];
        let mut base = 0.0;
        let mut buf = Vec::new();
        for (len, table) in self.tables.iter().enumerate() {
            let lambda = self.config.lambdas[len];
            if lambda == 0.0 {
                continue;
            }
            let ctx = self.padded_context(history, len, &mut buf);
            let counts = table.get(ctx);
            let total = counts.map_or(0, |c| c.total) as f64;
            let denom = total + k * support as f64;
            if denom == 0.0 {
                base += lambda / support as f64;
                continue;
            }
            base += lambda * k / denom;
            if let Some(c) = counts {
                let scale = lambda / denom;
                for (&tok, &n) in &c.next {
                    probs[tok as usize - 1] += scale * n as f64;
                }
            }
        }
        for p in &mut probs {
            *p += base;
        }
        probs
    }

    pub fn prob(&self, history: &[TokenId], token: TokenId) -> f64 {
        if token == BOS || token as usize >= self.vocab_size() {
            return 0.0;
        }
        let support = self.support_size() as f64;
        let k = self.config.add_k;
        let mut buf = Vec::new();
        let mut p = 0.0;
        for (len, table) in self.tables.iter().enumerate() {
            let lambda = self.config.lambdas[len];
            if lambda == 0.0 {
                continue;
            }
            let ctx = self.padded_context(history, len, &mut buf);
            let counts = table.get(ctx);
            let total = counts.map_or(0, |c| c.total) as f64;
            let denom = total + k * support;
            if denom == 0.0 {
                p += lambda / support;
                continue;
            }
            let c = counts.and_then(|c| c.next.get(&token)).copied().unwrap_or(0) as f64;
            p += lambda * (c + k) / denom;
        }
        p
    }

    /// Natural-log probability of each token of `tokens` given `context` and the preceding tokens.
    pub fn token_logprobs(&self, context: &[TokenId], tokens: &[TokenId]) -> Vec<f64> {
        let mut history: Vec<TokenId> = context.to_vec();
        let mut out = Vec::with_capacity(tokens.len());
        for &t in tokens {
            out.push(self.prob(&history, t).ln());
            history.push(t);
        }
        out
    }

    pub fn sequence_logprob(&self, tokens: &[TokenId]) -> Result<f64> {
        if tokens.is_empty() {
            return Err(Error::Empty("sequence"));
        }
        Ok(self.token_logprobs(&[], tokens).iter().sum())
    }

    pub fn perplexity(&self, tokens: &[TokenId]) -> Result<f64> {
        let lp = self.sequence_logprob(tokens)?;
        Ok((-lp / tokens.len() as f64).exp())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Canonical serialization: a header line then JSON with sorted count tables.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tables = self
            .tables
            .iter()
            .map(|table| {
                let mut rows: Vec<StoredContext> = table
                    .iter()
                    .map(|(ctx, counts)| {
                        let mut next: Vec<(TokenId, u64)> =
                            counts.next.iter().map(|(&t, &n)| (t, n)).collect();
                        next.sort_unstable();
                        StoredContext {
                            context: ctx.to_vec(),
                            next,
                        }
                    })
                    .collect();
                rows.sort_unstable_by(|a, b| a.context.cmp(&b.context));
                rows
            })
            .collect();
        let stored = StoredModel {
            config: self.config.clone(),
            tokenizer: self.tokenizer.clone(),
            tables,
        };
        let mut out = format!("{MODEL_FORMAT} v{MODEL_FORMAT_VERSION}\n").into_bytes();
        serde_json::to_writer(&mut out, &stored)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("missing header line".into()))?;
        let header = std::str::from_utf8(&bytes[..newline])
            .map_err(|_| Error::Format("header is not UTF-8".into()))?;
        let version = header
            .strip_prefix(MODEL_FORMAT)
            .and_then(|rest| rest.strip_prefix(" v"))
            .ok_or_else(|| Error::Format(format!("unrecognized header {header:?}")))?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                found: version.to_string(),
                expected: MODEL_FORMAT_VERSION.to_string(),
            });
        }
        let stored: StoredModel = serde_json::from_slice(&bytes[newline + 1..])
            .map_err(|e| Error::Format(format!("model body: {e}")))?;
        let mut model = NgramModel::new(stored.tokenizer, stored.config)
            .map_err(|e| Error::Format(e.to_string()))?;
        if stored.tables.len() != model.order() {
            return Err(Error::Format("table count does not match order".into()));
        }
        let v = model.vocab_size() as TokenId;
        for (len, rows) in stored.tables.into_iter().enumerate() {
            let table = &mut model.tables[len];
            for row in rows {
                if row.context.len() != len || row.context.iter().any(|&t| t >= v) {
                    return Err(Error::Format("malformed context".into()));
                }
                let mut counts = ContextCounts::default();
                for (tok, n) in row.next {
                    if tok >= v || tok == BOS {
                        return Err(Error::Format(format!("bad target id {tok}")));
                    }
                    counts.total += n;
                    counts.next.insert(tok, n);
                }
                table.insert(row.context.into_boxed_slice(), counts);
            }
        }
        Ok(model)
    }
}

impl LanguageModel for NgramModel {
    fn next_token_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution> {
        let probs = self.dense_distribution(context);
        let ids = (1..=probs.len() as TokenId).collect();
        TokenDistribution::from_parts(ids, probs)
    }

    fn entropy(&self, context: &[TokenId]) -> Result<f64> {
        Ok(-self
            .dense_distribution(context)
            .into_iter()
            .filter(|&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>())
    }
}

#[derive(Serialize, Deserialize)]
struct StoredModel {
    config: NgramConfig,
    tokenizer: Tokenizer,
    tables: Vec<Vec<StoredContext>>,
}

#[derive(Serialize, Deserialize)]
struct StoredContext {
    context: Vec<TokenId>,
    next: Vec<(TokenId, u64)>,
}
