use std::collections::HashSet;
use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::gate::{entropy_gate, p_value, z_from_mean};
use super::score::{EntropyTable, ModelOutput, ScoredToken};
use crate::digest::{json_digest, sub_seed, token_digest};
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::sampler::{generate_plain, Shaping};
use crate::wm::{DepthWeights, WatermarkKey, WatermarkParams, PRF_VERSION};
use crate::{TokenId, EOS};

/// Below this many scored tokens the normal approximation is not trusted.
pub const MIN_SCORED: usize = 30;

pub const FLAG_LOW_POWER: &str = "LOW_POWER";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    /// Percentage of highest-entropy tokens kept.
    pub q: f64,
    /// Number of generated tokens to collect, N0.
    pub token_budget: usize,
    /// Fewer collected tokens than this flags the report as low power.
    pub min_tokens: usize,
    pub alpha: f64,
    /// Cap on new tokens per query.
    pub max_new_tokens: usize,
    pub params: WatermarkParams,
    pub shaping: Shaping,
    pub rng_seed: u64,
    /// Score each `(window, token)` tuple once across the pooled outputs.
    pub dedupe: bool,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            q: 40.0,
            token_budget: 100_000,
            min_tokens: 1_000,
            alpha: 0.05,
            max_new_tokens: 128,
            params: WatermarkParams::default(),
            shaping: Shaping::detection(),
            rng_seed: 0,
            dedupe: true,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 100.0) {
            return Err(Error::InvalidConfig(format!("q={} outside (0, 100]", self.q)));
        }
        if self.token_budget == 0 {
            return Err(Error::InvalidConfig("token budget must be >= 1".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::InvalidConfig("max_new_tokens must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha={} outside (0, 1)", self.alpha)));
        }
        self.params.validate()?;
        self.shaping.validate()
    }
}

/// Query `model` with the prompts, cycling through them, until exactly
/// `token_budget` tokens have been generated or a whole pass yields nothing.
///
/// Each query gets its own RNG stream derived from `(rng_seed, pass, index)`,
/// so a smaller budget always sees a prefix of a larger one.
pub fn collect_outputs<M: LanguageModel + ?Sized>(
    model: &M,
    prompts: &[Vec<TokenId>],
    cfg: &DetectConfig,
) -> Result<Vec<ModelOutput>> {
    cfg.validate()?;
    if prompts.is_empty() {
        return Err(Error::Empty("prompts"));
    }
    let mut outputs = Vec::new();
    let mut total = 0usize;
    let mut pass = 0u64;
    while total < cfg.token_budget {
        let before = total;
        for (i, prompt) in prompts.iter().enumerate() {
            if total >= cfg.token_budget {
                break;
            }
            let max = cfg.max_new_tokens.min(cfg.token_budget - total);
            let seed = sub_seed(cfg.rng_seed, "query", &[pass, i as u64]);
            let generated = generate_plain(model, prompt, &cfg.shaping, max, &[EOS], seed)?;
            total += generated.len();
            outputs.push(ModelOutput::new(prompt.clone(), generated));
        }
        if total == before {
            break;
        }
        pass += 1;
    }
    Ok(outputs)
}

/// The outputs [`collect_outputs`] would have returned under a smaller budget.
pub fn truncate_outputs(outputs: &[ModelOutput], budget: usize) -> Vec<ModelOutput> {
    let mut out = Vec::new();
    let mut total = 0usize;
    for o in outputs {
        if total >= budget {
            break;
        }
        let take = o.generated.len().min(budget - total);
        total += take;
        out.push(ModelOutput::new(o.prompt.clone(), o.generated[..take].to_vec()));
    }
    out
}

pub fn outputs_digest(outputs: &[ModelOutput]) -> String {
    token_digest(
        outputs
            .iter()
            .flat_map(|o| [o.prompt.as_slice(), o.generated.as_slice()]),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub method: String,
    pub key_id: String,
    /// Scored tokens entering the gate.
    pub n0: usize,
    pub q: f64,
    /// `floor(q * n0 / 100)`.
    pub n_gated: usize,
    /// Tokens in the statistic: the gated set, minus repeated tuples when
    /// deduplication is on.
    pub n_selected: usize,
    pub mean_gbar: f64,
    pub d: usize,
    pub d_eff: f64,
    pub z: f64,
    /// Absent when fewer than [`MIN_SCORED`] tokens were selected.
    pub p_value: Option<f64>,
    pub log10_p: Option<f64>,
    pub ungated_n: usize,
    pub ungated_score: f64,
    pub ungated_z: f64,
    pub ungated_p: Option<f64>,
    pub ungated_log10_p: Option<f64>,
    pub alpha: f64,
    pub significant: bool,
    pub flags: Vec<String>,
    pub skipped_sequences: usize,
    pub prf_version: String,
    pub seed: u64,
    pub config_digest: String,
    pub outputs_digest: String,
    pub timestamp_unix: u64,
}

impl DetectionReport {
    pub fn low_power(&self) -> bool {
        self.flags.iter().any(|f| f == FLAG_LOW_POWER)
    }

    /// `-log10 p`, or `None` when no p-value was emitted.
    pub fn neg_log10_p(&self) -> Option<f64> {
        self.log10_p.map(|l| -l)
    }

    /// Copy with the wall-clock field cleared, for reproducibility checks.
    pub fn without_timestamp(&self) -> Self {
        Self {
            timestamp_unix: 0,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// First occurrence of each `(seed, token)` pair, in the given order.
pub fn distinct_tuples<'a, I>(tokens: I) -> Vec<&'a ScoredToken>
where
    I: IntoIterator<Item = &'a ScoredToken>,
{
    let mut seen = HashSet::new();
    tokens
        .into_iter()
        .filter(|t| seen.insert((t.seed, t.token)))
        .collect()
}

fn mean_of(tokens: &[&ScoredToken]) -> f64 {
    tokens.iter().map(|t| t.gbar).sum::<f64>() / tokens.len() as f64
}

/// Gate, aggregate and test already-scored tokens.
///
/// With `cfg.dedupe`, repeated `(seed, token)` pairs are dropped after gating
/// (and from the ungated pool) so that every scored tuple is an independent
/// draw under the null.
pub fn report_from_scored(
    scored: &[ScoredToken],
    key_id: &str,
    cfg: &DetectConfig,
    skipped_sequences: usize,
    outputs_digest: &str,
) -> Result<DetectionReport> {
    cfg.validate()?;
    if scored.is_empty() {
        return Err(Error::Empty("no generated tokens to score"));
    }
    let weights = DepthWeights::new(cfg.params.d)?;
    let n0 = scored.len();
    let gated = entropy_gate(scored, cfg.q)?;
    let (selected, pool): (Vec<&ScoredToken>, Vec<&ScoredToken>) = if cfg.dedupe {
        (distinct_tuples(&gated.tokens), distinct_tuples(scored))
    } else {
        (gated.tokens.iter().collect(), scored.iter().collect())
    };
    let n_selected = selected.len();
    let mean = mean_of(&selected);
    let z = z_from_mean(mean, n_selected, &weights);
    let p = (n_selected >= MIN_SCORED).then(|| p_value(z));

    let ungated_score = mean_of(&pool);
    let ungated_z = z_from_mean(ungated_score, pool.len(), &weights);
    let ungated = (pool.len() >= MIN_SCORED).then(|| p_value(ungated_z));

    let mut flags = Vec::new();
    if n_selected < MIN_SCORED || n0 < cfg.min_tokens {
        flags.push(FLAG_LOW_POWER.to_string());
    }
    Ok(DetectionReport {
        method: "entropy-gated".into(),
        key_id: key_id.to_string(),
        n0,
        q: cfg.q,
        n_gated: gated.len(),
        n_selected,
        mean_gbar: mean,
        d: cfg.params.d,
        d_eff: weights.effective_depth(),
        z,
        p_value: p.map(|p| p.p),
        log10_p: p.map(|p| p.log10_p),
        ungated_n: pool.len(),
        ungated_score,
        ungated_z,
        ungated_p: ungated.map(|p| p.p),
        ungated_log10_p: ungated.map(|p| p.log10_p),
        alpha: cfg.alpha,
        significant: p.is_some_and(|p| p.p < cfg.alpha),
        flags,
        skipped_sequences,
        prf_version: PRF_VERSION.to_string(),
        seed: cfg.rng_seed,
        config_digest: json_digest(cfg)?,
        outputs_digest: outputs_digest.to_string(),
        timestamp_unix: now_unix(),
    })
}

/// Key-independent scoring state shared by every key tested on the same outputs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub table: EntropyTable,
    pub outputs_digest: String,
}

impl Prepared {
    pub fn new<A: LanguageModel + ?Sized>(
        outputs: &[ModelOutput],
        aux: &A,
    ) -> Result<Self> {
        Ok(Self {
            table: EntropyTable::compute(outputs, aux)?,
            outputs_digest: outputs_digest(outputs),
        })
    }

    pub fn report(
        &self,
        outputs: &[ModelOutput],
        key: &WatermarkKey,
        cfg: &DetectConfig,
    ) -> Result<DetectionReport> {
        let weights = DepthWeights::new(cfg.params.d)?;
        let scored = self.table.score(outputs, key, &cfg.params, &weights)?;
        report_from_scored(&scored, key.key_id(), cfg, self.table.skipped(), &self.outputs_digest)
    }
}

/// Score cached outputs against one key.
pub fn detect_outputs<M: LanguageModel + ?Sized>(
    outputs: &[ModelOutput],
    key: &WatermarkKey,
    aux: &M,
    cfg: &DetectConfig,
) -> Result<DetectionReport> {
    Prepared::new(outputs, aux)?.report(outputs, key, cfg)
}

/// Query the suspect model, then run the entropy-gated test with `key`.
pub fn detect<M, A>(
    model: &M,
    prompts: &[Vec<TokenId>],
    key: &WatermarkKey,
    aux: &A,
    cfg: &DetectConfig,
) -> Result<DetectionReport>
where
    M: LanguageModel + ?Sized,
    A: LanguageModel + ?Sized,
{
    let outputs = collect_outputs(model, prompts, cfg)?;
    detect_outputs(&outputs, key, aux, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Attribution {
    /// Exactly one key falls below alpha.
    Attributed { key_id: String },
    /// Several keys fall below alpha; left for the caller to resolve.
    Ambiguous { key_ids: Vec<String> },
    NoneFlagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub reports: Vec<DetectionReport>,
    pub alpha: f64,
    pub attribution: Attribution,
    pub outputs_digest: String,
}

impl AttributionReport {
    pub fn report(&self, key_id: &str) -> Option<&DetectionReport> {
        self.reports.iter().find(|r| r.key_id == key_id)
    }
}

/// One report per key over the same cached outputs; entropies are computed once.
/// p-values are raw: no multiple-testing correction is applied.
pub fn attribute_outputs<A: LanguageModel + ?Sized>(
    outputs: &[ModelOutput],
    keys: &[WatermarkKey],
    aux: &A,
    cfg: &DetectConfig,
) -> Result<AttributionReport> {
    if keys.is_empty() {
        return Err(Error::Empty("keys"));
    }
    let prep = Prepared::new(outputs, aux)?;
    let reports = keys
        .iter()
        .map(|k| prep.report(outputs, k, cfg))
        .collect::<Result<Vec<_>>>()?;
    let flagged: Vec<String> = reports
        .iter()
        .filter(|r| r.significant)
        .map(|r| r.key_id.clone())
        .collect();
    let attribution = match flagged.len() {
        0 => Attribution::NoneFlagged,
        1 => Attribution::Attributed {
            key_id: flagged[0].clone(),
        },
        _ => Attribution::Ambiguous { key_ids: flagged },
    };
    Ok(AttributionReport {
        reports,
        alpha: cfg.alpha,
        attribution,
        outputs_digest: prep.outputs_digest,
    })
}

pub fn attribute<M, A>(
    model: &M,
    prompts: &[Vec<TokenId>],
    keys: &[WatermarkKey],
    aux: &A,
    cfg: &DetectConfig,
) -> Result<AttributionReport>
where
    M: LanguageModel + ?Sized,
    A: LanguageModel + ?Sized,
{
    let outputs = collect_outputs(model, prompts, cfg)?;
    attribute_outputs(&outputs, keys, aux, cfg)
}

/// Rows of `seq_id,offset,token,entropy,gbar`.
pub fn write_scored_csv<W: Write>(mut out: W, scored: &[ScoredToken]) -> Result<()> {
    writeln!(out, "seq_id,offset,token,entropy,gbar")?;
    for t in scored {
        writeln!(
            out,
            "{},{},{},{},{}",
            t.seq_id, t.offset, t.token, t.entropy, t.gbar
        )?;
    }
    Ok(())
}

