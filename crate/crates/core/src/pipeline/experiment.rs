//! End-to-end experiment bundles: build corpora and models per seed, embed,
//! fine-tune, query, detect, and write reports under one output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{ingest, training_sequences, token_count, CorpusMode, CorpusRecord};
use super::prompts::{build_prompts, PromptMode, PromptSet};
use super::synth::{synth_corpus, SynthConfig};
use super::watermark::{watermark_corpus, RewriteConfig, WatermarkManifest};
use crate::detect::{collect_outputs, truncate_outputs, DetectConfig, DetectionReport, ModelOutput, Prepared};
use crate::digest::{json_digest, sub_seed};
use crate::error::{Error, Result};
use crate::lm::{NgramConfig, NgramModel, Tokenizer};
use crate::sampler::{SamplerConfig, Shaping};
use crate::wm::{WatermarkKey, WatermarkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentMode {
    QaDetection,
    ContinuationDetection,
    Attribution,
    FprCalibration,
    ProportionSweep,
    BudgetSweep,
    ContinuedTraining,
}

impl ExperimentMode {
    pub const ALL: [ExperimentMode; 7] = [
        ExperimentMode::QaDetection,
        ExperimentMode::ContinuationDetection,
        ExperimentMode::Attribution,
        ExperimentMode::FprCalibration,
        ExperimentMode::ProportionSweep,
        ExperimentMode::BudgetSweep,
        ExperimentMode::ContinuedTraining,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentMode::QaDetection => "qa-detection",
            ExperimentMode::ContinuationDetection => "continuation-detection",
            ExperimentMode::Attribution => "attribution",
            ExperimentMode::FprCalibration => "fpr-calibration",
            ExperimentMode::ProportionSweep => "proportion-sweep",
            ExperimentMode::BudgetSweep => "budget-sweep",
            ExperimentMode::ContinuedTraining => "continued-training",
        }
    }
}

impl std::str::FromStr for ExperimentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown experiment mode {s:?}")))
    }
}

/// Everything an experiment bundle depends on. Flat, so it maps one-to-one
/// onto a config file and command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub mode: ExperimentMode,
    pub seeds: Vec<u64>,
    /// Watermarked proportion of the protected corpus.
    pub rho: f64,
    /// Proportions visited by `proportion-sweep`.
    pub rhos: Vec<f64>,
    /// Generated tokens collected per detection, N0.
    pub token_budget: usize,
    /// Budgets visited by `budget-sweep`; all are prefixes of one collection.
    pub budgets: Vec<usize>,
    /// Gate percentage; unset means 40, or 10 for continuation prompts.
    pub q: Option<f64>,
    /// Extra gate percentages reported alongside `q` on the same outputs.
    pub compare_q: Vec<f64>,
    /// The first id names the owner key (or, in attribution, one key per corpus);
    /// the rest are keys that never touched any corpus.
    pub key_ids: Vec<String>,
    /// Key files to use instead of seed-derived keys, matched by key id.
    pub key_files: Vec<PathBuf>,
    /// JSONL corpora; synthetic corpora are generated when empty.
    pub corpus_paths: Vec<PathBuf>,
    /// Synthetic domain names; attribution uses two, fpr-calibration all.
    pub domains: Vec<String>,
    pub d: usize,
    pub w: usize,
    pub lexicon_size: usize,
    pub target_tokens: usize,
    pub min_fanout: usize,
    pub max_fanout: usize,
    pub fixed_fraction: f64,
    pub zipf_low: f64,
    pub zipf_high: f64,
    /// Give every synthetic domain its own function-word inventory.
    pub private_function_words: bool,
    pub order: usize,
    pub add_k: f64,
    pub lambdas: Vec<f64>,
    pub max_vocab: usize,
    pub max_new_tokens: usize,
    pub prefix_fraction: f64,
    /// Size of the clean continued-training corpus relative to the protected one.
    pub continued_factor: f64,
    pub alpha: f64,
    pub dedupe: bool,
    /// Number of clean (model, corpus) pairs in `fpr-calibration`.
    pub fpr_pairs: usize,
    /// Seeds run concurrently; 0 picks the available parallelism.
    pub threads: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let lm = NgramConfig::default();
        Self {
            mode: ExperimentMode::QaDetection,
            seeds: vec![0, 1, 2, 3, 4],
            rho: 1.0,
            rhos: vec![0.25, 0.5, 1.0],
            token_budget: 100_000,
            budgets: vec![10_000, 20_000, 40_000, 60_000, 100_000],
            q: None,
            compare_q: vec![100.0],
            key_ids: vec!["owner".into(), "other".into()],
            key_files: Vec::new(),
            corpus_paths: Vec::new(),
            domains: vec!["alpha".into(), "beta".into(), "gamma".into(), "delta".into()],
            d: 4,
            w: 3,
            lexicon_size: synth.lexicon_size,
            target_tokens: synth.target_tokens,
            min_fanout: synth.min_fanout,
            max_fanout: synth.max_fanout,
            fixed_fraction: synth.fixed_fraction,
            zipf_low: synth.zipf_range.0,
            zipf_high: synth.zipf_range.1,
            private_function_words: true,
            order: lm.order,
            add_k: lm.add_k,
            lambdas: lm.lambdas,
            max_vocab: 5_000,
            max_new_tokens: 128,
            prefix_fraction: super::prompts::DEFAULT_PREFIX_FRACTION,
            continued_factor: 5.0,
            alpha: 0.05,
            dedupe: true,
            fpr_pairs: 12,
            threads: 0,
        }
    }
}

const MIN_BUDGET: usize = 1_000;

impl ExperimentSpec {
    pub fn for_mode(mode: ExperimentMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        for &r in std::iter::once(&self.rho).chain(&self.rhos) {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("rho={r} outside [0, 1]"));
            }
        }
        for &b in std::iter::once(&self.token_budget).chain(&self.budgets) {
            if b < MIN_BUDGET {
                return bad(format!("token budget {b} below {MIN_BUDGET}"));
            }
        }
        if self.mode == ExperimentMode::BudgetSweep && self.budgets.is_empty() {
            return bad("budget-sweep needs budgets".into());
        }
        if self.mode == ExperimentMode::ProportionSweep && self.rhos.is_empty() {
            return bad("proportion-sweep needs rhos".into());
        }
        let needed_keys = if self.mode == ExperimentMode::Attribution { 2 } else { 1 };
        if self.key_ids.len() < needed_keys {
            return bad(format!("{} needs at least {needed_keys} key ids", self.mode.as_str()));
        }
        let mut ids = self.key_ids.clone();
        ids.sort();
        ids.dedup();
        if ids.len() != self.key_ids.len() {
            return bad("duplicate key id".into());
        }
        if self.mode == ExperimentMode::Attribution && self.corpus_paths.len() != 2 && self.domains.len() < 2 {
            return bad("attribution needs two corpora or two domains".into());
        }
        if self.domains.is_empty() && self.corpus_paths.is_empty() {
            return bad("no corpus source".into());
        }
        if !(self.continued_factor > 0.0) {
            return bad("continued_factor must be positive".into());
        }
        self.detect_config(0, 100.0, self.token_budget).validate()?;
        self.sampler().validate()?;
        self.ngram_config().validate()?;
        if !(self.zipf_low <= self.zipf_high) {
            return bad("zipf_low exceeds zipf_high".into());
        }
        Ok(())
    }

    pub fn params(&self) -> WatermarkParams {
        WatermarkParams {
            d: self.d,
            w: self.w,
            salt_with_position: false,
        }
    }

    /// Gate percentage in effect for this mode.
    pub fn gate_q(&self) -> f64 {
        self.q.unwrap_or(match self.mode {
            ExperimentMode::ContinuationDetection => 10.0,
            _ => 40.0,
        })
    }

    pub fn prompt_mode(&self) -> PromptMode {
        match self.mode {
            ExperimentMode::ContinuationDetection => PromptMode::Continuation,
            _ => PromptMode::Qa,
        }
    }

    pub fn synth_config(&self, seed: u64, domain: &str, stream: u64, target_tokens: usize) -> SynthConfig {
        SynthConfig {
            domain: domain.to_string(),
            seed,
            stream,
            lexicon_size: self.lexicon_size,
            target_tokens,
            min_fanout: self.min_fanout,
            max_fanout: self.max_fanout,
            fixed_fraction: self.fixed_fraction,
            zipf_range: (self.zipf_low, self.zipf_high),
            shared_function_words: !self.private_function_words,
        }
    }

    pub fn ngram_config(&self) -> NgramConfig {
        NgramConfig {
            order: self.order,
            add_k: self.add_k,
            lambdas: self.lambdas.clone(),
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            w: self.w,
            ..SamplerConfig::default().with_depth(self.d)
        }
    }

    pub fn rewrite_config(&self, seed: u64, rho: f64) -> RewriteConfig {
        RewriteConfig {
            sampler: self.sampler(),
            rho,
            max_tokens: self.max_new_tokens,
            seed,
        }
    }

    pub fn detect_config(&self, seed: u64, q: f64, budget: usize) -> DetectConfig {
        DetectConfig {
            q,
            token_budget: budget,
            alpha: self.alpha,
            max_new_tokens: self.max_new_tokens,
            params: self.params(),
            shaping: Shaping::detection(),
            rng_seed: seed,
            dedupe: self.dedupe,
            ..DetectConfig::default()
        }
    }

    /// Key for `key_id`: loaded from `key_files` when one matches, otherwise
    /// derived from the seed.
    pub fn key(&self, seed: u64, key_id: &str) -> Result<WatermarkKey> {
        for path in &self.key_files {
            let k = WatermarkKey::load(path)?;
            if k.key_id() == key_id {
                return Ok(k);
            }
        }
        let mut rng = ChaCha20Rng::seed_from_u64(sub_seed(seed, &format!("key/{key_id}"), &[]));
        WatermarkKey::generate(&mut rng, key_id)
    }

    pub fn keys(&self, seed: u64) -> Result<Vec<WatermarkKey>> {
        self.key_ids.iter().map(|id| self.key(seed, id)).collect()
    }

    pub fn digest(&self) -> Result<String> {
        json_digest(self)
    }

    /// Protected corpus number `index` for `seed`: the matching file if given,
    /// otherwise a synthetic corpus of domain `index`.
    pub fn corpus(&self, seed: u64, index: usize) -> Result<Vec<CorpusRecord>> {
        if let Some(path) = self.corpus_paths.get(index) {
            let ing = ingest(path, CorpusMode::Qa)?;
            if ing.records.is_empty() {
                return Err(Error::Empty("corpus"));
            }
            return Ok(ing.records);
        }
        let domain = self
            .domains
            .get(index)
            .ok_or_else(|| Error::InvalidConfig(format!("no corpus or domain #{index}")))?;
        synth_corpus(&self.synth_config(seed, domain, 0, self.target_tokens))
    }
}

fn build_tokenizer(corpora: &[&[CorpusRecord]], max_vocab: usize) -> Tokenizer {
    Tokenizer::build(
        corpora
            .iter()
            .flat_map(|c| c.iter())
            .flat_map(|r| [r.prompt.as_str(), r.response.as_str()]),
        max_vocab,
    )
}

fn train_on(base: &NgramModel, corpora: &[&[CorpusRecord]]) -> Result<NgramModel> {
    let mut m = base.fresh();
    for c in corpora {
        m.train(&training_sequences(c, base.tokenizer()))?;
    }
    Ok(m)
}

/// A protected corpus, the clean model that rewrites it (also the auxiliary
/// entropy model), and the seed's keys.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub seed: u64,
    pub records: Vec<CorpusRecord>,
    pub clean: NgramModel,
    pub keys: Vec<WatermarkKey>,
}

/// A suspect model fine-tuned on a (partly) watermarked corpus.
#[derive(Debug, Clone)]
pub struct Radioactive {
    pub rho: f64,
    pub watermarked: Vec<CorpusRecord>,
    pub manifest: WatermarkManifest,
    pub suspect: NgramModel,
}

impl Fixture {
    pub fn build(spec: &ExperimentSpec, seed: u64) -> Result<Self> {
        let records = spec.corpus(seed, 0).map_err(|e| e.in_stage("load-corpus"))?;
        let tok = build_tokenizer(&[&records], spec.max_vocab);
        let base = NgramModel::new(tok, spec.ngram_config()).map_err(|e| e.in_stage("train-clean"))?;
        let clean = train_on(&base, &[&records]).map_err(|e| e.in_stage("train-clean"))?;
        let keys = spec.keys(seed).map_err(|e| e.in_stage("keys"))?;
        Ok(Self {
            seed,
            records,
            clean,
            keys,
        })
    }

    pub fn owner(&self) -> &WatermarkKey {
        &self.keys[0]
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        self.clean.tokenizer()
    }

    /// Rewrite a `rho` share of the corpus under the owner key and fine-tune a
    /// fresh model on the result.
    pub fn radioactive(&self, spec: &ExperimentSpec, rho: f64) -> Result<Radioactive> {
        let (watermarked, manifest) = watermark_corpus(
            &self.records,
            self.owner(),
            &self.clean,
            &spec.rewrite_config(self.seed, rho),
        )
        .map_err(|e| e.in_stage("watermark"))?;
        let suspect = train_on(&self.clean, &[&watermarked]).map_err(|e| e.in_stage("finetune"))?;
        Ok(Radioactive {
            rho,
            watermarked,
            manifest,
            suspect,
        })
    }

    /// Detection prompts drawn from the rewritten records (all records when
    /// nothing was rewritten).
    pub fn prompts(&self, spec: &ExperimentSpec, rad: &Radioactive, mode: PromptMode) -> Result<PromptSet> {
        let rewritten: std::collections::HashSet<&str> =
            rad.manifest.rewritten.iter().map(String::as_str).collect();
        let source: Vec<CorpusRecord> = if rewritten.is_empty() {
            rad.watermarked.clone()
        } else {
            rad.watermarked
                .iter()
                .filter(|r| rewritten.contains(r.id.as_str()))
                .cloned()
                .collect()
        };
        build_prompts(&source, self.tokenizer(), mode, spec.prefix_fraction).map_err(|e| e.in_stage("prompts"))
    }

    /// Clean same-distribution corpus `continued_factor` times the protected size.
    pub fn clean_extra(&self, spec: &ExperimentSpec) -> Result<Vec<CorpusRecord>> {
        if let Some(path) = spec.corpus_paths.get(1) {
            return Ok(ingest(path, CorpusMode::Plain)?.records);
        }
        let base = token_count(&self.records, self.tokenizer());
        let target = (base as f64 * spec.continued_factor).round() as usize;
        synth_corpus(&spec.synth_config(self.seed, &spec.domains[0], 1, target))
    }

    /// `model` further trained on [`clean_extra`](Self::clean_extra).
    pub fn continue_training(&self, spec: &ExperimentSpec, model: &NgramModel) -> Result<NgramModel> {
        let extra = self.clean_extra(spec).map_err(|e| e.in_stage("continued-training"))?;
        let mut m = model.clone();
        m.train(&training_sequences(&extra, self.tokenizer()))
            .map_err(|e| e.in_stage("continued-training"))?;
        Ok(m)
    }

    pub fn collect(&self, spec: &ExperimentSpec, model: &NgramModel, prompts: &PromptSet, budget: usize) -> Result<Vec<ModelOutput>> {
        let cfg = spec.detect_config(self.seed, spec.gate_q(), budget);
        collect_outputs(model, &prompts.prompts, &cfg).map_err(|e| e.in_stage("generate"))
    }
}

/// One detection report with the experiment coordinates that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: ExperimentMode,
    pub seed: u64,
    /// Distinguishes runs within a seed, e.g. `q40`, `budget-10000`, `after`.
    pub label: String,
    pub rho: f64,
    pub budget: usize,
    pub spec_digest: String,
    pub report: DetectionReport,
}

impl RunRecord {
    pub fn neg_log10_p(&self) -> Option<f64> {
        self.report.neg_log10_p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub runs: Vec<RunRecord>,
    pub manifests: Vec<(String, WatermarkManifest)>,
}

impl SeedResult {
    pub fn find(&self, label: &str, key_id: &str) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.label == label && r.report.key_id == key_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentBundle {
    pub spec: ExperimentSpec,
    pub spec_digest: String,
    pub seeds: Vec<SeedResult>,
}

impl ExperimentBundle {
    pub fn runs(&self) -> impl Iterator<Item = &RunRecord> {
        self.seeds.iter().flat_map(|s| s.runs.iter())
    }
}

struct Emitter<'a> {
    spec: &'a ExperimentSpec,
    digest: &'a str,
    seed: u64,
    runs: Vec<RunRecord>,
}

impl Emitter<'_> {
    /// Reports for every key and every gate in `qs` over one set of outputs.
    fn detect(
        &mut self,
        outputs: &[ModelOutput],
        aux: &NgramModel,
        keys: &[WatermarkKey],
        qs: &[f64],
        label: &str,
        rho: f64,
        budget: usize,
    ) -> Result<()> {
        let prep = Prepared::new(outputs, aux).map_err(|e| e.in_stage("detect"))?;
        for &q in qs {
            let cfg = self.spec.detect_config(self.seed, q, budget);
            for key in keys {
                let report = prep.report(outputs, key, &cfg).map_err(|e| e.in_stage("detect"))?;
                let label = if qs.len() > 1 {
                    format!("{label}q{q}")
                } else {
                    label.to_string()
                };
                self.runs.push(RunRecord {
                    mode: self.spec.mode,
                    seed: self.seed,
                    label,
                    rho,
                    budget,
                    spec_digest: self.digest.to_string(),
                    report,
                });
            }
        }
        Ok(())
    }
}

fn gates(spec: &ExperimentSpec) -> Vec<f64> {
    let mut qs = vec![spec.gate_q()];
    for &q in &spec.compare_q {
        if !qs.contains(&q) {
            qs.push(q);
        }
    }
    qs
}

/// Run every stage of `spec.mode` for one seed.
pub fn run_seed(spec: &ExperimentSpec, seed: u64) -> Result<SeedResult> {
    let digest = spec.digest()?;
    let mut em = Emitter {
        spec,
        digest: &digest,
        seed,
        runs: Vec::new(),
    };
    let mut manifests = Vec::new();
    match spec.mode {
        ExperimentMode::QaDetection | ExperimentMode::ContinuationDetection => {
            let fx = Fixture::build(spec, seed)?;
            let rad = fx.radioactive(spec, spec.rho)?;
            let prompts = fx.prompts(spec, &rad, spec.prompt_mode())?;
            let outputs = fx.collect(spec, &rad.suspect, &prompts, spec.token_budget)?;
            em.detect(&outputs, &fx.clean, &fx.keys, &gates(spec), "", rad.rho, spec.token_budget)?;
            manifests.push(("main".to_string(), rad.manifest));
        }
        ExperimentMode::BudgetSweep => {
            let fx = Fixture::build(spec, seed)?;
            let rad = fx.radioactive(spec, spec.rho)?;
            let prompts = fx.prompts(spec, &rad, spec.prompt_mode())?;
            let max = *spec.budgets.iter().max().expect("validated nonempty");
            let outputs = fx.collect(spec, &rad.suspect, &prompts, max)?;
            for &b in &spec.budgets {
                let cut = truncate_outputs(&outputs, b);
                em.detect(&cut, &fx.clean, &fx.keys, &[spec.gate_q()], &format!("budget-{b}"), rad.rho, b)?;
            }
            manifests.push(("main".to_string(), rad.manifest));
        }
        ExperimentMode::ProportionSweep => {
            let fx = Fixture::build(spec, seed)?;
            for &rho in &spec.rhos {
                let rad = fx.radioactive(spec, rho)?;
                let prompts = fx.prompts(spec, &rad, spec.prompt_mode())?;
                let outputs = fx.collect(spec, &rad.suspect, &prompts, spec.token_budget)?;
                let label = format!("rho-{rho:.2}");
                em.detect(&outputs, &fx.clean, &fx.keys, &[spec.gate_q()], &label, rho, spec.token_budget)?;
                manifests.push((label, rad.manifest));
            }
        }
        ExperimentMode::ContinuedTraining => {
            let fx = Fixture::build(spec, seed)?;
            let rad = fx.radioactive(spec, spec.rho)?;
            let prompts = fx.prompts(spec, &rad, spec.prompt_mode())?;
            let before = fx.collect(spec, &rad.suspect, &prompts, spec.token_budget)?;
            em.detect(&before, &fx.clean, &fx.keys, &[spec.gate_q()], "before", rad.rho, spec.token_budget)?;
            let cont = fx.continue_training(spec, &rad.suspect)?;
            let after = fx.collect(spec, &cont, &prompts, spec.token_budget)?;
            em.detect(&after, &fx.clean, &fx.keys, &[spec.gate_q()], "after", rad.rho, spec.token_budget)?;
            manifests.push(("main".to_string(), rad.manifest));
        }
        ExperimentMode::Attribution => {
            let attr = AttributionFixture::build(spec, seed)?;
            for (i, name) in attr.names.iter().enumerate() {
                let outputs = attr.collect(spec, i, spec.token_budget)?;
                em.detect(&outputs, &attr.clean, &attr.keys, &[spec.gate_q()], &format!("prompts-{name}"), spec.rho, spec.token_budget)?;
            }
            for (name, m) in attr.names.iter().zip(attr.manifests) {
                manifests.push((name.clone(), m));
            }
        }
        ExperimentMode::FprCalibration => {
            for (label, outputs, aux) in fpr_pairs(spec, seed)? {
                em.detect(&outputs, &aux, &spec.keys(seed)?, &[spec.gate_q()], &label, 0.0, spec.token_budget)?;
            }
        }
    }
    Ok(SeedResult {
        seed,
        runs: em.runs,
        manifests,
    })
}

/// Two protected corpora with their own keys and one suspect model trained on
/// both watermarked corpora.
#[derive(Debug, Clone)]
pub struct AttributionFixture {
    pub seed: u64,
    pub names: Vec<String>,
    pub corpora: Vec<Vec<CorpusRecord>>,
    pub clean: NgramModel,
    /// One key per corpus, then the unrelated keys.
    pub keys: Vec<WatermarkKey>,
    pub watermarked: Vec<Vec<CorpusRecord>>,
    pub manifests: Vec<WatermarkManifest>,
    pub suspect: NgramModel,
}

impl AttributionFixture {
    pub fn build(spec: &ExperimentSpec, seed: u64) -> Result<Self> {
        let corpora = (0..2)
            .map(|i| spec.corpus(seed, i))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("load-corpus"))?;
        let names: Vec<String> = (0..2)
            .map(|i| match spec.corpus_paths.get(i) {
                Some(p) => p.file_stem().map_or(format!("c{i}"), |s| s.to_string_lossy().into_owned()),
                None => spec.domains[i].clone(),
            })
            .collect();
        let refs: Vec<&[CorpusRecord]> = corpora.iter().map(Vec::as_slice).collect();
        let tok = build_tokenizer(&refs, spec.max_vocab);
        let base = NgramModel::new(tok, spec.ngram_config()).map_err(|e| e.in_stage("train-clean"))?;
        let clean = train_on(&base, &refs).map_err(|e| e.in_stage("train-clean"))?;
        let keys = spec.keys(seed).map_err(|e| e.in_stage("keys"))?;
        let mut watermarked = Vec::new();
        let mut manifests = Vec::new();
        for (i, c) in corpora.iter().enumerate() {
            let cfg = spec.rewrite_config(sub_seed(seed, "attribution", &[i as u64]), spec.rho);
            let (wm, man) = watermark_corpus(c, &keys[i], &clean, &cfg).map_err(|e| e.in_stage("watermark"))?;
            watermarked.push(wm);
            manifests.push(man);
        }
        let wrefs: Vec<&[CorpusRecord]> = watermarked.iter().map(Vec::as_slice).collect();
        let suspect = train_on(&clean, &wrefs).map_err(|e| e.in_stage("finetune"))?;
        Ok(Self {
            seed,
            names,
            corpora,
            clean,
            keys,
            watermarked,
            manifests,
            suspect,
        })
    }

    /// Suspect outputs for prompts drawn from corpus `index`.
    pub fn collect(&self, spec: &ExperimentSpec, index: usize, budget: usize) -> Result<Vec<ModelOutput>> {
        let prompts = build_prompts(&self.watermarked[index], self.clean.tokenizer(), spec.prompt_mode(), spec.prefix_fraction)
            .map_err(|e| e.in_stage("prompts"))?;
        let cfg = spec.detect_config(sub_seed(self.seed, "attribution-query", &[index as u64]), spec.gate_q(), budget);
        collect_outputs(&self.suspect, &prompts.prompts, &cfg).map_err(|e| e.in_stage("generate"))
    }
}

/// Model variants for the clean null grid: (label, order, interpolation weights).
fn null_models(order: usize) -> Vec<(String, usize, Vec<f64>)> {
    let base = vec![
        ("bigram".to_string(), 2, vec![0.3, 0.7]),
        ("trigram".to_string(), 3, vec![0.1, 0.3, 0.6]),
        ("4gram".to_string(), 4, vec![0.1, 0.2, 0.3, 0.4]),
    ];
    let mut out: Vec<_> = base.into_iter().filter(|m| m.1 != order).collect();
    out.insert(0, ("configured".to_string(), order, Vec::new()));
    out
}

/// `fpr_pairs` clean (model, corpus) pairs, no watermark anywhere: outputs of
/// each model and the clean auxiliary model of its corpus.
fn fpr_pairs(spec: &ExperimentSpec, seed: u64) -> Result<Vec<(String, Vec<ModelOutput>, NgramModel)>> {
    let n_corpora = spec.corpus_paths.len().max(spec.domains.len());
    let models = null_models(spec.order);
    let mut out = Vec::new();
    'outer: for mi in 0..models.len() {
        for ci in 0..n_corpora {
            if out.len() == spec.fpr_pairs {
                break 'outer;
            }
            let records = spec.corpus(seed, ci).map_err(|e| e.in_stage("load-corpus"))?;
            let tok = build_tokenizer(&[&records], spec.max_vocab);
            let aux_base = NgramModel::new(tok.clone(), spec.ngram_config()).map_err(|e| e.in_stage("train-clean"))?;
            let aux = train_on(&aux_base, &[&records]).map_err(|e| e.in_stage("train-clean"))?;
            let (name, order, lambdas) = &models[mi];
            let cfg = if lambdas.is_empty() {
                spec.ngram_config()
            } else {
                NgramConfig {
                    order: *order,
                    lambdas: lambdas.clone(),
                    ..spec.ngram_config()
                }
            };
            let model = train_on(&NgramModel::new(tok, cfg).map_err(|e| e.in_stage("train-clean"))?, &[&records])
                .map_err(|e| e.in_stage("train-clean"))?;
            let prompts = build_prompts(&records, model.tokenizer(), spec.prompt_mode(), spec.prefix_fraction)
                .map_err(|e| e.in_stage("prompts"))?;
            let dcfg = spec.detect_config(sub_seed(seed, "fpr", &[out.len() as u64]), spec.gate_q(), spec.token_budget);
            let outputs = collect_outputs(&model, &prompts.prompts, &dcfg).map_err(|e| e.in_stage("generate"))?;
            out.push((format!("{name}-c{ci}"), outputs, aux));
        }
    }
    if out.len() < spec.fpr_pairs {
        return Err(Error::InvalidConfig(format!(
            "only {} clean pairs available for fpr_pairs={}",
            out.len(),
            spec.fpr_pairs
        )));
    }
    Ok(out)
}

fn run_seeds(spec: &ExperimentSpec) -> Vec<Result<SeedResult>> {
    let threads = if spec.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        spec.threads
    };
    let mut results = Vec::with_capacity(spec.seeds.len());
    for chunk in spec.seeds.chunks(threads.max(1)) {
        if chunk.len() == 1 {
            results.push(run_seed(spec, chunk[0]));
            continue;
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&seed| s.spawn(move || run_seed(spec, seed))).collect();
            for h in handles {
                results.push(h.join().unwrap_or_else(|_| Err(Error::InvalidConfig("worker panicked".into()))));
            }
        });
    }
    results
}

/// Execute `spec` for every seed and write the bundle under `out_dir`:
/// `spec.json`, `reports/*.json`, `manifests/*.json`, `summary.csv` and
/// `summary.txt`. If any seed fails, what finished is written under
/// `out_dir/failed/` with `error.txt`, and the stage error is returned.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<ExperimentBundle> {
    spec.validate()?;
    let spec_digest = spec.digest()?;
    let mut seeds = Vec::new();
    let mut first_err = None;
    for r in run_seeds(spec) {
        match r {
            Ok(s) => seeds.push(s),
            Err(e) if first_err.is_none() => first_err = Some(e),
            Err(_) => {}
        }
    }
    let bundle = ExperimentBundle {
        spec: spec.clone(),
        spec_digest,
        seeds,
    };
    match first_err {
        None => {
            write_bundle(&bundle, out_dir).map_err(|e| e.in_stage("write"))?;
            Ok(bundle)
        }
        Some(err) => {
            let failed = out_dir.join("failed");
            write_bundle(&bundle, &failed).map_err(|e| e.in_stage("write"))?;
            fs::write(failed.join("error.txt"), format!("{err}\n"))?;
            Err(err)
        }
    }
}

fn safe_name(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '_' { c } else { '_' })
        .collect();
    if cleaned.is_empty() || cleaned.starts_with('.') {
        format!("_{cleaned}")
    } else {
        cleaned
    }
}

fn run_file_name(r: &RunRecord) -> String {
    let label = if r.label.is_empty() { "run" } else { &r.label };
    safe_name(&format!("seed{}-{}-{}.json", r.seed, label, r.report.key_id))
}

pub fn write_bundle(bundle: &ExperimentBundle, out_dir: &Path) -> Result<()> {
    let reports = out_dir.join("reports");
    let manifests = out_dir.join("manifests");
    fs::create_dir_all(&reports)?;
    fs::create_dir_all(&manifests)?;
    fs::write(out_dir.join("spec.json"), serde_json::to_string_pretty(&bundle.spec)?)?;
    for r in bundle.runs() {
        fs::write(reports.join(run_file_name(r)), serde_json::to_string_pretty(r)?)?;
    }
    for s in &bundle.seeds {
        for (label, m) in &s.manifests {
            let name = safe_name(&format!("seed{}-{}.json", s.seed, label));
            fs::write(manifests.join(name), serde_json::to_string_pretty(m)?)?;
        }
    }
    fs::write(out_dir.join("summary.csv"), summary_csv(bundle))?;
    fs::write(out_dir.join("summary.txt"), summary_text(bundle))?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

pub fn summary_csv(bundle: &ExperimentBundle) -> String {
    let mut s = String::from("mode,seed,label,key_id,rho,budget,q,n0,n_selected,z,p_value,neg_log10_p,significant,flags\n");
    for r in bundle.runs() {
        let rep = &r.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.mode.as_str(),
            r.seed,
            r.label,
            rep.key_id,
            r.rho,
            r.budget,
            rep.q,
            rep.n0,
            rep.n_selected,
            rep.z,
            fmt_opt(rep.p_value),
            fmt_opt(rep.neg_log10_p()),
            rep.significant,
            rep.flags.join("|")
        );
    }
    s
}

pub fn summary_text(bundle: &ExperimentBundle) -> String {
    let spec = &bundle.spec;
    let mut s = String::new();
    let _ = writeln!(s, "experiment {} ({} seeds)", spec.mode.as_str(), bundle.seeds.len());
    let _ = writeln!(s, "spec digest {}", bundle.spec_digest);
    let _ = writeln!(s, "alpha {}  d {}  w {}  dedupe {}", spec.alpha, spec.d, spec.w, spec.dedupe);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:>5}  {:<22} {:<10} {:>7} {:>7} {:>8} {:>10}  sig", "seed", "label", "key", "N0", "|S|", "z", "-log10 p");
    for r in bundle.runs() {
        let rep = &r.report;
        let _ = writeln!(
            s,
            "{:>5}  {:<22} {:<10} {:>7} {:>7} {:>8.2} {:>10}  {}{}",
            r.seed,
            if r.label.is_empty() { "-" } else { &r.label },
            rep.key_id,
            rep.n0,
            rep.n_selected,
            rep.z,
            rep.neg_log10_p().map_or("-".into(), |v| format!("{v:.2}")),
            if rep.significant { "yes" } else { "no" },
            if rep.flags.is_empty() { String::new() } else { format!("  [{}]", rep.flags.join(",")) }
        );
    }
    let _ = writeln!(s);
    let mut keys: Vec<&str> = bundle.runs().map(|r| r.report.key_id.as_str()).collect();
    keys.sort_unstable();
    keys.dedup();
    for k in keys {
        let all: Vec<_> = bundle.runs().filter(|r| r.report.key_id == k).collect();
        let sig = all.iter().filter(|r| r.report.significant).count();
        let _ = writeln!(s, "key {k}: significant in {sig} of {} runs", all.len());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::super::config::FlatConfig;
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in ExperimentMode::ALL {
            assert_eq!(m.as_str().parse::<ExperimentMode>().unwrap(), m);
        }
        assert!("nope".parse::<ExperimentMode>().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ExperimentSpec::default().validate().is_ok());
        let bad = ExperimentSpec {
            rho: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentSpec {
            token_budget: 999,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentSpec {
            key_ids: vec!["a".into(), "a".into()],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn gate_defaults_by_mode() {
        assert_eq!(ExperimentSpec::for_mode(ExperimentMode::QaDetection).gate_q(), 40.0);
        assert_eq!(ExperimentSpec::for_mode(ExperimentMode::ContinuationDetection).gate_q(), 10.0);
        let s = ExperimentSpec {
            q: Some(25.0),
            ..ExperimentSpec::for_mode(ExperimentMode::ContinuationDetection)
        };
        assert_eq!(s.gate_q(), 25.0);
    }

    #[test]
    fn derived_keys_are_stable_and_distinct() {
        let spec = ExperimentSpec::default();
        let a = spec.key(3, "owner").unwrap();
        assert_eq!(a.bytes(), spec.key(3, "owner").unwrap().bytes());
        assert_ne!(a.bytes(), spec.key(4, "owner").unwrap().bytes());
        assert_ne!(a.bytes(), spec.key(3, "other").unwrap().bytes());
    }

    #[test]
    fn file_names_stay_inside() {
        assert_eq!(safe_name("../../etc"), "_.._.._etc");
        assert!(!safe_name("a/b").contains('/'));
    }

    #[test]
    fn spec_from_flat_toml() {
        let cfg = FlatConfig::parse(
            "mode = \"budget-sweep\"\nseeds = [1, 2]\nbudgets = [10000, 20000]\nq = 30.0\n",
        )
        .unwrap();
        let spec: ExperimentSpec = cfg.to_struct().unwrap();
        assert_eq!(spec.mode, ExperimentMode::BudgetSweep);
        assert_eq!(spec.seeds, vec![1, 2]);
        assert_eq!(spec.gate_q(), 30.0);
        assert_eq!(spec.w, 3);
        assert!(FlatConfig::parse("bogus = 1").unwrap().to_struct::<ExperimentSpec>().is_err());
    }
}
