//! Seeded synthetic question/answer corpora.
//!
//! Each domain owns a pseudo-word lexicon and a sparse word-to-word
//! transition table whose fan-out varies from a handful of successors to
//! dozens, so next-token entropy differs a lot between contexts.

use std::collections::{BTreeMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::corpus::CorpusRecord;
use crate::digest::sub_seed;
use crate::error::{Error, Result};

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "of", "to", "and", "in", "is", "for", "with", "on", "that", "by", "as", "it",
    "be", "are", "this", "from", "or", "can", "not", "will", "its", "into", "more", "each",
];
const QUESTION_WORDS: &[&str] = &["what", "how", "why", "which", "when", "does", "where"];
const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cr", "dr",
    "gl", "pl", "st", "tr", "sh", "th",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "ea"];
const CODAS: &[&str] = &["", "", "", "n", "r", "s", "l", "x", "m"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub domain: String,
    pub seed: u64,
    /// Selects an independent record stream from the same domain grammar.
    pub stream: u64,
    /// Content words in the domain lexicon.
    pub lexicon_size: usize,
    /// Stop adding records once this many words and punctuation marks exist.
    pub target_tokens: usize,
    pub min_fanout: usize,
    pub max_fanout: usize,
    /// Share of words that are always followed by the same word, like the
    /// first half of a fixed phrase.
    pub fixed_fraction: f64,
    /// Range of the Zipf exponent drawn per successor list.
    pub zipf_range: (f64, f64),
    /// Use the common English function words. When false each domain draws
    /// its own pseudo-word inventory, so two domains share only punctuation
    /// and question words.
    pub shared_function_words: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            domain: "general".into(),
            seed: 0,
            stream: 0,
            lexicon_size: 300,
            target_tokens: 200_000,
            min_fanout: 2,
            max_fanout: 60,
            fixed_fraction: 0.5,
            zipf_range: (0.0, 0.6),
            shared_function_words: true,
        }
    }
}

/// A domain "grammar": words plus sparse weighted successor lists.
#[derive(Debug, Clone)]
pub struct SynthDomain {
    words: Vec<String>,
    n_function: usize,
    successors: Vec<(Vec<usize>, WeightedIndex<f64>)>,
    starts: WeightedIndex<f64>,
}

fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
        w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
    }
    w.push_str(CODAS[rng.random_range(0..CODAS.len())]);
    w
}

fn zipf_weights<R: Rng>(n: usize, range: (f64, f64), rng: &mut R) -> Vec<f64> {
    let s: f64 = rng.random_range(range.0..=range.1);
    (1..=n).map(|r| (r as f64).powf(-s)).collect()
}

impl SynthDomain {
    pub fn new(cfg: &SynthConfig) -> Result<Self> {
        if cfg.lexicon_size < 10 {
            return Err(Error::InvalidConfig("lexicon_size must be >= 10".into()));
        }
        if !(0.0..=1.0).contains(&cfg.fixed_fraction) {
            return Err(Error::InvalidConfig("fixed_fraction must lie in [0, 1]".into()));
        }
        let (z0, z1) = cfg.zipf_range;
        if !(z0 >= 0.0 && z1 >= z0 && z1.is_finite()) {
            return Err(Error::InvalidConfig("zipf_range must satisfy 0 <= low <= high".into()));
        }
        if cfg.min_fanout == 0 || cfg.max_fanout < cfg.min_fanout {
            return Err(Error::InvalidConfig("need 1 <= min_fanout <= max_fanout".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(sub_seed(cfg.seed, &cfg.domain, &[]));
        let reserved: HashSet<&str> = FUNCTION_WORDS.iter().chain(QUESTION_WORDS).copied().collect();
        let mut seen: HashSet<String> = HashSet::new();
        let mut words: Vec<String> = if cfg.shared_function_words {
            FUNCTION_WORDS.iter().map(|s| s.to_string()).collect()
        } else {
            let mut frng = ChaCha20Rng::seed_from_u64(sub_seed(cfg.seed, &cfg.domain, &[2]));
            let mut fw = Vec::with_capacity(FUNCTION_WORDS.len());
            while fw.len() < FUNCTION_WORDS.len() {
                let w = pseudo_word(&mut frng);
                if !reserved.contains(w.as_str()) && seen.insert(w.clone()) {
                    fw.push(w);
                }
            }
            fw
        };
        let n_function = words.len();
        while words.len() < n_function + cfg.lexicon_size {
            let w = pseudo_word(&mut rng);
            if !reserved.contains(w.as_str()) && seen.insert(w.clone()) {
                words.push(w);
            }
        }
        let n = words.len();
        let lo = (cfg.min_fanout as f64).ln();
        let hi = (cfg.max_fanout as f64).ln();
        // Fixed words only lead to open words, so no deterministic cycle exists.
        let fixed: Vec<bool> = (0..n)
            .map(|i| i >= n_function && rng.random_bool(cfg.fixed_fraction))
            .collect();
        let open_content: Vec<usize> = (n_function..n).filter(|&i| !fixed[i]).collect();
        if open_content.is_empty() {
            return Err(Error::InvalidConfig("fixed_fraction leaves no open words".into()));
        }
        let mut successors = Vec::with_capacity(n);
        for &is_fixed in &fixed {
            let fanout = if is_fixed {
                1
            } else {
                (rng.random_range(lo..=hi).exp().round() as usize).min(n)
            };
            let mut next = Vec::with_capacity(fanout);
            let mut used = HashSet::new();
            while next.len() < fanout {
                // function words are popular successors
                let cand = if is_fixed {
                    open_content[rng.random_range(0..open_content.len())]
                } else if rng.random_bool(0.25) {
                    rng.random_range(0..n_function)
                } else {
                    rng.random_range(n_function..n)
                };
                if used.insert(cand) {
                    next.push(cand);
                }
            }
            let dist = WeightedIndex::new(zipf_weights(next.len(), cfg.zipf_range, &mut rng))
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            successors.push((next, dist));
        }
        let starts = WeightedIndex::new(zipf_weights(n, cfg.zipf_range, &mut rng))
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(Self {
            words,
            n_function,
            successors,
            starts,
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Appends a chain of `len` words from `start`; returns the last word.
    fn walk<R: Rng>(&self, start: usize, len: usize, rng: &mut R, out: &mut Vec<String>) -> usize {
        let mut cur = start;
        out.push(self.words[cur].clone());
        for _ in 1..len {
            let (next, dist) = &self.successors[cur];
            cur = next[dist.sample(rng)];
            out.push(self.words[cur].clone());
        }
        cur
    }

    fn content_start<R: Rng>(&self, rng: &mut R) -> usize {
        loop {
            let i = self.starts.sample(rng);
            if i >= self.n_function {
                return i;
            }
        }
    }

    /// One record: a question and a 2-4 sentence answer. The question has no
    /// closing mark and the answer continues its word chain, so the last
    /// question word (private to the domain) conditions the first answer word.
    pub fn record<R: Rng>(&self, id: String, rng: &mut R) -> CorpusRecord {
        let mut q = vec![QUESTION_WORDS[rng.random_range(0..QUESTION_WORDS.len())].to_string()];
        let topic = self.content_start(rng);
        let qlen = rng.random_range(4..=9);
        let last = self.walk(topic, qlen, rng, &mut q);
        let (next, dist) = &self.successors[last];
        let first = next[dist.sample(rng)];

        let mut a = Vec::new();
        let sentences = rng.random_range(2..=4);
        for s in 0..sentences {
            let start = if s == 0 { first } else { self.starts.sample(rng) };
            let len = rng.random_range(7..=15);
            self.walk(start, len, rng, &mut a);
            a.push(".".into());
        }
        let mut rec = CorpusRecord::new(id, q.join(" "), a.join(" "));
        rec.metadata = Some(BTreeMap::new());
        rec
    }
}

/// Records until `target_tokens` is reached.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Vec<CorpusRecord>> {
    let domain = SynthDomain::new(cfg)?;
    let mut rng = ChaCha20Rng::seed_from_u64(sub_seed(cfg.seed, &cfg.domain, &[1, cfg.stream]));
    let prefix = if cfg.stream == 0 {
        cfg.domain.clone()
    } else {
        format!("{}-s{}", cfg.domain, cfg.stream)
    };
    let mut records = Vec::new();
    let mut tokens = 0;
    while tokens < cfg.target_tokens {
        let mut rec = domain.record(format!("{prefix}-{:06}", records.len()), &mut rng);
        if let Some(m) = rec.metadata.as_mut() {
            m.insert("domain".into(), cfg.domain.clone().into());
        }
        tokens += rec.prompt.split(' ').count() + rec.response.split(' ').count();
        records.push(rec);
    }
    Ok(records)
}
