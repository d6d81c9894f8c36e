use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{compress_ratio, mink_score, SampleFeatures, COMPRESSION_LEVEL, MINK_FRACTION};
use super::split::{welch_t_one_sided, Alternative, SplitTestResult};
use crate::error::{Error, Result};
use crate::lm::NgramModel;
use crate::pipeline::CorpusRecord;

/// Per-sample membership score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiaMethod {
    /// Perplexity of the full training form of the record.
    Ppl,
    /// Min-K% mean negative log-likelihood.
    Mink,
    /// Compressed over raw byte length; does not consult the model.
    Compress,
}

impl MiaMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MiaMethod::Ppl => "ppl",
            MiaMethod::Mink => "mink",
            MiaMethod::Compress => "compress",
        }
    }
}

impl std::str::FromStr for MiaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppl" => Ok(MiaMethod::Ppl),
            "mink" | "min-k" => Ok(MiaMethod::Mink),
            "compress" | "zlib" => Ok(MiaMethod::Compress),
            other => Err(Error::InvalidConfig(format!("unknown MIA method {other:?}"))),
        }
    }
}

fn record_text(r: &CorpusRecord) -> String {
    if r.response.is_empty() {
        r.prompt.clone()
    } else {
        format!("{}\n{}", r.prompt, r.response)
    }
}

fn record_logprobs(model: &NgramModel, r: &CorpusRecord) -> Vec<f64> {
    let tokens = r.training_tokens(model.tokenizer());
    model.token_logprobs(&[], &tokens)
}

/// Score of each record under `method`; lower means more member-like.
pub fn mia_scores(
    model: &NgramModel,
    records: &[CorpusRecord],
    method: MiaMethod,
    mink_k: f64,
) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| match method {
            MiaMethod::Ppl => {
                let lp = record_logprobs(model, r);
                Ok((-lp.iter().sum::<f64>() / lp.len() as f64).exp())
            }
            MiaMethod::Mink => mink_score(&record_logprobs(model, r), mink_k),
            MiaMethod::Compress => compress_ratio(record_text(r).as_bytes()),
        })
        .collect()
}

/// Feature rows for [`ddi_test`](super::ddi_test).
pub fn sample_features(model: &NgramModel, records: &[CorpusRecord]) -> Result<Vec<SampleFeatures>> {
    records
        .iter()
        .map(|r| SampleFeatures::compute(r.id.clone(), &record_logprobs(model, r), record_text(r).as_bytes()))
        .collect()
}

/// Training split as positives, evaluation split as negatives, one-sided
/// Welch test for lower scores on the positives.
pub fn mia_split_test(
    model: &NgramModel,
    pos: &[CorpusRecord],
    neg: &[CorpusRecord],
    method: MiaMethod,
) -> Result<SplitTestResult> {
    mia_split_test_k(model, pos, neg, method, MINK_FRACTION)
}

pub fn mia_split_test_k(
    model: &NgramModel,
    pos: &[CorpusRecord],
    neg: &[CorpusRecord],
    method: MiaMethod,
    mink_k: f64,
) -> Result<SplitTestResult> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Empty("MIA corpus"));
    }
    let sp = mia_scores(model, pos, method, mink_k)?;
    let sn = mia_scores(model, neg, method, mink_k)?;
    let mut res = welch_t_one_sided(&sp, &sn, Alternative::PosLess)?;
    res.method = method.as_str().into();
    match method {
        MiaMethod::Mink => res.notes.push(format!("k={mink_k}")),
        MiaMethod::Compress => res.notes.push(format!("zlib_level={COMPRESSION_LEVEL}")),
        MiaMethod::Ppl => {}
    }
    Ok(res)
}

/// One CSV row per sample: `split,id,ppl,mean_logp,kmin_logp,kmax_logp,compress_ratio,length`.
pub fn write_features_csv(
    path: impl AsRef<Path>,
    splits: &[(&str, &[SampleFeatures])],
) -> Result<()> {
    let mut out = fs::File::create(path)?;
    writeln!(out, "split,id,{}", SampleFeatures::NAMES.join(","))?;
    for (name, rows) in splits {
        for f in rows.iter() {
            writeln!(
                out,
                "{name},{},{},{},{},{},{},{}",
                csv_field(&f.id),
                f.ppl,
                f.mean_logp,
                f.kmin_logp,
                f.kmax_logp,
                f.compress_ratio,
                f.length
            )?;
        }
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
