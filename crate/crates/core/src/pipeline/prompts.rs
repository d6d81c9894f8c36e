use serde::{Deserialize, Serialize};

use super::corpus::CorpusRecord;
use crate::error::{Error, Result};
use crate::lm::Tokenizer;
use crate::TokenId;

/// Responses shorter than this are not used for continuation prompts.
pub const MIN_CONTINUATION_TOKENS: usize = 8;
pub const DEFAULT_PREFIX_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    /// The record's question, unchanged.
    Qa,
    /// A leading slice of the record's response, to be continued.
    Continuation,
}

impl std::str::FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qa" => Ok(PromptMode::Qa),
            "continuation" => Ok(PromptMode::Continuation),
            other => Err(Error::InvalidConfig(format!("unknown prompt mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PromptSet {
    pub prompts: Vec<Vec<TokenId>>,
    /// Source record of each prompt.
    pub ids: Vec<String>,
    /// Records too short to yield a continuation prompt.
    pub skipped: usize,
}

/// Detection prompts from a corpus. Continuation prompts keep the first
/// `ceil(prefix_fraction * len)` response tokens.
pub fn build_prompts(
    records: &[CorpusRecord],
    tok: &Tokenizer,
    mode: PromptMode,
    prefix_fraction: f64,
) -> Result<PromptSet> {
    if records.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    if mode == PromptMode::Continuation && !(prefix_fraction > 0.0 && prefix_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "prefix fraction {prefix_fraction} must lie in (0, 1)"
        )));
    }
    let mut set = PromptSet::default();
    for r in records {
        let prompt = match mode {
            PromptMode::Qa => r.prompt_tokens(tok),
            PromptMode::Continuation => {
                let resp = tok.encode(&r.response);
                if resp.len() < MIN_CONTINUATION_TOKENS {
                    set.skipped += 1;
                    continue;
                }
                let keep = (prefix_fraction * resp.len() as f64 - 1e-9).ceil() as usize;
                resp[..keep.clamp(1, resp.len() - 1)].to_vec()
            }
        };
        set.prompts.push(prompt);
        set.ids.push(r.id.clone());
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok() -> Tokenizer {
        Tokenizer::with_words((0..40).map(|i| format!("w{i}")).chain(["?".to_string()]), 100)
    }

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn qa_prompts_are_questions() {
        let t = tok();
        let recs = vec![CorpusRecord::new("a", "w1 w2 ?", "w3"), CorpusRecord::new("b", "w4 ?", "w5 w6")];
        let set = build_prompts(&recs, &t, PromptMode::Qa, 0.5).unwrap();
        assert_eq!(set.prompts[0], t.encode("w1 w2 ?"));
        assert_eq!(set.prompts[1], t.encode("w4 ?"));
        assert_eq!(set.skipped, 0);
    }

    #[test]
    fn continuation_prefix() {
        let t = tok();
        let recs = vec![
            CorpusRecord::new("long", "w0 ?", words(20)),
            CorpusRecord::new("short", "w0 ?", words(5)),
            CorpusRecord::new("odd", "w0 ?", words(9)),
        ];
        let set = build_prompts(&recs, &t, PromptMode::Continuation, 0.5).unwrap();
        assert_eq!(set.prompts.len(), 2);
        assert_eq!(set.prompts[0], t.encode(&words(10)));
        assert_eq!(set.prompts[1].len(), 5);
        assert_eq!(set.skipped, 1);
        assert_eq!(set.ids, vec!["long", "odd"]);
    }

    #[test]
    fn rejects_bad_fraction_and_empty() {
        let t = tok();
        let recs = vec![CorpusRecord::new("a", "w0", words(10))];
        assert!(build_prompts(&recs, &t, PromptMode::Continuation, 1.0).is_err());
        assert!(build_prompts(&recs, &t, PromptMode::Continuation, 0.0).is_err());
        assert!(build_prompts(&[], &t, PromptMode::Qa, 0.5).is_err());
    }
}
