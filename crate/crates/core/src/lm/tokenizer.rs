use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{TokenId, BOS, EOS, UNK};

pub const BOS_STR: &str = "<bos>";
pub const EOS_STR: &str = "<eos>";
pub const UNK_STR: &str = "<unk>";

/// Lowercased word/punctuation tokenizer with a frozen vocabulary.
///
/// Ids 0, 1 and 2 are reserved for BOS, EOS and UNK. A word is a maximal run
/// of alphanumeric characters; every other non-whitespace character is a
/// token of its own. The literal `<unk>` maps back to UNK so that decoded
/// text re-encodes to the same ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "TokenizerRepr", into = "TokenizerRepr")]
pub struct Tokenizer {
    vocab: Vec<String>,
    index: HashMap<String, TokenId>,
    max_vocab: usize,
}

#[derive(Serialize, Deserialize)]
struct TokenizerRepr {
    max_vocab: usize,
    vocab: Vec<String>,
}

impl From<TokenizerRepr> for Tokenizer {
    fn from(r: TokenizerRepr) -> Self {
        Tokenizer::from_vocab(r.vocab, r.max_vocab)
    }
}

impl From<Tokenizer> for TokenizerRepr {
    fn from(t: Tokenizer) -> Self {
        TokenizerRepr {
            max_vocab: t.max_vocab,
            vocab: t.vocab,
        }
    }
}

pub fn segment(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    let mut word = String::new();
    let mut rest = lower.as_str();
    while let Some(c) = rest.chars().next() {
        if rest.starts_with(UNK_STR) {
            flush(&mut word, &mut out);
            out.push(UNK_STR.to_string());
            rest = &rest[UNK_STR.len()..];
            continue;
        }
        if c.is_alphanumeric() {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
        rest = &rest[c.len_utf8()..];
    }
    flush(&mut word, &mut out);
    out
}

fn flush(word: &mut String, out: &mut Vec<String>) {
    if !word.is_empty() {
        out.push(std::mem::take(word));
    }
}

impl Tokenizer {
    /// Vocabulary from corpus frequency: most frequent first, ties by surface
    /// form. `max_vocab` counts the reserved ids.
    pub fn build<'a, I>(texts: I, max_vocab: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for text in texts {
            for seg in segment(text) {
                *counts.entry(seg).or_default() += 1;
            }
        }
        for reserved in [BOS_STR, EOS_STR, UNK_STR] {
            counts.remove(reserved);
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let keep = max_vocab.saturating_sub(3);
        let words = ranked.into_iter().take(keep).map(|(w, _)| w);
        Self::with_words(words, max_vocab)
    }

    /// Tokenizer over an explicit word list, in order, after the reserved ids.
    pub fn with_words<I, S>(words: I, max_vocab: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = vec![BOS_STR.to_string(), EOS_STR.to_string(), UNK_STR.to_string()];
        for w in words {
            let w = w.into();
            if !vocab.contains(&w) {
                vocab.push(w);
            }
        }
        Self::from_vocab(vocab, max_vocab)
    }

    fn from_vocab(vocab: Vec<String>, max_vocab: usize) -> Self {
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as TokenId))
            .collect();
        Self {
            vocab,
            index,
            max_vocab,
        }
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn max_vocab(&self) -> usize {
        self.max_vocab
    }

    pub fn id(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        segment(text)
            .iter()
            .map(|s| self.id(s).unwrap_or(UNK))
            .collect()
    }

    /// Space-joined surface forms; BOS and EOS are dropped.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        let parts: Vec<&str> = ids
            .iter()
            .filter(|&&id| id != BOS && id != EOS)
            .map(|&id| self.surface(id).unwrap_or(UNK_STR))
            .collect();
        parts.join(" ")
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.vocab.len() < 3
            || self.vocab[BOS as usize] != BOS_STR
            || self.vocab[EOS as usize] != EOS_STR
            || self.vocab[UNK as usize] != UNK_STR
        {
            return Err("reserved ids 0..=2 must be <bos>, <eos>, <unk>".into());
        }
        if self.index.len() != self.vocab.len() {
            return Err("duplicate vocabulary entries".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text() {
        let tok = Tokenizer::with_words(["a"], 10);
        assert!(tok.encode("").is_empty());
        assert_eq!(tok.decode(&[]), "");
    }

    #[test]
    fn lowercases_and_splits_punctuation() {
        let tok = Tokenizer::with_words(["a", "b", "."], 10);
        let a = tok.id("a").unwrap();
        let b = tok.id("b").unwrap();
        let dot = tok.id(".").unwrap();
        assert_eq!(tok.encode("A b. a"), vec![a, b, dot, a]);
        assert_eq!(tok.encode("zebra"), vec![UNK]);
    }

    #[test]
    fn decode_reencodes_to_same_ids() {
        let tok = Tokenizer::build(["Hello, world! hello again?", "world's end"], 100);
        let ids = tok.encode("hello unknownword , world's end !");
        assert!(ids.contains(&UNK));
        let text = tok.decode(&ids);
        assert_eq!(tok.encode(&text), ids);
    }

    #[test]
    fn build_orders_by_frequency_and_caps() {
        let tok = Tokenizer::build(["b b b a a c"], 5);
        assert_eq!(tok.len(), 5);
        assert_eq!(tok.id("b"), Some(3));
        assert_eq!(tok.id("a"), Some(4));
        assert_eq!(tok.id("c"), None);
    }
}
