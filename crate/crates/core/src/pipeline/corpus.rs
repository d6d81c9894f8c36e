use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::Tokenizer;
use crate::{TokenId, EOS};

/// One `(input, output)` example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub prompt: String,
    #[serde(default)]
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<BTreeMap<String, serde_json::Value>>,
}

impl CorpusRecord {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            prompt: prompt.into(),
            response: response.into(),
            context: None,
            metadata: None,
        }
    }

    pub fn prompt_tokens(&self, tok: &Tokenizer) -> Vec<TokenId> {
        tok.encode(&self.prompt)
    }

    /// `prompt ++ response ++ EOS`, the form used for training.
    pub fn training_tokens(&self, tok: &Tokenizer) -> Vec<TokenId> {
        let mut ids = tok.encode(&self.prompt);
        ids.extend(tok.encode(&self.response));
        ids.push(EOS);
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusMode {
    /// Every record needs a nonempty response.
    Qa,
    /// Responses may be missing.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedLine {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ingested {
    pub records: Vec<CorpusRecord>,
    pub malformed: Vec<MalformedLine>,
    pub warnings: Vec<String>,
}

fn check_record(rec: &CorpusRecord, mode: CorpusMode, seen: &HashSet<String>) -> Option<String> {
    if rec.id.is_empty() {
        Some("empty id".into())
    } else if seen.contains(&rec.id) {
        Some(format!("duplicate id {:?}", rec.id))
    } else if rec.prompt.trim().is_empty() {
        Some("empty prompt".into())
    } else if mode == CorpusMode::Qa && rec.response.trim().is_empty() {
        Some("missing response".into())
    } else {
        None
    }
}

/// Parse JSONL text. Bad lines are listed in `malformed`; more than 1% bad
/// lines is an error.
pub fn parse_jsonl(text: &str, mode: CorpusMode, path: &Path) -> Result<Ingested> {
    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    let mut total = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let reason = match serde_json::from_str::<CorpusRecord>(line) {
            Err(e) => Some(e.to_string()),
            Ok(rec) => match check_record(&rec, mode, &seen) {
                Some(r) => Some(r),
                None => {
                    seen.insert(rec.id.clone());
                    out.records.push(rec);
                    None
                }
            },
        };
        if let Some(reason) = reason {
            out.malformed.push(MalformedLine { line: i + 1, reason });
        }
    }
    if out.malformed.len() * 100 > total {
        return Err(Error::MalformedCorpus {
            path: path.to_path_buf(),
            malformed: out.malformed.len(),
            total,
        });
    }
    if total == 0 {
        out.warnings.push(format!("{}: empty corpus", path.display()));
    }
    Ok(out)
}

pub fn ingest(path: impl AsRef<Path>, mode: CorpusMode) -> Result<Ingested> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_jsonl(&text, mode, path)
}

/// One JSON object per line, keys in the fixed order
/// `id, prompt, response, context, metadata`.
pub fn to_jsonl(records: &[CorpusRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn export(records: &[CorpusRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_jsonl(records)?.as_bytes())?;
    Ok(())
}

/// Tokenized training sequences for a corpus.
pub fn training_sequences(records: &[CorpusRecord], tok: &Tokenizer) -> Vec<Vec<TokenId>> {
    records.iter().map(|r| r.training_tokens(tok)).collect()
}

/// Total tokens over prompts and responses, EOS excluded.
pub fn token_count(records: &[CorpusRecord], tok: &Tokenizer) -> usize {
    records
        .iter()
        .map(|r| r.training_tokens(tok).len() - 1)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem.jsonl")
    }

    #[test]
    fn parses_and_round_trips() {
        let text = "{\"prompt\":\"q?\",\"id\":\"a\",\"response\":\"r.\"}\n\n{\"id\":\"b\",\"prompt\":\"x\",\"response\":\"y\",\"metadata\":{\"k\":1}}\n";
        let got = parse_jsonl(text, CorpusMode::Qa, p()).unwrap();
        assert_eq!(got.records.len(), 2);
        assert!(got.malformed.is_empty());
        let once = to_jsonl(&got.records).unwrap();
        assert!(once.starts_with("{\"id\":\"a\",\"prompt\":\"q?\",\"response\":\"r.\"}\n"));
        let again = parse_jsonl(&once, CorpusMode::Qa, p()).unwrap();
        assert_eq!(to_jsonl(&again.records).unwrap(), once);
    }

    #[test]
    fn empty_file_warns() {
        let got = parse_jsonl("", CorpusMode::Qa, p()).unwrap();
        assert!(got.records.is_empty());
        assert_eq!(got.warnings.len(), 1);
    }

    #[test]
    fn missing_response_listed_in_qa_mode() {
        let mut lines: Vec<String> = (0..200)
            .map(|i| format!("{{\"id\":\"{i}\",\"prompt\":\"p\",\"response\":\"r\"}}"))
            .collect();
        lines.push("{\"id\":\"x\",\"prompt\":\"p\"}".into());
        let text = lines.join("\n");
        let got = parse_jsonl(&text, CorpusMode::Qa, p()).unwrap();
        assert_eq!(got.records.len(), 200);
        assert_eq!(got.malformed.len(), 1);
        assert_eq!(got.malformed[0].line, 201);
        assert!(got.malformed[0].reason.contains("response"));

        let plain = parse_jsonl(&text, CorpusMode::Plain, p()).unwrap();
        assert_eq!(plain.records.len(), 201);
    }

    #[test]
    fn too_many_bad_lines_abort() {
        let text = "{\"id\":\"a\",\"prompt\":\"p\",\"response\":\"r\"}\nnot json\n";
        assert!(matches!(
            parse_jsonl(text, CorpusMode::Qa, p()),
            Err(Error::MalformedCorpus { malformed: 1, total: 2, .. })
        ));
    }

    #[test]
    fn duplicate_ids_are_malformed() {
        let mut lines: Vec<String> = (0..150)
            .map(|i| format!("{{\"id\":\"{i}\",\"prompt\":\"p\",\"response\":\"r\"}}"))
            .collect();
        lines.push("{\"id\":\"3\",\"prompt\":\"p\",\"response\":\"r\"}".into());
        let got = parse_jsonl(&lines.join("\n"), CorpusMode::Qa, p()).unwrap();
        assert_eq!(got.malformed.len(), 1);
        assert!(got.malformed[0].reason.contains("duplicate"));
    }
}
