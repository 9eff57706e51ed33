//! Dataset ingestion: TSV files of `label<TAB>text`, whitespace-tokenized
//! and lowercased, with a capped most-frequent vocabulary built from the
//! training split only. Id 0 is reserved for unknown tokens, so anything
//! outside the training vocabulary falls back to a shared embedding row.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const UNKNOWN_TOKEN: &str = "<unk>";
pub const DEFAULT_VOCAB_CAP: usize = 20_000;

/// Token ↔ id bijection with reserved id 0 = unknown.
#[derive(Debug, Clone)]
pub struct Vocab {
    token_of: Vec<String>,
    id_of: HashMap<String, u32>,
}

impl Vocab {
    /// Build from known words in id order (ids 1..); id 0 stays `<unk>`.
    pub fn from_words(words: Vec<String>) -> Self {
        let mut token_of = Vec::with_capacity(words.len() + 1);
        token_of.push(UNKNOWN_TOKEN.to_string());
        token_of.extend(words);
        let id_of = token_of
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Vocab { token_of, id_of }
    }

    /// Most frequent tokens up to `cap`, ties broken lexicographically so
    /// the mapping is deterministic.
    pub fn build<'a>(texts: impl Iterator<Item = &'a [String]>, cap: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for tokens in texts {
            for t in tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(cap);
        Vocab::from_words(ranked.into_iter().map(|(w, _)| w.to_string()).collect())
    }

    /// Known words, id order, excluding the unknown slot.
    pub fn words(&self) -> &[String] {
        &self.token_of[1..]
    }

    /// Total size including the unknown slot.
    pub fn size(&self) -> usize {
        self.token_of.len()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.id_of.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.token_of[id as usize]
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Example {
    pub words: Vec<String>,
    pub ids: Vec<u32>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub vocab: Vocab,
}

impl Dataset {
    /// Load a training split and build its vocabulary.
    pub fn load_train(path: &Path, vocab_cap: usize) -> Result<Dataset> {
        let raw = load_raw(path)?;
        let vocab = Vocab::build(raw.iter().map(|(t, _)| t.as_slice()), vocab_cap);
        Ok(Dataset::encode_raw(raw, vocab))
    }

    /// Load an evaluation split against an existing vocabulary; unseen
    /// tokens map to id 0.
    pub fn load_with_vocab(path: &Path, vocab: &Vocab) -> Result<Dataset> {
        let raw = load_raw(path)?;
        Ok(Dataset::encode_raw(raw, vocab.clone()))
    }

    pub fn encode_raw(raw: Vec<(Vec<String>, usize)>, vocab: Vocab) -> Dataset {
        let examples = raw
            .into_iter()
            .map(|(words, label)| Example {
                ids: vocab.encode(&words),
                words,
                label,
            })
            .collect();
        Dataset { examples, vocab }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.examples
            .iter()
            .map(|e| e.words.len())
            .max()
            .unwrap_or(0)
    }

    pub fn n_classes(&self) -> usize {
        self.examples.iter().map(|e| e.label + 1).max().unwrap_or(0)
    }

    pub fn check_labels(&self, n_classes: usize) -> Result<()> {
        for e in &self.examples {
            if e.label >= n_classes {
                return Err(Error::BadLabel {
                    label: e.label,
                    classes: n_classes,
                });
            }
        }
        Ok(())
    }

    pub fn truncated(mut self, limit: usize) -> Dataset {
        self.examples.truncate(limit);
        self
    }
}

/// Lowercased whitespace tokenization.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Parse `label<TAB>text` lines; reports the first malformed line.
pub fn load_raw(path: &Path) -> Result<Vec<(Vec<String>, usize)>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label_str, body) = line.split_once('\t').ok_or(Error::MalformedLine {
            line: i + 1,
            msg: "missing tab separator".into(),
        })?;
        let label: usize = label_str.trim().parse().map_err(|_| Error::MalformedLine {
            line: i + 1,
            msg: format!("label {label_str:?} is not a non-negative integer"),
        })?;
        let words = tokenize(body);
        if words.is_empty() {
            return Err(Error::MalformedLine {
                line: i + 1,
                msg: "empty text".into(),
            });
        }
        out.push((words, label));
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    Ok(out)
}
