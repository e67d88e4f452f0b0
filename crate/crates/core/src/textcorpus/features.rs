use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{unescape, Vocab};
use crate::error::{Error, Result};
use crate::langgen::Corpus;

pub const DEFAULT_MIN_OCCURRENCES: usize = 200;

/// Per-token properties, one entry per vocabulary id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub tokens: Vec<String>,
    /// Occurrences of each id in the encoded corpus; zero for the special ids.
    pub frequency: Vec<u64>,
    pub starts_with_space: Vec<bool>,
    /// Externally supplied boolean features by name.
    #[serde(default)]
    pub external: BTreeMap<String, Vec<bool>>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Every boolean feature, `starts_with_space` first, then external ones by name.
    pub fn boolean_features(&self) -> Vec<(&str, &[bool])> {
        let mut out = vec![("starts_with_space", self.starts_with_space.as_slice())];
        out.extend(self.external.iter().map(|(k, v)| (k.as_str(), v.as_slice())));
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("feature table serializes");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: FeatureTable = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let n = table.tokens.len();
        if table.frequency.len() != n
            || table.starts_with_space.len() != n
            || table.external.values().any(|v| v.len() != n)
        {
            return Err(Error::format(path, "feature columns differ in length"));
        }
        Ok(table)
    }
}

/// Frequency and leading-space features for every id of `vocab`.
pub fn extract_features(corpus: &Corpus, vocab: &Vocab) -> Result<FeatureTable> {
    if corpus.vocab_size() != vocab.len() {
        return Err(Error::config(format!(
            "corpus vocabulary {} != vocabulary file {}",
            corpus.vocab_size(),
            vocab.len()
        )));
    }
    let mut frequency = vec![0u64; vocab.len()];
    for &t in corpus.tokens() {
        let t = t as usize;
        if t >= frequency.len() {
            return Err(Error::input(format!("token id {t} outside vocabulary")));
        }
        frequency[t] += 1;
    }
    for special in [super::UNK, super::PAD] {
        frequency[special as usize] = 0;
    }
    let starts_with_space = vocab
        .tokens()
        .iter()
        .enumerate()
        .map(|(i, t)| !Vocab::is_special(i as u16) && t.starts_with(' '))
        .collect();
    Ok(FeatureTable {
        tokens: vocab.tokens().to_vec(),
        frequency,
        starts_with_space,
        external: BTreeMap::new(),
    })
}

/// Outcome of [`merge_features`].
#[derive(Debug, Clone, PartialEq)]
pub struct MergeReport {
    pub table: FeatureTable,
    pub kept: Vec<String>,
    /// Features with fewer positive vocabulary entries than the minimum.
    pub dropped: Vec<(String, usize)>,
    pub warnings: Vec<String>,
}

/// Merges `token<TAB>feature<TAB>{0|1}` lines into `table`. Tokens missing
/// from the vocabulary produce warnings. A feature survives when at least
/// `min_occurrences` vocabulary entries carry it.
pub fn merge_features(table: &FeatureTable, lines: &str, min_occurrences: usize) -> Result<MergeReport> {
    let index: BTreeMap<&str, usize> = table.tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut columns: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (n, line) in lines.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [token, name, value] = fields[..] else {
            return Err(Error::input(format!("feature line {} needs three tab-separated fields", n + 1)));
        };
        let value = match value.trim() {
            "1" => true,
            "0" => false,
            other => return Err(Error::input(format!("feature line {}: value {other:?} is not 0 or 1", n + 1))),
        };
        let token = unescape(token).unwrap_or_else(|| token.to_string());
        let Some(&id) = index.get(token.as_str()) else {
            warnings.push(format!("line {}: token {token:?} not in vocabulary", n + 1));
            continue;
        };
        columns.entry(name.to_string()).or_insert_with(|| vec![false; table.len()])[id] |= value;
    }
    let mut out = table.clone();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (name, col) in columns {
        let positives = col.iter().filter(|&&b| b).count();
        if positives >= min_occurrences {
            kept.push(name.clone());
            out.external.insert(name, col);
        } else {
            dropped.push((name, positives));
        }
    }
    Ok(MergeReport {
        table: out,
        kept,
        dropped,
        warnings,
    })
}
