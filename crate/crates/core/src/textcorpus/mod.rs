//! Natural-language text in the same corpus container as the synthetic
//! languages: a word-level tokenizer that keeps leading spaces, fixed-length
//! chunking, and per-token features for probing.

mod english;
mod features;
mod vocab;

pub use english::template_english;
pub use features::{extract_features, merge_features, FeatureTable, MergeReport, DEFAULT_MIN_OCCURRENCES};
pub use vocab::{tokenize, Vocab, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::langgen::{Corpus, LanguageSpec};

pub const DEFAULT_MAX_VOCAB: usize = 500;
pub const DEFAULT_SEQ_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EncodeStats {
    pub n_tokens: usize,
    pub n_unknown: usize,
    pub n_sequences: usize,
    pub n_padding: usize,
}

impl EncodeStats {
    pub fn unknown_rate(&self) -> f64 {
        if self.n_tokens == 0 {
            0.0
        } else {
            self.n_unknown as f64 / self.n_tokens as f64
        }
    }
}

/// Encodes `text` as one token stream and cuts it into `seq_len` chunks; the
/// last chunk is filled up with padding.
pub fn encode_corpus(text: &str, vocab: &Vocab, seq_len: usize) -> Result<(Corpus, EncodeStats)> {
    if seq_len < 2 {
        return Err(Error::config("seq_len must be at least 2"));
    }
    let mut tokens = vocab.encode(text);
    if tokens.is_empty() {
        return Err(Error::config("text encodes to zero tokens"));
    }
    let n_tokens = tokens.len();
    let n_unknown = tokens.iter().filter(|&&t| t == UNK).count();
    let n_padding = (seq_len - n_tokens % seq_len) % seq_len;
    tokens.resize(n_tokens + n_padding, PAD);
    let spec = LanguageSpec::natural(vocab.len() as u32, seq_len);
    let corpus = Corpus::new(spec, tokens)?;
    let stats = EncodeStats {
        n_tokens,
        n_unknown,
        n_sequences: corpus.n_sequences(),
        n_padding,
    };
    Ok((corpus, stats))
}

/// Sequences of an encoded text corpus that contain no padding.
pub fn unpadded_sequences(corpus: &Corpus) -> Result<Corpus> {
    let keep: Vec<u16> = corpus
        .sequences()
        .filter(|s| !s.contains(&PAD))
        .flat_map(|s| s.iter().copied())
        .collect();
    Corpus::new(corpus.spec, keep)
}
