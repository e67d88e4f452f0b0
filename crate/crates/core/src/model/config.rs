use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a decoder-only transformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    #[serde(default)]
    pub tie_embeddings: bool,
}

impl ModelConfig {
    /// Two layers, d=64, four heads: the laptop-scale model every experiment
    /// in the test suite uses.
    pub fn desk(vocab_size: usize, max_seq_len: usize) -> Self {
        ModelConfig {
            n_layers: 2,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            vocab_size,
            max_seq_len,
            tie_embeddings: false,
        }
    }

    /// Approximately 8M parameters at vocab 500 and context 512 (d=256).
    pub fn approx_8m(vocab_size: usize, max_seq_len: usize) -> Self {
        ModelConfig {
            n_layers: 10,
            d_model: 256,
            n_heads: 8,
            d_ff: 1024,
            vocab_size,
            max_seq_len,
            tie_embeddings: false,
        }
    }

    /// Approximately 33M parameters at vocab 500 and context 512 (d=768).
    pub fn approx_33m(vocab_size: usize, max_seq_len: usize) -> Self {
        ModelConfig {
            n_layers: 4,
            d_model: 768,
            n_heads: 12,
            d_ff: 3072,
            vocab_size,
            max_seq_len,
            tie_embeddings: false,
        }
    }

    pub fn preset(name: &str, vocab_size: usize, max_seq_len: usize) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk(vocab_size, max_seq_len)),
            "8m" | "approx_8m" => Ok(Self::approx_8m(vocab_size, max_seq_len)),
            "33m" | "approx_33m" => Ok(Self::approx_33m(vocab_size, max_seq_len)),
            other => Err(Error::config(format!("unknown model preset '{other}'"))),
        }
    }

    pub fn with_vocab_size(mut self, vocab_size: usize) -> Self {
        self.vocab_size = vocab_size;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::config("n_layers must be positive"));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::config(format!(
                "d_model ({}) must be divisible by n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if self.d_ff == 0 || self.max_seq_len == 0 {
            return Err(Error::config("d_ff and max_seq_len must be positive"));
        }
        if self.vocab_size < 1 || self.vocab_size > 1 << 16 {
            return Err(Error::config("vocab_size must lie in 1..=65536"));
        }
        Ok(())
    }

    /// Parameters per transformer layer.
    pub fn layer_param_count(&self) -> usize {
        let d = self.d_model;
        let ln = 2 * d;
        let attn = d * 3 * d + 3 * d + d * d + d;
        let mlp = d * self.d_ff + self.d_ff + self.d_ff * d + d;
        2 * ln + attn + mlp
    }

    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let emb = self.vocab_size * d * if self.tie_embeddings { 1 } else { 2 };
        emb + self.max_seq_len * d + self.n_layers * self.layer_param_count() + 2 * d
    }
}
