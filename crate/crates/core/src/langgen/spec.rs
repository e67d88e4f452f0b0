use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The family a corpus belongs to. `Natural` only appears in corpus headers
/// produced from text; the generators handle the three bracket languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageKind {
    Nested,
    Flat,
    FlatShuffle,
    Natural,
}

impl LanguageKind {
    pub fn code(self) -> u8 {
        match self {
            LanguageKind::Nested => 0,
            LanguageKind::Flat => 1,
            LanguageKind::FlatShuffle => 2,
            LanguageKind::Natural => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => LanguageKind::Nested,
            1 => LanguageKind::Flat,
            2 => LanguageKind::FlatShuffle,
            3 => LanguageKind::Natural,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            LanguageKind::Nested => "nested",
            LanguageKind::Flat => "flat",
            LanguageKind::FlatShuffle => "flat_shuffle",
            LanguageKind::Natural => "natural",
        }
    }

    pub fn is_synthetic(self) -> bool {
        self != LanguageKind::Natural
    }
}

impl std::fmt::Display for LanguageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LanguageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "nested" => Ok(LanguageKind::Nested),
            "flat" => Ok(LanguageKind::Flat),
            "flat_shuffle" | "flatshuffle" => Ok(LanguageKind::FlatShuffle),
            "natural" | "english" => Ok(LanguageKind::Natural),
            other => Err(Error::config(format!("unknown language kind '{other}'"))),
        }
    }
}

/// Parametric description of a synthetic bracket language.
///
/// Token ids: `t < n_types` opens a bracket of type `t`, `n_types + t` closes it.
/// For `Natural` corpora `n_types` holds the text vocabulary size instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub kind: LanguageKind,
    pub n_types: u32,
    pub seq_len: usize,
    pub p_open: f64,
    pub block_types: u32,
    pub segment_len: usize,
}

pub const DEFAULT_N_TYPES: u32 = 250;
pub const DEFAULT_SEQ_LEN: usize = 512;
pub const DEFAULT_P_OPEN: f64 = 0.4;
pub const DEFAULT_BLOCK_TYPES: u32 = 8;
pub const DEFAULT_SEGMENT_LEN: usize = 16;

impl LanguageSpec {
    pub fn new(kind: LanguageKind) -> Self {
        LanguageSpec {
            kind,
            n_types: DEFAULT_N_TYPES,
            seq_len: DEFAULT_SEQ_LEN,
            p_open: DEFAULT_P_OPEN,
            block_types: DEFAULT_BLOCK_TYPES,
            segment_len: DEFAULT_SEGMENT_LEN,
        }
    }

    pub fn nested() -> Self {
        Self::new(LanguageKind::Nested)
    }

    pub fn flat() -> Self {
        Self::new(LanguageKind::Flat)
    }

    pub fn flat_shuffle() -> Self {
        Self::new(LanguageKind::FlatShuffle)
    }

    /// Header used for text corpora: no bracket parameters apply.
    pub fn natural(vocab_size: u32, seq_len: usize) -> Self {
        LanguageSpec {
            kind: LanguageKind::Natural,
            n_types: vocab_size,
            seq_len,
            p_open: 0.0,
            block_types: 0,
            segment_len: 0,
        }
    }

    pub fn with_n_types(mut self, n_types: u32) -> Self {
        self.n_types = n_types;
        self
    }

    pub fn with_seq_len(mut self, seq_len: usize) -> Self {
        self.seq_len = seq_len;
        self
    }

    pub fn vocab_size(&self) -> usize {
        match self.kind {
            LanguageKind::Natural => self.n_types as usize,
            _ => 2 * self.n_types as usize,
        }
    }

    pub fn open_token(&self, ty: u32) -> u16 {
        ty as u16
    }

    pub fn close_token(&self, ty: u32) -> u16 {
        (self.n_types + ty) as u16
    }

    /// Splits a token id into (is_open, type).
    pub fn decode_token(&self, token: u16) -> Option<(bool, u32)> {
        let t = token as u32;
        if t < self.n_types {
            Some((true, t))
        } else if t < 2 * self.n_types {
            Some((false, t - self.n_types))
        } else {
            None
        }
    }

    /// Number of complete blocks of `block_types` contiguous type ids.
    pub fn n_blocks(&self) -> u32 {
        if self.block_types == 0 {
            0
        } else {
            self.n_types / self.block_types
        }
    }

    /// Types that can actually occur. FlatShuffle drops the remainder of
    /// `n_types` that does not fill a whole block.
    pub fn usable_types(&self) -> u32 {
        match self.kind {
            LanguageKind::FlatShuffle => self.n_blocks() * self.block_types,
            _ => self.n_types,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == LanguageKind::Natural {
            if self.n_types < 2 || self.n_types > 1 << 16 {
                return Err(Error::config("natural vocabulary must have 2..=65536 entries"));
            }
            if self.seq_len < 2 {
                return Err(Error::config("seq_len must be at least 2"));
            }
            return Ok(());
        }
        if self.n_types == 0 {
            return Err(Error::config("n_types must be positive"));
        }
        if 2 * self.n_types as usize > 1 << 16 {
            return Err(Error::config("2 * n_types must fit in a u16 token id"));
        }
        if self.seq_len < 2 || self.seq_len % 2 != 0 {
            return Err(Error::config(format!(
                "seq_len must be even and at least 2, got {}",
                self.seq_len
            )));
        }
        if !(self.p_open > 0.0 && self.p_open < 1.0) {
            return Err(Error::config(format!("p_open must lie in (0, 1), got {}", self.p_open)));
        }
        if self.kind == LanguageKind::FlatShuffle {
            if self.block_types == 0 {
                return Err(Error::config("block_types must be positive"));
            }
            if self.segment_len != 2 * self.block_types as usize {
                return Err(Error::config(format!(
                    "segment_len ({}) must equal 2 * block_types ({})",
                    self.segment_len, self.block_types
                )));
            }
            if self.n_blocks() == 0 {
                return Err(Error::config("n_types is smaller than one block"));
            }
            if self.seq_len % self.segment_len != 0 {
                return Err(Error::config(format!(
                    "seq_len ({}) must be a multiple of segment_len ({})",
                    self.seq_len, self.segment_len
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_hyperparameters() {
        let s = LanguageSpec::flat_shuffle();
        assert_eq!(s.vocab_size(), 500);
        assert_eq!(s.seq_len, 512);
        assert_eq!(s.p_open, 0.4);
        assert_eq!(s.segment_len, 16);
        assert_eq!(s.n_blocks(), 31);
        assert_eq!(s.usable_types(), 248);
        assert_eq!(LanguageSpec::flat().usable_types(), 250);
        s.validate().unwrap();
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(LanguageSpec::nested().with_seq_len(7).validate().is_err());
        assert!(LanguageSpec::nested().with_seq_len(0).validate().is_err());
        let mut s = LanguageSpec::flat();
        s.p_open = 1.0;
        assert!(s.validate().is_err());
        let mut s = LanguageSpec::flat_shuffle();
        s.segment_len = 12;
        assert!(s.validate().is_err());
        let s = LanguageSpec::flat_shuffle().with_seq_len(40);
        assert!(s.validate().is_err());
        let s = LanguageSpec::flat_shuffle().with_n_types(5);
        assert!(s.validate().is_err());
    }

    #[test]
    fn token_coding() {
        let s = LanguageSpec::nested();
        assert_eq!(s.decode_token(3), Some((true, 3)));
        assert_eq!(s.decode_token(253), Some((false, 3)));
        assert_eq!(s.decode_token(500), None);
        assert_eq!(s.close_token(3), 253);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("flat-shuffle".parse::<LanguageKind>().unwrap(), LanguageKind::FlatShuffle);
        assert_eq!("Nested".parse::<LanguageKind>().unwrap(), LanguageKind::Nested);
        assert!("dyck".parse::<LanguageKind>().is_err());
        for code in 0..4 {
            assert_eq!(LanguageKind::from_code(code).unwrap().code(), code);
        }
    }
}
