//! Binary corpus container shared by synthetic and text corpora.
//!
//! Little-endian layout:
//!
//! | field        | type   |
//! |--------------|--------|
//! | magic        | `SYNL` |
//! | version      | u32    |
//! | kind         | u8     |
//! | n_types      | u32    |
//! | seq_len      | u32    |
//! | n_sequences  | u64    |
//! | p_open       | f64    |
//! | block_types  | u32    |
//! | segment_len  | u32    |
//!
//! followed by `n_sequences * seq_len` u16 token ids.

use std::fs;
use std::path::Path;

use super::generator::generate_sequence;
use super::spec::{LanguageKind, LanguageSpec};
use crate::error::{Error, Result};
use crate::rng::mix64;

pub const MAGIC: &[u8; 4] = b"SYNL";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 41;

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub spec: LanguageSpec,
    tokens: Vec<u16>,
}

impl Corpus {
    pub fn new(spec: LanguageSpec, tokens: Vec<u16>) -> Result<Self> {
        if spec.seq_len == 0 || tokens.len() % spec.seq_len != 0 {
            return Err(Error::input(format!(
                "{} tokens do not divide into sequences of {}",
                tokens.len(),
                spec.seq_len
            )));
        }
        Ok(Corpus { spec, tokens })
    }

    pub fn n_sequences(&self) -> usize {
        self.tokens.len() / self.spec.seq_len
    }

    pub fn seq_len(&self) -> usize {
        self.spec.seq_len
    }

    pub fn vocab_size(&self) -> usize {
        self.spec.vocab_size()
    }

    pub fn sequence(&self, i: usize) -> &[u16] {
        let l = self.spec.seq_len;
        &self.tokens[i * l..(i + 1) * l]
    }

    pub fn sequences(&self) -> impl Iterator<Item = &[u16]> {
        self.tokens.chunks(self.spec.seq_len)
    }

    pub fn tokens(&self) -> &[u16] {
        &self.tokens
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.spec;
        let mut out = Vec::with_capacity(HEADER_LEN + 2 * self.tokens.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(s.kind.code());
        out.extend_from_slice(&s.n_types.to_le_bytes());
        out.extend_from_slice(&(s.seq_len as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_sequences() as u64).to_le_bytes());
        out.extend_from_slice(&s.p_open.to_le_bytes());
        out.extend_from_slice(&s.block_types.to_le_bytes());
        out.extend_from_slice(&(s.segment_len as u32).to_le_bytes());
        for t in &self.tokens {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |m: &str| Error::format(origin, m);
        if bytes.len() < HEADER_LEN {
            return Err(bad("file shorter than corpus header"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(bad("bad magic; not a corpus file"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let kind = LanguageKind::from_code(bytes[8]).ok_or_else(|| bad("unknown language kind"))?;
        let n_types = u32_at(9);
        let seq_len = u32_at(13) as usize;
        let n_sequences = u64::from_le_bytes(bytes[17..25].try_into().unwrap()) as usize;
        let p_open = f64::from_le_bytes(bytes[25..33].try_into().unwrap());
        let block_types = u32_at(33);
        let segment_len = u32_at(37) as usize;
        let spec = LanguageSpec {
            kind,
            n_types,
            seq_len,
            p_open,
            block_types,
            segment_len,
        };
        let payload = &bytes[HEADER_LEN..];
        let expected = n_sequences
            .checked_mul(seq_len)
            .and_then(|n| n.checked_mul(2))
            .ok_or_else(|| bad("header sizes overflow"))?;
        if payload.len() != expected {
            return Err(bad(&format!(
                "payload has {} bytes, header implies {expected}",
                payload.len()
            )));
        }
        let tokens = payload
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        Corpus::new(spec, tokens)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Corpus::from_bytes(&bytes, path)
    }

    /// Splits off the last `fraction` of sequences (at least one) as a held-out set.
    pub fn split_holdout(&self, fraction: f64) -> Result<(Corpus, Corpus)> {
        let n = self.n_sequences();
        if n < 2 {
            return Err(Error::config("need at least two sequences to hold one out"));
        }
        let held = ((n as f64 * fraction).ceil() as usize).clamp(1, n - 1);
        let cut = (n - held) * self.spec.seq_len;
        Ok((
            Corpus::new(self.spec, self.tokens[..cut].to_vec())?,
            Corpus::new(self.spec, self.tokens[cut..].to_vec())?,
        ))
    }
}

/// Seed of sequence `index` in a corpus generated from `seed`.
pub fn sequence_seed(seed: u64, index: u64) -> u64 {
    mix64(seed, index)
}

/// Generates `n_sequences` sequences; sequence `i` uses [`sequence_seed`]`(seed, i)`
/// so the output does not depend on generation order.
pub fn generate_corpus(spec: &LanguageSpec, n_sequences: usize, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let mut tokens = Vec::with_capacity(n_sequences * spec.seq_len);
    for i in 0..n_sequences {
        tokens.extend(generate_sequence(spec, sequence_seed(seed, i as u64))?);
    }
    Corpus::new(*spec, tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langgen::validate;

    #[test]
    fn header_is_41_bytes_and_fields_land_where_expected() {
        let spec = LanguageSpec::flat_shuffle().with_seq_len(32);
        let c = generate_corpus(&spec, 3, 1).unwrap();
        let b = c.to_bytes();
        assert_eq!(b.len(), HEADER_LEN + 3 * 32 * 2);
        assert_eq!(&b[0..4], b"SYNL");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(b[8], 2);
        assert_eq!(u32::from_le_bytes(b[9..13].try_into().unwrap()), 250);
        assert_eq!(u32::from_le_bytes(b[13..17].try_into().unwrap()), 32);
        assert_eq!(u64::from_le_bytes(b[17..25].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(b[25..33].try_into().unwrap()), 0.4);
        assert_eq!(u32::from_le_bytes(b[33..37].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(b[37..41].try_into().unwrap()), 16);
        let back = Corpus::from_bytes(&b, Path::new("mem")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn sequences_are_independent_of_corpus_size() {
        let spec = LanguageSpec::flat().with_seq_len(64);
        let small = generate_corpus(&spec, 2, 9).unwrap();
        let big = generate_corpus(&spec, 5, 9).unwrap();
        assert_eq!(small.sequence(1), big.sequence(1));
        for s in big.sequences() {
            assert!(validate(&spec, s).is_valid(spec.kind));
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let c = generate_corpus(&LanguageSpec::nested().with_seq_len(8), 2, 0).unwrap();
        let mut b = c.to_bytes();
        b.pop();
        assert!(matches!(Corpus::from_bytes(&b, Path::new("x")), Err(Error::Format { .. })));
        let mut b = c.to_bytes();
        b[0] = b'X';
        assert!(Corpus::from_bytes(&b, Path::new("x")).is_err());
    }

    #[test]
    fn holdout_takes_the_tail() {
        let c = generate_corpus(&LanguageSpec::nested().with_seq_len(8), 200, 0).unwrap();
        let (train, eval) = c.split_holdout(0.01).unwrap();
        assert_eq!(eval.n_sequences(), 2);
        assert_eq!(train.n_sequences(), 198);
        assert_eq!(eval.sequence(1), c.sequence(199));
    }
}
