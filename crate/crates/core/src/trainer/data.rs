use rand::Rng;

use crate::error::{Error, Result};
use crate::langgen::Corpus;

/// Fixed-length token sequences over a known vocabulary: the common input of
/// training and evaluation, whatever produced the tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet {
    pub vocab_size: usize,
    pub seq_len: usize,
    pub tokens: Vec<u16>,
}

impl SequenceSet {
    pub fn new(vocab_size: usize, seq_len: usize, tokens: Vec<u16>) -> Result<Self> {
        if seq_len < 2 {
            return Err(Error::config("sequences need at least two tokens"));
        }
        if tokens.len() % seq_len != 0 {
            return Err(Error::input(format!(
                "{} tokens are not a whole number of {seq_len}-token sequences",
                tokens.len()
            )));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::input(format!("token {t} outside vocabulary of {vocab_size}")));
        }
        Ok(SequenceSet {
            vocab_size,
            seq_len,
            tokens,
        })
    }

    pub fn n_sequences(&self) -> usize {
        self.tokens.len() / self.seq_len
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn sequence(&self, i: usize) -> &[u16] {
        &self.tokens[i * self.seq_len..(i + 1) * self.seq_len]
    }

    /// The last `fraction` of sequences (at least one) become the held-out set.
    /// Order is preserved so the split never depends on a seed.
    pub fn split_holdout(&self, fraction: f64) -> Result<(SequenceSet, SequenceSet)> {
        let n = self.n_sequences();
        if n < 2 {
            return Err(Error::config("need at least two sequences to hold one out"));
        }
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::config(format!("holdout fraction {fraction} outside [0, 1)")));
        }
        let held = ((n as f64 * fraction).ceil() as usize).clamp(1, n - 1);
        let cut = (n - held) * self.seq_len;
        Ok((
            SequenceSet::new(self.vocab_size, self.seq_len, self.tokens[..cut].to_vec())?,
            SequenceSet::new(self.vocab_size, self.seq_len, self.tokens[cut..].to_vec())?,
        ))
    }

    /// Number of next-token predictions made per sequence for a context window.
    pub fn predictions_per_sequence(&self, window: Option<usize>) -> usize {
        window.map_or(self.seq_len - 1, |w| w.min(self.seq_len - 1))
    }

    /// Samples `batch` sequences with replacement and returns the shifted
    /// `(inputs, targets)` matrices, both `batch x width`.
    pub fn sample_batch(&self, rng: &mut impl Rng, batch: usize, width: usize) -> (Vec<u16>, Vec<u16>) {
        let mut inputs = Vec::with_capacity(batch * width);
        let mut targets = Vec::with_capacity(batch * width);
        for _ in 0..batch {
            let s = self.sequence(rng.random_range(0..self.n_sequences()));
            inputs.extend_from_slice(&s[..width]);
            targets.extend_from_slice(&s[1..=width]);
        }
        (inputs, targets)
    }
}

impl From<&Corpus> for SequenceSet {
    fn from(c: &Corpus) -> Self {
        SequenceSet {
            vocab_size: c.vocab_size(),
            seq_len: c.seq_len(),
            tokens: c.tokens().to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn holdout_takes_the_tail() {
        let set = SequenceSet::new(10, 2, (0..400).map(|i| (i % 10) as u16).collect()).unwrap();
        let (train, eval) = set.split_holdout(0.01).unwrap();
        assert_eq!(train.n_sequences(), 198);
        assert_eq!(eval.n_sequences(), 2);
        assert_eq!(eval.sequence(1), set.sequence(199));
    }

    #[test]
    fn batches_are_shifted_views() {
        let set = SequenceSet::new(10, 4, vec![0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
        let (x, y) = set.sample_batch(&mut rng_from_seed(0), 3, 3);
        for (xr, yr) in x.chunks(3).zip(y.chunks(3)) {
            assert_eq!(xr[1..], yr[..2]);
            assert_eq!(xr[0] % 4, 0);
        }
    }

    #[test]
    fn rejects_out_of_vocab() {
        assert!(SequenceSet::new(3, 2, vec![0, 3]).is_err());
        assert!(SequenceSet::new(3, 2, vec![0, 1, 2]).is_err());
    }
}
