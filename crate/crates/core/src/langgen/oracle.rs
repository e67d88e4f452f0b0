//! Exact next-token probabilities of the generators, and the cross-entropy
//! floor they imply for a given sequence.

use serde::Serialize;

use super::generator::GeneratorState;
use super::spec::{LanguageKind, LanguageSpec};
use crate::error::{Error, Result};

/// Sparse distribution over token ids, sorted by token.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NextTokenDistribution {
    pub probs: Vec<(u16, f64)>,
}

impl NextTokenDistribution {
    pub fn prob(&self, token: u16) -> f64 {
        self.probs
            .binary_search_by_key(&token, |&(t, _)| t)
            .map(|i| self.probs[i].1)
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().map(|&(_, p)| p).sum()
    }

    pub fn support_len(&self) -> usize {
        self.probs.len()
    }

    fn from_weights(mut entries: Vec<(u16, f64)>) -> Self {
        entries.sort_by_key(|&(t, _)| t);
        let mut merged: Vec<(u16, f64)> = Vec::with_capacity(entries.len());
        for (t, p) in entries {
            match merged.last_mut() {
                Some((lt, lp)) if *lt == t => *lp += p,
                _ => merged.push((t, p)),
            }
        }
        NextTokenDistribution { probs: merged }
    }
}

pub fn next_token_distribution(spec: &LanguageSpec, state: &GeneratorState) -> Result<NextTokenDistribution> {
    spec.validate()?;
    if !spec.kind.is_synthetic() {
        return Err(Error::config("no generative oracle for natural corpora"));
    }
    state.check(spec)?;
    if state.position >= spec.seq_len {
        return Err(Error::State("sequence is complete; no next token".into()));
    }

    let remaining = state.remaining(spec);
    let p = spec.p_open;

    let (opens, p_open_total): (Vec<u32>, f64) = match spec.kind {
        LanguageKind::FlatShuffle if state.is_segment_start(spec) => ((0..spec.usable_types()).collect(), 1.0),
        LanguageKind::FlatShuffle => {
            let total = match (state.unused.is_empty(), state.open.is_empty()) {
                (true, _) => 0.0,
                (false, true) => 1.0,
                (false, false) => p,
            };
            (state.unused.clone(), total)
        }
        _ => {
            let total = if state.open.is_empty() {
                1.0
            } else if state.open.len() == remaining {
                0.0
            } else {
                p
            };
            ((0..spec.n_types).collect(), total)
        }
    };

    let mut entries = Vec::with_capacity(opens.len() + state.open.len());
    if p_open_total > 0.0 {
        let each = p_open_total / opens.len() as f64;
        entries.extend(opens.iter().map(|&t| (spec.open_token(t), each)));
    }
    let p_close_total = 1.0 - p_open_total;
    if p_close_total > 0.0 {
        match spec.kind {
            LanguageKind::Nested => {
                let top = *state.open.last().expect("close implies something is open");
                entries.push((spec.close_token(top), p_close_total));
            }
            _ => {
                let each = p_close_total / state.open.len() as f64;
                entries.extend(state.open.iter().map(|&t| (spec.close_token(t), each)));
            }
        }
    }
    Ok(NextTokenDistribution::from_weights(entries))
}

/// `-ln p(token_i | prefix)` under the generating process, for every position.
pub fn per_position_nll(spec: &LanguageSpec, seq: &[u16]) -> Result<Vec<f64>> {
    if seq.len() != spec.seq_len {
        return Err(Error::Validation {
            position: seq.len().min(spec.seq_len),
            message: format!("sequence length {} != seq_len {}", seq.len(), spec.seq_len),
        });
    }
    let mut state = GeneratorState::new();
    let mut out = Vec::with_capacity(seq.len());
    for (pos, &tok) in seq.iter().enumerate() {
        let dist = next_token_distribution(spec, &state)?;
        let prob = dist.prob(tok);
        if prob <= 0.0 {
            return Err(Error::Validation {
                position: pos,
                message: format!("token {tok} has zero probability here"),
            });
        }
        out.push(-prob.ln());
        state.apply(spec, tok)?;
    }
    Ok(out)
}

/// Mean per-token cross-entropy of the generator on `seq`, in nats. No model
/// can beat this in expectation.
pub fn sequence_nll_floor(spec: &LanguageSpec, seq: &[u16]) -> Result<f64> {
    let nll = per_position_nll(spec, seq)?;
    Ok(nll.iter().sum::<f64>() / nll.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langgen::generate_sequence;

    #[test]
    fn empty_state_is_uniform_over_opens() {
        let spec = LanguageSpec::nested();
        let d = next_token_distribution(&spec, &GeneratorState::new()).unwrap();
        assert_eq!(d.support_len(), 250);
        for &(t, p) in &d.probs {
            assert!(t < 250);
            assert!((p - 1.0 / 250.0).abs() < 1e-15);
        }
        assert!((d.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn forced_close_is_uniform_over_instances() {
        let spec = LanguageSpec::flat().with_seq_len(6);
        let state = GeneratorState::from_prefix(&spec, &[4, 7, 9]).unwrap();
        let d = next_token_distribution(&spec, &state).unwrap();
        assert_eq!(d.support_len(), 3);
        for t in [254, 257, 259] {
            assert!((d.prob(t) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicate_instances_add_up() {
        let spec = LanguageSpec::flat().with_seq_len(8);
        let state = GeneratorState::from_prefix(&spec, &[4, 4, 9]).unwrap();
        let d = next_token_distribution(&spec, &state).unwrap();
        // one free step left: open (0.4) or close one of three instances (0.6)
        assert!((d.prob(254) - 0.4).abs() < 1e-12);
        assert!((d.prob(259) - 0.2).abs() < 1e-12);
        assert!((d.prob(0) - 0.4 / 250.0).abs() < 1e-15);
        assert!((d.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn nested_close_is_top_of_stack() {
        let spec = LanguageSpec::nested();
        let state = GeneratorState::from_prefix(&spec, &[4, 7]).unwrap();
        let d = next_token_distribution(&spec, &state).unwrap();
        assert!((d.prob(257) - 0.6).abs() < 1e-12);
        assert_eq!(d.prob(254), 0.0);
    }

    #[test]
    fn shuffle_segment_final_position_is_certain() {
        let spec = LanguageSpec::flat_shuffle();
        let seq = generate_sequence(&spec, 3).unwrap();
        for seg_start in (0..spec.seq_len).step_by(16) {
            let state = GeneratorState::from_prefix(&spec, &seq[..seg_start + 15]).unwrap();
            let d = next_token_distribution(&spec, &state).unwrap();
            assert_eq!(d.support_len(), 1);
            assert_eq!(d.probs[0], (seq[seg_start + 15], 1.0));
        }
        let nll = per_position_nll(&spec, &seq).unwrap();
        for seg_start in (0..spec.seq_len).step_by(16) {
            assert_eq!(nll[seg_start + 15], 0.0);
        }
    }

    #[test]
    fn floor_of_forced_word() {
        let spec = LanguageSpec::nested().with_seq_len(2);
        let f = sequence_nll_floor(&spec, &[17, 267]).unwrap();
        assert!((f - 250f64.ln() / 2.0).abs() < 1e-12);
        assert!((f - 2.761).abs() < 1e-3);
    }

    #[test]
    fn illegal_token_is_reported_with_position() {
        let spec = LanguageSpec::nested().with_seq_len(4);
        let err = sequence_nll_floor(&spec, &[1, 2, 251, 252]).unwrap_err();
        assert!(matches!(err, Error::Validation { position: 2, .. }));
    }

    #[test]
    fn unreachable_state_is_rejected() {
        let spec = LanguageSpec::flat().with_seq_len(4);
        let state = GeneratorState {
            position: 1,
            open: vec![1, 2, 3, 4, 5],
            block: None,
            unused: vec![],
        };
        assert!(matches!(next_token_distribution(&spec, &state), Err(Error::State(_))));
    }
}
