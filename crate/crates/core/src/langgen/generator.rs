use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{LanguageKind, LanguageSpec};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Sampler state after some prefix of a sequence.
///
/// `open` holds currently open bracket instances by type: a stack (top last)
/// for `Nested`, opening order for `Flat`/`FlatShuffle`. `block` and `unused`
/// only apply to `FlatShuffle`: the block of the current segment and the types
/// of that block not yet opened in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorState {
    pub position: usize,
    pub open: Vec<u32>,
    pub block: Option<u32>,
    pub unused: Vec<u32>,
}

impl GeneratorState {
    pub fn new() -> Self {
        GeneratorState {
            position: 0,
            open: Vec::new(),
            block: None,
            unused: Vec::new(),
        }
    }

    /// State reached by replaying `prefix` through [`GeneratorState::apply`].
    pub fn from_prefix(spec: &LanguageSpec, prefix: &[u16]) -> Result<Self> {
        let mut state = GeneratorState::new();
        for &tok in prefix {
            state.apply(spec, tok)?;
        }
        Ok(state)
    }

    pub fn remaining(&self, spec: &LanguageSpec) -> usize {
        spec.seq_len.saturating_sub(self.position)
    }

    pub fn is_segment_start(&self, spec: &LanguageSpec) -> bool {
        spec.kind == LanguageKind::FlatShuffle && self.position % spec.segment_len == 0
    }

    /// Checks that the state could have been produced by the generator.
    pub fn check(&self, spec: &LanguageSpec) -> Result<()> {
        if self.position > spec.seq_len {
            return Err(Error::State(format!(
                "position {} is past seq_len {}",
                self.position, spec.seq_len
            )));
        }
        if self.open.iter().any(|&t| t >= spec.usable_types()) {
            return Err(Error::State("open bracket of an unusable type".into()));
        }
        if (self.open.len() + self.position) % 2 != 0 {
            return Err(Error::State("open count has the wrong parity for this position".into()));
        }
        if self.open.len() > self.remaining(spec) {
            return Err(Error::State(format!(
                "{} open brackets cannot be closed in {} remaining positions",
                self.open.len(),
                self.remaining(spec)
            )));
        }
        if spec.kind == LanguageKind::FlatShuffle {
            let seg_left = spec.segment_len - self.position % spec.segment_len;
            if self.position % spec.segment_len == 0 {
                if !self.open.is_empty() || !self.unused.is_empty() {
                    return Err(Error::State("segment boundary with unfinished brackets".into()));
                }
            } else {
                let block = self
                    .block
                    .ok_or_else(|| Error::State("mid-segment state without a block".into()))?;
                let lo = block * spec.block_types;
                let hi = lo + spec.block_types;
                if self.open.iter().chain(&self.unused).any(|&t| t < lo || t >= hi) {
                    return Err(Error::State("type outside the segment's block".into()));
                }
                if 2 * self.unused.len() + self.open.len() != seg_left {
                    return Err(Error::State(
                        "open/unused counts do not fill the rest of the segment".into(),
                    ));
                }
            }
        } else if !self.unused.is_empty() || self.block.is_some() {
            return Err(Error::State("block bookkeeping on a non-shuffle language".into()));
        }
        Ok(())
    }

    /// Advances the state by one token, rejecting tokens the generator could
    /// never emit here.
    pub fn apply(&mut self, spec: &LanguageSpec, token: u16) -> Result<()> {
        let at = self.position;
        let illegal = |msg: String| Error::Validation {
            position: at,
            message: msg,
        };
        if self.position >= spec.seq_len {
            return Err(illegal("sequence is already complete".into()));
        }
        let (is_open, ty) = spec
            .decode_token(token)
            .ok_or_else(|| illegal(format!("token {token} is outside the vocabulary")))?;
        let remaining = self.remaining(spec);

        if spec.kind == LanguageKind::FlatShuffle && self.is_segment_start(spec) {
            if !is_open || ty >= spec.usable_types() {
                return Err(illegal(format!("segment must start with an open bracket, got {token}")));
            }
            let block = ty / spec.block_types;
            let lo = block * spec.block_types;
            self.block = Some(block);
            self.unused = (lo..lo + spec.block_types).filter(|&t| t != ty).collect();
            self.open.push(ty);
            self.position += 1;
            return Ok(());
        }

        if is_open {
            if self.open.len() >= remaining {
                return Err(illegal(format!("open bracket {ty} cannot be closed in time")));
            }
            match spec.kind {
                LanguageKind::FlatShuffle => {
                    let idx = self
                        .unused
                        .iter()
                        .position(|&t| t == ty)
                        .ok_or_else(|| illegal(format!("type {ty} is not available in this segment")))?;
                    self.unused.remove(idx);
                }
                _ => {
                    if ty >= spec.n_types {
                        return Err(illegal(format!("type {ty} out of range")));
                    }
                }
            }
            self.open.push(ty);
        } else {
            if spec.kind == LanguageKind::FlatShuffle && self.open.is_empty() {
                return Err(illegal("close with nothing open".into()));
            }
            let idx = match spec.kind {
                LanguageKind::Nested => match self.open.last() {
                    Some(&top) if top == ty => self.open.len() - 1,
                    Some(&top) => {
                        return Err(illegal(format!("close {ty} does not match innermost open {top}")))
                    }
                    None => return Err(illegal("close with nothing open".into())),
                },
                _ => self
                    .open
                    .iter()
                    .position(|&t| t == ty)
                    .ok_or_else(|| illegal(format!("close {ty} has no matching open bracket")))?,
            };
            self.open.remove(idx);
        }
        self.position += 1;
        if spec.kind == LanguageKind::FlatShuffle && self.position % spec.segment_len == 0 {
            self.block = None;
        }
        Ok(())
    }
}

impl Default for GeneratorState {
    fn default() -> Self {
        Self::new()
    }
}

/// Counts of the free open-or-close decisions a generator made.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecisionStats {
    pub unconstrained: u64,
    pub opened: u64,
}

impl DecisionStats {
    pub fn open_frequency(&self) -> f64 {
        self.opened as f64 / self.unconstrained as f64
    }
}

/// Token-by-token sampler for one sequence.
pub struct Generator {
    spec: LanguageSpec,
    state: GeneratorState,
    rng: ChaCha8Rng,
    stats: DecisionStats,
}

impl Generator {
    pub fn new(spec: LanguageSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        if !spec.kind.is_synthetic() {
            return Err(Error::config("natural corpora cannot be generated"));
        }
        Ok(Generator {
            spec,
            state: GeneratorState::new(),
            rng: rng_from_seed(seed),
            stats: DecisionStats::default(),
        })
    }

    /// Continues sampling from an existing state.
    pub fn resume(spec: LanguageSpec, state: GeneratorState, seed: u64) -> Result<Self> {
        let mut g = Generator::new(spec, seed)?;
        state.check(&spec)?;
        g.state = state;
        Ok(g)
    }

    pub fn state(&self) -> &GeneratorState {
        &self.state
    }

    pub fn stats(&self) -> DecisionStats {
        self.stats
    }

    pub fn is_done(&self) -> bool {
        self.state.position >= self.spec.seq_len
    }

    fn decide_open(&mut self, can_open: bool, can_close: bool) -> bool {
        match (can_open, can_close) {
            (true, false) => true,
            (false, true) => false,
            _ => {
                self.stats.unconstrained += 1;
                let open = self.rng.random_bool(self.spec.p_open);
                if open {
                    self.stats.opened += 1;
                }
                open
            }
        }
    }

    pub fn next_token(&mut self) -> Option<u16> {
        if self.is_done() {
            return None;
        }
        let spec = self.spec;
        let token = match spec.kind {
            LanguageKind::Nested | LanguageKind::Flat => {
                let remaining = spec.seq_len - self.state.position;
                let can_open = self.state.open.len() < remaining;
                let can_close = !self.state.open.is_empty();
                if self.decide_open(can_open, can_close) {
                    let ty = self.rng.random_range(0..spec.n_types);
                    self.state.open.push(ty);
                    spec.open_token(ty)
                } else {
                    let idx = if spec.kind == LanguageKind::Nested {
                        self.state.open.len() - 1
                    } else {
                        self.rng.random_range(0..self.state.open.len())
                    };
                    spec.close_token(self.state.open.remove(idx))
                }
            }
            LanguageKind::FlatShuffle => {
                if self.state.position % spec.segment_len == 0 {
                    let block = self.rng.random_range(0..spec.n_blocks());
                    let lo = block * spec.block_types;
                    self.state.block = Some(block);
                    self.state.unused = (lo..lo + spec.block_types).collect();
                }
                let can_open = !self.state.unused.is_empty();
                let can_close = !self.state.open.is_empty();
                if self.decide_open(can_open, can_close) {
                    let idx = self.rng.random_range(0..self.state.unused.len());
                    let ty = self.state.unused.remove(idx);
                    self.state.open.push(ty);
                    spec.open_token(ty)
                } else {
                    let idx = self.rng.random_range(0..self.state.open.len());
                    spec.close_token(self.state.open.remove(idx))
                }
            }
            LanguageKind::Natural => unreachable!("rejected in Generator::new"),
        };
        self.state.position += 1;
        if spec.kind == LanguageKind::FlatShuffle && self.state.position % spec.segment_len == 0 {
            self.state.block = None;
        }
        Some(token)
    }

    /// Samples until the sequence is complete.
    pub fn finish(&mut self) -> Vec<u16> {
        let mut out = Vec::with_capacity(self.spec.seq_len - self.state.position);
        while let Some(t) = self.next_token() {
            out.push(t);
        }
        out
    }
}

/// Generates one complete sequence. The same `(spec, seed)` always yields the
/// same tokens.
pub fn generate_sequence(spec: &LanguageSpec, seed: u64) -> Result<Vec<u16>> {
    Ok(Generator::new(*spec, seed)?.finish())
}
