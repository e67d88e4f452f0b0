use serde::Serialize;

use super::spec::{LanguageKind, LanguageSpec};

/// Structural properties of a token sequence relative to a language spec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub length_ok: bool,
    pub in_vocab: bool,
    /// Every close matches an earlier open of its type and nothing stays open.
    pub balanced: bool,
    /// Closes happen in LIFO order.
    pub nested: bool,
    /// Every aligned segment is a balanced permutation of one block's brackets.
    pub shuffle_blocks: bool,
    pub first_violation: Option<(usize, String)>,
}

impl ValidationReport {
    /// Whether the sequence satisfies the flags its language requires.
    pub fn is_valid(&self, kind: LanguageKind) -> bool {
        let base = self.length_ok && self.in_vocab && self.balanced;
        match kind {
            LanguageKind::Nested => base && self.nested,
            LanguageKind::Flat => base,
            LanguageKind::FlatShuffle => base && self.shuffle_blocks,
            LanguageKind::Natural => self.length_ok && self.in_vocab,
        }
    }

    /// Balanced but not LIFO: some pair of brackets crosses.
    pub fn has_crossing_pair(&self) -> bool {
        self.balanced && !self.nested
    }
}

pub fn validate(spec: &LanguageSpec, seq: &[u16]) -> ValidationReport {
    let mut first: Option<(usize, String)> = None;
    let mut note = |pos: usize, msg: String| {
        if first.is_none() {
            first = Some((pos, msg));
        }
    };

    let length_ok = seq.len() == spec.seq_len;
    if !length_ok {
        note(seq.len().min(spec.seq_len), format!("length {} != {}", seq.len(), spec.seq_len));
    }
    let vocab = spec.vocab_size();
    let in_vocab = match seq.iter().position(|&t| t as usize >= vocab) {
        Some(p) => {
            note(p, format!("token {} outside vocabulary of {vocab}", seq[p]));
            false
        }
        None => true,
    };
    if spec.kind == LanguageKind::Natural {
        return ValidationReport {
            length_ok,
            in_vocab,
            balanced: true,
            nested: true,
            shuffle_blocks: true,
            first_violation: first,
        };
    }

    let n = spec.n_types as usize;
    let mut counts = vec![0u32; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut balanced = in_vocab;
    let mut nested = in_vocab;
    for (pos, &tok) in seq.iter().enumerate() {
        let Some((is_open, ty)) = spec.decode_token(tok) else {
            break;
        };
        if is_open {
            counts[ty as usize] += 1;
            stack.push(ty);
            continue;
        }
        if counts[ty as usize] == 0 {
            if balanced {
                note(pos, format!("close {ty} without a matching open"));
            }
            balanced = false;
        } else {
            counts[ty as usize] -= 1;
        }
        match stack.last() {
            Some(&top) if top == ty => {
                stack.pop();
            }
            _ => {
                if nested && balanced {
                    note(pos, format!("close {ty} crosses the innermost open bracket"));
                }
                nested = false;
                if let Some(i) = stack.iter().rposition(|&t| t == ty) {
                    stack.remove(i);
                }
            }
        }
    }
    if balanced && counts.iter().any(|&c| c > 0) {
        note(seq.len(), "brackets left open at end of sequence".into());
        balanced = false;
    }
    nested = nested && balanced;

    let shuffle_blocks = in_vocab && check_shuffle_blocks(spec, seq, &mut note);

    ValidationReport {
        length_ok,
        in_vocab,
        balanced,
        nested,
        shuffle_blocks,
        first_violation: first,
    }
}

fn check_shuffle_blocks(spec: &LanguageSpec, seq: &[u16], note: &mut impl FnMut(usize, String)) -> bool {
    let seg = spec.segment_len;
    let bt = spec.block_types;
    if seg == 0 || bt == 0 || seg != 2 * bt as usize || seq.len() % seg != 0 {
        return false;
    }
    let usable = spec.n_blocks() * bt;
    for (w, window) in seq.chunks(seg).enumerate() {
        let start = w * seg;
        let Some((_, first_ty)) = spec.decode_token(window[0]) else {
            return false;
        };
        if first_ty >= usable {
            note(start, format!("type {first_ty} is outside every complete block"));
            return false;
        }
        let lo = first_ty / bt * bt;
        // 0 = unseen, 1 = open, 2 = closed
        let mut phase = vec![0u8; bt as usize];
        for (off, &tok) in window.iter().enumerate() {
            let (is_open, ty) = spec.decode_token(tok).expect("checked in_vocab");
            if ty < lo || ty >= lo + bt {
                note(start + off, format!("type {ty} outside block [{lo}, {})", lo + bt));
                return false;
            }
            let p = &mut phase[(ty - lo) as usize];
            match (is_open, *p) {
                (true, 0) => *p = 1,
                (false, 1) => *p = 2,
                _ => {
                    note(start + off, format!("type {ty} repeats or closes before opening in its segment"));
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: LanguageKind, n_types: u32, len: usize) -> LanguageSpec {
        LanguageSpec::new(kind).with_n_types(n_types).with_seq_len(len)
    }

    #[test]
    fn simple_pair_is_nested_and_balanced() {
        let r = validate(&spec(LanguageKind::Nested, 2, 2), &[0, 2]);
        assert!(r.balanced && r.nested);
        assert!(r.is_valid(LanguageKind::Nested));
    }

    #[test]
    fn crossing_pair_breaks_nesting_but_not_flat() {
        let s = spec(LanguageKind::Nested, 2, 4);
        let r = validate(&s, &[0, 1, 2, 3]);
        assert!(r.balanced);
        assert!(!r.nested);
        assert!(!r.is_valid(LanguageKind::Nested));
        assert!(r.has_crossing_pair());
        assert_eq!(r.first_violation.as_ref().unwrap().0, 2);

        let f = spec(LanguageKind::Flat, 2, 4);
        assert!(validate(&f, &[0, 1, 2, 3]).is_valid(LanguageKind::Flat));
    }

    #[test]
    fn unbalanced_inputs() {
        let s = spec(LanguageKind::Flat, 2, 4);
        assert!(!validate(&s, &[2, 0, 0, 2]).balanced);
        assert!(!validate(&s, &[0, 0, 0, 2]).balanced);
        assert!(!validate(&s, &[0, 2]).length_ok);
        let r = validate(&s, &[0, 9, 2, 2]);
        assert!(!r.in_vocab);
        assert!(!r.is_valid(LanguageKind::Flat));
    }

    #[test]
    fn shuffle_windows() {
        let mut s = LanguageSpec::flat_shuffle().with_n_types(4).with_seq_len(8);
        s.block_types = 2;
        s.segment_len = 4;
        // types {0,1} then {2,3}
        let good = [0, 1, 4, 5, 3, 7, 2, 6];
        assert!(validate(&s, &good).is_valid(LanguageKind::FlatShuffle));
        // second window mixes blocks
        let mixed = [0, 1, 4, 5, 3, 0, 7, 4];
        let r = validate(&s, &mixed);
        assert!(r.balanced);
        assert!(!r.shuffle_blocks);
        // a type used twice in one window
        let twice = [0, 4, 0, 4, 2, 3, 6, 7];
        assert!(!validate(&s, &twice).shuffle_blocks);
    }
}
