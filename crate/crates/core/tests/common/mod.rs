use langtransfer::cloze::{ClozeQuestion, TokenScorer};
use langtransfer::textcorpus::Vocab;
use langtransfer::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scorer whose next-token logits depend only on the previous token, read
/// from a fixed random table.
pub struct BigramScorer {
    pub vocab_size: usize,
    pub logits: Vec<f64>,
}

impl BigramScorer {
    pub fn random(vocab_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = (0..vocab_size * vocab_size).map(|_| rng.random_range(-3.0..3.0)).collect();
        BigramScorer { vocab_size, logits }
    }

    /// `log p(next | prev)` by direct log-sum-exp over the row.
    pub fn log_p(&self, prev: u16, next: u16) -> f64 {
        let row = &self.logits[prev as usize * self.vocab_size..(prev as usize + 1) * self.vocab_size];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        row[next as usize] - lse
    }

    /// Total log-probability of an encoded sentence, first token unscored.
    pub fn sentence_log_p(&self, ids: &[u16]) -> f64 {
        ids.windows(2).map(|w| self.log_p(w[0], w[1])).sum()
    }
}

impl TokenScorer for BigramScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn max_len(&self) -> usize {
        usize::MAX
    }

    fn next_token_log_probs(&self, tokens: &[u16]) -> Result<Vec<f64>> {
        Ok(tokens.windows(2).map(|w| self.log_p(w[0], w[1])).collect())
    }
}

/// Vocabulary covering every token of every filled question.
pub fn covering_vocab(questions: &[ClozeQuestion]) -> Vocab {
    let text: String = questions
        .iter()
        .flat_map(|q| [q.fill(&q.correct), q.fill(&q.incorrect)])
        .collect::<Vec<_>>()
        .join("\n");
    Vocab::build(&text, 65_536).unwrap()
}

/// Analytic delta: correct minus incorrect full-sentence log-probability.
pub fn analytic_delta(scorer: &BigramScorer, vocab: &Vocab, q: &ClozeQuestion) -> f64 {
    scorer.sentence_log_p(&vocab.encode(&q.fill(&q.correct))) - scorer.sentence_log_p(&vocab.encode(&q.fill(&q.incorrect)))
}
