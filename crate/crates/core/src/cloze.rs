//! Cloze questions scored by log-probability differences.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_prob, ModelParams, Scalar};
use crate::textcorpus::{tokenize, Vocab, UNK};

pub const MARKER: char = '#';

/// Twelve subtasks of ten questions each, bundled with the crate.
pub const SAMPLE_QUESTIONS: &str = include_str!("../data/tiny_cloze_sample.jsonl");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClozeQuestion {
    pub prompt: String,
    pub correct: String,
    pub incorrect: String,
    pub subtask: String,
}

impl ClozeQuestion {
    pub fn validate(&self) -> std::result::Result<(), String> {
        match self.prompt.matches(MARKER).count() {
            1 => {}
            0 => return Err("prompt has no '#' marker".into()),
            n => return Err(format!("prompt has {n} '#' markers")),
        }
        if self.correct.trim().is_empty() || self.incorrect.trim().is_empty() {
            return Err("answers must be non-empty".into());
        }
        if self.correct == self.incorrect {
            return Err("correct and incorrect answers are identical".into());
        }
        if self.subtask.trim().is_empty() {
            return Err("subtask name is empty".into());
        }
        Ok(())
    }

    /// Byte offset of the marker.
    fn marker_at(&self) -> usize {
        self.prompt.find(MARKER).expect("validated question")
    }

    /// The prompt with `answer` substituted for the marker.
    pub fn fill(&self, answer: &str) -> String {
        self.prompt.replacen(MARKER, answer, 1)
    }
}

/// Parses JSON lines of `{prompt, correct, incorrect, subtask}`. Blank lines
/// are ignored; errors carry the 1-based line number.
pub fn parse_questions(text: &str) -> Result<Vec<ClozeQuestion>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: ClozeQuestion = serde_json::from_str(line).map_err(|e| Error::Validation {
            position: i + 1,
            message: format!("malformed question: {e}"),
        })?;
        q.validate().map_err(|message| Error::Validation { position: i + 1, message })?;
        out.push(q);
    }
    Ok(out)
}

pub fn load_questions(path: impl AsRef<Path>) -> Result<Vec<ClozeQuestion>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_questions(&text).map_err(|e| match e {
        Error::Validation { position, message } => Error::format(path, format!("line {position}: {message}")),
        other => other,
    })
}

/// Anything that assigns next-token log-probabilities to a token sequence.
pub trait TokenScorer {
    fn vocab_size(&self) -> usize;
    /// Longest sequence the scorer accepts.
    fn max_len(&self) -> usize;
    /// `log p(tokens[i] | tokens[..i])` for `i` in `1..tokens.len()`.
    fn next_token_log_probs(&self, tokens: &[u16]) -> Result<Vec<f64>>;
}

impl<T: Scalar> TokenScorer for ModelParams<T> {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn max_len(&self) -> usize {
        self.config.max_seq_len + 1
    }

    fn next_token_log_probs(&self, tokens: &[u16]) -> Result<Vec<f64>> {
        Ok(log_prob(self, tokens)?.per_token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Whole sentence with the answer substituted.
    #[default]
    FullSentence,
    /// Only the tokens overlapping the substituted answer.
    AnswerOnly,
}

impl std::str::FromStr for ScoringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "full_sentence" => Ok(ScoringMode::FullSentence),
            "answer" | "answer_only" => Ok(ScoringMode::AnswerOnly),
            _ => Err(Error::config(format!("unknown scoring mode {s:?}"))),
        }
    }
}

/// Token ids of `text` plus, per token, whether it overlaps `span`.
fn encode_with_span(text: &str, vocab: &Vocab, span: (usize, usize)) -> (Vec<u16>, Vec<bool>, usize) {
    let mut ids = Vec::new();
    let mut overlaps = Vec::new();
    let mut unknown = 0;
    let mut start = 0;
    for piece in tokenize(text) {
        let end = start + piece.len();
        let id = vocab.id(piece).unwrap_or(UNK);
        unknown += usize::from(id == UNK);
        ids.push(id);
        overlaps.push(start < span.1 && span.0 < end);
        start = end;
    }
    (ids, overlaps, unknown)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerScore {
    pub log_prob: f64,
    pub n_tokens: usize,
    pub n_unknown: usize,
}

/// Log-probability of the prompt filled with `answer` under `mode`.
pub fn score_answer(
    scorer: &impl TokenScorer,
    vocab: &Vocab,
    question: &ClozeQuestion,
    answer: &str,
    mode: ScoringMode,
) -> Result<AnswerScore> {
    let at = question.marker_at();
    let text = question.fill(answer);
    let (ids, overlaps, n_unknown) = encode_with_span(&text, vocab, (at, at + answer.len()));
    if ids.len() < 2 {
        return Err(Error::input("filled prompt has fewer than two tokens"));
    }
    if ids.len() > scorer.max_len() {
        return Err(Error::input(format!(
            "filled prompt has {} tokens, scorer accepts {}",
            ids.len(),
            scorer.max_len()
        )));
    }
    if ids.iter().any(|&t| t as usize >= scorer.vocab_size()) {
        return Err(Error::input("vocabulary is larger than the scorer's"));
    }
    let lp = scorer.next_token_log_probs(&ids)?;
    let log_prob = match mode {
        ScoringMode::FullSentence => lp.iter().sum(),
        ScoringMode::AnswerOnly => {
            let picked: Vec<f64> = lp.iter().zip(&overlaps[1..]).filter(|(_, &o)| o).map(|(l, _)| *l).collect();
            if picked.is_empty() {
                return Err(Error::input("answer has no scorable tokens"));
            }
            picked.iter().sum()
        }
    };
    Ok(AnswerScore {
        log_prob,
        n_tokens: ids.len(),
        n_unknown,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub index: usize,
    pub subtask: String,
    /// `log p(correct) - log p(incorrect)` in nats.
    pub delta: f64,
    pub correct_log_prob: f64,
    pub incorrect_log_prob: f64,
    pub n_unknown: usize,
}

/// Scores one question; positive deltas mean the correct answer is preferred.
pub fn score_question(
    scorer: &impl TokenScorer,
    vocab: &Vocab,
    question: &ClozeQuestion,
    mode: ScoringMode,
) -> Result<QuestionScore> {
    question.validate().map_err(Error::Input)?;
    let c = score_answer(scorer, vocab, question, &question.correct, mode)?;
    let i = score_answer(scorer, vocab, question, &question.incorrect, mode)?;
    Ok(QuestionScore {
        index: 0,
        subtask: question.subtask.clone(),
        delta: c.log_prob - i.log_prob,
        correct_log_prob: c.log_prob,
        incorrect_log_prob: i.log_prob,
        n_unknown: c.n_unknown + i.n_unknown,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskMean {
    pub subtask: String,
    pub mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClozeReport {
    pub mode: ScoringMode,
    pub questions: Vec<QuestionScore>,
    /// `(question index, reason)` for questions that could not be scored.
    pub skipped: Vec<(usize, String)>,
    /// Sorted by subtask name.
    pub subtasks: Vec<SubtaskMean>,
    /// Mean of the subtask means.
    pub average: f64,
}

impl ClozeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subtask,mean_delta,n\n");
        for s in &self.subtasks {
            let _ = writeln!(out, "{},{:.6},{}", s.subtask, s.mean, s.n);
        }
        let _ = writeln!(out, "average,{:.6},{}", self.average, self.questions.len());
        out
    }
}

/// Sum that does not depend on the order of `values` and changes sign
/// exactly when every value does.
fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let positive: f64 = values.iter().filter(|&&v| v > 0.0).sum();
    let negative: f64 = values.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
    positive - negative
}

/// Scores every question and macro-averages the per-subtask means.
pub fn evaluate(
    scorer: &impl TokenScorer,
    vocab: &Vocab,
    questions: &[ClozeQuestion],
    mode: ScoringMode,
) -> Result<ClozeReport> {
    if questions.is_empty() {
        return Err(Error::input("no cloze questions"));
    }
    let mut scored = Vec::new();
    let mut skipped = Vec::new();
    for (index, q) in questions.iter().enumerate() {
        match score_question(scorer, vocab, q, mode) {
            Ok(s) => scored.push(QuestionScore { index, ..s }),
            Err(e @ Error::Input(_)) => skipped.push((index, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in &scored {
        groups.entry(&s.subtask).or_default().push(s.delta);
    }
    if groups.is_empty() {
        return Err(Error::input("every cloze question was skipped"));
    }
    let subtasks: Vec<SubtaskMean> = groups
        .into_iter()
        .map(|(name, mut deltas)| SubtaskMean {
            subtask: name.to_string(),
            n: deltas.len(),
            mean: order_free_sum(&mut deltas) / deltas.len() as f64,
        })
        .collect();
    let average = subtasks.iter().map(|s| s.mean).sum::<f64>() / subtasks.len() as f64;
    Ok(ClozeReport {
        mode,
        questions: scored,
        skipped,
        subtasks,
        average,
    })
}
