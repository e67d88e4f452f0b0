mod common;

use common::{analytic_delta, covering_vocab, BigramScorer};
use langtransfer::cloze::{
    evaluate, load_questions, parse_questions, score_answer, score_question, ClozeQuestion, ScoringMode,
    SAMPLE_QUESTIONS,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sample() -> Vec<ClozeQuestion> {
    parse_questions(SAMPLE_QUESTIONS).unwrap()
}

fn swapped(q: &ClozeQuestion) -> ClozeQuestion {
    ClozeQuestion {
        correct: q.incorrect.clone(),
        incorrect: q.correct.clone(),
        ..q.clone()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn swapping_answers_negates_every_delta(seed in any::<u64>(), answer_only in any::<bool>()) {
        let qs = sample();
        let vocab = covering_vocab(&qs);
        let scorer = BigramScorer::random(vocab.len(), seed);
        let mode = if answer_only { ScoringMode::AnswerOnly } else { ScoringMode::FullSentence };
        let a = evaluate(&scorer, &vocab, &qs, mode).unwrap();
        let b = evaluate(&scorer, &vocab, &qs.iter().map(swapped).collect::<Vec<_>>(), mode).unwrap();
        for (x, y) in a.questions.iter().zip(&b.questions) {
            prop_assert_eq!(x.delta, -y.delta);
        }
        prop_assert_eq!(a.average, -b.average);
    }

    #[test]
    fn report_ignores_question_order(seed in any::<u64>()) {
        let qs = sample();
        let vocab = covering_vocab(&qs);
        let scorer = BigramScorer::random(vocab.len(), seed);
        let mut shuffled = qs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = evaluate(&scorer, &vocab, &qs, ScoringMode::FullSentence).unwrap();
        let b = evaluate(&scorer, &vocab, &shuffled, ScoringMode::FullSentence).unwrap();
        prop_assert_eq!(&a.subtasks, &b.subtasks);
        prop_assert_eq!(a.average, b.average);
    }

    #[test]
    fn macro_average_is_mean_of_subtask_means(seed in any::<u64>(), keep in 12usize..120) {
        let qs: Vec<ClozeQuestion> = sample().into_iter().take(keep).collect();
        let vocab = covering_vocab(&qs);
        let scorer = BigramScorer::random(vocab.len(), seed);
        let r = evaluate(&scorer, &vocab, &qs, ScoringMode::FullSentence).unwrap();
        let mean = r.subtasks.iter().map(|s| s.mean).sum::<f64>() / r.subtasks.len() as f64;
        prop_assert_eq!(r.average, mean);
        prop_assert_eq!(r.subtasks.iter().map(|s| s.n).sum::<usize>(), keep);
    }
}

#[test]
fn full_sentence_deltas_match_direct_bigram_sums() {
    let qs = sample();
    let vocab = covering_vocab(&qs);
    let scorer = BigramScorer::random(vocab.len(), 1);
    for q in &qs {
        let got = score_question(&scorer, &vocab, q, ScoringMode::FullSentence).unwrap();
        assert!((got.delta - analytic_delta(&scorer, &vocab, q)).abs() < 1e-9, "{}", q.prompt);
        assert_eq!(got.n_unknown, 0);
    }
}

#[test]
fn answer_only_scores_just_the_answer_tokens() {
    let q = ClozeQuestion {
        prompt: "the cat is # today".into(),
        correct: "happy".into(),
        incorrect: "sad".into(),
        subtask: "emotions".into(),
    };
    let vocab = covering_vocab(std::slice::from_ref(&q));
    let scorer = BigramScorer::random(vocab.len(), 2);
    let got = score_answer(&scorer, &vocab, &q, "happy", ScoringMode::AnswerOnly).unwrap();
    let want = scorer.log_p(vocab.id(" is").unwrap(), vocab.id(" happy").unwrap());
    assert!((got.log_prob - want).abs() < 1e-12);
}

#[test]
fn malformed_files_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.jsonl");
    let good = r#"{"prompt": "a #", "correct": "b", "incorrect": "c", "subtask": "s"}"#;
    let bad = r#"{"prompt": "a # #", "correct": "b", "incorrect": "c", "subtask": "s"}"#;
    std::fs::write(&path, format!("{good}\n\n{bad}\n")).unwrap();
    let err = load_questions(&path).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
    std::fs::write(&path, format!("{good}\n")).unwrap();
    assert_eq!(load_questions(&path).unwrap().len(), 1);
}

#[test]
fn out_of_vocabulary_words_are_counted() {
    let qs = sample();
    let vocab = covering_vocab(&qs[..10]);
    let scorer = BigramScorer::random(vocab.len(), 3);
    let r = evaluate(&scorer, &vocab, &qs, ScoringMode::FullSentence).unwrap();
    assert_eq!(r.questions.len(), 120);
    assert!(r.questions[10..].iter().any(|s| s.n_unknown > 0));
    assert!(r.questions[..10].iter().all(|s| s.n_unknown == 0));
}
