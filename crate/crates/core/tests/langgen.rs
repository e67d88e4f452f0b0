use langtransfer::langgen::{
    generate_corpus, generate_sequence, next_token_distribution, per_position_nll, sequence_nll_floor, validate,
    Corpus, Generator, GeneratorState, LanguageKind, LanguageSpec,
};
use proptest::prelude::*;

fn kind_strategy() -> impl Strategy<Value = LanguageKind> {
    prop_oneof![
        Just(LanguageKind::Nested),
        Just(LanguageKind::Flat),
        Just(LanguageKind::FlatShuffle),
    ]
}

fn spec_for(kind: LanguageKind, seq_len: usize) -> LanguageSpec {
    LanguageSpec::new(kind).with_seq_len(seq_len)
}

proptest! {
    #[test]
    fn generated_sequences_pass_their_validator(kind in kind_strategy(), half in 8usize..64, seed in any::<u64>()) {
        let spec = spec_for(kind, half * 2 - (half * 2) % 16);
        let seq = generate_sequence(&spec, seed).unwrap();
        prop_assert_eq!(seq.len(), spec.seq_len);
        let report = validate(&spec, &seq);
        prop_assert!(report.is_valid(kind), "{:?}", report.first_violation);
    }

    #[test]
    fn open_and_close_counts_match_per_type(kind in kind_strategy(), seed in any::<u64>()) {
        let spec = spec_for(kind, 128);
        let seq = generate_sequence(&spec, seed).unwrap();
        let mut balance = vec![0i64; spec.n_types as usize];
        for &t in &seq {
            let (is_open, ty) = spec.decode_token(t).unwrap();
            balance[ty as usize] += if is_open { 1 } else { -1 };
            prop_assert!(balance[ty as usize] >= 0);
        }
        prop_assert!(balance.iter().all(|&b| b == 0));
    }

    #[test]
    fn oracle_sums_to_one_along_generated_prefixes(kind in kind_strategy(), seed in any::<u64>(), cut in 0usize..64) {
        let spec = spec_for(kind, 64);
        let seq = generate_sequence(&spec, seed).unwrap();
        let state = GeneratorState::from_prefix(&spec, &seq[..cut]).unwrap();
        let dist = next_token_distribution(&spec, &state).unwrap();
        prop_assert!((dist.total() - 1.0).abs() < 1e-9);
        prop_assert!(dist.prob(seq[cut]) > 0.0);
        for &(tok, p) in &dist.probs {
            prop_assert!(p > 0.0);
            let mut next = state.clone();
            prop_assert!(next.apply(&spec, tok).is_ok(), "token {} has mass but is illegal", tok);
        }
    }

    #[test]
    fn floor_is_mean_of_per_position_terms(kind in kind_strategy(), seed in any::<u64>()) {
        let spec = spec_for(kind, 64);
        let seq = generate_sequence(&spec, seed).unwrap();
        let per = per_position_nll(&spec, &seq).unwrap();
        prop_assert_eq!(per.len(), seq.len());
        prop_assert!(per.iter().all(|&x| x >= 0.0 && x.is_finite()));
        let floor = sequence_nll_floor(&spec, &seq).unwrap();
        prop_assert!((floor - per.iter().sum::<f64>() / per.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn corpus_bytes_round_trip(kind in kind_strategy(), n in 1usize..6, seed in any::<u64>()) {
        let corpus = generate_corpus(&spec_for(kind, 32), n, seed).unwrap();
        let back = Corpus::from_bytes(&corpus.to_bytes(), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back, corpus);
    }
}

#[test]
fn shuffle_segment_final_positions_cost_nothing() {
    let spec = LanguageSpec::flat_shuffle().with_seq_len(64);
    for seed in 0..50 {
        let seq = generate_sequence(&spec, seed).unwrap();
        let per = per_position_nll(&spec, &seq).unwrap();
        for pos in (spec.segment_len - 1..64).step_by(spec.segment_len) {
            assert_eq!(per[pos], 0.0, "seed {seed} position {pos}");
        }
    }
}

#[test]
fn mean_floor_does_not_depend_on_the_seed_stream() {
    let spec = LanguageSpec::flat().with_seq_len(64);
    let mean = |base: u64| {
        let c = generate_corpus(&spec, 2000, base).unwrap();
        c.sequences().map(|s| sequence_nll_floor(&spec, s).unwrap()).sum::<f64>() / 2000.0
    };
    let (a, b) = (mean(1), mean(2));
    assert!((a - b).abs() / a < 0.02, "{a} vs {b}");
}

#[test]
fn corpus_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested.synl");
    let corpus = generate_corpus(&LanguageSpec::nested().with_seq_len(32), 10, 5).unwrap();
    corpus.write(&path).unwrap();
    assert_eq!(Corpus::read(&path).unwrap(), corpus);
    std::fs::write(&path, b"SYNL").unwrap();
    assert!(Corpus::read(&path).is_err());
}

#[test]
fn generator_counts_only_free_decisions() {
    let spec = LanguageSpec::nested().with_seq_len(2);
    let mut g = Generator::new(spec, 3).unwrap();
    g.finish();
    assert_eq!(g.stats().unconstrained, 0);
}
