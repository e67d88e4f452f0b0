use langtransfer::textcorpus::{
    encode_corpus, extract_features, merge_features, template_english, tokenize, FeatureTable, Vocab, PAD, UNK,
};
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("the".to_string()),
        Just("dog".to_string()),
        Just("ran".to_string()),
        Just(".".to_string()),
        Just("\n".to_string()),
        "[a-z]{1,6}",
    ]
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..60).prop_map(|ws| ws.join(" "))
}

proptest! {
    #[test]
    fn tokenization_concatenates_to_input(s in "[ a-zA-Z.,!?\n']{0,80}") {
        prop_assert_eq!(tokenize(&s).concat(), s);
    }

    #[test]
    fn full_vocabulary_decodes_losslessly(t in text()) {
        let vocab = Vocab::build(&t, 10_000).unwrap();
        let ids = vocab.encode(&t);
        prop_assert!(!ids.contains(&UNK));
        prop_assert_eq!(vocab.decode(&ids), t);
    }

    #[test]
    fn vocabulary_ids_are_bijective(t in text(), max in 3usize..40) {
        let vocab = Vocab::build(&t, max).unwrap();
        prop_assert!(vocab.len() <= max);
        for (id, tok) in vocab.tokens().iter().enumerate() {
            prop_assert_eq!(vocab.id(tok), Some(id as u16));
            prop_assert_eq!(vocab.token(id as u16), Some(tok.as_str()));
        }
    }

    #[test]
    fn frequencies_count_regular_tokens(t in text(), max in 3usize..40, seq_len in 2usize..16) {
        let vocab = Vocab::build(&t, max).unwrap();
        let (corpus, stats) = encode_corpus(&t, &vocab, seq_len).unwrap();
        prop_assert_eq!(corpus.n_tokens(), stats.n_tokens + stats.n_padding);
        let table = extract_features(&corpus, &vocab).unwrap();
        let regular = corpus.tokens().iter().filter(|&&id| !Vocab::is_special(id)).count() as u64;
        prop_assert_eq!(table.frequency.iter().sum::<u64>(), regular);
        prop_assert_eq!(table.len(), vocab.len());
    }

    #[test]
    fn encoding_is_deterministic_and_order_preserving(t in text()) {
        let vocab = Vocab::build(&t, 20).unwrap();
        let a = vocab.encode(&t);
        prop_assert_eq!(&a, &vocab.encode(&t));
        let pieces = tokenize(&t);
        prop_assert_eq!(a.len(), pieces.len());
        for (id, piece) in a.iter().zip(pieces) {
            prop_assert_eq!(*id, vocab.id(piece).unwrap_or(UNK));
        }
    }
}

#[test]
fn leading_space_is_part_of_the_token() {
    assert_eq!(tokenize("The dog ran."), vec!["The", " dog", " ran", "."]);
    let vocab = Vocab::build("The dog ran. The dog sat.", 50).unwrap();
    let table = extract_features(&encode_corpus("The dog", &vocab, 2).unwrap().0, &vocab).unwrap();
    let dog = vocab.id(" dog").unwrap() as usize;
    let the = vocab.id("The").unwrap() as usize;
    assert!(table.starts_with_space[dog]);
    assert!(!table.starts_with_space[the]);
}

#[test]
fn last_chunk_is_padded() {
    let vocab = Vocab::build("a b c", 10).unwrap();
    let (corpus, stats) = encode_corpus("a b c", &vocab, 2).unwrap();
    assert_eq!(stats.n_padding, 1);
    assert_eq!(*corpus.tokens().last().unwrap(), PAD);
}

#[test]
fn vocab_and_feature_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let text = template_english(200, 3);
    let vocab = Vocab::build(&text, 100).unwrap();
    vocab.write(dir.path().join("vocab.txt")).unwrap();
    assert_eq!(Vocab::read(dir.path().join("vocab.txt")).unwrap(), vocab);
    let table = extract_features(&encode_corpus(&text, &vocab, 16).unwrap().0, &vocab).unwrap();
    table.write(dir.path().join("features.json")).unwrap();
    assert_eq!(FeatureTable::read(dir.path().join("features.json")).unwrap(), table);
}

#[test]
fn external_features_respect_minimum_count() {
    let vocab = Vocab::build("The dog ran. The cat sat.", 50).unwrap();
    let table = extract_features(&encode_corpus("The dog ran.", &vocab, 4).unwrap().0, &vocab).unwrap();
    let lines = " dog\tnoun\t1\n cat\tnoun\t1\n ran\tverb\t1\n ghost\tnoun\t1\n";
    let merged = merge_features(&table, lines, 2).unwrap();
    assert_eq!(merged.kept, vec!["noun".to_string()]);
    assert_eq!(merged.dropped, vec![("verb".to_string(), 1)]);
    assert_eq!(merged.warnings.len(), 1);
    assert!(merge_features(&table, "dog\tnoun\n", 1).is_err());
    assert!(merge_features(&table, " dog\tnoun\t2\n", 1).is_err());
}

#[test]
fn template_english_is_seeded() {
    assert_eq!(template_english(50, 1), template_english(50, 1));
    assert_ne!(template_english(50, 1), template_english(50, 2));
}
