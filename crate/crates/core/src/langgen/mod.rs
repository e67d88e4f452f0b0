//! Generators, validators and exact oracles for the synthetic bracket
//! languages `nested`, `flat` and `flat_shuffle`.

mod corpus;
mod generator;
mod oracle;
mod spec;
mod validate;

pub use corpus::{generate_corpus, sequence_seed, Corpus, FORMAT_VERSION, HEADER_LEN, MAGIC};
pub use generator::{generate_sequence, DecisionStats, Generator, GeneratorState};
pub use oracle::{next_token_distribution, per_position_nll, sequence_nll_floor, NextTokenDistribution};
pub use spec::{LanguageKind, LanguageSpec};
pub use validate::{validate, ValidationReport};
