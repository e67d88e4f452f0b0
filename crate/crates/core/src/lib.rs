//! Transfer-learning laboratory for synthetic bracket languages.
//!
//! The crate generates the `nested`, `flat` and `flat_shuffle` languages,
//! trains a small decoder-only transformer on them, fine-tunes it on a target
//! corpus with frozen parameter groups, and analyses the resulting embeddings.

pub mod cloze;
pub mod embedx;
pub mod error;
pub mod experiment;
pub mod langgen;
pub mod model;
pub mod probes;
pub mod rng;
pub mod textcorpus;
pub mod trainer;
pub mod transfer;

pub use error::{Error, Result};
