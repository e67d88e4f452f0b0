//! Small decoder-only transformer with named parameters, exact gradients and
//! parameter-group masks.

mod checkpoint;
mod config;
mod float;
mod params;
mod transformer;

pub use checkpoint::{load_checkpoint, read_manifest, save_checkpoint, CheckpointManifest, TensorEntry, BLOB_FILE, MANIFEST_FILE};
pub use config::ModelConfig;
pub use float::Scalar;
pub use params::{
    tensor_specs, ModelParams, ParameterGroup, ParameterMask, Tensor, INIT_STD, INPUT_EMBEDDING, LAYER_TENSORS,
    OUTPUT_EMBEDDING, POSITIONAL_EMBEDDING,
};
pub use transformer::{backward, forward, log_prob, loss, token_nll, Gradients, Logits, SequenceLogProb};
