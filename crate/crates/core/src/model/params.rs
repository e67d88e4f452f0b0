use std::collections::BTreeSet;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::float::Scalar;
use crate::error::{Error, Result};
use crate::rng::sub_rng;

pub const INIT_STD: f64 = 0.02;

pub const INPUT_EMBEDDING: &str = "input_embedding";
pub const OUTPUT_EMBEDDING: &str = "output_embedding";
pub const POSITIONAL_EMBEDDING: &str = "positional_embedding";

/// Per-layer tensor suffixes, in storage order.
pub const LAYER_TENSORS: [&str; 12] = [
    "ln1.gain",
    "ln1.bias",
    "attn.qkv.weight",
    "attn.qkv.bias",
    "attn.out.weight",
    "attn.out.bias",
    "ln2.gain",
    "ln2.bias",
    "mlp.in.weight",
    "mlp.in.bias",
    "mlp.out.weight",
    "mlp.out.bias",
];

pub(crate) mod slot {
    pub const LN1_G: usize = 0;
    pub const LN1_B: usize = 1;
    pub const QKV_W: usize = 2;
    pub const QKV_B: usize = 3;
    pub const OUT_W: usize = 4;
    pub const OUT_B: usize = 5;
    pub const LN2_G: usize = 6;
    pub const LN2_B: usize = 7;
    pub const FF_IN_W: usize = 8;
    pub const FF_IN_B: usize = 9;
    pub const FF_OUT_W: usize = 10;
    pub const FF_OUT_B: usize = 11;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            name: name.into(),
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Index arithmetic over the fixed tensor order:
/// input embedding, positional embedding, 12 tensors per layer, final layer
/// norm gain and bias, then the output embedding unless tied.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    n_layers: usize,
    tied: bool,
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Self {
        Layout {
            n_layers: config.n_layers,
            tied: config.tie_embeddings,
        }
    }

    pub const fn input_embedding(&self) -> usize {
        0
    }

    pub const fn positional_embedding(&self) -> usize {
        1
    }

    pub fn layer(&self, l: usize, slot: usize) -> usize {
        2 + 12 * l + slot
    }

    pub fn final_gain(&self) -> usize {
        2 + 12 * self.n_layers
    }

    pub fn final_bias(&self) -> usize {
        3 + 12 * self.n_layers
    }

    pub fn output_embedding(&self) -> Option<usize> {
        (!self.tied).then_some(4 + 12 * self.n_layers)
    }
}

/// Names and shapes of every tensor, in storage order.
pub fn tensor_specs(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (v, d, f) = (config.vocab_size, config.d_model, config.d_ff);
    let mut out = vec![
        (INPUT_EMBEDDING.to_string(), vec![v, d]),
        (POSITIONAL_EMBEDDING.to_string(), vec![config.max_seq_len, d]),
    ];
    for l in 0..config.n_layers {
        let shapes = [
            vec![d],
            vec![d],
            vec![d, 3 * d],
            vec![3 * d],
            vec![d, d],
            vec![d],
            vec![d],
            vec![d],
            vec![d, f],
            vec![f],
            vec![f, d],
            vec![d],
        ];
        for (suffix, shape) in LAYER_TENSORS.iter().zip(shapes) {
            out.push((format!("layers.{l}.{suffix}"), shape));
        }
    }
    out.push(("final_ln.gain".to_string(), vec![d]));
    out.push(("final_ln.bias".to_string(), vec![d]));
    if !config.tie_embeddings {
        out.push((OUTPUT_EMBEDDING.to_string(), vec![d, v]));
    }
    out
}

/// Named tensor store for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor<T>>,
}

fn fill_init<T: Scalar>(tensor: &mut Tensor<T>, config: &ModelConfig, rng: &mut impl rand::Rng) {
    let name = tensor.name.as_str();
    if name.ends_with(".gain") {
        tensor.data.iter_mut().for_each(|x| *x = T::one());
        return;
    }
    if name.ends_with(".bias") {
        tensor.data.iter_mut().for_each(|x| *x = T::zero());
        return;
    }
    // residual projections are scaled down with depth
    let std = if name.ends_with("attn.out.weight") || name.ends_with("mlp.out.weight") {
        INIT_STD / (2.0 * config.n_layers as f64).sqrt()
    } else {
        INIT_STD
    };
    let normal = Normal::new(0.0, std).expect("positive std");
    for x in tensor.data.iter_mut() {
        *x = T::from_f64(normal.sample(rng));
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Deterministic initialization. Each tensor draws from its own stream,
    /// so re-initializing one tensor never disturbs the others.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let tensors = tensor_specs(&config)
            .into_iter()
            .map(|(name, shape)| {
                let mut t = Tensor::zeros(name, shape);
                let mut rng = sub_rng(seed, &t.name);
                fill_init(&mut t, &config, &mut rng);
                t
            })
            .collect();
        Ok(ModelParams { config, tensors })
    }

    /// Builds a store from explicit tensors, checking names and shapes.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let specs = tensor_specs(&config);
        if specs.len() != tensors.len() {
            return Err(Error::input(format!(
                "expected {} tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in specs.iter().zip(&tensors) {
            if &t.name != name || &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::input(format!(
                    "tensor '{}' {:?} does not match expected '{name}' {shape:?}",
                    t.name, t.shape
                )));
            }
        }
        Ok(ModelParams { config, tensors })
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|t| t.name.as_str())
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config,
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|&x| U::from_f64(x.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Replaces the embedding tensors with freshly initialized ones for a new
    /// vocabulary; every other tensor is kept as is.
    pub fn reinit_embeddings(&self, vocab_size: usize, seed: u64) -> Result<Self> {
        let config = self.config.with_vocab_size(vocab_size);
        let fresh = ModelParams::<T>::init(config, seed)?;
        let tensors = fresh
            .tensors
            .into_iter()
            .zip(&self.tensors)
            .map(|(new, old)| {
                if ParameterGroup::E.contains_name(&new.name, &config) {
                    new
                } else {
                    old.clone()
                }
            })
            .collect();
        Ok(ModelParams { config, tensors })
    }
}

/// Trainable subset during fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParameterGroup {
    /// Input, output and positional embeddings.
    E,
    /// E plus every layer-norm gain and bias.
    EL,
    /// EL plus every tensor of the last transformer layer.
    ELT,
    /// Everything.
    Full,
}

impl ParameterGroup {
    pub const FINETUNE_ORDER: [ParameterGroup; 3] = [ParameterGroup::E, ParameterGroup::EL, ParameterGroup::ELT];

    pub fn name(self) -> &'static str {
        match self {
            ParameterGroup::E => "E",
            ParameterGroup::EL => "EL",
            ParameterGroup::ELT => "ELT",
            ParameterGroup::Full => "Full",
        }
    }

    pub fn contains_name(self, name: &str, config: &ModelConfig) -> bool {
        let embedding = name == INPUT_EMBEDDING || name == OUTPUT_EMBEDDING || name == POSITIONAL_EMBEDDING;
        let layer_norm = name.starts_with("final_ln.") || name.contains(".ln1.") || name.contains(".ln2.");
        let last_layer = name.starts_with(&format!("layers.{}.", config.n_layers - 1));
        match self {
            ParameterGroup::E => embedding,
            ParameterGroup::EL => embedding || layer_norm,
            ParameterGroup::ELT => embedding || layer_norm || last_layer,
            ParameterGroup::Full => true,
        }
    }

    pub fn mask(self, config: &ModelConfig) -> ParameterMask {
        ParameterMask {
            trainable: tensor_specs(config)
                .iter()
                .map(|(n, _)| self.contains_name(n, config))
                .collect(),
        }
    }
}

impl std::fmt::Display for ParameterGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ParameterGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "E" => Ok(ParameterGroup::E),
            "EL" => Ok(ParameterGroup::EL),
            "ELT" => Ok(ParameterGroup::ELT),
            "FULL" => Ok(ParameterGroup::Full),
            _ => Err(Error::config(format!("unknown parameter group '{s}'"))),
        }
    }
}

/// Per-tensor trainable flags, aligned with [`ModelParams::tensors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterMask {
    pub trainable: Vec<bool>,
}

impl ParameterMask {
    pub fn none(config: &ModelConfig) -> Self {
        ParameterMask {
            trainable: vec![false; tensor_specs(config).len()],
        }
    }

    pub fn from_names<'a>(config: &ModelConfig, names: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let wanted: BTreeSet<&str> = names.into_iter().collect();
        let specs = tensor_specs(config);
        for w in &wanted {
            if !specs.iter().any(|(n, _)| n == w) {
                return Err(Error::config(format!("no tensor named '{w}'")));
            }
        }
        Ok(ParameterMask {
            trainable: specs.iter().map(|(n, _)| wanted.contains(n.as_str())).collect(),
        })
    }

    pub fn is_trainable(&self, index: usize) -> bool {
        self.trainable.get(index).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.trainable.iter().filter(|&&t| t).count()
    }

    pub fn is_subset_of(&self, other: &ParameterMask) -> bool {
        self.trainable.len() == other.trainable.len()
            && self.trainable.iter().zip(&other.trainable).all(|(&a, &b)| !a || b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_matches_counts() {
        let c = ModelConfig::desk(500, 64);
        let a = ModelParams::<f32>::init(c, 3).unwrap();
        let b = ModelParams::<f32>::init(c, 3).unwrap();
        let other = ModelParams::<f32>::init(c, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);
        assert_eq!(a.n_params(), c.param_count());
        assert_eq!(a.tensors.len(), 4 + 12 * 2 + 1);
        assert!(a.is_finite());
        assert_eq!(a.get("layers.1.ln2.gain").unwrap().data, vec![1.0; 64]);
        assert_eq!(a.layout().output_embedding(), a.index_of(OUTPUT_EMBEDDING));
        assert_eq!(a.layout().final_bias(), a.index_of("final_ln.bias").unwrap());
        assert_eq!(a.layout().layer(1, slot::FF_OUT_B), a.index_of("layers.1.mlp.out.bias").unwrap());
    }

    #[test]
    fn group_masks_nest() {
        let c = ModelConfig::desk(500, 64);
        let e = ParameterGroup::E.mask(&c);
        let el = ParameterGroup::EL.mask(&c);
        let elt = ParameterGroup::ELT.mask(&c);
        let full = ParameterGroup::Full.mask(&c);
        assert_eq!(e.count(), 3);
        assert_eq!(el.count(), 3 + 4 * 2 + 2);
        assert_eq!(elt.count(), el.count() + 8);
        assert!(e.is_subset_of(&el) && el.is_subset_of(&elt) && elt.is_subset_of(&full));
        assert!(!elt.is_subset_of(&el));
        let names = tensor_specs(&c);
        for (i, (n, _)) in names.iter().enumerate() {
            if n.starts_with("layers.0.attn") {
                assert!(!elt.is_trainable(i));
            }
            if n.starts_with("layers.1.") {
                assert!(elt.is_trainable(i));
            }
        }
    }

    #[test]
    fn reinit_keeps_body() {
        let c = ModelConfig::desk(500, 64);
        let p = ModelParams::<f32>::init(c, 1).unwrap();
        let q = p.reinit_embeddings(300, 2).unwrap();
        assert_eq!(q.config.vocab_size, 300);
        assert_eq!(q.get(INPUT_EMBEDDING).unwrap().shape, vec![300, 64]);
        assert_eq!(q.get(OUTPUT_EMBEDDING).unwrap().shape, vec![64, 300]);
        assert_ne!(q.get(POSITIONAL_EMBEDDING), p.get(POSITIONAL_EMBEDDING));
        for name in ["layers.0.attn.qkv.weight", "layers.1.mlp.out.weight", "final_ln.gain"] {
            assert_eq!(q.get(name), p.get(name));
        }
    }

    #[test]
    fn mask_from_names() {
        let c = ModelConfig::desk(10, 8);
        assert_eq!(ParameterMask::from_names(&c, []).unwrap().count(), 0);
        assert!(ParameterMask::from_names(&c, ["nope"]).is_err());
        let m = ParameterMask::from_names(&c, ["final_ln.gain"]).unwrap();
        assert_eq!(m.count(), 1);
    }
}
