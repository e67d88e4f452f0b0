use serde::{Deserialize, Serialize};

use super::{run_loop, window_width, Schedule, SequenceSet, TrainReport};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ParameterGroup};
use crate::rng::sub_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub mode: ParameterGroup,
    pub learning_rate: f64,
    pub steps: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Context window; `None` uses whole sequences.
    #[serde(default)]
    pub seq_len: Option<usize>,
}

fn default_batch_size() -> usize {
    8
}

impl StageConfig {
    pub fn new(mode: ParameterGroup, learning_rate: f64, steps: usize) -> Self {
        StageConfig {
            mode,
            learning_rate,
            steps,
            batch_size: default_batch_size(),
            seq_len: None,
        }
    }

    /// E at 1e-2, EL at 2e-2, ELT at 1e-3; 12500 steps of batch 8 each.
    pub fn default_stages() -> Vec<StageConfig> {
        vec![
            StageConfig::new(ParameterGroup::E, 1e-2, 12_500),
            StageConfig::new(ParameterGroup::EL, 2e-2, 12_500),
            StageConfig::new(ParameterGroup::ELT, 1e-3, 12_500),
        ]
    }

    /// The default stages with a different step count.
    pub fn default_stages_with_steps(steps: usize) -> Vec<StageConfig> {
        Self::default_stages()
            .into_iter()
            .map(|s| StageConfig { steps, ..s })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::config("stage steps and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("stage learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StageResult {
    pub stage: StageConfig,
    pub params: ModelParams,
    pub report: TrainReport,
}

/// Re-initializes the embeddings for the target vocabulary, then runs the
/// stages in order, each continuing from the previous one. Returns the
/// parameters and held-out loss after every stage.
pub fn finetune_pipeline(
    source: &ModelParams,
    target: &SequenceSet,
    stages: &[StageConfig],
    holdout_fraction: f64,
    seed: u64,
) -> Result<Vec<StageResult>> {
    if stages.is_empty() {
        return Err(Error::config("fine-tuning needs at least one stage"));
    }
    for s in stages {
        s.validate()?;
    }
    let (train, eval) = target.split_holdout(holdout_fraction)?;
    let mut params = source.reinit_embeddings(target.vocab_size, seed)?;
    let mut results = Vec::with_capacity(stages.len());
    for (i, stage) in stages.iter().enumerate() {
        let schedule = Schedule {
            learning_rate: stage.learning_rate,
            steps: stage.steps,
            batch_size: stage.batch_size,
            width: window_width(target, stage.seq_len, params.config.max_seq_len)?,
            eval_every: 0,
            patience: 0,
            min_improvement: 0.0,
            max_eval_sequences: usize::MAX,
        };
        let mask = stage.mode.mask(&params.config);
        let mut rng = sub_rng(seed, &format!("finetune/{i}/{}", stage.mode));
        let report = run_loop(&mut params, &train, &eval, &mask, &schedule, &mut rng)?;
        results.push(StageResult {
            stage: stage.clone(),
            params: params.clone(),
            report,
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langgen::{generate_corpus, LanguageSpec};
    use crate::model::ModelConfig;

    #[test]
    fn embedding_stage_freezes_everything_else() {
        let spec = LanguageSpec::flat().with_n_types(5).with_seq_len(10);
        let target = SequenceSet::from(&generate_corpus(&spec, 50, 2).unwrap());
        let cfg = ModelConfig {
            n_layers: 2,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            vocab_size: 6,
            max_seq_len: 10,
            tie_embeddings: false,
        };
        let source = ModelParams::init(cfg, 4).unwrap();
        let stages = vec![StageConfig::new(ParameterGroup::E, 1e-2, 20)];
        let out = finetune_pipeline(&source, &target, &stages, 0.1, 0).unwrap();
        let p = &out[0].params;
        assert_eq!(p.config.vocab_size, 10);
        for (a, b) in p.tensors.iter().zip(&source.tensors) {
            if !ParameterGroup::E.contains_name(&a.name, &p.config) {
                assert_eq!(a.data, b.data, "{}", a.name);
            }
        }
    }

    #[test]
    fn empty_stage_list_is_rejected() {
        let set = SequenceSet::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        let p = ModelParams::init(ModelConfig::desk(2, 2), 0).unwrap();
        assert!(matches!(finetune_pipeline(&p, &set, &[], 0.5, 0), Err(Error::Config(_))));
    }
}
