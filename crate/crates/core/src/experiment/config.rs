use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cloze::ScoringMode;
use crate::embedx::EmbeddingSource;
use crate::error::{Error, Result};
use crate::langgen::{LanguageKind, LanguageSpec};
use crate::model::{ModelConfig, ParameterGroup};
use crate::probes::ProbeConfig;
use crate::textcorpus::DEFAULT_MIN_OCCURRENCES;
use crate::trainer::{StageConfig, TrainConfig};

fn default_n_types() -> u32 {
    crate::langgen::LanguageSpec::nested().n_types
}

fn default_seq_len() -> usize {
    crate::langgen::LanguageSpec::nested().seq_len
}

fn default_p_open() -> f64 {
    crate::langgen::LanguageSpec::nested().p_open
}

fn default_true() -> bool {
    true
}

/// One synthetic language of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageConfig {
    pub name: String,
    pub kind: LanguageKind,
    pub n_sequences: usize,
    #[serde(default = "default_n_types")]
    pub n_types: u32,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    #[serde(default = "default_p_open")]
    pub p_open: f64,
}

impl LanguageConfig {
    pub fn spec(&self) -> LanguageSpec {
        LanguageSpec {
            n_types: self.n_types,
            seq_len: self.seq_len,
            p_open: self.p_open,
            ..LanguageSpec::new(self.kind)
        }
    }
}

/// The natural-language target. Without `text` a template corpus of
/// `template_sentences` sentences is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnglishConfig {
    #[serde(default = "EnglishConfig::default_name")]
    pub name: String,
    #[serde(default)]
    pub text: Option<PathBuf>,
    #[serde(default)]
    pub template_sentences: usize,
    pub max_vocab: usize,
    pub seq_len: usize,
    /// Optional `token<TAB>tag` lines merged into the probe features.
    #[serde(default)]
    pub tags: Option<PathBuf>,
    #[serde(default = "EnglishConfig::default_min_tag_occurrences")]
    pub min_tag_occurrences: usize,
}

impl EnglishConfig {
    fn default_name() -> String {
        "english".into()
    }

    fn default_min_tag_occurrences() -> usize {
        DEFAULT_MIN_OCCURRENCES
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferPlan {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// Unordered pairs, each run in both directions. Empty means every pair.
    #[serde(default)]
    pub pairs: Vec<[String; 2]>,
    /// `Full` reports the held-out loss of the language's own pre-trained model.
    pub modes: Vec<ParameterGroup>,
    #[serde(default = "TransferPlan::default_holdout")]
    pub holdout_fraction: f64,
}

impl TransferPlan {
    fn default_holdout() -> f64 {
        0.01
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// Synthetic languages whose English fine-tunes are analysed.
    pub sources: Vec<String>,
    pub k_values: Vec<usize>,
    #[serde(default)]
    pub embeddings: EmbeddingSource,
    #[serde(default)]
    pub probes: ProbeConfig,
    /// Question file; the bundled sample when absent.
    #[serde(default)]
    pub cloze_questions: Option<PathBuf>,
    #[serde(default)]
    pub cloze_mode: ScoringMode,
}

/// Everything one run needs. Every random stream derives from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Model preset: `desk`, `approx_8m` or `approx_33m`.
    pub model: String,
    pub languages: Vec<LanguageConfig>,
    #[serde(default)]
    pub english: Option<EnglishConfig>,
    pub pretrain: TrainConfig,
    pub stages: Vec<StageConfig>,
    pub transfer: TransferPlan,
    pub analysis: AnalysisConfig,
}

const TABLE_PAIRS: [(&str, &str); 5] = [
    ("nested", "flat"),
    ("flat", "flat_shuffle"),
    ("flat_shuffle", "english"),
    ("nested", "english"),
    ("flat", "english"),
];

fn synthetic(n_sequences: usize, seq_len: usize) -> Vec<LanguageConfig> {
    [LanguageKind::Nested, LanguageKind::Flat, LanguageKind::FlatShuffle]
        .into_iter()
        .map(|kind| LanguageConfig {
            name: kind.name().to_string(),
            kind,
            n_sequences,
            n_types: default_n_types(),
            seq_len,
            p_open: default_p_open(),
        })
        .collect()
}

fn table_pairs() -> Vec<[String; 2]> {
    TABLE_PAIRS.iter().map(|(a, b)| [a.to_string(), b.to_string()]).collect()
}

impl ExperimentConfig {
    pub const RECIPES: [&'static str; 2] = ["desk", "full-scale"];

    /// Built-in configurations. `desk` runs the five language pairs at
    /// laptop scale in minutes; `full-scale` uses full-size settings.
    pub fn recipe(name: &str, seed: u64) -> Result<Self> {
        let modes = vec![ParameterGroup::E, ParameterGroup::EL, ParameterGroup::ELT, ParameterGroup::Full];
        let analysis = AnalysisConfig {
            enabled: true,
            sources: vec!["nested".into(), "flat".into(), "flat_shuffle".into()],
            k_values: vec![1, 2, 4, 8, 16, 32, 64, 128],
            embeddings: EmbeddingSource::Input,
            probes: ProbeConfig { seed, ..ProbeConfig::default() },
            cloze_questions: None,
            cloze_mode: ScoringMode::FullSentence,
        };
        match name {
            "desk" => {
                let pretrain = TrainConfig {
                    max_steps: 1500,
                    eval_every: 250,
                    patience: 0,
                    seed,
                    ..TrainConfig::default()
                };
                Ok(ExperimentConfig {
                    name: name.into(),
                    seed,
                    model: "desk".into(),
                    languages: synthetic(4000, 64),
                    english: Some(EnglishConfig {
                        name: "english".into(),
                        text: None,
                        template_sentences: 40_000,
                        max_vocab: 500,
                        seq_len: 64,
                        tags: None,
                        min_tag_occurrences: DEFAULT_MIN_OCCURRENCES,
                    }),
                    stages: StageConfig::default_stages_with_steps(400),
                    transfer: TransferPlan {
                        enabled: true,
                        pairs: table_pairs(),
                        modes,
                        holdout_fraction: 0.01,
                    },
                    pretrain,
                    analysis,
                })
            }
            "full-scale" => {
                let pretrain = TrainConfig { seed, ..TrainConfig::default() };
                let stages = StageConfig::default_stages();
                Ok(ExperimentConfig {
                    name: name.into(),
                    seed,
                    model: "approx_8m".into(),
                    languages: synthetic(100_000, 512),
                    english: Some(EnglishConfig {
                        name: "english".into(),
                        text: None,
                        template_sentences: 2_000_000,
                        max_vocab: 500,
                        seq_len: 128,
                        tags: None,
                        min_tag_occurrences: DEFAULT_MIN_OCCURRENCES,
                    }),
                    stages,
                    transfer: TransferPlan {
                        enabled: true,
                        pairs: table_pairs(),
                        modes,
                        holdout_fraction: 0.01,
                    },
                    pretrain,
                    analysis: AnalysisConfig {
                        k_values: vec![1, 2, 4, 8, 16, 32, 64, 128, 256],
                        ..analysis
                    },
                })
            }
            other => Err(Error::config(format!(
                "unknown recipe {other:?}; expected one of {:?}",
                Self::RECIPES
            ))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("bad experiment config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(format!("config does not serialize: {e}")))
    }

    /// Reads a TOML config; relative paths inside are resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut().filter(|p| p.is_relative()) {
                *inner = base.join(&*inner);
            }
        };
        if let Some(e) = config.english.as_mut() {
            resolve(&mut e.text);
            resolve(&mut e.tags);
        }
        resolve(&mut config.analysis.cloze_questions);
        Ok(config)
    }

    pub fn english_name(&self) -> Option<&str> {
        self.english.as_ref().map(|e| e.name.as_str())
    }

    /// Names of every language, synthetic first.
    pub fn language_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.languages.iter().map(|l| l.name.as_str()).collect();
        names.extend(self.english_name());
        names
    }

    /// Unordered pairs to run; every pair when none are listed.
    pub fn transfer_pairs(&self) -> Vec<(String, String)> {
        if !self.transfer.pairs.is_empty() {
            return self.transfer.pairs.iter().map(|[a, b]| (a.clone(), b.clone())).collect();
        }
        let names = self.language_names();
        let mut out = Vec::new();
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                out.push((a.to_string(), b.to_string()));
            }
        }
        out
    }

    /// Longest sequence any model of the run sees.
    pub fn max_seq_len(&self) -> usize {
        self.languages
            .iter()
            .map(|l| l.seq_len)
            .chain(self.english.as_ref().map(|e| e.seq_len))
            .max()
            .unwrap_or(1)
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        ModelConfig::preset(&self.model, vocab_size, self.max_seq_len())
    }

    /// Files the run reads besides the config itself.
    pub fn input_paths(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        if let Some(e) = &self.english {
            out.extend(e.text.clone());
            out.extend(e.tags.clone());
        }
        out.extend(self.analysis.cloze_questions.clone());
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::config("experiment name is empty"));
        }
        let names = self.language_names();
        if names.is_empty() {
            return Err(Error::config("no languages configured"));
        }
        let unique: BTreeSet<&str> = names.iter().copied().collect();
        if unique.len() != names.len() {
            return Err(Error::config("language names must be unique"));
        }
        for l in &self.languages {
            if !l.kind.is_synthetic() {
                return Err(Error::config(format!("language {} must be synthetic", l.name)));
            }
            if l.n_sequences < 2 {
                return Err(Error::config(format!("language {} needs at least 2 sequences", l.name)));
            }
            l.spec().validate()?;
        }
        if let Some(e) = &self.english {
            if e.text.is_none() && e.template_sentences == 0 {
                return Err(Error::config("english needs a text file or template_sentences > 0"));
            }
            if e.seq_len < 2 {
                return Err(Error::config("english seq_len must be at least 2"));
            }
        }
        self.model_config(2)?.validate()?;
        if self.stages.is_empty() {
            return Err(Error::config("at least one fine-tuning stage is required"));
        }
        for s in &self.stages {
            s.validate()?;
        }
        if self.transfer.enabled {
            if self.transfer.modes.is_empty() {
                return Err(Error::config("transfer needs at least one mode"));
            }
            for m in self.transfer.modes.iter().filter(|&&m| m != ParameterGroup::Full) {
                if !self.stages.iter().any(|s| s.mode == *m) {
                    return Err(Error::config(format!("no stage trains transfer mode {m}")));
                }
            }
            for [a, b] in &self.transfer.pairs {
                for n in [a, b] {
                    if !unique.contains(n.as_str()) {
                        return Err(Error::config(format!("transfer pair names unknown language {n:?}")));
                    }
                }
                if a == b {
                    return Err(Error::config(format!("transfer pair ({a}, {b}) repeats a language")));
                }
            }
        }
        if self.analysis.enabled {
            if self.english.is_none() {
                return Err(Error::config("analysis needs an english corpus"));
            }
            for s in &self.analysis.sources {
                if !self.languages.iter().any(|l| &l.name == s) {
                    return Err(Error::config(format!("analysis source {s:?} is not a synthetic language")));
                }
            }
        }
        for p in self.input_paths() {
            if !p.is_file() {
                return Err(Error::config(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_recipe_lists_five_pairs() {
        let c = ExperimentConfig::recipe("full-scale", 0).unwrap();
        let pairs = c.transfer_pairs();
        assert_eq!(pairs.len(), 5);
        assert!(pairs.contains(&("nested".to_string(), "flat".to_string())));
        assert_eq!(c.languages[0].seq_len, 512);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::recipe("desk", 3).unwrap();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
        assert!(ExperimentConfig::from_toml(&text.replace("seed = 3\n", "")).is_err());
        assert!(ExperimentConfig::recipe("nope", 0).is_err());
    }

    #[test]
    fn validation_catches_bad_references() {
        let mut c = ExperimentConfig::recipe("desk", 0).unwrap();
        c.transfer.pairs.push(["nested".into(), "klingon".into()]);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::recipe("desk", 0).unwrap();
        c.analysis.cloze_questions = Some("/does/not/exist.jsonl".into());
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::recipe("desk", 0).unwrap();
        c.transfer.pairs.clear();
        assert_eq!(c.transfer_pairs().len(), 6);
    }
}
