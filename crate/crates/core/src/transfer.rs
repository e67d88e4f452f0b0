//! Transfer difficulty between languages, the symmetric dissimilarity and
//! antisymmetric relative complexity derived from it, and the full matrix
//! over language pairs and parameter groups.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, ParameterGroup};
use crate::trainer::{finetune_pipeline, pretrain, SequenceSet, StageConfig, StageResult, TrainConfig};

/// Absolute NLL difference below which two results count as close.
pub const CLOSE_THRESHOLD: f64 = 0.2;

/// Held-out NLL on `target` after transferring from `source` under `mode`.
/// `Full` cells are models trained from scratch on the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub src: String,
    pub dst: String,
    pub mode: ParameterGroup,
    pub nll: f64,
    pub seed: u64,
    /// Within the threshold of the target's scratch baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub close_to_scratch: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub a: String,
    pub b: String,
    pub mode: ParameterGroup,
    pub seed: u64,
    /// Mean of the two transfer directions.
    pub dissimilarity: f64,
    /// Positive when `a` is harder to reach from `b` than `b` from `a`.
    pub relative_complexity: f64,
}

/// `((f_ab + f_ba) / 2, (f_ba - f_ab) / 2)`.
pub fn dissimilarity_and_complexity(f_ab: f64, f_ba: f64) -> (f64, f64) {
    ((f_ab + f_ba) / 2.0, (f_ba - f_ab) / 2.0)
}

/// Summarizes the two directions of a pair. `ab` must go from `a` to `b` and
/// `ba` back, both under the same mode.
pub fn pair_summary(ab: &TransferCell, ba: &TransferCell) -> Result<PairSummary> {
    if ab.mode != ba.mode {
        return Err(Error::config(format!(
            "cannot compare transfer under {} with transfer under {}",
            ab.mode, ba.mode
        )));
    }
    if ab.src != ba.dst || ab.dst != ba.src {
        return Err(Error::config(format!(
            "cells {}->{} and {}->{} are not opposite directions",
            ab.src, ab.dst, ba.src, ba.dst
        )));
    }
    let (dissimilarity, relative_complexity) = dissimilarity_and_complexity(ab.nll, ba.nll);
    Ok(PairSummary {
        a: ab.src.clone(),
        b: ab.dst.clone(),
        mode: ab.mode,
        seed: ab.seed,
        dissimilarity,
        relative_complexity,
    })
}

/// How transfer and scratch baselines are trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSettings {
    pub stages: Vec<StageConfig>,
    /// Scratch training for `Full` cells; `seed` is overridden per run.
    pub scratch: TrainConfig,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub close_threshold: f64,
}

impl Default for TransferSettings {
    fn default() -> Self {
        TransferSettings {
            stages: StageConfig::default_stages(),
            scratch: TrainConfig::default(),
            holdout_fraction: 0.01,
            seed: 0,
            close_threshold: CLOSE_THRESHOLD,
        }
    }
}

impl TransferSettings {
    /// The stage list up to and including the first stage of `mode`.
    pub fn stages_through(&self, mode: ParameterGroup) -> Result<&[StageConfig]> {
        let end = self
            .stages
            .iter()
            .position(|s| s.mode == mode)
            .ok_or_else(|| Error::config(format!("no fine-tuning stage trains group {mode}")))?;
        Ok(&self.stages[..=end])
    }
}

/// Held-out NLL of a model trained from scratch on `target` with the
/// architecture of `template`.
pub fn scratch_nll(template: &ModelParams, target: &SequenceSet, settings: &TransferSettings) -> Result<f64> {
    let config = template.config.with_vocab_size(target.vocab_size);
    let mut params = ModelParams::init(config, settings.seed)?;
    let train = TrainConfig {
        seed: settings.seed,
        holdout_fraction: settings.holdout_fraction,
        ..settings.scratch.clone()
    };
    Ok(pretrain(&mut params, target, &train)?.final_eval_nll)
}

/// Transfer difficulty of `source` onto `target` under `mode`: the pipeline
/// runs up to the stage that trains `mode`. `Full` trains from scratch.
pub fn difficulty(
    source: &ModelParams,
    target: &SequenceSet,
    mode: ParameterGroup,
    settings: &TransferSettings,
) -> Result<f64> {
    if mode == ParameterGroup::Full {
        return scratch_nll(source, target, settings);
    }
    let stages = settings.stages_through(mode)?;
    let results = finetune_pipeline(source, target, stages, settings.holdout_fraction, settings.seed)?;
    Ok(results.last().expect("non-empty stage list").report.final_eval_nll)
}

/// A language taking part in a transfer matrix.
#[derive(Debug, Clone)]
pub struct LanguageEntry {
    pub name: String,
    pub corpus: SequenceSet,
    /// Pre-trained model; a missing one makes every cell from this language absent.
    pub checkpoint: Option<ModelParams>,
    /// Known scratch loss on this language; trained on demand when absent.
    pub scratch_nll: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub cells: Vec<TransferCell>,
    pub summaries: Vec<PairSummary>,
    /// Cells that could not be computed, with the reason.
    pub absent: Vec<String>,
}

impl TransferReport {
    pub fn cell(&self, src: &str, dst: &str, mode: ParameterGroup) -> Option<&TransferCell> {
        self.cells.iter().find(|c| c.src == src && c.dst == dst && c.mode == mode)
    }

    /// One row per ordered pair, one column per mode plus the scratch
    /// baseline. `*` marks results close to scratch.
    pub fn to_text_table(&self, modes: &[ParameterGroup]) -> String {
        let mut pairs: Vec<(&str, &str)> = Vec::new();
        for c in &self.cells {
            if c.mode != ParameterGroup::Full && !pairs.contains(&(c.src.as_str(), c.dst.as_str())) {
                pairs.push((&c.src, &c.dst));
            }
        }
        let mut out = String::new();
        let _ = write!(out, "{:<28}", "source -> target");
        for m in modes {
            let _ = write!(out, "{:>9}", m.name());
        }
        let _ = writeln!(out, "{:>9}", "scratch");
        for (s, d) in pairs {
            let _ = write!(out, "{:<28}", format!("{s} -> {d}"));
            for &m in modes {
                match self.cell(s, d, m) {
                    Some(c) => {
                        let mark = if c.close_to_scratch == Some(true) { "*" } else { " " };
                        let _ = write!(out, "{:>8.3}{mark}", c.nll);
                    }
                    None => {
                        let _ = write!(out, "{:>9}", "-");
                    }
                }
            }
            match self.cell(d, d, ParameterGroup::Full) {
                Some(c) => {
                    let _ = writeln!(out, "{:>9.3}", c.nll);
                }
                None => {
                    let _ = writeln!(out, "{:>9}", "-");
                }
            }
        }
        out
    }
}

/// Every ordered pair of distinct languages under every requested mode, plus
/// one scratch baseline per language. Failures are recorded as absent cells.
pub fn transfer_matrix(
    languages: &[LanguageEntry],
    modes: &[ParameterGroup],
    settings: &TransferSettings,
) -> Result<TransferReport> {
    let mut pairs = Vec::new();
    for (i, a) in languages.iter().enumerate() {
        for b in &languages[i + 1..] {
            pairs.push((a.name.clone(), b.name.clone()));
        }
    }
    transfer_pairs(languages, &pairs, modes, settings)
}

/// Like [`transfer_matrix`] but restricted to `pairs`, each run in both
/// directions. Scratch baselines cover the languages named in `pairs`.
pub fn transfer_pairs(
    languages: &[LanguageEntry],
    pairs: &[(String, String)],
    modes: &[ParameterGroup],
    settings: &TransferSettings,
) -> Result<TransferReport> {
    transfer_pairs_with(languages, pairs, modes, settings, |_, _, _| {})
}

/// [`transfer_pairs`] that hands every finished fine-tuning pipeline to
/// `observe(source, target, stages)`.
pub fn transfer_pairs_with(
    languages: &[LanguageEntry],
    pairs: &[(String, String)],
    modes: &[ParameterGroup],
    settings: &TransferSettings,
    mut observe: impl FnMut(&str, &str, &[StageResult]),
) -> Result<TransferReport> {
    if modes.is_empty() {
        return Err(Error::config("no transfer modes requested"));
    }
    let find = |name: &str| {
        languages
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| Error::config(format!("pair names unknown language {name:?}")))
    };
    let mut directions: Vec<(&LanguageEntry, &LanguageEntry)> = Vec::new();
    for (a, b) in pairs {
        if a == b {
            return Err(Error::config(format!("pair ({a}, {b}) repeats a language")));
        }
        let (a, b) = (find(a)?, find(b)?);
        directions.push((a, b));
        directions.push((b, a));
    }
    let involved: Vec<&LanguageEntry> = languages
        .iter()
        .filter(|l| directions.iter().any(|(a, _)| a.name == l.name))
        .collect();
    let finetune_modes: Vec<ParameterGroup> = modes.iter().copied().filter(|&m| m != ParameterGroup::Full).collect();
    let mut cells = Vec::new();
    let mut absent = Vec::new();

    let template = languages.iter().find_map(|l| l.checkpoint.as_ref());
    for lang in involved {
        if let Some(nll) = lang.scratch_nll {
            cells.push(TransferCell {
                src: lang.name.clone(),
                dst: lang.name.clone(),
                mode: ParameterGroup::Full,
                nll,
                seed: settings.seed,
                close_to_scratch: None,
            });
            continue;
        }
        let Some(template) = template else {
            absent.push(format!("{0} -> {0} Full: no checkpoint to copy the architecture from", lang.name));
            continue;
        };
        match scratch_nll(template, &lang.corpus, settings) {
            Ok(nll) => cells.push(TransferCell {
                src: lang.name.clone(),
                dst: lang.name.clone(),
                mode: ParameterGroup::Full,
                nll,
                seed: settings.seed,
                close_to_scratch: None,
            }),
            Err(e) => absent.push(format!("{0} -> {0} Full: {e}", lang.name)),
        }
    }

    let last_needed = finetune_modes
        .iter()
        .filter_map(|&m| settings.stages.iter().position(|s| s.mode == m))
        .max();
    for &(src, dst) in directions.iter().filter(|_| !finetune_modes.is_empty()) {
        let Some(ckpt) = &src.checkpoint else {
            absent.push(format!("{} -> {}: no checkpoint for {}", src.name, dst.name, src.name));
            continue;
        };
        let Some(last) = last_needed else {
            absent.push(format!("{} -> {}: no stage trains the requested modes", src.name, dst.name));
            continue;
        };
        let stages = &settings.stages[..=last];
        match finetune_pipeline(ckpt, &dst.corpus, stages, settings.holdout_fraction, settings.seed) {
            Ok(results) => {
                observe(&src.name, &dst.name, &results);
                for &m in &finetune_modes {
                    let Some(r) = results.iter().find(|r| r.stage.mode == m) else {
                        absent.push(format!("{} -> {} {m}: no stage trains this group", src.name, dst.name));
                        continue;
                    };
                    cells.push(TransferCell {
                        src: src.name.clone(),
                        dst: dst.name.clone(),
                        mode: m,
                        nll: r.report.final_eval_nll,
                        seed: settings.seed,
                        close_to_scratch: None,
                    });
                }
            }
            Err(e) => absent.push(format!("{} -> {}: {e}", src.name, dst.name)),
        }
    }

    let baselines: Vec<(String, f64)> = cells
        .iter()
        .filter(|c| c.mode == ParameterGroup::Full)
        .map(|c| (c.dst.clone(), c.nll))
        .collect();
    for c in cells.iter_mut().filter(|c| c.mode != ParameterGroup::Full) {
        c.close_to_scratch = baselines
            .iter()
            .find(|(d, _)| *d == c.dst)
            .map(|(_, b)| (c.nll - b).abs() <= settings.close_threshold);
    }

    let mut summaries = Vec::new();
    for (a, b) in directions.iter().step_by(2) {
        for &m in &finetune_modes {
            let ab = cells.iter().find(|c| c.src == a.name && c.dst == b.name && c.mode == m);
            let ba = cells.iter().find(|c| c.src == b.name && c.dst == a.name && c.mode == m);
            if let (Some(ab), Some(ba)) = (ab, ba) {
                summaries.push(pair_summary(ab, ba)?);
            }
        }
    }
    if !modes.contains(&ParameterGroup::Full) {
        cells.retain(|c| c.mode != ParameterGroup::Full);
    }
    Ok(TransferReport {
        cells,
        summaries,
        absent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langgen::{generate_corpus, LanguageSpec};
    use crate::model::ModelConfig;

    fn cell(src: &str, dst: &str, mode: ParameterGroup, nll: f64) -> TransferCell {
        TransferCell {
            src: src.into(),
            dst: dst.into(),
            mode,
            nll,
            seed: 0,
            close_to_scratch: None,
        }
    }

    #[test]
    fn worked_example() {
        let s = pair_summary(
            &cell("nested", "flat", ParameterGroup::E, 4.4),
            &cell("flat", "nested", ParameterGroup::E, 3.5),
        )
        .unwrap();
        assert!((s.dissimilarity - 3.95).abs() < 1e-12);
        assert!((s.relative_complexity + 0.45).abs() < 1e-12);
        let (_, c) = dissimilarity_and_complexity(2.4, 2.8);
        assert!((c - 0.2).abs() < 1e-12);
    }

    #[test]
    fn mismatched_modes_or_directions_are_rejected() {
        let ab = cell("a", "b", ParameterGroup::E, 1.0);
        assert!(matches!(
            pair_summary(&ab, &cell("b", "a", ParameterGroup::EL, 1.0)),
            Err(Error::Config(_))
        ));
        assert!(pair_summary(&ab, &cell("c", "a", ParameterGroup::E, 1.0)).is_err());
    }

    #[test]
    fn truncation_picks_the_prefix() {
        let s = TransferSettings::default();
        assert_eq!(s.stages_through(ParameterGroup::EL).unwrap().len(), 2);
        assert!(s.stages_through(ParameterGroup::Full).is_err());
    }

    #[test]
    fn small_matrix_has_every_cell() {
        let cfg = ModelConfig {
            n_layers: 1,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            vocab_size: 6,
            max_seq_len: 8,
            tie_embeddings: false,
        };
        let mk = |name: &str, spec: LanguageSpec, with_ckpt: bool| LanguageEntry {
            name: name.into(),
            corpus: SequenceSet::from(&generate_corpus(&spec, 40, 1).unwrap()),
            checkpoint: with_ckpt.then(|| ModelParams::init(cfg.with_vocab_size(spec.vocab_size()), 0).unwrap()),
            scratch_nll: None,
        };
        let langs = vec![
            mk("nested", LanguageSpec::nested().with_n_types(3).with_seq_len(8), true),
            mk("flat", LanguageSpec::flat().with_n_types(3).with_seq_len(8), true),
            mk("other", LanguageSpec::flat().with_n_types(4).with_seq_len(8), false),
        ];
        let settings = TransferSettings {
            stages: StageConfig::default_stages_with_steps(3),
            scratch: TrainConfig {
                max_steps: 3,
                patience: 0,
                ..TrainConfig::default()
            },
            holdout_fraction: 0.1,
            ..TransferSettings::default()
        };
        let modes = [ParameterGroup::E, ParameterGroup::EL, ParameterGroup::ELT, ParameterGroup::Full];
        let r = transfer_matrix(&langs, &modes, &settings).unwrap();
        // 4 ordered pairs with a checkpoint x 3 modes, 3 baselines
        assert_eq!(r.cells.len(), 4 * 3 + 3);
        assert_eq!(r.absent.len(), 2);
        assert_eq!(r.summaries.len(), 3);
        assert!(r.cells.iter().all(|c| c.nll > 0.0));
        let table = r.to_text_table(&modes[..3]);
        assert_eq!(table.lines().count(), 5);
    }
}
