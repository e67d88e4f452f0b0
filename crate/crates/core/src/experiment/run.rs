use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::RngCore;
use serde::Serialize;

use super::{sha256_file, sha256_hex, ExperimentConfig, RunManifest, RunStatus, StepTiming, MANIFEST_FILE, TOOL_NAME, TOOL_VERSION};
use crate::cloze::{self, ClozeQuestion};
use crate::embedx::{self, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::langgen::{generate_corpus, Corpus};
use crate::model::{save_checkpoint, ModelParams};
use crate::probes::probe_suite;
use crate::rng::sub_rng;
use crate::textcorpus::{encode_corpus, extract_features, merge_features, template_english, FeatureTable, Vocab};
use crate::trainer::{finetune_pipeline, pretrain, SequenceSet, StageResult, TrainConfig, TrainReport};
use crate::transfer::{transfer_pairs_with, LanguageEntry, TransferSettings, CLOSE_THRESHOLD};

pub const CORPUS_DIR: &str = "corpora";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const ANALYSIS_DIR: &str = "analysis";
const PLOT_SIZE: (u32, u32) = (640, 420);

/// 64-bit seed of a named stream.
fn seed_for(seed: u64, stream: &str) -> u64 {
    sub_rng(seed, stream).next_u64()
}

struct Runner {
    dir: PathBuf,
    outputs: BTreeMap<String, String>,
    timings: Vec<StepTiming>,
    current: String,
}

impl Runner {
    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(p)
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(rel)?;
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn write_json(&mut self, rel: &str, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(self.dir.join(rel), e.to_string()))?;
        self.write(rel, text.as_bytes())
    }

    /// Records a file some library routine already wrote.
    fn record(&mut self, rel: &str) -> Result<()> {
        let hash = sha256_file(self.dir.join(rel))?;
        self.outputs.insert(rel.to_string(), hash);
        Ok(())
    }

    fn checkpoint(&mut self, rel: &str, params: &ModelParams, metadata: &[(&str, String)]) -> Result<()> {
        let meta = metadata
            .iter()
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.clone())))
            .collect();
        save_checkpoint(params, self.dir.join(rel), meta)?;
        self.record(&format!("{rel}/{}", crate::model::MANIFEST_FILE))?;
        self.record(&format!("{rel}/{}", crate::model::BLOB_FILE))
    }

    fn step<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.current = name.to_string();
        let start = Instant::now();
        let out = f(self)?;
        self.timings.push(StepTiming {
            step: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

/// Training report without its wall-clock time, so artifacts are reproducible.
fn stable(report: &TrainReport) -> TrainReport {
    TrainReport {
        wall_time_secs: 0.0,
        ..report.clone()
    }
}

struct English {
    name: String,
    vocab: Vocab,
    corpus: Corpus,
    features: FeatureTable,
}

struct Language {
    name: String,
    corpus: Corpus,
    params: Option<ModelParams>,
    final_nll: Option<f64>,
}

/// Runs the experiment into `run_dir` and finalizes it with a manifest. A run
/// directory that already holds a manifest is never reused. When a step
/// fails the manifest records the partial run and the error is returned.
pub fn run_experiment(config: &ExperimentConfig, run_dir: impl AsRef<Path>) -> Result<RunManifest> {
    config.validate()?;
    let dir = run_dir.as_ref().to_path_buf();
    if dir.join(MANIFEST_FILE).exists() {
        return Err(Error::config(format!("{} already holds a finalized run", dir.display())));
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let config_text = config.to_toml()?;
    let mut inputs = BTreeMap::new();
    for p in config.input_paths() {
        inputs.insert(p.display().to_string(), sha256_file(&p)?);
    }
    let mut runner = Runner {
        dir: dir.clone(),
        outputs: BTreeMap::new(),
        timings: Vec::new(),
        current: "config".into(),
    };
    let outcome = runner.write("config.toml", config_text.as_bytes()).and_then(|_| pipeline(&mut runner, config));
    let status = match &outcome {
        Ok(()) => RunStatus::Complete,
        Err(e) => RunStatus::Partial {
            failed_step: runner.current.clone(),
            error: e.to_string(),
        },
    };
    let manifest = RunManifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        config: config.clone(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        inputs,
        outputs: runner.outputs,
        timings: runner.timings,
        status,
    };
    manifest.write(&dir)?;
    outcome.map(|_| manifest)
}

fn pipeline(r: &mut Runner, config: &ExperimentConfig) -> Result<()> {
    let seed = config.seed;
    let mut languages = r.step("corpora", |r| {
        let mut out = Vec::new();
        for l in &config.languages {
            let corpus = generate_corpus(&l.spec(), l.n_sequences, seed_for(seed, &format!("corpus/{}", l.name)))?;
            r.write(&format!("{CORPUS_DIR}/{}.synl", l.name), &corpus.to_bytes())?;
            out.push(Language {
                name: l.name.clone(),
                corpus,
                params: None,
                final_nll: None,
            });
        }
        Ok(out)
    })?;

    let english = match &config.english {
        None => None,
        Some(e) => Some(r.step("english", |r| {
            let text = match &e.text {
                Some(p) => std::fs::read_to_string(p).map_err(|err| Error::io(p, err))?,
                None => template_english(e.template_sentences, seed_for(seed, "english")),
            };
            let vocab = Vocab::build(&text, e.max_vocab)?;
            let (corpus, stats) = encode_corpus(&text, &vocab, e.seq_len)?;
            let mut features = extract_features(&corpus, &vocab)?;
            r.write(&format!("{CORPUS_DIR}/{}.synl", e.name), &corpus.to_bytes())?;
            r.write(&format!("{}/vocab.txt", e.name), vocab.to_text().as_bytes())?;
            r.write_json(&format!("{}/encode_stats.json", e.name), &stats)?;
            if let Some(tags) = &e.tags {
                let lines = std::fs::read_to_string(tags).map_err(|err| Error::io(tags, err))?;
                let merged = merge_features(&features, &lines, e.min_tag_occurrences)?;
                r.write_json(
                    &format!("{}/tag_merge.json", e.name),
                    &serde_json::json!({"kept": merged.kept, "dropped": merged.dropped, "warnings": merged.warnings}),
                )?;
                features = merged.table;
            }
            r.write_json(&format!("{}/features.json", e.name), &features)?;
            Ok(English {
                name: e.name.clone(),
                vocab,
                corpus: corpus.clone(),
                features,
            })
        })?),
    };
    if let Some(e) = &english {
        languages.push(Language {
            name: e.name.clone(),
            corpus: e.corpus.clone(),
            params: None,
            final_nll: None,
        });
    }

    r.step("pretrain", |r| {
        for lang in &mut languages {
            let model = config.model_config(lang.corpus.vocab_size())?;
            let mut params = ModelParams::init(model, seed_for(seed, &format!("init/{}", lang.name)))?;
            let train = TrainConfig {
                seed: seed_for(seed, &format!("pretrain/{}", lang.name)),
                ..config.pretrain.clone()
            };
            let report = pretrain(&mut params, &SequenceSet::from(&lang.corpus), &train)?;
            r.write_json(&format!("train/{}.json", lang.name), &stable(&report))?;
            r.checkpoint(
                &format!("{CHECKPOINT_DIR}/{}/pretrained", lang.name),
                &params,
                &[("language", lang.name.clone()), ("stage", "pretrained".into())],
            )?;
            lang.final_nll = Some(report.final_eval_nll);
            lang.params = Some(params);
        }
        Ok(())
    })?;

    let stage_seed = seed_for(seed, "finetune");
    let english_name = english.as_ref().map(|e| e.name.clone());
    let wanted = |src: &str, dst: &str| {
        config.analysis.enabled && Some(dst) == english_name.as_deref() && config.analysis.sources.iter().any(|s| s == src)
    };
    let mut finetuned: BTreeMap<String, Vec<StageResult>> = BTreeMap::new();

    if config.transfer.enabled {
        r.step("transfer", |r| {
            let entries: Vec<LanguageEntry> = languages
                .iter()
                .map(|l| LanguageEntry {
                    name: l.name.clone(),
                    corpus: SequenceSet::from(&l.corpus),
                    checkpoint: l.params.clone(),
                    scratch_nll: l.final_nll,
                })
                .collect();
            let settings = TransferSettings {
                stages: config.stages.clone(),
                scratch: config.pretrain.clone(),
                holdout_fraction: config.transfer.holdout_fraction,
                seed: stage_seed,
                close_threshold: CLOSE_THRESHOLD,
            };
            let report = transfer_pairs_with(&entries, &config.transfer_pairs(), &config.transfer.modes, &settings, |src, dst, results| {
                if wanted(src, dst) {
                    finetuned.insert(src.to_string(), results.to_vec());
                }
            })?;
            r.write_json("transfer.json", &report)?;
            r.write("transfer.txt", report.to_text_table(&config.transfer.modes).as_bytes())?;
            Ok(())
        })?;
    }

    let Some(english) = english.filter(|_| config.analysis.enabled) else {
        return Ok(());
    };
    let english_lang = languages.iter().find(|l| l.name == english.name).expect("english was added");
    r.step("finetune", |r| {
        let target = SequenceSet::from(&english.corpus);
        for src in &config.analysis.sources {
            if !finetuned.contains_key(src) {
                let lang = languages.iter().find(|l| &l.name == src).expect("validated source");
                let params = lang.params.as_ref().expect("pre-trained");
                let results = finetune_pipeline(params, &target, &config.stages, config.transfer.holdout_fraction, stage_seed)?;
                finetuned.insert(src.clone(), results);
            }
            for res in &finetuned[src] {
                r.checkpoint(
                    &format!("{CHECKPOINT_DIR}/{src}_to_{}/{}", english.name, res.stage.mode),
                    &res.params,
                    &[
                        ("language", english.name.clone()),
                        ("source", src.clone()),
                        ("stage", res.stage.mode.to_string()),
                    ],
                )?;
            }
        }
        Ok(())
    })?;

    let mut models: Vec<(String, ModelParams)> = Vec::new();
    for src in &config.analysis.sources {
        for res in &finetuned[src] {
            models.push((format!("{src}_{}", res.stage.mode), res.params.clone()));
        }
    }
    models.push(("scratch".into(), english_lang.params.clone().expect("pre-trained")));

    r.step("analysis", |r| analyse(r, config, &english, &models))
}

fn analyse(r: &mut Runner, config: &ExperimentConfig, english: &English, models: &[(String, ModelParams)]) -> Result<()> {
    let a = &config.analysis;
    let questions: Vec<ClozeQuestion> = match &a.cloze_questions {
        Some(p) => cloze::load_questions(p)?,
        None => cloze::parse_questions(cloze::SAMPLE_QUESTIONS)?,
    };
    let mut matrices = Vec::new();
    let mut cloze_reports = Vec::new();
    let mut probe_reports = Vec::new();
    for (name, params) in models {
        let full = EmbeddingMatrix::from_params(params, a.embeddings)?;
        let regular = full.select_rows(|i| !Vocab::is_special(i as u16))?;
        let spectrum = embedx::spectrum(&regular, a.embeddings);
        r.write(&format!("{ANALYSIS_DIR}/spectrum/{name}.csv"), spectrum.to_csv().as_bytes())?;
        let ks: Vec<usize> = a.k_values.iter().copied().filter(|&k| k >= 1 && k <= regular.rows).collect();
        let curve = embedx::cluster_curve(&regular, &ks, config.seed)?;
        r.write(&format!("{ANALYSIS_DIR}/clusters/{name}.csv"), curve.to_csv().as_bytes())?;

        let probes = probe_suite(&full, &english.features, &a.probes)?;
        r.write(&format!("{ANALYSIS_DIR}/probes/{name}.csv"), probes.to_csv().as_bytes())?;

        let report = cloze::evaluate(params, &english.vocab, &questions, a.cloze_mode)?;
        r.write_json(&format!("{ANALYSIS_DIR}/cloze/{name}.json"), &report)?;
        r.write(&format!("{ANALYSIS_DIR}/cloze/{name}.csv"), report.to_csv().as_bytes())?;

        matrices.push((name.clone(), regular));
        cloze_reports.push((name.clone(), report));
        probe_reports.push((name.clone(), probes));
    }

    let spectra = embedx::compare_spectra(&matrices)?;
    r.write(&format!("{ANALYSIS_DIR}/spectra.csv"), spectra.to_csv().as_bytes())?;
    let ks: Vec<usize> = a.k_values.clone();
    let min_rows = matrices.iter().map(|(_, m)| m.rows).min().unwrap_or(0);
    let ks: Vec<usize> = ks.into_iter().filter(|&k| k >= 1 && k <= min_rows).collect();
    let clusters = embedx::compare_clusters(&matrices, &ks, config.seed)?;
    r.write(&format!("{ANALYSIS_DIR}/clusters.csv"), clusters.to_csv().as_bytes())?;
    for (file, cmp) in [("spectra.png", &spectra), ("clusters.png", &clusters)] {
        let img = embedx::render_line_plot(&cmp.series, PLOT_SIZE.0, PLOT_SIZE.1)?;
        let path = r.path(&format!("{ANALYSIS_DIR}/{file}"))?;
        embedx::save_png(&img, &path)?;
        r.record(&format!("{ANALYSIS_DIR}/{file}"))?;
    }

    let mut table = String::from("subtask");
    for (name, _) in &cloze_reports {
        let _ = write!(table, ",{name}");
    }
    table.push('\n');
    let subtasks: Vec<String> = cloze_reports[0].1.subtasks.iter().map(|s| s.subtask.clone()).collect();
    for s in subtasks.iter().map(String::as_str).chain(["average"]) {
        table.push_str(s);
        for (_, rep) in &cloze_reports {
            let v = if s == "average" {
                Some(rep.average)
            } else {
                rep.subtasks.iter().find(|m| m.subtask == s).map(|m| m.mean)
            };
            match v {
                Some(v) => {
                    let _ = write!(table, ",{v:.4}");
                }
                None => table.push(','),
            }
        }
        table.push('\n');
    }
    r.write(&format!("{ANALYSIS_DIR}/cloze_table.csv"), table.as_bytes())?;

    let mut table = String::from("feature,metric");
    for (name, _) in &probe_reports {
        let _ = write!(table, ",{name}");
    }
    table.push('\n');
    for res in &probe_reports[0].1.results {
        let _ = write!(table, "{},{}", res.feature, res.metric.name());
        for (_, rep) in &probe_reports {
            match rep.results.iter().find(|x| x.feature == res.feature) {
                Some(x) => {
                    let _ = write!(table, ",{:.4}", x.value);
                }
                None => table.push(','),
            }
        }
        table.push('\n');
    }
    table.push_str("average,mean");
    for (_, rep) in &probe_reports {
        match rep.average {
            Some(v) => {
                let _ = write!(table, ",{v:.4}");
            }
            None => table.push(','),
        }
    }
    table.push('\n');
    r.write(&format!("{ANALYSIS_DIR}/probe_table.csv"), table.as_bytes())
}
