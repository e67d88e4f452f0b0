use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use langtransfer::cloze::{self, ScoringMode};
use langtransfer::embedx::{self, EmbeddingMatrix, EmbeddingSource};
use langtransfer::experiment::{self, ExperimentConfig};
use langtransfer::langgen::{self, LanguageKind, LanguageSpec};
use langtransfer::model::{load_checkpoint, save_checkpoint, ModelConfig, ModelParams, ParameterGroup};
use langtransfer::probes::{probe_suite, ProbeConfig};
use langtransfer::textcorpus::{self, FeatureTable, Vocab};
use langtransfer::trainer::{self, SequenceSet, StageConfig, TrainConfig};
use langtransfer::transfer::{self, LanguageEntry, TransferSettings};
use langtransfer::{Error, Result};

#[derive(Parser)]
#[command(name = "langtransfer", version, about = "Synthetic-language pre-training and transfer experiments")]
struct Cli {
    /// Seed for every random stream of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML file with settings for the command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bracket corpus.
    Langgen(LanggenArgs),
    /// Tokenize English text into a corpus, vocabulary and feature table.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
    /// Pre-train a model, or fine-tune one with `--from`.
    Train(TrainArgs),
    /// Transfer matrix between languages.
    Transfer(TransferArgs),
    /// Singular spectra and cluster curves of embeddings.
    Embedx(EmbedxArgs),
    /// Linear probes from embeddings to token features.
    Probes(ProbesArgs),
    /// Cloze benchmark.
    Cloze {
        #[command(subcommand)]
        command: ClozeCommand,
    },
    /// Run a whole experiment from a config or a built-in recipe.
    Run(RunArgs),
    /// Summarize a run directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct LanggenArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: LanguageKind,
    #[arg(long, default_value_t = 1000)]
    n_sequences: usize,
    #[arg(long, default_value_t = langgen::LanguageSpec::nested().seq_len)]
    seq_len: usize,
    #[arg(long, default_value_t = langgen::LanguageSpec::nested().n_types)]
    n_types: u32,
    #[arg(long, default_value_t = langgen::LanguageSpec::nested().p_open)]
    p_open: f64,
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Build a vocabulary file from text.
    BuildVocab {
        #[command(flatten)]
        source: TextSource,
        #[arg(long, default_value_t = textcorpus::DEFAULT_MAX_VOCAB)]
        max_vocab: usize,
    },
    /// Encode text with an existing vocabulary.
    Encode {
        #[command(flatten)]
        source: TextSource,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = textcorpus::DEFAULT_SEQ_LEN)]
        seq_len: usize,
    },
    /// Per-token feature table of an encoded corpus.
    Features {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[command(flatten)]
        tags: TagArgs,
    },
    /// Vocabulary, encoded corpus and feature table in one directory.
    Prepare {
        #[command(flatten)]
        source: TextSource,
        #[arg(long, default_value_t = textcorpus::DEFAULT_MAX_VOCAB)]
        max_vocab: usize,
        #[arg(long, default_value_t = textcorpus::DEFAULT_SEQ_LEN)]
        seq_len: usize,
        #[command(flatten)]
        tags: TagArgs,
    },
}

#[derive(Args)]
struct TextSource {
    /// Plain-text input; omit to generate template English.
    #[arg(long)]
    text: Option<PathBuf>,
    /// Sentences of template English when no text is given.
    #[arg(long, default_value_t = 20_000)]
    template_sentences: usize,
}

#[derive(Args)]
struct TagArgs {
    /// `token<TAB>feature<TAB>{0|1}` lines to merge into the features.
    #[arg(long)]
    tags: Option<PathBuf>,
    #[arg(long, default_value_t = textcorpus::DEFAULT_MIN_OCCURRENCES)]
    min_occurrences: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Fine-tune this checkpoint instead of training from scratch.
    #[arg(long)]
    from: Option<PathBuf>,
    /// Model preset for training from scratch.
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Fine-tuning groups in order.
    #[arg(long, value_delimiter = ',', default_value = "E,EL,ELT")]
    modes: Vec<ParameterGroup>,
}

#[derive(Args)]
struct TransferArgs {
    /// `name=corpus.synl`, once per language.
    #[arg(long = "corpus", required = true)]
    corpora: Vec<String>,
    /// `name=checkpoint_dir` for every language used as a source.
    #[arg(long = "ckpt")]
    checkpoints: Vec<String>,
    /// `a:b`, run in both directions; every pair when omitted.
    #[arg(long = "pair")]
    pairs: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "E,EL,ELT,Full")]
    modes: Vec<ParameterGroup>,
    /// Steps per fine-tuning stage.
    #[arg(long)]
    stage_steps: Option<usize>,
    /// Maximum steps of each scratch baseline.
    #[arg(long)]
    scratch_steps: Option<usize>,
}

#[derive(Args)]
struct EmbedxArgs {
    /// `name=checkpoint_dir` or a bare directory.
    #[arg(long = "ckpt", required = true)]
    checkpoints: Vec<String>,
    #[arg(long, default_value = "input")]
    source: EmbeddingSource,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128")]
    k: Vec<usize>,
    /// Leave out the reserved rows of a text vocabulary.
    #[arg(long)]
    drop_special: bool,
}

#[derive(Args)]
struct ProbesArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "input")]
    source: EmbeddingSource,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
}

#[derive(Subcommand)]
enum ClozeCommand {
    /// Score a checkpoint on cloze questions.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// JSON-lines questions; the bundled sample when omitted.
        #[arg(long)]
        questions: Option<PathBuf>,
        #[arg(long, default_value = "full")]
        mode: ScoringMode,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Built-in recipe when no config is given.
    #[arg(long)]
    recipe: Option<String>,
    /// Re-run the configuration recorded in this run directory.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    run_dir: PathBuf,
}

/// Fine-tuning settings read from `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FinetuneFile {
    stages: Vec<StageConfig>,
    #[serde(default = "default_holdout")]
    holdout_fraction: f64,
}

fn default_holdout() -> f64 {
    0.01
}

fn parse_kind(s: &str) -> std::result::Result<LanguageKind, String> {
    match s {
        "nested" => Ok(LanguageKind::Nested),
        "flat" => Ok(LanguageKind::Flat),
        "flat_shuffle" => Ok(LanguageKind::FlatShuffle),
        _ => Err(format!("unknown language {s:?}; expected nested, flat or flat_shuffle")),
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    write_text(path, &text)
}

fn require_out(out: &Option<PathBuf>) -> Result<&Path> {
    out.as_deref().ok_or_else(|| Error::config("--out is required"))
}

/// `name=path`, or a bare path named after its last component.
fn named_path(s: &str) -> (String, PathBuf) {
    match s.split_once('=') {
        Some((name, path)) => (name.to_string(), PathBuf::from(path)),
        None => {
            let p = PathBuf::from(s);
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| s.to_string());
            (name, p)
        }
    }
}

fn metadata(pairs: &[(&str, String)]) -> serde_json::Map<String, serde_json::Value> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.clone())))
        .collect()
}

fn langgen_cmd(cli: &Cli, a: &LanggenArgs) -> Result<()> {
    let spec = LanguageSpec {
        n_types: a.n_types,
        seq_len: a.seq_len,
        p_open: a.p_open,
        ..LanguageSpec::new(a.kind)
    };
    let corpus = langgen::generate_corpus(&spec, a.n_sequences, cli.seed.unwrap_or(0))?;
    let invalid = corpus
        .sequences()
        .filter(|s| !langgen::validate(&spec, s).is_valid(spec.kind))
        .count();
    if invalid > 0 {
        return Err(Error::Numerical(format!("{invalid} generated sequences failed validation")));
    }
    let out = require_out(&cli.out)?;
    corpus.write(out)?;
    println!(
        "{}: {} sequences of {} tokens, vocabulary {} -> {}",
        spec.kind.name(),
        corpus.n_sequences(),
        corpus.seq_len(),
        corpus.vocab_size(),
        out.display()
    );
    Ok(())
}

fn read_text(cli: &Cli, source: &TextSource) -> Result<String> {
    match &source.text {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e)),
        None => Ok(textcorpus::template_english(source.template_sentences, cli.seed.unwrap_or(0))),
    }
}

fn features_with_tags(corpus: &langgen::Corpus, vocab: &Vocab, tags: &TagArgs) -> Result<FeatureTable> {
    let features = textcorpus::extract_features(corpus, vocab)?;
    let Some(path) = &tags.tags else {
        return Ok(features);
    };
    let lines = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let merged = textcorpus::merge_features(&features, &lines, tags.min_occurrences)?;
    for w in &merged.warnings {
        eprintln!("warning: {w}");
    }
    for (tag, n) in &merged.dropped {
        eprintln!("dropped feature {tag}: {n} vocabulary entries");
    }
    Ok(merged.table)
}

fn print_encode_stats(stats: &textcorpus::EncodeStats, vocab: &Vocab) {
    println!(
        "{} tokens, {} sequences, vocabulary {}, unknown rate {:.4}",
        stats.n_tokens,
        stats.n_sequences,
        vocab.len(),
        stats.unknown_rate()
    );
}

fn corpus_cmd(cli: &Cli, command: &CorpusCommand) -> Result<()> {
    let out = require_out(&cli.out)?;
    match command {
        CorpusCommand::BuildVocab { source, max_vocab } => {
            let vocab = Vocab::build(&read_text(cli, source)?, *max_vocab)?;
            vocab.write(out)?;
            println!("vocabulary of {} tokens -> {}", vocab.len(), out.display());
        }
        CorpusCommand::Encode { source, vocab, seq_len } => {
            let vocab = Vocab::read(vocab)?;
            let (corpus, stats) = textcorpus::encode_corpus(&read_text(cli, source)?, &vocab, *seq_len)?;
            corpus.write(out)?;
            print_encode_stats(&stats, &vocab);
        }
        CorpusCommand::Features { corpus, vocab, tags } => {
            let vocab = Vocab::read(vocab)?;
            let table = features_with_tags(&langgen::Corpus::read(corpus)?, &vocab, tags)?;
            table.write(out)?;
            println!("{} boolean features -> {}", table.boolean_features().len(), out.display());
        }
        CorpusCommand::Prepare {
            source,
            max_vocab,
            seq_len,
            tags,
        } => {
            let text = read_text(cli, source)?;
            let vocab = Vocab::build(&text, *max_vocab)?;
            let (corpus, stats) = textcorpus::encode_corpus(&text, &vocab, *seq_len)?;
            let features = features_with_tags(&corpus, &vocab, tags)?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            corpus.write(out.join("corpus.synl"))?;
            vocab.write(out.join("vocab.txt"))?;
            features.write(out.join("features.json"))?;
            write_json(&out.join("stats.json"), &stats)?;
            print_encode_stats(&stats, &vocab);
        }
    }
    Ok(())
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let out = require_out(&cli.out)?;
    let corpus = langgen::Corpus::read(&a.corpus)?;
    let set = SequenceSet::from(&corpus);
    let seed = cli.seed.unwrap_or(0);
    match &a.from {
        None => {
            let mut config: TrainConfig = match &cli.config {
                Some(p) => read_toml(p)?,
                None => TrainConfig::default(),
            };
            config.seed = cli.seed.unwrap_or(config.seed);
            config.max_steps = a.steps.unwrap_or(config.max_steps);
            config.learning_rate = a.lr.unwrap_or(config.learning_rate);
            config.batch_size = a.batch_size.unwrap_or(config.batch_size);
            let model = ModelConfig::preset(&a.preset, corpus.vocab_size(), corpus.seq_len())?;
            let mut params = ModelParams::init(model, config.seed)?;
            let report = trainer::pretrain(&mut params, &set, &config)?;
            save_checkpoint(
                &params,
                out,
                metadata(&[("corpus", a.corpus.display().to_string()), ("stage", "pretrained".into())]),
            )?;
            write_json(&out.join("train_report.json"), &report)?;
            println!(
                "{} steps, held-out NLL {:.4} nats/token{}",
                report.steps,
                report.final_eval_nll,
                if report.stopped_early { " (early stop)" } else { "" }
            );
        }
        Some(from) => {
            let (source, _) = load_checkpoint(from)?;
            let (stages, holdout) = match &cli.config {
                Some(p) => {
                    let f: FinetuneFile = read_toml(p)?;
                    (f.stages, f.holdout_fraction)
                }
                None => {
                    let defaults = StageConfig::default_stages();
                    let stages = a
                        .modes
                        .iter()
                        .map(|&m| {
                            let base = defaults.iter().find(|s| s.mode == m).cloned();
                            let mut s = base.unwrap_or_else(|| StageConfig::new(m, 1e-3, 12_500));
                            s.steps = a.steps.unwrap_or(s.steps);
                            s.learning_rate = a.lr.unwrap_or(s.learning_rate);
                            s.batch_size = a.batch_size.unwrap_or(s.batch_size);
                            s
                        })
                        .collect();
                    (stages, default_holdout())
                }
            };
            let results = trainer::finetune_pipeline(&source, &set, &stages, holdout, seed)?;
            for r in &results {
                let dir = out.join(r.stage.mode.name());
                save_checkpoint(
                    &r.params,
                    &dir,
                    metadata(&[
                        ("corpus", a.corpus.display().to_string()),
                        ("source", from.display().to_string()),
                        ("stage", r.stage.mode.to_string()),
                    ]),
                )?;
                write_json(&dir.join("train_report.json"), &r.report)?;
                println!("{}: held-out NLL {:.4} nats/token", r.stage.mode, r.report.final_eval_nll);
            }
        }
    }
    Ok(())
}

fn transfer_cmd(cli: &Cli, a: &TransferArgs) -> Result<()> {
    let out = require_out(&cli.out)?;
    let mut settings: TransferSettings = match &cli.config {
        Some(p) => read_toml(p)?,
        None => TransferSettings::default(),
    };
    settings.seed = cli.seed.unwrap_or(settings.seed);
    if let Some(n) = a.stage_steps {
        for s in &mut settings.stages {
            s.steps = n;
        }
    }
    if let Some(n) = a.scratch_steps {
        settings.scratch.max_steps = n;
    }
    let mut languages = Vec::new();
    for spec in &a.corpora {
        let (name, path) = named_path(spec);
        languages.push(LanguageEntry {
            name,
            corpus: SequenceSet::from(&langgen::Corpus::read(&path)?),
            checkpoint: None,
            scratch_nll: None,
        });
    }
    for spec in &a.checkpoints {
        let (name, path) = named_path(spec);
        let entry = languages
            .iter_mut()
            .find(|l| l.name == name)
            .ok_or_else(|| Error::config(format!("checkpoint for unknown language {name:?}")))?;
        entry.checkpoint = Some(load_checkpoint(&path)?.0);
    }
    let report = if a.pairs.is_empty() {
        transfer::transfer_matrix(&languages, &a.modes, &settings)?
    } else {
        let pairs = a
            .pairs
            .iter()
            .map(|p| {
                p.split_once(':')
                    .map(|(x, y)| (x.to_string(), y.to_string()))
                    .ok_or_else(|| Error::config(format!("pair {p:?} is not of the form a:b")))
            })
            .collect::<Result<Vec<_>>>()?;
        transfer::transfer_pairs(&languages, &pairs, &a.modes, &settings)?
    };
    let finetune: Vec<ParameterGroup> = a.modes.iter().copied().filter(|&m| m != ParameterGroup::Full).collect();
    let table = report.to_text_table(&finetune);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("transfer.json"), &report)?;
    write_text(&out.join("transfer.txt"), &table)?;
    print!("{table}");
    for s in &report.summaries {
        println!(
            "{} / {} ({}): dissimilarity {:.3}, relative complexity {:+.3}",
            s.a, s.b, s.mode, s.dissimilarity, s.relative_complexity
        );
    }
    for x in &report.absent {
        eprintln!("absent: {x}");
    }
    Ok(())
}

fn load_embeddings(dir: &Path, source: EmbeddingSource, drop_special: bool) -> Result<EmbeddingMatrix> {
    let (params, _) = load_checkpoint(dir)?;
    let m = EmbeddingMatrix::from_params(&params, source)?;
    if drop_special {
        m.select_rows(|r| !Vocab::is_special(r as u16))
    } else {
        Ok(m)
    }
}

fn embedx_cmd(cli: &Cli, a: &EmbedxArgs) -> Result<()> {
    let out = require_out(&cli.out)?;
    let seed = cli.seed.unwrap_or(0);
    let mut models = Vec::new();
    for spec in &a.checkpoints {
        let (name, path) = named_path(spec);
        let m = load_embeddings(&path, a.source, a.drop_special)?;
        let spectrum = embedx::spectrum(&m, a.source);
        write_text(&out.join("spectrum").join(format!("{name}.csv")), &spectrum.to_csv())?;
        let ks: Vec<usize> = a.k.iter().copied().filter(|&k| k <= m.rows).collect();
        let curve = embedx::cluster_curve(&m, &ks, seed)?;
        write_text(&out.join("clusters").join(format!("{name}.csv")), &curve.to_csv())?;
        println!(
            "{name}: {} x {}, 90% variance by rank {}",
            m.rows,
            m.cols,
            spectrum.cumulative_explained.iter().position(|&c| c >= 0.9).map_or(0, |i| i + 1)
        );
        models.push((name, m));
    }
    let min_rows = models.iter().map(|(_, m)| m.rows).min().unwrap_or(0);
    let ks: Vec<usize> = a.k.iter().copied().filter(|&k| k <= min_rows).collect();
    let spectra = embedx::compare_spectra(&models)?;
    let clusters = embedx::compare_clusters(&models, &ks, seed)?;
    write_text(&out.join("spectra.csv"), &spectra.to_csv())?;
    write_text(&out.join("clusters.csv"), &clusters.to_csv())?;
    embedx::save_png(&embedx::render_line_plot(&spectra.series, 640, 420)?, out.join("spectra.png"))?;
    embedx::save_png(&embedx::render_line_plot(&clusters.series, 640, 420)?, out.join("clusters.png"))?;
    Ok(())
}

fn probes_cmd(cli: &Cli, a: &ProbesArgs) -> Result<()> {
    let mut config: ProbeConfig = match &cli.config {
        Some(p) => read_toml(p)?,
        None => ProbeConfig::default(),
    };
    config.seed = cli.seed.unwrap_or(config.seed);
    config.ridge_lambda = a.lambda.unwrap_or(config.ridge_lambda);
    config.logistic_l2 = a.l2.unwrap_or(config.logistic_l2);
    let m = load_embeddings(&a.ckpt, a.source, false)?;
    let table = FeatureTable::read(&a.features)?;
    let report = probe_suite(&m, &table, &config)?;
    for (feature, why) in &report.skipped {
        eprintln!("skipped {feature}: {why}");
    }
    let csv = report.to_csv();
    match &cli.out {
        Some(p) => write_text(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cloze_cmd(cli: &Cli, c: &ClozeCommand) -> Result<()> {
    let ClozeCommand::Eval {
        ckpt,
        vocab,
        questions,
        mode,
    } = c;
    let (params, _) = load_checkpoint(ckpt)?;
    let vocab = Vocab::read(vocab)?;
    let questions = match questions {
        Some(p) => cloze::load_questions(p)?,
        None => cloze::parse_questions(cloze::SAMPLE_QUESTIONS)?,
    };
    let report = cloze::evaluate(&params, &vocab, &questions, *mode)?;
    for (i, why) in &report.skipped {
        eprintln!("skipped question {i}: {why}");
    }
    if let Some(out) = &cli.out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_json(&out.join("cloze.json"), &report)?;
        write_text(&out.join("cloze.csv"), &report.to_csv())?;
    }
    print!("{}", report.to_csv());
    Ok(())
}

fn run_cmd(cli: &Cli, a: &RunArgs) -> Result<()> {
    let out = require_out(&cli.out)?;
    let manifest = if let Some(prev) = &a.replay {
        experiment::replay(prev, out)?
    } else {
        let mut config = match (&cli.config, &a.recipe) {
            (Some(p), None) => ExperimentConfig::load(p)?,
            (None, Some(r)) => ExperimentConfig::recipe(r, cli.seed.unwrap_or(0))?,
            _ => return Err(Error::config("give exactly one of --config, --recipe or --replay")),
        };
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        experiment::run_experiment(&config, out)?
    };
    for t in &manifest.timings {
        eprintln!("{:<10} {:>8.1}s", t.step, t.seconds);
    }
    print!("{}", experiment::report(out)?.to_text());
    Ok(())
}

fn report_cmd(cli: &Cli, a: &ReportArgs) -> Result<()> {
    let text = experiment::report(&a.run_dir)?.to_text();
    match &cli.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Langgen(a) => langgen_cmd(cli, a),
        Command::Corpus { command } => corpus_cmd(cli, command),
        Command::Train(a) => train_cmd(cli, a),
        Command::Transfer(a) => transfer_cmd(cli, a),
        Command::Embedx(a) => embedx_cmd(cli, a),
        Command::Probes(a) => probes_cmd(cli, a),
        Command::Cloze { command } => cloze_cmd(cli, command),
        Command::Run(a) => run_cmd(cli, a),
        Command::Report(a) => report_cmd(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
