//! Python bindings: language generation, model training and fine-tuning,
//! embedding analysis, cloze scoring and whole experiment runs.

use std::path::PathBuf;

use pyo3::exceptions::{PyIndexError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use langtransfer::cloze::{self, ScoringMode};
use langtransfer::embedx::{self, EmbeddingMatrix, EmbeddingSource};
use langtransfer::experiment::{self, ExperimentConfig, RunStatus};
use langtransfer::langgen::{self, GeneratorState, LanguageKind};
use langtransfer::model::{load_checkpoint, log_prob, save_checkpoint, ModelConfig, ModelParams, ParameterGroup};
use langtransfer::textcorpus::Vocab;
use langtransfer::trainer::{self, SequenceSet, StageConfig, TrainConfig};
use langtransfer::{transfer, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ if e.exit_code() == 1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<EmbeddingMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let n = rows.len();
    EmbeddingMatrix::new(n, cols, rows.into_iter().flatten().collect()).map_err(to_py)
}

/// Parameters of a synthetic bracket language.
#[pyclass(name = "LanguageSpec", frozen)]
#[derive(Clone)]
struct PyLanguageSpec {
    inner: langgen::LanguageSpec,
}

#[pymethods]
impl PyLanguageSpec {
    #[new]
    #[pyo3(signature = (kind, seq_len=langgen::LanguageSpec::nested().seq_len, n_types=250, p_open=0.4))]
    fn new(kind: &str, seq_len: usize, n_types: u32, p_open: f64) -> PyResult<Self> {
        let inner = langgen::LanguageSpec {
            seq_len,
            n_types,
            p_open,
            ..langgen::LanguageSpec::new(parse::<LanguageKind>(kind)?)
        };
        inner.validate().map_err(to_py)?;
        Ok(PyLanguageSpec { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.name()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    #[getter]
    fn seq_len(&self) -> usize {
        self.inner.seq_len
    }

    fn generate(&self, py: Python<'_>, n_sequences: usize, seed: u64) -> PyResult<PyCorpus> {
        let spec = self.inner;
        let inner = py
            .detach(|| langgen::generate_corpus(&spec, n_sequences, seed))
            .map_err(to_py)?;
        Ok(PyCorpus { inner })
    }

    fn is_valid(&self, tokens: Vec<u16>) -> bool {
        langgen::validate(&self.inner, &tokens).is_valid(self.inner.kind)
    }

    /// `[(token, probability)]` for the next token after `prefix`.
    fn next_token_distribution(&self, prefix: Vec<u16>) -> PyResult<Vec<(u16, f64)>> {
        let state = GeneratorState::from_prefix(&self.inner, &prefix).map_err(to_py)?;
        Ok(langgen::next_token_distribution(&self.inner, &state).map_err(to_py)?.probs)
    }

    /// Mean per-token NLL of the generating process on `tokens`.
    fn nll_floor(&self, tokens: Vec<u16>) -> PyResult<f64> {
        langgen::sequence_nll_floor(&self.inner, &tokens).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "LanguageSpec(kind={:?}, seq_len={}, n_types={}, p_open={})",
            self.inner.kind.name(),
            self.inner.seq_len,
            self.inner.n_types,
            self.inner.p_open
        )
    }
}

/// Fixed-length token sequences.
#[pyclass(name = "Corpus", frozen)]
struct PyCorpus {
    inner: langgen::Corpus,
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyCorpus {
            inner: langgen::Corpus::read(path).map_err(to_py)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write(path).map_err(to_py)
    }

    #[getter]
    fn n_sequences(&self) -> usize {
        self.inner.n_sequences()
    }

    #[getter]
    fn seq_len(&self) -> usize {
        self.inner.seq_len()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn sequence(&self, i: usize) -> PyResult<Vec<u16>> {
        if i >= self.inner.n_sequences() {
            return Err(PyIndexError::new_err(format!("sequence {i} of {}", self.inner.n_sequences())));
        }
        Ok(self.inner.sequence(i).to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.n_sequences()
    }
}

/// Decoder-only transformer parameters.
#[pyclass(name = "Model")]
#[derive(Clone)]
struct PyModel {
    inner: ModelParams,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (vocab_size, max_seq_len, seed, preset="desk"))]
    fn init(vocab_size: usize, max_seq_len: usize, seed: u64, preset: &str) -> PyResult<Self> {
        let config = ModelConfig::preset(preset, vocab_size, max_seq_len).map_err(to_py)?;
        Ok(PyModel {
            inner: ModelParams::init(config, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: load_checkpoint(dir).map_err(to_py)?.0,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.inner, dir, Default::default()).map_err(to_py)
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.config.vocab_size
    }

    /// Total log-probability of `tokens`, first token unscored.
    fn log_prob(&self, tokens: Vec<u16>) -> PyResult<f64> {
        Ok(log_prob(&self.inner, &tokens).map_err(to_py)?.total)
    }

    /// Mean held-out NLL in nats per token over every sequence of `corpus`.
    fn evaluate(&self, py: Python<'_>, corpus: &PyCorpus) -> PyResult<f64> {
        let set = SequenceSet::from(&corpus.inner);
        py.detach(|| trainer::evaluate(&self.inner, &set, None, usize::MAX))
            .map_err(to_py)
    }

    /// One row per token.
    #[pyo3(signature = (source="input"))]
    fn embeddings(&self, source: &str) -> PyResult<Vec<Vec<f64>>> {
        let m = EmbeddingMatrix::from_params(&self.inner, parse::<EmbeddingSource>(source)?).map_err(to_py)?;
        Ok((0..m.rows).map(|r| m.row(r).to_vec()).collect())
    }

    /// Trains every parameter; returns the final held-out NLL.
    #[pyo3(signature = (corpus, steps, learning_rate=1e-3, batch_size=8, seed=0))]
    fn pretrain(
        &mut self,
        py: Python<'_>,
        corpus: &PyCorpus,
        steps: usize,
        learning_rate: f64,
        batch_size: usize,
        seed: u64,
    ) -> PyResult<f64> {
        let set = SequenceSet::from(&corpus.inner);
        let config = TrainConfig {
            max_steps: steps,
            learning_rate,
            batch_size,
            seed,
            patience: 0,
            ..TrainConfig::default()
        };
        let params = &mut self.inner;
        let report = py.detach(|| trainer::pretrain(params, &set, &config)).map_err(to_py)?;
        Ok(report.final_eval_nll)
    }

    /// Re-initializes the embeddings for `corpus` and runs one stage per
    /// group in `modes`; returns `[(mode, held-out NLL, model)]`.
    #[pyo3(signature = (corpus, steps, modes=vec!["E".to_string(), "EL".to_string(), "ELT".to_string()], seed=0, holdout_fraction=0.01))]
    fn finetune(
        &self,
        py: Python<'_>,
        corpus: &PyCorpus,
        steps: usize,
        modes: Vec<String>,
        seed: u64,
        holdout_fraction: f64,
    ) -> PyResult<Vec<(String, f64, PyModel)>> {
        let defaults = StageConfig::default_stages_with_steps(steps);
        let stages = modes
            .iter()
            .map(|m| {
                let mode = parse::<ParameterGroup>(m)?;
                Ok(defaults
                    .iter()
                    .find(|s| s.mode == mode)
                    .cloned()
                    .unwrap_or_else(|| StageConfig::new(mode, 1e-3, steps)))
            })
            .collect::<PyResult<Vec<_>>>()?;
        let set = SequenceSet::from(&corpus.inner);
        let results = py
            .detach(|| trainer::finetune_pipeline(&self.inner, &set, &stages, holdout_fraction, seed))
            .map_err(to_py)?;
        Ok(results
            .into_iter()
            .map(|r| (r.stage.mode.to_string(), r.report.final_eval_nll, PyModel { inner: r.params }))
            .collect())
    }
}

/// `(dissimilarity, relative_complexity)` from the two transfer directions.
#[pyfunction]
fn dissimilarity_and_complexity(f_ab: f64, f_ba: f64) -> (f64, f64) {
    transfer::dissimilarity_and_complexity(f_ab, f_ba)
}

/// Descending singular values of the column-centered rows.
#[pyfunction]
fn spectrum(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(embedx::spectrum(&matrix(rows)?, EmbeddingSource::Input).singular_values)
}

/// `[(k, unexplained variance)]` in ascending `k`.
#[pyfunction]
#[pyo3(signature = (rows, k_values, seed=0))]
fn cluster_curve(py: Python<'_>, rows: Vec<Vec<f64>>, k_values: Vec<usize>, seed: u64) -> PyResult<Vec<(usize, f64)>> {
    let m = matrix(rows)?;
    Ok(py.detach(|| embedx::cluster_curve(&m, &k_values, seed)).map_err(to_py)?.points)
}

/// Cloze macro-average and per-subtask means for a model and its vocabulary.
#[pyfunction]
#[pyo3(signature = (model, vocab_path, questions_path=None, mode="full"))]
fn cloze_eval<'py>(
    py: Python<'py>,
    model: &PyModel,
    vocab_path: PathBuf,
    questions_path: Option<PathBuf>,
    mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let vocab = Vocab::read(vocab_path).map_err(to_py)?;
    let questions = match questions_path {
        Some(p) => cloze::load_questions(p),
        None => cloze::parse_questions(cloze::SAMPLE_QUESTIONS),
    }
    .map_err(to_py)?;
    let mode = parse::<ScoringMode>(mode)?;
    let report = cloze::evaluate(&model.inner, &vocab, &questions, mode).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("average", report.average)?;
    let subtasks = PyDict::new(py);
    for s in &report.subtasks {
        subtasks.set_item(&s.subtask, s.mean)?;
    }
    out.set_item("subtasks", subtasks)?;
    out.set_item("n_scored", report.questions.len())?;
    out.set_item("n_skipped", report.skipped.len())?;
    Ok(out)
}

/// TOML text of a built-in experiment recipe.
#[pyfunction]
fn recipe(name: &str, seed: u64) -> PyResult<String> {
    ExperimentConfig::recipe(name, seed)
        .and_then(|c| c.to_toml())
        .map_err(to_py)
}

/// Runs the experiment configured in `config_path` into `out_dir`; returns
/// whether every step completed.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_path: PathBuf, out_dir: PathBuf) -> PyResult<bool> {
    let config = ExperimentConfig::load(config_path).map_err(to_py)?;
    let manifest = py
        .detach(|| experiment::run_experiment(&config, &out_dir))
        .map_err(to_py)?;
    Ok(manifest.status == RunStatus::Complete)
}

/// Text summary of a run directory.
#[pyfunction]
fn report(run_dir: PathBuf) -> PyResult<String> {
    Ok(experiment::report(run_dir).map_err(to_py)?.to_text())
}

#[pymodule]
#[pyo3(name = "langtransfer")]
fn langtransfer_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLanguageSpec>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(dissimilarity_and_complexity, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_curve, m)?)?;
    m.add_function(wrap_pyfunction!(cloze_eval, m)?)?;
    m.add_function(wrap_pyfunction!(recipe, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    Ok(())
}
