//! Python bindings: text and metric helpers, copy actions, TransE and the
//! experiment pipeline.

use std::path::PathBuf;

use factqg_core::checkpoint::{transe_checkpoint, transe_from_checkpoint, Checkpoint};
use factqg_core::config::{ExperimentConfig, System};
use factqg_core::copy::{self, ContextMaps, ContextSlot};
use factqg_core::experiment::Pipeline;
use factqg_core::kb::{Triple, TransEConfig, TransEModel, TripleIds};
use factqg_core::metrics::{self, BleuLevel};
use factqg_core::synth::{self, SynthConfig};
use factqg_core::text::{self as ftext, LexiconTagger};
use factqg_core::Error;
use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::MissingFile(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn triples(rows: Vec<(String, String, String)>) -> Vec<Triple> {
    rows.into_iter().map(|(s, p, o)| Triple::new(s, p, o)).collect()
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    ftext::tokenize(text)
}

#[pyfunction]
#[pyo3(signature = (candidates, references, max_n = 4, sentence = false))]
fn bleu(candidates: Vec<Vec<String>>, references: Vec<Vec<String>>, max_n: usize, sentence: bool) -> PyResult<f64> {
    let level = if sentence { BleuLevel::Sentence } else { BleuLevel::Corpus };
    metrics::bleu(&candidates, &references, max_n, level).map_err(py_err)
}

#[pyfunction]
fn rouge_l(candidate: Vec<String>, reference: Vec<String>) -> f64 {
    metrics::rouge_l(&candidate, &reference)
}

#[pyfunction]
fn meteor_lite(candidate: Vec<String>, reference: Vec<String>) -> f64 {
    metrics::meteor_lite(&candidate, &reference)
}

fn context_maps(contexts: [String; 3]) -> PyResult<(Vec<Vec<String>>, ContextMaps)> {
    let tagger = LexiconTagger::default();
    let mut maps = ContextMaps::default();
    let mut annotated = Vec::new();
    for (slot, text) in ContextSlot::ALL.into_iter().zip(contexts) {
        let tagged = ftext::pos_tag(&tagger, &ftext::tokenize(&text));
        let (toks, map) = copy::annotate_context(&tagged, slot).map_err(py_err)?;
        maps.0[slot.index()] = map;
        annotated.push(toks);
    }
    Ok((annotated, maps))
}

/// Tags the three contexts with the built-in lexicon tagger and rewrites
/// them and the question with copy tokens.
#[pyfunction]
fn annotate(contexts: [String; 3], question: &str) -> PyResult<(Vec<Vec<String>>, Vec<String>)> {
    let (annotated, maps) = context_maps(contexts)?;
    Ok((annotated, copy::annotate_question(&ftext::tokenize(question), &maps)))
}

/// Replaces copy tokens with the context words they point at. Returns the
/// tokens and the number of unresolved copy tokens.
#[pyfunction]
fn deannotate(contexts: [String; 3], tokens: Vec<String>) -> PyResult<(Vec<String>, usize)> {
    let (_, maps) = context_maps(contexts)?;
    let out = copy::deannotate(&tokens, &maps);
    Ok((out.tokens, out.dropped))
}

#[pyclass(name = "TransE")]
struct PyTransE {
    model: TransEModel,
}

#[pymethods]
impl PyTransE {
    #[staticmethod]
    #[pyo3(signature = (triples, dim = 200, epochs = 200, margin = 1.0, learning_rate = 0.01, seed = 0))]
    fn train(
        triples: Vec<(String, String, String)>,
        dim: usize,
        epochs: usize,
        margin: f64,
        learning_rate: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let config = TransEConfig {
            dim,
            epochs,
            margin,
            learning_rate,
            seed,
            track_full_loss: false,
        };
        let (model, _) = TransEModel::train(&self::triples(triples), &config).map_err(py_err)?;
        Ok(PyTransE { model })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(py_err)?;
        Ok(PyTransE {
            model: transe_from_checkpoint(&ck).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        transe_checkpoint(&self.model).and_then(|c| c.save(&path)).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn entity(&self, symbol: &str) -> PyResult<Vec<f64>> {
        self.model.entity(symbol).map(<[f64]>::to_vec).map_err(py_err)
    }

    fn predicate(&self, symbol: &str) -> PyResult<Vec<f64>> {
        self.model.predicate(symbol).map(<[f64]>::to_vec).map_err(py_err)
    }

    /// Energy ‖e_s + e_p − e_o‖₂ of a fact.
    fn score(&self, subject: &str, predicate: &str, object: &str) -> PyResult<f64> {
        let ids = self.model.vocab.resolve(&Triple::new(subject, predicate, object)).map_err(py_err)?;
        self.model.score(ids).map_err(py_err)
    }

    fn mean_filtered_rank(&self, triples: Vec<(String, String, String)>) -> PyResult<f64> {
        let ids = self::triples(triples)
            .iter()
            .map(|t| self.model.vocab.resolve(t))
            .collect::<factqg_core::Result<Vec<TripleIds>>>()
            .map_err(py_err)?;
        self.model.mean_filtered_rank(&ids).map_err(py_err)
    }
}

#[pyclass(name = "Experiment")]
struct PyExperiment {
    pipeline: Pipeline,
}

#[pymethods]
impl PyExperiment {
    #[new]
    #[pyo3(signature = (config, output_dir = None, seed = None))]
    fn new(config: PathBuf, output_dir: Option<PathBuf>, seed: Option<u64>) -> PyResult<Self> {
        let mut cfg = ExperimentConfig::load(&config).map_err(py_err)?;
        if let Some(seed) = seed {
            cfg = cfg.with_seed(seed);
        }
        if let Some(dir) = output_dir {
            cfg.output_dir = dir;
        }
        Ok(PyExperiment {
            pipeline: Pipeline::new(cfg),
        })
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.pipeline.config.output_dir.clone()
    }

    #[getter]
    fn systems(&self) -> Vec<String> {
        self.pipeline.config.systems.iter().map(|s| s.to_string()).collect()
    }

    /// Runs every stage and returns the report as JSON text.
    fn run(&self, py: Python<'_>) -> PyResult<String> {
        py.allow_threads(|| self.pipeline.run().and_then(|r| r.to_json())).map_err(py_err)
    }

    fn report_tsv(&self) -> PyResult<String> {
        let folds = self.pipeline.load_folds().map_err(py_err)?;
        self.pipeline.evaluate(&folds).map(|r| r.to_tsv()).map_err(py_err)
    }

    /// `(subject, predicate, object, reference, output)` rows written by a
    /// previous run.
    fn generations(&self, fold: usize, system: &str) -> PyResult<Vec<(String, String, String, String, String)>> {
        let system: System = system.parse().map_err(py_err)?;
        let gens = self.pipeline.load_generations(fold, system).map_err(py_err)?;
        Ok(gens
            .into_iter()
            .map(|g| {
                let t = g.triple;
                (t.subject, t.predicate, t.object, g.reference.join(" "), g.output.join(" "))
            })
            .collect())
    }
}

/// Writes a synthetic corpus in the raw input formats; returns the number
/// of questions.
#[pyfunction]
#[pyo3(signature = (out, predicates = 6, samples = 50, seed = 3))]
fn make_toy_corpus(out: PathBuf, predicates: usize, samples: usize, seed: u64) -> PyResult<usize> {
    let corpus = synth::generate(&SynthConfig {
        predicates,
        samples_per_predicate: samples,
        seed,
        ..Default::default()
    });
    corpus.write_to(&out).map_err(py_err)?;
    Ok(corpus.questions.len())
}

#[pymodule]
fn factqg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(meteor_lite, m)?)?;
    m.add_function(wrap_pyfunction!(annotate, m)?)?;
    m.add_function(wrap_pyfunction!(deannotate, m)?)?;
    m.add_function(wrap_pyfunction!(make_toy_corpus, m)?)?;
    m.add_class::<PyTransE>()?;
    m.add_class::<PyExperiment>()?;
    Ok(())
}
