//! End-to-end experiment pipeline. Every stage writes its artifact under the
//! configured output directory, and later stages read them back, so the CLI
//! can run stages one at a time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{select_baseline, IndexEntry, RetrievalIndex, Variant};
use crate::checkpoint::{self, Checkpoint};
use crate::config::{ExperimentConfig, System};
use crate::copy::{deannotate, ContextMaps};
use crate::dataset::{self, realize, KeyKind, RawFiles, RawInputs, Sample};
use crate::error::{Error, Result};
use crate::folds::{make_folds, Fold};
use crate::kb::{TransEModel, Triple};
use crate::metrics::{aggregate, bleu, score_corpus, Aggregate, BleuLevel, MetricRow};
use crate::model::{Example, ModelInput, QgModel};
use crate::text::{tokenize, LexiconTagger, Tagger, Vocabulary};

/// Reads a configured input, naming the path when it is missing.
pub fn read_input(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::Config(format!("input file {} not found", path.display()))
        }
        _ => Error::Io(e),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub sample: usize,
    pub triple: Triple,
    pub reference: Vec<String>,
    pub output: Vec<String>,
}

pub fn write_generations(gens: &[Generation]) -> String {
    let mut out = String::from("sample\tsubject\tpredicate\tobject\treference\toutput\n");
    for g in gens {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            g.sample,
            g.triple.subject,
            g.triple.predicate,
            g.triple.object,
            g.reference.join(" "),
            g.output.join(" ")
        );
    }
    out
}

pub fn parse_generations(text: &str) -> Result<Vec<Generation>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |message: &str| Error::Parse {
            line: i + 1,
            message: message.into(),
        };
        if cols.len() != 6 {
            return Err(bad("expected 6 columns"));
        }
        out.push(Generation {
            sample: cols[0].parse().map_err(|_| bad("bad sample index"))?,
            triple: Triple::new(cols[1], cols[2], cols[3]),
            reference: cols[4].split_whitespace().map(String::from).collect(),
            output: cols[5].split_whitespace().map(String::from).collect(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemScores {
    pub system: System,
    pub scores: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub key: KeyKind,
    pub folds: Vec<usize>,
    pub systems: Vec<SystemScores>,
}

impl ScoreReport {
    /// One row per system, every metric as `mean ± std` scaled by 100.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("system\t{}\n", MetricRow::COLUMNS.join("\t"));
        for s in &self.systems {
            let cells: Vec<String> = s
                .scores
                .mean
                .values()
                .iter()
                .zip(s.scores.std.values())
                .map(|(m, d)| format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * d))
                .collect();
            let _ = writeln!(out, "{}\t{}", s.system, cells.join("\t"));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn get(&self, system: System) -> Option<&Aggregate> {
        self.systems
            .iter()
            .find(|s| s.system == system)
            .map(|s| &s.scores)
    }
}

/// What a trained system needs at generation time.
#[derive(Debug, Clone)]
pub enum Trained {
    Index(RetrievalIndex),
    Neural(QgModel),
}

/// Per-sample model inputs for one neural system.
fn neural_view(
    system: System,
    sample: &Sample,
    annotated_contexts: &[Vec<String>; 3],
) -> ([Vec<String>; 3], Vec<String>) {
    match system {
        System::EncoderDecoder => (Default::default(), sample.placeholder_question()),
        System::ModelCopy => (annotated_contexts.clone(), sample.annotated_tokens()),
        _ => (sample.context_tokens(), sample.placeholder_question()),
    }
}

pub struct Pipeline {
    pub config: ExperimentConfig,
    tagger: LexiconTagger,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig) -> Self {
        Pipeline {
            config,
            tagger: LexiconTagger::default(),
        }
    }

    pub fn tagger(&self) -> &dyn Tagger {
        &self.tagger
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    pub fn fold_path(&self, fold: usize, name: &str) -> PathBuf {
        self.config.output_dir.join(format!("fold{fold}")).join(name)
    }

    fn write(&self, path: &Path, text: &str) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    fn read_artifact(&self, path: &Path, stage: &str) -> Result<String> {
        std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!(
                "{} not found; run {stage} first",
                path.display()
            )),
            _ => Error::Io(e),
        })
    }

    pub fn load_raw(&self) -> Result<RawInputs> {
        let p = &self.config.inputs;
        let dep = p.dep_paths.as_deref().map(read_input).transpose()?;
        let texts = [
            &p.kb,
            &p.labels,
            &p.sentences,
            &p.first_sentences,
            &p.entity_types,
            &p.type_labels,
            &p.questions,
        ]
        .map(|path| read_input(path));
        let [kb, labels, sentences, first, types, type_labels, questions] = texts;
        RawInputs::parse(&RawFiles {
            kb: &kb?,
            labels: &labels?,
            sentences: &sentences?,
            first_sentences: &first?,
            entity_types: &types?,
            type_labels: &type_labels?,
            questions: &questions?,
            dep_paths: dep.as_deref(),
        })
    }

    /// Mines contexts and writes `dataset.jsonl` plus `patterns.json`.
    pub fn prepare_contexts(&self) -> Result<Vec<Sample>> {
        let raw = self.load_raw()?;
        let prepared = dataset::prepare_samples(&raw, &self.tagger)?;
        self.write(&self.path("dataset.jsonl"), &dataset::write_jsonl(&prepared.samples)?)?;
        self.write(
            &self.path("patterns.json"),
            &(serde_json::to_string_pretty(&prepared.patterns)? + "\n"),
        )?;
        log::info!(
            "{} samples, {} predicate patterns",
            prepared.samples.len(),
            prepared.patterns.len()
        );
        Ok(prepared.samples)
    }

    pub fn load_samples(&self) -> Result<Vec<Sample>> {
        dataset::parse_jsonl(&self.read_artifact(&self.path("dataset.jsonl"), "prepare-contexts")?)
    }

    /// Trains TransE on the whole KB and writes `transe.ckpt`.
    pub fn train_transe(&self) -> Result<TransEModel> {
        let kb = crate::kb::parse_triples(&read_input(&self.config.inputs.kb)?)?;
        let (model, log) = TransEModel::train(&kb, &self.config.transe)?;
        if let Some(last) = log.full_loss.last() {
            log::info!("TransE final hinge loss {last:.4}");
        }
        checkpoint::transe_checkpoint(&model)?.save(&self.path("transe.ckpt"))?;
        Ok(model)
    }

    pub fn load_transe(&self) -> Result<TransEModel> {
        let path = self.path("transe.ckpt");
        if !path.exists() {
            return Err(Error::Config(format!(
                "{} not found; run train-transe first",
                path.display()
            )));
        }
        checkpoint::transe_from_checkpoint(&Checkpoint::load(&path)?)
    }

    pub fn make_folds(&self, samples: &[Sample]) -> Result<Vec<Fold>> {
        let folds = make_folds(samples, &self.config.folds)?;
        self.write(&self.path("folds.json"), &(serde_json::to_string_pretty(&folds)? + "\n"))?;
        Ok(folds)
    }

    pub fn load_folds(&self) -> Result<Vec<Fold>> {
        Ok(serde_json::from_str(
            &self.read_artifact(&self.path("folds.json"), "make-folds")?,
        )?)
    }

    fn checkpoint_name(system: System) -> String {
        if system.is_neural() {
            format!("{system}.ckpt")
        } else {
            "index.ckpt".to_string()
        }
    }

    pub fn build_index(
        &self,
        samples: &[Sample],
        transe: &TransEModel,
        fold: &Fold,
    ) -> Result<RetrievalIndex> {
        let entries = fold
            .train
            .iter()
            .map(|&i| IndexEntry::from_sample(&samples[i]))
            .collect();
        RetrievalIndex::build(entries, transe, self.config.lsa_rank, self.config.folds.seed)
    }

    fn annotations(&self, samples: &[Sample], ids: &[usize]) -> Result<Vec<([Vec<String>; 3], ContextMaps)>> {
        ids.iter()
            .map(|&i| samples[i].annotation(&self.tagger))
            .collect()
    }

    fn examples(
        &self,
        model: &QgModel,
        system: System,
        samples: &[Sample],
        ids: &[usize],
    ) -> Result<Vec<Example>> {
        let ann = self.annotations(samples, ids)?;
        ids.iter()
            .zip(&ann)
            .map(|(&i, (ctx, _))| {
                let (contexts, target) = neural_view(system, &samples[i], ctx);
                let input = self.model_input(model, &samples[i], &contexts)?;
                Ok(Example::new(input, model.vocab.encode_all(&target)))
            })
            .collect()
    }

    fn model_input(
        &self,
        model: &QgModel,
        sample: &Sample,
        contexts: &[Vec<String>; 3],
    ) -> Result<ModelInput> {
        Ok(ModelInput {
            fact: model.resolve_fact(&sample.triple())?,
            contexts: [0, 1, 2].map(|j| model.vocab.encode_all(&contexts[j])),
        })
    }

    /// Trains one neural system on a fold's train split, selecting the epoch
    /// with the best mean corpus BLEU-1..4 on the valid split.
    pub fn train_neural(
        &self,
        samples: &[Sample],
        transe: &TransEModel,
        fold: &Fold,
        system: System,
    ) -> Result<QgModel> {
        let ann = self.annotations(samples, &fold.train)?;
        let views: Vec<([Vec<String>; 3], Vec<String>)> = fold
            .train
            .iter()
            .zip(&ann)
            .map(|(&i, (ctx, _))| neural_view(system, &samples[i], ctx))
            .collect();
        let corpus = views
            .iter()
            .flat_map(|(c, q)| c.iter().map(Vec::as_slice).chain(std::iter::once(q.as_slice())));
        let vocab = Vocabulary::build(corpus, self.config.model.vocab_size, system == System::ModelCopy)?;
        let mut config = self.config.model.clone();
        config.use_contexts = system != System::EncoderDecoder;
        let mut model = QgModel::new(config, vocab, transe)?;
        if let Some(path) = &self.config.inputs.word_vectors {
            let n = model.load_word_vectors(&read_input(path)?)?;
            log::info!("initialised {n} word vectors from {}", path.display());
        }
        let train = self.examples(&model, system, samples, &fold.train)?;
        let valid = self.examples(&model, system, samples, &fold.valid)?;
        let valid_refs: Vec<Vec<String>> = fold
            .valid
            .iter()
            .map(|&i| tokenize(&samples[i].question))
            .collect();
        let valid_maps = self.annotations(samples, &fold.valid)?;
        let mut validator = |m: &QgModel| -> Result<f64> {
            let mut cands = Vec::with_capacity(valid.len());
            for ((ex, &i), (_, maps)) in valid.iter().zip(&fold.valid).zip(&valid_maps) {
                let tokens = m.generate_tokens(&ex.input, 1)?;
                cands.push(postprocess(system, &tokens, maps, &samples[i]));
            }
            let mut total = 0.0;
            for n in 1..=4 {
                total += bleu(&cands, &valid_refs, n, BleuLevel::Corpus)?;
            }
            Ok(total / 4.0)
        };
        let report = model.train(
            &train,
            &valid,
            &self.config.train,
            if valid.is_empty() { None } else { Some(&mut validator) },
        )?;
        log::info!(
            "fold {} {system}: loss {:.4} -> {:.4}, best epoch {:?}",
            fold.id,
            report.initial_loss,
            report.train_loss.last().copied().unwrap_or(f64::NAN),
            report.best_epoch.map(|e| e + 1)
        );
        Ok(model)
    }

    /// Trains (or indexes) one system and writes its checkpoint.
    pub fn train_system(
        &self,
        samples: &[Sample],
        transe: &TransEModel,
        fold: &Fold,
        system: System,
    ) -> Result<Trained> {
        let path = self.fold_path(fold.id, &Self::checkpoint_name(system));
        let trained = if system.is_neural() {
            let model = self.train_neural(samples, transe, fold, system)?;
            checkpoint::model_checkpoint(&model)?.save(&path)?;
            Trained::Neural(model)
        } else {
            let index = self.build_index(samples, transe, fold)?;
            checkpoint::index_checkpoint(&index)?.save(&path)?;
            Trained::Index(index)
        };
        Ok(trained)
    }

    pub fn load_trained(&self, fold: usize, system: System) -> Result<Trained> {
        let path = self.fold_path(fold, &Self::checkpoint_name(system));
        if !path.exists() {
            return Err(Error::Config(format!(
                "{} not found; run train for fold {fold} and system {system} first",
                path.display()
            )));
        }
        let ck = Checkpoint::load(&path)?;
        Ok(if system.is_neural() {
            Trained::Neural(checkpoint::model_from_checkpoint(&ck)?)
        } else {
            Trained::Index(checkpoint::index_from_checkpoint(&ck)?)
        })
    }

    /// Generates for the fold's test split and writes
    /// `fold<k>/<system>.generations.tsv`.
    pub fn generate(
        &self,
        samples: &[Sample],
        transe: &TransEModel,
        fold: &Fold,
        system: System,
        trained: &Trained,
        beam: usize,
    ) -> Result<Vec<Generation>> {
        let maps = self.annotations(samples, &fold.test)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.folds.seed);
        rng.set_stream(fold.id as u64);
        let mut out = Vec::with_capacity(fold.test.len());
        for (&i, (ctx, m)) in fold.test.iter().zip(&maps) {
            let s = &samples[i];
            let placeholder = match (system, trained) {
                (System::Select, Trained::Index(index)) => select_baseline(
                    &IndexEntry::from_sample(s),
                    &index.entries,
                    fold.kind,
                    &mut rng,
                )?,
                (System::Ir | System::IrCopy, Trained::Index(index)) => {
                    let query: Vec<String> = s.context_tokens().concat();
                    let variant = if system == System::IrCopy { Variant::Copy } else { Variant::Raw };
                    let r = index.ir(&query, variant, Some(m));
                    if r.fallback {
                        log::warn!("ir query for sample {i} is empty after projection; using the most frequent question");
                    }
                    r.question
                }
                (System::RTransE | System::RTransECopy, Trained::Index(index)) => {
                    let variant = if system == System::RTransECopy { Variant::Copy } else { Variant::Raw };
                    index.r_transe(&s.triple(), transe, variant, Some(m))?.question
                }
                (_, Trained::Neural(model)) if system.is_neural() => {
                    let (contexts, _) = neural_view(system, s, ctx);
                    let input = self.model_input(model, s, &contexts)?;
                    let tokens = model.generate_tokens(&input, beam)?;
                    postprocess(system, &tokens, m, s)
                }
                _ => {
                    return Err(Error::Config(format!(
                        "checkpoint does not match system {system}"
                    )))
                }
            };
            let output = if system.is_neural() { placeholder } else { realize(&placeholder, &s.subject_label) };
            out.push(Generation {
                sample: i,
                triple: s.triple(),
                reference: tokenize(&s.question),
                output,
            });
        }
        self.write(
            &self.fold_path(fold.id, &format!("{system}.generations.tsv")),
            &write_generations(&out),
        )?;
        Ok(out)
    }

    pub fn load_generations(&self, fold: usize, system: System) -> Result<Vec<Generation>> {
        parse_generations(&self.read_artifact(
            &self.fold_path(fold, &format!("{system}.generations.tsv")),
            "generate",
        )?)
    }

    /// Scores every requested system on every fold's generations and writes
    /// `report.tsv` and `report.json`.
    pub fn evaluate(&self, folds: &[Fold]) -> Result<ScoreReport> {
        let mut per_system: BTreeMap<usize, SystemScores> = BTreeMap::new();
        for (k, &system) in self.config.systems.iter().enumerate() {
            let mut rows = Vec::with_capacity(folds.len());
            for f in folds {
                let gens = self.load_generations(f.id, system)?;
                let cands: Vec<Vec<String>> = gens.iter().map(|g| g.output.clone()).collect();
                let refs: Vec<Vec<String>> = gens.iter().map(|g| g.reference.clone()).collect();
                rows.push(score_corpus(&cands, &refs)?);
            }
            per_system.insert(
                k,
                SystemScores {
                    system,
                    scores: aggregate(&rows)?,
                },
            );
        }
        let report = ScoreReport {
            key: self.config.folds.kind,
            folds: folds.iter().map(|f| f.id).collect(),
            systems: per_system.into_values().collect(),
        };
        self.write(&self.path("report.tsv"), &report.to_tsv())?;
        self.write(&self.path("report.json"), &report.to_json()?)?;
        Ok(report)
    }

    /// All stages in order.
    pub fn run(&self) -> Result<ScoreReport> {
        let samples = self.prepare_contexts()?;
        let transe = self.train_transe()?;
        let folds = self.make_folds(&samples)?;
        for fold in &folds {
            let mut index: Option<RetrievalIndex> = None;
            for &system in &self.config.systems {
                let trained = if system.is_neural() {
                    self.train_system(&samples, &transe, fold, system)?
                } else {
                    // one index per fold serves every retrieval system
                    if index.is_none() {
                        match self.train_system(&samples, &transe, fold, system)? {
                            Trained::Index(i) => index = Some(i),
                            Trained::Neural(_) => unreachable!("retrieval systems build an index"),
                        }
                    }
                    Trained::Index(index.clone().expect("built above"))
                };
                self.generate(&samples, &transe, fold, system, &trained, self.config.model.beam)?;
            }
        }
        self.evaluate(&folds)
    }
}

/// Copy tokens back to context words (copy model only), then `[S]` back to
/// the subject label.
fn postprocess(system: System, tokens: &[String], maps: &ContextMaps, sample: &Sample) -> Vec<String> {
    let words = if system == System::ModelCopy {
        deannotate(tokens, maps).tokens
    } else {
        tokens.to_vec()
    };
    realize(&words, &sample.subject_label)
}

pub const RATING_RUBRIC: &str = "\
# Rate each question from 1 to 5.
# 5: perfectly clear and natural, and asks for the given object.
# 4: clear, asks for the object, minor awkwardness.
# 3: understandable but unnatural or partly off-target.
# 2: hard to understand or mostly asks for something else.
# 1: nonsensical.
";

/// Blinded annotation sheet: `min(n, |test|)` random test facts, the gold
/// question, and every system's output in a per-row random column order.
/// Returns the sheet and the key mapping each row's columns to systems.
pub fn export_human_eval(
    generations: &[(System, Vec<Generation>)],
    n: usize,
    seed: u64,
) -> Result<(String, String)> {
    let (first_system, first) = generations
        .first()
        .ok_or_else(|| Error::domain("human evaluation needs at least one system"))?;
    for (system, g) in generations {
        if g.len() != first.len() || g.iter().zip(first).any(|(a, b)| a.sample != b.sample) {
            return Err(Error::domain(format!(
                "{system} and {first_system} were not generated on the same test samples"
            )));
        }
    }
    let rows = if n > first.len() {
        log::warn!("requested {n} rows but only {} test samples exist", first.len());
        first.len()
    } else {
        n
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = (0..first.len()).collect();
    picked.shuffle(&mut rng);
    picked.truncate(rows);
    let letters: Vec<String> = (0..generations.len())
        .map(|k| format!("q{}", k + 1))
        .collect();
    let mut sheet = String::from(RATING_RUBRIC);
    let _ = writeln!(sheet, "row\tsubject\tpredicate\tobject\tgold\t{}", letters.join("\t"));
    let mut key = format!("row\t{}\n", letters.join("\t"));
    for (r, &j) in picked.iter().enumerate() {
        let g = &first[j];
        let mut order: Vec<usize> = (0..generations.len()).collect();
        order.shuffle(&mut rng);
        let outputs: Vec<String> = order
            .iter()
            .map(|&s| generations[s].1[j].output.join(" "))
            .collect();
        let _ = writeln!(
            sheet,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r + 1,
            g.triple.subject,
            g.triple.predicate,
            g.triple.object,
            g.reference.join(" "),
            outputs.join("\t")
        );
        let names: Vec<&str> = order.iter().map(|&s| generations[s].0.name()).collect();
        let _ = writeln!(key, "{}\t{}", r + 1, names.join("\t"));
    }
    Ok((sheet, key))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gens(system_tag: &str, n: usize) -> Vec<Generation> {
        (0..n)
            .map(|i| Generation {
                sample: i,
                triple: Triple::new(format!("s{i}"), "p", "o"),
                reference: vec!["gold".into()],
                output: vec![format!("{system_tag}{i}")],
            })
            .collect()
    }

    #[test]
    fn generations_round_trip() {
        let g = gens("x", 3);
        assert_eq!(parse_generations(&write_generations(&g)).unwrap(), g);
    }

    #[test]
    fn human_eval_rows_and_blinding() {
        let all = vec![
            (System::Select, gens("a", 30)),
            (System::Ir, gens("b", 30)),
            (System::ModelCopy, gens("c", 30)),
        ];
        let (sheet, key) = export_human_eval(&all, 100, 4).unwrap();
        let data: Vec<&str> = sheet.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
        assert_eq!(data.len(), 30);
        let orders: std::collections::BTreeSet<&str> =
            key.lines().skip(1).map(|l| l.split_once('\t').unwrap().1).collect();
        assert!(orders.len() > 1);
        assert_eq!(export_human_eval(&all, 100, 4).unwrap(), (sheet, key));
        let (small, _) = export_human_eval(&all, 5, 4).unwrap();
        assert_eq!(small.lines().filter(|l| !l.starts_with('#')).count(), 6);
    }
}
