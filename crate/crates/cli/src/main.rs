use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use factqg_core::config::{ExperimentConfig, System};
use factqg_core::experiment::{export_human_eval, Pipeline};
use factqg_core::synth::{generate, SynthConfig};
use factqg_core::{Error, Result};

#[derive(Parser)]
#[command(name = "factqg", version, about = "Question generation from knowledge-base facts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (flat `key = value`).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Target {
    #[arg(long)]
    fold: usize,
    #[arg(long)]
    system: System,
}

#[derive(Subcommand)]
enum Command {
    /// Mine predicate patterns and type contexts; writes dataset.jsonl.
    PrepareContexts(Common),
    /// Train TransE on the KB; writes transe.ckpt.
    TrainTranse(Common),
    /// Split the dataset into zero-shot folds; writes folds.json.
    MakeFolds(Common),
    /// Train one system on one fold.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        target: Target,
    },
    /// Generate questions for one fold's test split.
    Generate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        target: Target,
        /// Beam width (1 is greedy); defaults to the config value.
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Score all generations and write report.tsv / report.json.
    Evaluate(Common),
    /// Every stage end to end.
    RunExperiment(Common),
    /// Write a blinded rating sheet for one fold.
    ExportHumanEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fold: usize,
        /// Rows to sample; defaults to the config value.
        #[arg(long)]
        rows: Option<usize>,
    },
    /// Write a synthetic templated corpus in the raw input formats.
    MakeToyCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        predicates: usize,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        seed: u64,
    },
}

fn pipeline(common: &Common) -> Result<Pipeline> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config = config.with_seed(seed);
    }
    Ok(Pipeline::new(config))
}

fn fold<'a>(folds: &'a [factqg_core::folds::Fold], id: usize) -> Result<&'a factqg_core::folds::Fold> {
    folds
        .iter()
        .find(|f| f.id == id)
        .ok_or_else(|| Error::Config(format!("fold {id} does not exist ({} folds)", folds.len())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PrepareContexts(c) => {
            let samples = pipeline(&c)?.prepare_contexts()?;
            println!("{} samples", samples.len());
        }
        Command::TrainTranse(c) => {
            let model = pipeline(&c)?.train_transe()?;
            println!(
                "{} entities, {} predicates, dim {}",
                model.vocab.entities.len(),
                model.vocab.predicates.len(),
                model.dim()
            );
        }
        Command::MakeFolds(c) => {
            let p = pipeline(&c)?;
            let folds = p.make_folds(&p.load_samples()?)?;
            for f in &folds {
                let [a, b, t] = f.sizes();
                println!("fold {}: train {a} valid {b} test {t}", f.id);
            }
        }
        Command::Train { common, target } => {
            let p = pipeline(&common)?;
            let (samples, transe, folds) = (p.load_samples()?, p.load_transe()?, p.load_folds()?);
            p.train_system(&samples, &transe, fold(&folds, target.fold)?, target.system)?;
            println!("trained {} on fold {}", target.system, target.fold);
        }
        Command::Generate {
            common,
            target,
            beam,
        } => {
            let p = pipeline(&common)?;
            let (samples, transe, folds) = (p.load_samples()?, p.load_transe()?, p.load_folds()?);
            let trained = p.load_trained(target.fold, target.system)?;
            let beam = beam.unwrap_or(p.config.model.beam);
            let gens = p.generate(
                &samples,
                &transe,
                fold(&folds, target.fold)?,
                target.system,
                &trained,
                beam,
            )?;
            println!("{} questions", gens.len());
        }
        Command::Evaluate(c) => {
            let p = pipeline(&c)?;
            print!("{}", p.evaluate(&p.load_folds()?)?.to_tsv());
        }
        Command::RunExperiment(c) => {
            print!("{}", pipeline(&c)?.run()?.to_tsv());
        }
        Command::ExportHumanEval { common, fold, rows } => {
            let p = pipeline(&common)?;
            let gens = p
                .config
                .systems
                .iter()
                .map(|&s| Ok((s, p.load_generations(fold, s)?)))
                .collect::<Result<Vec<_>>>()?;
            let n = rows.unwrap_or(p.config.human_eval_rows);
            let (sheet, key) = export_human_eval(&gens, n, p.config.folds.seed)?;
            std::fs::create_dir_all(&p.config.output_dir)?;
            write(&p.path(&format!("human_eval.fold{fold}.tsv")), &sheet)?;
            write(&p.path(&format!("human_eval.fold{fold}.key.tsv")), &key)?;
        }
        Command::MakeToyCorpus {
            out,
            predicates,
            samples,
            seed,
        } => {
            let corpus = generate(&SynthConfig {
                predicates,
                samples_per_predicate: samples,
                seed,
                ..Default::default()
            });
            corpus.write_to(&out)?;
            println!("{} questions in {}", corpus.questions.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
