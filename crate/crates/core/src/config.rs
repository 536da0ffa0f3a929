//! Flat `key = value` experiment configuration. `#` starts a comment;
//! relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::KeyKind;
use crate::error::{Error, Result};
use crate::folds::FoldConfig;
use crate::kb::TransEConfig;
use crate::model::{ModelConfig, TrainConfig};
use crate::nn::LrSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Select,
    Ir,
    IrCopy,
    #[serde(rename = "r_transe")]
    RTransE,
    #[serde(rename = "r_transe_copy")]
    RTransECopy,
    EncoderDecoder,
    Model,
    ModelCopy,
}

impl System {
    pub const ALL: [System; 8] = [
        System::Select,
        System::Ir,
        System::IrCopy,
        System::RTransE,
        System::RTransECopy,
        System::EncoderDecoder,
        System::Model,
        System::ModelCopy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            System::Select => "select",
            System::Ir => "ir",
            System::IrCopy => "ir_copy",
            System::RTransE => "r_transe",
            System::RTransECopy => "r_transe_copy",
            System::EncoderDecoder => "encoder_decoder",
            System::Model => "model",
            System::ModelCopy => "model_copy",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, System::EncoderDecoder | System::Model | System::ModelCopy)
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        System::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown system {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPaths {
    pub kb: PathBuf,
    pub labels: PathBuf,
    pub sentences: PathBuf,
    pub first_sentences: PathBuf,
    pub entity_types: PathBuf,
    pub type_labels: PathBuf,
    pub questions: PathBuf,
    pub dep_paths: Option<PathBuf>,
    /// Optional `word v1 … vm` embedding file for the word table.
    pub word_vectors: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub inputs: InputPaths,
    pub output_dir: PathBuf,
    pub folds: FoldConfig,
    pub systems: Vec<System>,
    pub transe: TransEConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub lsa_rank: usize,
    pub human_eval_rows: usize,
}

const KEYS: &[&str] = &[
    "kb",
    "labels",
    "sentences",
    "first_sentences",
    "entity_types",
    "type_labels",
    "questions",
    "dep_paths",
    "word_vectors",
    "output_dir",
    "key",
    "folds",
    "min_group",
    "ratios",
    "seed",
    "systems",
    "transe_dim",
    "transe_epochs",
    "transe_margin",
    "transe_lr",
    "hc",
    "hd",
    "word_dim",
    "attn_dim",
    "vocab_size",
    "max_len",
    "beam",
    "init_scale",
    "epochs",
    "batch_size",
    "learning_rate",
    "lr_decay",
    "lr_floor",
    "clip",
    "validate_every",
    "lsa_rank",
    "human_eval_rows",
];

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(Error::Config(format!("line {}: unknown key {k:?}", i + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k:?}", i + 1)));
        }
    }
    Ok(out)
}

struct Values {
    map: BTreeMap<String, String>,
    base: PathBuf,
}

impl Values {
    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}"))),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.map.get(key).map(|v| self.base.join(v))
    }

    fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let v = Values {
            map: parse_kv(text)?,
            base: base.to_path_buf(),
        };
        let seed: u64 = v.get("seed", 0)?;
        let ratios: Vec<f64> = match v.map.get("ratios") {
            None => vec![0.7, 0.1, 0.2],
            Some(s) => s
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("invalid ratios {s:?}")))?,
        };
        let ratios: [f64; 3] = ratios
            .try_into()
            .map_err(|_| Error::Config("ratios needs three values".into()))?;
        if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("ratios must be non-negative and sum to 1".into()));
        }
        let systems = match v.map.get("systems") {
            None => System::ALL.to_vec(),
            Some(s) => s
                .split(',')
                .map(|x| x.trim().parse())
                .collect::<Result<Vec<System>>>()?,
        };
        if systems.is_empty() {
            return Err(Error::Config("no systems requested".into()));
        }
        let td = TransEConfig::default();
        let transe = TransEConfig {
            dim: v.get("transe_dim", td.dim)?,
            margin: v.get("transe_margin", td.margin)?,
            epochs: v.get("transe_epochs", td.epochs)?,
            learning_rate: v.get("transe_lr", td.learning_rate)?,
            seed,
            track_full_loss: false,
        };
        let md = ModelConfig::default();
        let model = ModelConfig {
            hk: transe.dim,
            hc: v.get("hc", md.hc)?,
            hd: v.get("hd", md.hd)?,
            word_dim: v.get("word_dim", md.word_dim)?,
            attn_dim: v.get("attn_dim", md.attn_dim)?,
            vocab_size: v.get("vocab_size", md.vocab_size)?,
            max_len: v.get("max_len", md.max_len)?,
            beam: v.get("beam", md.beam)?,
            seed,
            init_scale: v.get("init_scale", md.init_scale)?,
            use_contexts: true,
        };
        let tdflt = TrainConfig::default();
        let sd = LrSchedule::default();
        let train = TrainConfig {
            epochs: v.get("epochs", tdflt.epochs)?,
            batch_size: v.get("batch_size", tdflt.batch_size)?,
            schedule: LrSchedule {
                initial: v.get("learning_rate", sd.initial)?,
                decay: v.get("lr_decay", sd.decay)?,
                floor: v.get("lr_floor", sd.floor)?,
            },
            clip: v.get("clip", tdflt.clip)?,
            rms_decay: tdflt.rms_decay,
            rms_epsilon: tdflt.rms_epsilon,
            seed,
            validate_every: v.get("validate_every", tdflt.validate_every)?,
        };
        Ok(ExperimentConfig {
            inputs: InputPaths {
                kb: v.required_path("kb")?,
                labels: v.required_path("labels")?,
                sentences: v.required_path("sentences")?,
                first_sentences: v.required_path("first_sentences")?,
                entity_types: v.required_path("entity_types")?,
                type_labels: v.required_path("type_labels")?,
                questions: v.required_path("questions")?,
                dep_paths: v.path("dep_paths"),
                word_vectors: v.path("word_vectors"),
            },
            output_dir: v.path("output_dir").unwrap_or_else(|| base.join("out")),
            folds: FoldConfig {
                kind: v.get("key", KeyKind::Predicate)?,
                min_group: v.get("min_group", 50)?,
                ratios,
                n_folds: v.get("folds", 10)?,
                seed,
            },
            systems,
            transe,
            model,
            train,
            lsa_rank: v.get("lsa_rank", crate::baselines::LSA_MAX_RANK)?,
            human_eval_rows: v.get("human_eval_rows", 100)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::Config(format!("config file {} not found", path.display()))
            }
            _ => Error::Io(e),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Overrides the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.folds.seed = seed;
        self.transe.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
        self
    }
}
