//! KB symbol vocabulary and TransE embeddings (the frozen fact table).

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Triple {
    pub fn new(s: impl Into<String>, p: impl Into<String>, o: impl Into<String>) -> Self {
        Triple {
            subject: s.into(),
            predicate: p.into(),
            object: o.into(),
        }
    }

    /// `s|p|o`, used to key dependency paths and folds.
    pub fn key(&self) -> String {
        format!("{}|{}|{}", self.subject, self.predicate, self.object)
    }
}

/// Reads `subject<TAB>predicate<TAB>object` lines; blank lines are skipped.
pub fn parse_triples(text: &str) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 || cols.iter().any(|c| c.is_empty()) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 3 tab-separated columns, got {}", cols.len()),
            });
        }
        out.push(Triple::new(cols[0], cols[1], cols[2]));
    }
    Ok(out)
}

pub fn write_triples(triples: &[Triple]) -> String {
    triples
        .iter()
        .map(|t| format!("{}\t{}\t{}\n", t.subject, t.predicate, t.object))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolTable {
    symbols: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl SymbolTable {
    fn from_symbols(symbols: Vec<String>) -> Self {
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        SymbolTable { symbols, index }
    }

    fn intern(&mut self, s: &str) -> usize {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        self.symbols.push(s.to_string());
        self.index.insert(s.to_string(), self.symbols.len() - 1);
        self.symbols.len() - 1
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

/// Dense ids for entities and predicates, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "KbRepr", into = "KbRepr")]
pub struct KbVocabulary {
    pub entities: SymbolTable,
    pub predicates: SymbolTable,
}

#[derive(Serialize, Deserialize)]
struct KbRepr {
    entities: Vec<String>,
    predicates: Vec<String>,
}

impl From<KbRepr> for KbVocabulary {
    fn from(r: KbRepr) -> Self {
        KbVocabulary {
            entities: SymbolTable::from_symbols(r.entities),
            predicates: SymbolTable::from_symbols(r.predicates),
        }
    }
}

impl From<KbVocabulary> for KbRepr {
    fn from(v: KbVocabulary) -> Self {
        KbRepr {
            entities: v.entities.symbols,
            predicates: v.predicates.symbols,
        }
    }
}

/// A triple resolved to ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TripleIds {
    pub s: usize,
    pub p: usize,
    pub o: usize,
}

impl KbVocabulary {
    pub fn build<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut v = KbVocabulary::default();
        for t in triples {
            v.entities.intern(&t.subject);
            v.predicates.intern(&t.predicate);
            v.entities.intern(&t.object);
        }
        v
    }

    /// Entities first, then predicates.
    pub fn size(&self) -> usize {
        self.entities.len() + self.predicates.len()
    }

    pub fn resolve(&self, t: &Triple) -> Result<TripleIds> {
        let entity = |s: &str| {
            self.entities
                .get(s)
                .ok_or_else(|| Error::Vocabulary(format!("unknown entity {s:?}")))
        };
        Ok(TripleIds {
            s: entity(&t.subject)?,
            p: self
                .predicates
                .get(&t.predicate)
                .ok_or_else(|| Error::Vocabulary(format!("unknown predicate {:?}", t.predicate)))?,
            o: entity(&t.object)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransEConfig {
    pub dim: usize,
    pub margin: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Record the full filtered hinge loss after every epoch (costs one pass
    /// over all corruptions).
    #[serde(default)]
    pub track_full_loss: bool,
}

impl Default for TransEConfig {
    fn default() -> Self {
        TransEConfig {
            dim: 200,
            margin: 1.0,
            epochs: 200,
            learning_rate: 0.01,
            seed: 0,
            track_full_loss: false,
        }
    }
}

/// One `K × H_k` table: entity rows `0..E`, predicate rows `E..E+P`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransEModel {
    pub vocab: KbVocabulary,
    pub table: Tensor,
}

/// Per-epoch statistics from [`TransEModel::train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// Hinge loss over the sampled corruptions, before the epoch's updates.
    pub sampled_loss: Vec<f64>,
    /// Mean hinge loss over every filtered corruption, after the epoch; empty
    /// unless `track_full_loss` is set.
    pub full_loss: Vec<f64>,
}

const MAX_RESAMPLE: usize = 64;

/// L2 distance `‖e_s + e_p − e_o‖` and the residual vector.
fn residual(table: &Tensor, s: usize, p: usize, o: usize) -> (f64, Vec<f64>) {
    let r: Vec<f64> = table
        .row(s)
        .iter()
        .zip(table.row(p))
        .zip(table.row(o))
        .map(|((a, b), c)| a + b - c)
        .collect();
    let d = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    (d, r)
}

fn normalize_rows(table: &mut Tensor, rows: std::ops::Range<usize>) {
    for i in rows {
        let row = table.row_mut(i);
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            row.iter_mut().for_each(|x| *x /= n);
        }
    }
}

impl TransEModel {
    /// Uniform `±6/√H_k` init; every row starts at unit norm.
    pub fn init(vocab: KbVocabulary, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("embedding dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = vocab.size();
        if k == 0 {
            return Err(Error::domain("empty KB vocabulary"));
        }
        let mut table = Tensor::uniform(&[k, dim], 6.0 / (dim as f64).sqrt(), &mut rng);
        normalize_rows(&mut table, 0..k);
        Ok(TransEModel { vocab, table })
    }

    pub fn from_parts(vocab: KbVocabulary, table: Tensor) -> Result<Self> {
        if table.shape().len() != 2 || table.rows() != vocab.size() {
            return Err(Error::dim(
                "transe table",
                &[vocab.size()],
                &[table.shape()[0]],
            ));
        }
        Ok(TransEModel { vocab, table })
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    fn n_entities(&self) -> usize {
        self.vocab.entities.len()
    }

    fn check(&self, ids: TripleIds) -> Result<()> {
        let e = self.n_entities();
        if ids.s >= e {
            return Err(Error::Vocabulary(format!(
                "entity id {} out of range {e}",
                ids.s
            )));
        }
        if ids.o >= e {
            return Err(Error::Vocabulary(format!(
                "entity id {} out of range {e}",
                ids.o
            )));
        }
        if ids.p >= self.vocab.predicates.len() {
            return Err(Error::Vocabulary(format!(
                "predicate id {} out of range",
                ids.p
            )));
        }
        Ok(())
    }

    /// `‖e_s + e_p − e_o‖₂`; lower is more plausible.
    pub fn score(&self, ids: TripleIds) -> Result<f64> {
        self.check(ids)?;
        Ok(residual(&self.table, ids.s, self.n_entities() + ids.p, ids.o).0)
    }

    pub fn entity(&self, symbol: &str) -> Result<&[f64]> {
        let i = self
            .vocab
            .entities
            .get(symbol)
            .ok_or_else(|| Error::Vocabulary(format!("unknown entity {symbol:?}")))?;
        Ok(self.table.row(i))
    }

    pub fn predicate(&self, symbol: &str) -> Result<&[f64]> {
        let i = self
            .vocab
            .predicates
            .get(symbol)
            .ok_or_else(|| Error::Vocabulary(format!("unknown predicate {symbol:?}")))?;
        Ok(self.table.row(self.n_entities() + i))
    }

    /// `(h_s, h_p, h_o)` rows for a fact.
    pub fn lookup_fact(&self, t: &Triple) -> Result<[&[f64]; 3]> {
        Ok([
            self.entity(&t.subject)?,
            self.predicate(&t.predicate)?,
            self.entity(&t.object)?,
        ])
    }

    /// `[h_s; h_p; h_o]`.
    pub fn fact_vector(&self, t: &Triple) -> Result<Vec<f64>> {
        Ok(self.lookup_fact(t)?.concat())
    }

    /// SGD on `max(0, γ + d(s,p,o) − d(s',p,o'))`, one filtered corruption of
    /// the head or tail per triple per epoch. Entity rows are renormalised
    /// after every epoch.
    pub fn train(triples: &[Triple], config: &TransEConfig) -> Result<(Self, TrainLog)> {
        if triples.is_empty() {
            return Err(Error::domain("TransE needs at least one triple"));
        }
        if config.margin <= 0.0 || config.learning_rate <= 0.0 {
            return Err(Error::domain("margin and learning rate must be positive"));
        }
        let vocab = KbVocabulary::build(triples);
        let mut model = Self::init(vocab, config.dim, config.seed)?;
        let ids: Vec<TripleIds> = triples
            .iter()
            .map(|t| model.vocab.resolve(t))
            .collect::<Result<_>>()?;
        let log = model.fit(&ids, config)?;
        Ok((model, log))
    }

    /// Continues training on already-resolved ids.
    pub fn fit(&mut self, ids: &[TripleIds], config: &TransEConfig) -> Result<TrainLog> {
        for &t in ids {
            self.check(t)?;
        }
        let known: HashSet<TripleIds> = ids.iter().copied().collect();
        let n_ent = self.n_entities();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_616e_7365);
        let mut order: Vec<usize> = (0..ids.len()).collect();
        let mut log = TrainLog {
            sampled_loss: Vec::with_capacity(config.epochs),
            full_loss: Vec::with_capacity(config.epochs),
        };
        let lr = config.learning_rate;
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for &i in &order {
                let pos = ids[i];
                let Some(neg) = corrupt(pos, n_ent, &known, &mut rng) else {
                    continue;
                };
                let p_row = n_ent + pos.p;
                let (d_pos, r_pos) = residual(&self.table, pos.s, p_row, pos.o);
                let (d_neg, r_neg) = residual(&self.table, neg.s, p_row, neg.o);
                let loss = config.margin + d_pos - d_neg;
                if loss <= 0.0 {
                    continue;
                }
                epoch_loss += loss;
                // d‖r‖/dr = r/‖r‖; the positive residual is pushed down, the negative up
                let g_pos: Vec<f64> = unit(&r_pos);
                let g_neg: Vec<f64> = unit(&r_neg);
                for (row, sign, g) in [
                    (pos.s, 1.0, &g_pos),
                    (p_row, 1.0, &g_pos),
                    (pos.o, -1.0, &g_pos),
                    (neg.s, -1.0, &g_neg),
                    (p_row, -1.0, &g_neg),
                    (neg.o, 1.0, &g_neg),
                ] {
                    for (w, gi) in self.table.row_mut(row).iter_mut().zip(g.iter()) {
                        *w -= lr * sign * gi;
                    }
                }
            }
            normalize_rows(&mut self.table, 0..n_ent);
            log.sampled_loss.push(epoch_loss);
            if config.track_full_loss {
                log.full_loss
                    .push(self.full_hinge_loss(ids, &known, config.margin));
            }
        }
        Ok(log)
    }

    /// Mean over all triples and all filtered head/tail corruptions.
    fn full_hinge_loss(&self, ids: &[TripleIds], known: &HashSet<TripleIds>, margin: f64) -> f64 {
        let n_ent = self.n_entities();
        let mut total = 0.0;
        let mut count = 0usize;
        for &t in ids {
            let d_pos = residual(&self.table, t.s, n_ent + t.p, t.o).0;
            for e in 0..n_ent {
                for cand in [TripleIds { s: e, ..t }, TripleIds { o: e, ..t }] {
                    if known.contains(&cand) {
                        continue;
                    }
                    let d_neg = residual(&self.table, cand.s, n_ent + t.p, cand.o).0;
                    total += (margin + d_pos - d_neg).max(0.0);
                    count += 1;
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    /// Filtered rank of each true object among all entities, averaged.
    pub fn mean_filtered_rank(&self, ids: &[TripleIds]) -> Result<f64> {
        if ids.is_empty() {
            return Err(Error::domain("no triples to rank"));
        }
        let known: HashSet<TripleIds> = ids.iter().copied().collect();
        let mut sum = 0.0;
        for &t in ids {
            let d_true = self.score(t)?;
            let mut rank = 1usize;
            for e in 0..self.n_entities() {
                let cand = TripleIds { o: e, ..t };
                if e != t.o && !known.contains(&cand) && self.score(cand)? < d_true {
                    rank += 1;
                }
            }
            sum += rank as f64;
        }
        Ok(sum / ids.len() as f64)
    }
}

fn unit(r: &[f64]) -> Vec<f64> {
    let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        vec![0.0; r.len()]
    } else {
        r.iter().map(|x| x / n).collect()
    }
}

fn corrupt<R: Rng>(
    t: TripleIds,
    n_ent: usize,
    known: &HashSet<TripleIds>,
    rng: &mut R,
) -> Option<TripleIds> {
    for _ in 0..MAX_RESAMPLE {
        let e = rng.gen_range(0..n_ent);
        let cand = if rng.gen_bool(0.5) {
            TripleIds { s: e, ..t }
        } else {
            TripleIds { o: e, ..t }
        };
        if !known.contains(&cand) {
            return Some(cand);
        }
    }
    None
}
