//! Retrieval baselines: SELECT, R-TransE and TF-IDF/LSA IR. Each returns a
//! training question in placeholder form (`[S]` still unfilled).

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::copy::{deannotate, ContextMaps};
use crate::dataset::{KeyKind, Sample};
use crate::error::{Error, Result};
use crate::kb::{TransEModel, Triple};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub fact: Triple,
    pub sub_type: String,
    pub obj_type: String,
    pub question: Vec<String>,
    pub annotated: Vec<String>,
}

impl IndexEntry {
    pub fn from_sample(s: &Sample) -> Self {
        IndexEntry {
            fact: s.triple(),
            sub_type: s.sub_type.clone(),
            obj_type: s.obj_type.clone(),
            question: s.placeholder_question(),
            annotated: s.annotated_tokens(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Raw,
    Copy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Retrieved {
    /// Index entry used, `None` for the frequency fallback.
    pub entry: Option<usize>,
    pub question: Vec<String>,
    pub fallback: bool,
}

fn realize_variant(entry: &IndexEntry, variant: Variant, maps: Option<&ContextMaps>) -> Vec<String> {
    match (variant, maps) {
        (Variant::Copy, Some(maps)) => deannotate(&entry.annotated, maps).tokens,
        _ => entry.question.clone(),
    }
}

/// SELECT: a random training question among facts sharing the answer type
/// (predicate folds) or the predicate (type folds).
pub fn select_baseline(
    query: &IndexEntry,
    train: &[IndexEntry],
    setup: KeyKind,
    rng: &mut impl Rng,
) -> Result<Vec<String>> {
    if train.is_empty() {
        return Err(Error::domain("select baseline needs a non-empty training set"));
    }
    let pool: Vec<&IndexEntry> = train
        .iter()
        .filter(|e| match setup {
            KeyKind::Predicate => e.obj_type == query.obj_type,
            KeyKind::SubType | KeyKind::ObjType => e.fact.predicate == query.fact.predicate,
        })
        .collect();
    let pick = if pool.is_empty() {
        &train[rng.gen_range(0..train.len())]
    } else {
        pool[rng.gen_range(0..pool.len())]
    };
    Ok(pick.question.clone())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Index of the row with the highest cosine to `query`; first wins ties.
/// Rows of zero norm score 0.
pub fn nearest_cosine(query: &[f64], rows: &[Vec<f64>]) -> Option<(usize, f64)> {
    let qn = norm(query);
    if qn == 0.0 {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rows.iter().enumerate() {
        let rn = norm(r);
        let c = if rn == 0.0 { 0.0 } else { dot(query, r) / (qn * rn) };
        if best.map_or(true, |(_, b)| c > b) {
            best = Some((i, c));
        }
    }
    best
}

/// Smooth-idf TF-IDF with raw term counts and L2-normalized rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdf {
    pub terms: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
}

impl TfIdf {
    pub fn fit(docs: &[Vec<String>]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for d in docs {
            let mut seen: Vec<&String> = d.iter().collect();
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let idf = df
            .values()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        let terms = df.into_keys().enumerate().map(|(i, t)| (t, i)).collect();
        TfIdf { terms, idf }
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }

    /// Unknown terms are ignored; a document with none known maps to zeros.
    pub fn transform(&self, doc: &[String]) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        for t in doc {
            if let Some(&i) = self.terms.get(t) {
                v[i] += 1.0;
            }
        }
        for (x, idf) in v.iter_mut().zip(&self.idf) {
            *x *= idf;
        }
        let n = norm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        v
    }
}

/// Truncated SVD of a dense document-term matrix: the top right singular
/// vectors, by power iteration with deflation on the smaller of `XᵀX` and
/// `XXᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lsa {
    pub components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
}

const POWER_ITERS: usize = 1000;
const POWER_TOL: f64 = 1e-12;

/// Leading eigenpairs of a symmetric PSD matrix (row-major `k×k`).
fn top_eigen(gram: &[f64], k: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, Vec<f64>)> {
    let matvec = |v: &[f64]| -> Vec<f64> { (0..k).map(|i| dot(&gram[i * k..(i + 1) * k], v)).collect() };
    let orthogonalize = |v: &mut Vec<f64>, found: &[(f64, Vec<f64>)]| {
        for (_, b) in found {
            let a = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= a * y);
        }
    };
    let mut found: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut top = 0.0;
    for _ in 0..count.min(k) {
        let mut v: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, &found);
        let n = norm(&v);
        if n == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= n);
        let mut lambda = 0.0;
        for _ in 0..POWER_ITERS {
            let mut w = matvec(&v);
            orthogonalize(&mut w, &found);
            lambda = norm(&w);
            if lambda == 0.0 {
                break;
            }
            w.iter_mut().for_each(|x| *x /= lambda);
            let delta = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = w;
            if delta < POWER_TOL {
                break;
            }
        }
        if found.is_empty() {
            top = lambda;
        }
        if lambda == 0.0 || lambda <= 1e-10 * top {
            break;
        }
        found.push((lambda, v));
    }
    found
}

impl Lsa {
    pub fn fit(rows: &[Vec<f64>], rank: usize, seed: u64) -> Self {
        let n = rows.len();
        let f = rows.first().map_or(0, Vec::len);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Lsa {
            components: Vec::new(),
            singular_values: Vec::new(),
        };
        if f <= n {
            let mut gram = vec![0.0; f * f];
            for r in rows {
                for (i, &a) in r.iter().enumerate().filter(|(_, a)| **a != 0.0) {
                    let row = &mut gram[i * f..(i + 1) * f];
                    row.iter_mut().zip(r).for_each(|(g, b)| *g += a * b);
                }
            }
            for (lambda, v) in top_eigen(&gram, f, rank, &mut rng) {
                out.singular_values.push(lambda.sqrt());
                out.components.push(v);
            }
        } else {
            let mut gram = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    gram[i * n + j] = dot(&rows[i], &rows[j]);
                }
            }
            for (lambda, u) in top_eigen(&gram, n, rank, &mut rng) {
                let sigma = lambda.sqrt();
                let mut v = vec![0.0; f];
                for (r, &a) in rows.iter().zip(&u) {
                    v.iter_mut().zip(r).for_each(|(x, y)| *x += a * y / sigma);
                }
                out.singular_values.push(sigma);
                out.components.push(v);
            }
        }
        out
    }

    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| dot(c, v)).collect()
    }
}

pub const LSA_MAX_RANK: usize = 300;

pub fn lsa_rank(features: usize, documents: usize) -> usize {
    LSA_MAX_RANK
        .min(features.saturating_sub(1))
        .min(documents.saturating_sub(1))
        .max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalIndex {
    pub entries: Vec<IndexEntry>,
    pub fact_vectors: Vec<Vec<f64>>,
    pub tfidf: TfIdf,
    pub lsa: Lsa,
    pub doc_vectors: Vec<Vec<f64>>,
    /// Most frequent training question, for empty IR queries.
    pub fallback: Vec<String>,
}

impl RetrievalIndex {
    pub fn build(
        entries: Vec<IndexEntry>,
        transe: &TransEModel,
        max_rank: usize,
        seed: u64,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::domain("retrieval index needs training samples"));
        }
        let fact_vectors = entries
            .iter()
            .map(|e| transe.fact_vector(&e.fact))
            .collect::<Result<Vec<_>>>()?;
        let docs: Vec<Vec<String>> = entries.iter().map(|e| e.question.clone()).collect();
        let tfidf = TfIdf::fit(&docs);
        let rows: Vec<Vec<f64>> = docs.iter().map(|d| tfidf.transform(d)).collect();
        let rank = lsa_rank(tfidf.len(), rows.len()).min(max_rank);
        let lsa = Lsa::fit(&rows, rank, seed);
        let doc_vectors = rows.iter().map(|r| lsa.project(r)).collect();
        let mut freq: HashMap<&Vec<String>, usize> = HashMap::new();
        for d in &docs {
            *freq.entry(d).or_default() += 1;
        }
        let fallback = freq
            .into_iter()
            .min_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)))
            .map(|(d, _)| d.clone())
            .expect("non-empty");
        Ok(RetrievalIndex {
            entries,
            fact_vectors,
            tfidf,
            lsa,
            doc_vectors,
            fallback,
        })
    }

    /// Nearest training fact by cosine over `[e_s; e_p; e_o]`.
    pub fn r_transe(
        &self,
        fact: &Triple,
        transe: &TransEModel,
        variant: Variant,
        maps: Option<&ContextMaps>,
    ) -> Result<Retrieved> {
        let q = transe.fact_vector(fact)?;
        let (i, _) = nearest_cosine(&q, &self.fact_vectors)
            .ok_or_else(|| Error::Retrieval(format!("zero-norm TransE query for {}", fact.key())))?;
        Ok(Retrieved {
            entry: Some(i),
            question: realize_variant(&self.entries[i], variant, maps),
            fallback: false,
        })
    }

    /// Nearest training question to the concatenated contexts in LSA space.
    pub fn ir(
        &self,
        context_tokens: &[String],
        variant: Variant,
        maps: Option<&ContextMaps>,
    ) -> Retrieved {
        let q = self.lsa.project(&self.tfidf.transform(context_tokens));
        match nearest_cosine(&q, &self.doc_vectors) {
            Some((i, _)) => Retrieved {
                entry: Some(i),
                question: realize_variant(&self.entries[i], variant, maps),
                fallback: false,
            },
            None => Retrieved {
                entry: None,
                question: self.fallback.clone(),
                fallback: true,
            },
        }
    }
}
