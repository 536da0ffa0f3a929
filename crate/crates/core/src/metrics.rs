//! BLEU-1..4, ROUGE-L and an exact+stem METEOR variant (`meteor_lite`).
//!
//! All scores are in `[0, 1]`; reports render them ×100.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROUGE_BETA: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BleuLevel {
    Corpus,
    /// Add-one smoothing on n ≥ 2 precisions.
    Sentence,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// `(clipped matches, candidate n-gram count)` for one pair.
fn clipped_matches(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matched = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

fn bleu_from_stats(
    matches: &[usize],
    totals: &[usize],
    cand_len: usize,
    ref_len: usize,
    smooth: bool,
) -> f64 {
    if cand_len == 0 {
        return 0.0;
    }
    let max_n = matches.len();
    let mut log_sum = 0.0;
    for n in 0..max_n {
        let (m, t) = if smooth && n > 0 {
            (matches[n] as f64 + 1.0, totals[n] as f64 + 1.0)
        } else {
            (matches[n] as f64, totals[n] as f64)
        };
        if m == 0.0 || t == 0.0 {
            return 0.0;
        }
        log_sum += (m / t).ln();
    }
    let bp = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    bp * (log_sum / max_n as f64).exp()
}

/// BLEU with uniform weights over `1..=max_n`, one reference per candidate.
///
/// `Corpus` pools n-gram statistics over all pairs; `Sentence` averages the
/// smoothed per-pair scores.
pub fn bleu(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    max_n: usize,
    level: BleuLevel,
) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::dim("bleu", &[references.len()], &[candidates.len()]));
    }
    if max_n == 0 {
        return Err(Error::domain("bleu needs max_n >= 1"));
    }
    if candidates.is_empty() {
        return Ok(0.0);
    }
    match level {
        BleuLevel::Corpus => {
            let mut matches = vec![0; max_n];
            let mut totals = vec![0; max_n];
            let (mut c, mut r) = (0, 0);
            for (cand, reference) in candidates.iter().zip(references) {
                for n in 1..=max_n {
                    let (m, t) = clipped_matches(cand, reference, n);
                    matches[n - 1] += m;
                    totals[n - 1] += t;
                }
                c += cand.len();
                r += reference.len();
            }
            Ok(bleu_from_stats(&matches, &totals, c, r, false))
        }
        BleuLevel::Sentence => {
            let sum: f64 = candidates
                .iter()
                .zip(references)
                .map(|(c, r)| sentence_bleu(c, r, max_n))
                .sum();
            Ok(sum / candidates.len() as f64)
        }
    }
}

pub fn sentence_bleu(candidate: &[String], reference: &[String], max_n: usize) -> f64 {
    let (matches, totals): (Vec<usize>, Vec<usize>) = (1..=max_n)
        .map(|n| clipped_matches(candidate, reference, n))
        .unzip();
    bleu_from_stats(&matches, &totals, candidate.len(), reference.len(), true)
}

/// Length of the longest common subsequence.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with β = 1.2.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> f64 {
    if reference.is_empty() || candidate.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(candidate, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

const STEM_SUFFIXES: &[&str] = &["ingly", "edly", "ing", "ed", "es", "ly", "er", "est", "s"];

/// Strips one common English suffix, keeping a stem of at least 3 chars.
pub fn crude_stem(word: &str) -> &str {
    for s in STEM_SUFFIXES {
        if let Some(stem) = word.strip_suffix(s) {
            if stem.chars().count() >= 3 {
                return stem;
            }
        }
    }
    word
}

/// Aligns candidate to reference positions: exact matches first, then stem
/// matches among the leftovers. Within each stage a candidate token prefers
/// the reference position right after the previous alignment.
fn meteor_alignment(candidate: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut ref_used = vec![false; reference.len()];
    let mut cand_map: Vec<Option<usize>> = vec![None; candidate.len()];
    let stages: [fn(&str, &str) -> bool; 2] =
        [|a, b| a == b, |a, b| crude_stem(a) == crude_stem(b)];
    for same in stages {
        for i in 0..candidate.len() {
            if cand_map[i].is_some() {
                continue;
            }
            let prev = (0..i).rev().find_map(|k| cand_map[k]);
            let preferred = prev.map(|p| p + 1);
            let pick = preferred
                .filter(|&j| {
                    j < reference.len() && !ref_used[j] && same(&candidate[i], &reference[j])
                })
                .or_else(|| {
                    (0..reference.len())
                        .find(|&j| !ref_used[j] && same(&candidate[i], &reference[j]))
                });
            if let Some(j) = pick {
                ref_used[j] = true;
                cand_map[i] = Some(j);
            }
        }
    }
    cand_map
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect()
}

/// METEOR without synonym matching: `F_mean = 10PR/(R+9P)`, fragmentation
/// penalty `0.5 (chunks/matches)^3`.
pub fn meteor_lite(candidate: &[String], reference: &[String]) -> f64 {
    let alignment = meteor_alignment(candidate, reference);
    let matches = alignment.len();
    if matches == 0 {
        return 0.0;
    }
    let mut chunks = 1;
    for w in alignment.windows(2) {
        let ((ci, ri), (cj, rj)) = (w[0], w[1]);
        if cj != ci + 1 || rj != ri + 1 {
            chunks += 1;
        }
    }
    let m = matches as f64;
    let p = m / candidate.len() as f64;
    let r = m / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    f_mean * (1.0 - penalty)
}

/// One system's scores on one fold.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricRow {
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    pub meteor_lite: f64,
}

impl MetricRow {
    pub const COLUMNS: [&'static str; 6] = [
        "BLEU-1",
        "BLEU-2",
        "BLEU-3",
        "BLEU-4",
        "ROUGE_L",
        "METEOR_lite",
    ];

    pub fn values(&self) -> [f64; 6] {
        [
            self.bleu[0],
            self.bleu[1],
            self.bleu[2],
            self.bleu[3],
            self.rouge_l,
            self.meteor_lite,
        ]
    }

    fn from_values(v: [f64; 6]) -> Self {
        MetricRow {
            bleu: [v[0], v[1], v[2], v[3]],
            rouge_l: v[4],
            meteor_lite: v[5],
        }
    }
}

/// Corpus BLEU-1..4 plus mean sentence ROUGE-L and METEOR-lite.
pub fn score_corpus(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<MetricRow> {
    let mut bleus = [0.0; 4];
    for (n, b) in bleus.iter_mut().enumerate() {
        *b = bleu(candidates, references, n + 1, BleuLevel::Corpus)?;
    }
    let count = candidates.len().max(1) as f64;
    let rouge = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| rouge_l(c, r))
        .sum::<f64>()
        / count;
    let meteor = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| meteor_lite(c, r))
        .sum::<f64>()
        / count;
    Ok(MetricRow {
        bleu: bleus,
        rouge_l: rouge,
        meteor_lite: meteor,
    })
}

/// Mean and population standard deviation across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: MetricRow,
    pub std: MetricRow,
    pub folds: Vec<MetricRow>,
}

pub fn aggregate(folds: &[MetricRow]) -> Result<Aggregate> {
    if folds.is_empty() {
        return Err(Error::domain("aggregate needs at least one fold"));
    }
    let n = folds.len() as f64;
    let mut mean = [0.0; 6];
    for f in folds {
        for (m, v) in mean.iter_mut().zip(f.values()) {
            *m += v / n;
        }
    }
    let mut var = [0.0; 6];
    for f in folds {
        for ((s, v), m) in var.iter_mut().zip(f.values()).zip(mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    Ok(Aggregate {
        mean: MetricRow::from_values(mean),
        std: MetricRow::from_values(var.map(f64::sqrt)),
        folds: folds.to_vec(),
    })
}
