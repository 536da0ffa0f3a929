//! Zero-shot folds: every value of the held-out key lands in exactly one of
//! train, valid or test.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{KeyKind, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldConfig {
    pub kind: KeyKind,
    pub min_group: usize,
    /// Train, valid, test.
    pub ratios: [f64; 3],
    pub n_folds: usize,
    pub seed: u64,
}

impl Default for FoldConfig {
    fn default() -> Self {
        FoldConfig {
            kind: KeyKind::Predicate,
            min_group: 50,
            ratios: [0.7, 0.1, 0.2],
            n_folds: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub id: usize,
    pub kind: KeyKind,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    /// Key values per split, sorted.
    pub keys: [Vec<String>; 3],
}

impl Fold {
    pub fn splits(&self) -> [&[usize]; 3] {
        [&self.train, &self.valid, &self.test]
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.valid.len(), self.test.len()]
    }
}

/// Assigns groups (given as sizes) to the three splits. Groups go largest
/// first; each picks at random, weighted by remaining deficit, among the
/// splits it fits into, or else the split with the largest deficit. The last
/// groups are forced into still-empty splits.
pub fn assign_groups(sizes: &[usize], ratios: [f64; 3], rng: &mut impl Rng) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let targets: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut filled = [0usize; 3];
    let mut count = [0usize; 3];
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.shuffle(rng);
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));
    let mut out = vec![0; sizes.len()];
    for (done, &g) in order.iter().enumerate() {
        let size = sizes[g] as f64;
        let deficit: Vec<f64> = (0..3).map(|i| targets[i] - filled[i] as f64).collect();
        let remaining = order.len() - done;
        let empty: Vec<usize> = (0..3).filter(|&i| count[i] == 0 && ratios[i] > 0.0).collect();
        let largest = |pool: &[usize]| {
            *pool
                .iter()
                .max_by(|&&a, &&b| deficit[a].total_cmp(&deficit[b]).then(b.cmp(&a)))
                .expect("non-empty pool")
        };
        let split = if !empty.is_empty() && remaining <= empty.len() {
            largest(&empty)
        } else {
            let fits: Vec<usize> = (0..3).filter(|&i| deficit[i] >= size).collect();
            if fits.is_empty() {
                largest(&[0, 1, 2])
            } else {
                let weight: f64 = fits.iter().map(|&i| deficit[i]).sum();
                let mut x = rng.gen::<f64>() * weight;
                let mut pick = *fits.last().expect("non-empty");
                for &i in &fits {
                    if x < deficit[i] {
                        pick = i;
                        break;
                    }
                    x -= deficit[i];
                }
                pick
            }
        };
        out[g] = split;
        filled[split] += sizes[g];
        count[split] += 1;
    }
    out
}

pub fn make_folds(samples: &[Sample], config: &FoldConfig) -> Result<Vec<Fold>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry(s.key(config.kind)).or_default().push(i);
    }
    let qualifying: Vec<(&str, Vec<usize>)> = groups
        .into_iter()
        .filter(|(_, ids)| ids.len() >= config.min_group)
        .collect();
    if qualifying.len() < 3 {
        return Err(Error::domain(format!(
            "{} {} groups have at least {} samples; need 3",
            qualifying.len(),
            config.kind,
            config.min_group
        )));
    }
    let sizes: Vec<usize> = qualifying.iter().map(|(_, ids)| ids.len()).collect();
    Ok((0..config.n_folds)
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(id as u64);
            let assignment = assign_groups(&sizes, config.ratios, &mut rng);
            let mut splits: [Vec<usize>; 3] = Default::default();
            let mut keys: [Vec<String>; 3] = Default::default();
            for ((key, ids), &split) in qualifying.iter().zip(&assignment) {
                splits[split].extend_from_slice(ids);
                keys[split].push(key.to_string());
            }
            for s in &mut splits {
                s.sort_unstable();
            }
            let [train, valid, test] = splits;
            Fold {
                id,
                kind: config.kind,
                train,
                valid,
                test,
                keys,
            }
        })
        .collect())
}
