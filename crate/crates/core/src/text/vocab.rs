use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{OBJECT_MARKER, SUBJECT_MARKER};
use crate::copy::CopyToken;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const SPECIALS: [&str; 6] = [
    "<pad>",
    "<s>",
    "</s>",
    "<unk>",
    SUBJECT_MARKER,
    OBJECT_MARKER,
];

/// Word ↔ id map. Ids `0..6` are the fixed specials, followed by the copy-token
/// inventory (when reserved) and then corpus words by descending frequency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    reserved: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    reserved: usize,
    words: Vec<String>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        Vocabulary::from_words(r.words, r.reserved)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            reserved: v.reserved,
            words: v.words,
        }
    }
}

impl Vocabulary {
    fn from_words(words: Vec<String>, reserved: usize) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary {
            words,
            index,
            reserved,
        }
    }

    fn reserved_words(copy_tokens: bool) -> Vec<String> {
        let mut words: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        if copy_tokens {
            words.extend(CopyToken::inventory().iter().map(CopyToken::as_token));
        }
        words
    }

    /// Keeps the `max_size − reserved` most frequent corpus words (ties broken
    /// lexicographically).
    pub fn build<'a, I>(corpus: I, max_size: usize, copy_tokens: bool) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut words = Self::reserved_words(copy_tokens);
        let reserved = words.len();
        if max_size <= reserved {
            return Err(Error::domain(format!(
                "vocabulary size {max_size} leaves no room beyond {reserved} reserved tokens"
            )));
        }
        let reserved_set: std::collections::HashSet<&str> =
            words.iter().map(String::as_str).collect();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for sentence in corpus {
            for w in sentence {
                if !reserved_set.contains(w.as_str()) {
                    *counts.entry(w.as_str()).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let extra: Vec<String> = ranked
            .into_iter()
            .take(max_size - reserved)
            .map(|(w, _)| w.to_string())
            .collect();
        words.extend(extra);
        Ok(Self::from_words(words, reserved))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn reserved(&self) -> usize {
        self.reserved
    }

    pub fn has_copy_tokens(&self) -> bool {
        self.reserved > SPECIALS.len()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn encode(&self, word: &str) -> usize {
        self.get(word).unwrap_or(UNK)
    }

    pub fn encode_all(&self, words: &[String]) -> Vec<usize> {
        words.iter().map(|w| self.encode(w)).collect()
    }

    pub fn decode(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}
