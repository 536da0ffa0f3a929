use std::collections::HashMap;

use super::{is_marker, is_placeholder, PosTag, TaggedToken};
use crate::error::{Error, Result};

pub trait Tagger: Send + Sync {
    fn tag(&self, tokens: &[String]) -> Vec<TaggedToken>;
}

const DET: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "each", "every", "some", "any", "no",
    "all", "both", "either", "neither", "another",
];
const PRON: &[&str] = &[
    "i",
    "you",
    "he",
    "she",
    "it",
    "we",
    "they",
    "me",
    "him",
    "her",
    "us",
    "them",
    "my",
    "your",
    "his",
    "its",
    "our",
    "their",
    "mine",
    "yours",
    "ours",
    "theirs",
    "myself",
    "himself",
    "herself",
    "itself",
    "themselves",
    "what",
    "who",
    "whom",
    "whose",
    "which",
];
const ADP: &[&str] = &[
    "of", "in", "on", "at", "by", "for", "with", "from", "to", "into", "onto", "upon", "about",
    "above", "below", "under", "over", "between", "among", "through", "during", "before", "after",
    "against", "without", "within", "along", "across", "behind", "beyond", "near", "toward",
    "towards", "via", "per", "like", "than", "as",
];
const AUX: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "being", "am", "do", "does", "did", "have", "has",
    "had", "will", "would", "shall", "should", "can", "could", "may", "might", "must",
];
const CCONJ: &[&str] = &["and", "or", "but", "nor", "yet"];
const SCONJ: &[&str] = &[
    "if", "because", "while", "although", "though", "unless", "since", "whether",
];
const PART: &[&str] = &["not", "n't", "'s"];
const ADV: &[&str] = &[
    "very", "also", "just", "only", "too", "where", "when", "how", "why", "then", "there", "here",
    "never", "always", "often", "again", "still", "already", "so",
];
const INTJ: &[&str] = &["oh", "yes", "hello", "wow"];
const NUM: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "hundred", "thousand", "million",
];
const VERB: &[&str] = &[
    "born",
    "became",
    "become",
    "becomes",
    "caused",
    "cause",
    "causes",
    "made",
    "make",
    "makes",
    "known",
    "called",
    "wrote",
    "written",
    "write",
    "writes",
    "contains",
    "contain",
    "includes",
    "include",
    "spoken",
    "speak",
    "speaks",
    "found",
    "founded",
    "find",
    "lives",
    "live",
    "died",
    "die",
    "plays",
    "play",
    "sing",
    "sings",
    "sang",
    "won",
    "win",
    "wins",
    "held",
    "hold",
    "holds",
    "gave",
    "give",
    "gives",
    "took",
    "take",
    "takes",
    "increases",
    "increase",
    "leads",
    "lead",
    "led",
    "belongs",
    "belong",
    "originates",
    "flows",
    "flow",
    "runs",
    "run",
    "ran",
];
const ADJ_SUFFIXES: &[&str] = &[
    "ous", "ful", "ive", "able", "ible", "ical", "less", "ish", "al",
];

/// Closed-class lexicon plus suffix rules; unknown words default to `Noun`.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    lexicon: HashMap<&'static str, PosTag>,
}

impl Default for LexiconTagger {
    fn default() -> Self {
        let mut lexicon = HashMap::new();
        let groups: [(&[&str], PosTag); 11] = [
            (VERB, PosTag::Verb),
            (NUM, PosTag::Num),
            (INTJ, PosTag::Intj),
            (ADV, PosTag::Adv),
            (PART, PosTag::Part),
            (SCONJ, PosTag::Sconj),
            (CCONJ, PosTag::Cconj),
            (AUX, PosTag::Aux),
            (ADP, PosTag::Adp),
            (PRON, PosTag::Pron),
            (DET, PosTag::Det),
        ];
        // later groups win on overlap
        for (words, tag) in groups {
            for w in words {
                lexicon.insert(*w, tag);
            }
        }
        LexiconTagger { lexicon }
    }
}

impl LexiconTagger {
    pub fn tag_word(&self, word: &str) -> PosTag {
        if is_marker(word) {
            return PosTag::Marker;
        }
        if is_placeholder(word) {
            return PosTag::X;
        }
        if let Some(tag) = self.lexicon.get(word) {
            return *tag;
        }
        if word.chars().all(|c| !c.is_alphanumeric()) {
            return if word.chars().all(|c| "$%+=<>@#&*^~|".contains(c)) {
                PosTag::Sym
            } else {
                PosTag::Punct
            };
        }
        if word.chars().all(|c| c.is_ascii_digit()) {
            return PosTag::Num;
        }
        let n = word.chars().count();
        if n > 4 {
            if word.ends_with("ly") {
                return PosTag::Adv;
            }
            if word.ends_with("ing") || word.ends_with("ed") {
                return PosTag::Verb;
            }
            if ADJ_SUFFIXES.iter().any(|s| word.ends_with(s)) {
                return PosTag::Adj;
            }
        }
        PosTag::Noun
    }
}

impl Tagger for LexiconTagger {
    fn tag(&self, tokens: &[String]) -> Vec<TaggedToken> {
        tokens
            .iter()
            .map(|t| TaggedToken::new(t.clone(), self.tag_word(t)))
            .collect()
    }
}

/// Looks token sequences up in externally tagged sentences and falls back to
/// the lexicon tagger for anything it has not seen.
#[derive(Debug, Clone, Default)]
pub struct PretaggedTagger {
    sentences: HashMap<Vec<String>, Vec<PosTag>>,
    fallback: LexiconTagger,
}

impl PretaggedTagger {
    pub fn new(sentences: Vec<Vec<TaggedToken>>) -> Self {
        let mut map = HashMap::new();
        for s in sentences {
            let (words, tags): (Vec<String>, Vec<PosTag>) =
                s.into_iter().map(|t| (t.surface, t.upos)).unzip();
            map.entry(words).or_insert(tags);
        }
        PretaggedTagger {
            sentences: map,
            fallback: LexiconTagger::default(),
        }
    }

    pub fn from_conll(text: &str) -> Result<Self> {
        Ok(Self::new(parse_conll(text)?))
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

impl Tagger for PretaggedTagger {
    fn tag(&self, tokens: &[String]) -> Vec<TaggedToken> {
        match self.sentences.get(tokens) {
            Some(tags) => tokens
                .iter()
                .zip(tags)
                .map(|(w, t)| TaggedToken::new(w.clone(), *t))
                .collect(),
            None => self.fallback.tag(tokens),
        }
    }
}

/// Parses `surface<TAB>UPOS` lines, blank line between sentences.
pub fn parse_conll(text: &str) -> Result<Vec<Vec<TaggedToken>>> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let (surface, tag) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected surface<TAB>UPOS".into(),
        })?;
        if surface.is_empty() || tag.contains('\t') {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected exactly two non-empty columns".into(),
            });
        }
        let upos = tag.parse::<PosTag>().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("unknown UPOS tag {tag:?}"),
        })?;
        let surface = if is_placeholder(surface) {
            surface.to_string()
        } else {
            surface.to_lowercase()
        };
        current.push(TaggedToken::new(surface, upos));
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

/// Inverse of [`parse_conll`]: one token per line, sentences separated by a
/// single blank line.
pub fn write_conll(sentences: &[Vec<TaggedToken>]) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for t in s {
            out.push_str(&t.surface);
            out.push('\t');
            out.push_str(t.upos.as_str());
            out.push('\n');
        }
    }
    out
}
