//! Tokenisation, part-of-speech tags and the shared word vocabulary.

mod tagger;
mod vocab;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use tagger::{parse_conll, write_conll, LexiconTagger, PretaggedTagger, Tagger};
pub use vocab::{Vocabulary, EOS, PAD, SOS, UNK};

use crate::error::Error;

pub const SUBJECT_MARKER: &str = "[S]";
pub const OBJECT_MARKER: &str = "[O]";

pub fn is_marker(token: &str) -> bool {
    token == SUBJECT_MARKER || token == OBJECT_MARKER
}

/// Bracketed upper-case placeholders (`[S]`, `[C1_NOUN_2]`, ...).
pub fn is_placeholder(token: &str) -> bool {
    token.len() > 2
        && token.starts_with('[')
        && token.ends_with(']')
        && token[1..token.len() - 1]
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

fn token_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"\[[A-Z][A-Z0-9_]*\]|\w+|[^\w\s]").expect("valid regex"))
}

/// Word/punctuation tokenizer with `\w+|[^\w\s]` semantics. Placeholders
/// such as `[S]` or `[C1_NOUN]` survive as single tokens; everything else is
/// lower-cased.
pub fn tokenize(text: &str) -> Vec<String> {
    token_pattern()
        .find_iter(text)
        .map(|m| {
            let tok = m.as_str();
            if is_placeholder(tok) {
                tok.to_string()
            } else {
                tok.to_lowercase()
            }
        })
        .collect()
}

/// Universal POS tags plus `Marker` for the `[S]`/`[O]` slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PosTag {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
    Marker,
}

impl PosTag {
    /// The 17 Universal POS tags (excludes `Marker`).
    pub const UNIVERSAL: [PosTag; 17] = [
        PosTag::Adj,
        PosTag::Adp,
        PosTag::Adv,
        PosTag::Aux,
        PosTag::Cconj,
        PosTag::Det,
        PosTag::Intj,
        PosTag::Noun,
        PosTag::Num,
        PosTag::Part,
        PosTag::Pron,
        PosTag::Propn,
        PosTag::Punct,
        PosTag::Sconj,
        PosTag::Sym,
        PosTag::Verb,
        PosTag::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Adj => "ADJ",
            PosTag::Adp => "ADP",
            PosTag::Adv => "ADV",
            PosTag::Aux => "AUX",
            PosTag::Cconj => "CCONJ",
            PosTag::Det => "DET",
            PosTag::Intj => "INTJ",
            PosTag::Noun => "NOUN",
            PosTag::Num => "NUM",
            PosTag::Part => "PART",
            PosTag::Pron => "PRON",
            PosTag::Propn => "PROPN",
            PosTag::Punct => "PUNCT",
            PosTag::Sconj => "SCONJ",
            PosTag::Sym => "SYM",
            PosTag::Verb => "VERB",
            PosTag::X => "X",
            PosTag::Marker => "MARKER",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PosTag::UNIVERSAL
            .iter()
            .copied()
            .chain(std::iter::once(PosTag::Marker))
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Vocabulary(format!("unknown POS tag {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaggedToken {
    pub surface: String,
    pub upos: PosTag,
}

impl TaggedToken {
    pub fn new(surface: impl Into<String>, upos: PosTag) -> Self {
        TaggedToken {
            surface: surface.into(),
            upos,
        }
    }
}

/// Tags `tokens`, forcing `[S]`/`[O]` to `Marker` whatever the tagger says.
pub fn pos_tag(tagger: &dyn Tagger, tokens: &[String]) -> Vec<TaggedToken> {
    tagger
        .tag(tokens)
        .into_iter()
        .map(|mut t| {
            if is_marker(&t.surface) {
                t.upos = PosTag::Marker;
            }
            t
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("What is X?"), toks(&["what", "is", "x", "?"]));
        assert_eq!(
            tokenize("[S] death by [O]"),
            toks(&["[S]", "death", "by", "[O]"])
        );
        assert_eq!(tokenize("3.5-inch"), toks(&["3", ".", "5", "-", "inch"]));
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(
            tokenize("the [C1_NOUN] of [C3_NOUN_2]"),
            toks(&["the", "[C1_NOUN]", "of", "[C3_NOUN_2]"])
        );
        // lower-case brackets are not placeholders
        assert_eq!(tokenize("[s]"), toks(&["[", "s", "]"]));
        assert_eq!(tokenize("Philvéron's"), toks(&["philvéron", "'", "s"]));
    }

    #[test]
    fn tokenize_is_idempotent_on_rejoined_output() {
        for text in [
            "Where can 5260 Philvéron be found?",
            "[S] was born in [O], 1901.",
        ] {
            let once = tokenize(text);
            assert_eq!(tokenize(&once.join(" ")), once);
        }
    }

    #[test]
    fn tag_round_trips_through_strings() {
        for t in PosTag::UNIVERSAL.iter().chain([PosTag::Marker].iter()) {
            assert_eq!(t.as_str().parse::<PosTag>().unwrap(), *t);
        }
        assert!("NOUNS".parse::<PosTag>().is_err());
    }
}
