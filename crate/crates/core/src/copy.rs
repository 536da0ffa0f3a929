//! Part-of-speech copy actions.
//!
//! Every word of a textual context is replaced by a placeholder made of the
//! context slot and the word's POS tag (`C1_NOUN`, and `C1_NOUN_2` for the
//! second noun of the same context). Question words that also occur in a
//! context are rewritten to the same placeholder, so the decoder can emit
//! them without having them in its vocabulary. After generation the
//! placeholders are mapped back to the words of the input fact's contexts.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{is_placeholder, PosTag, TaggedToken};

/// Highest occurrence index reserved in the vocabulary.
pub const MAX_REPEAT: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContextSlot {
    /// C1: the mined predicate pattern.
    Predicate,
    /// C2: the subject type label.
    SubjectType,
    /// C3: the object type label.
    ObjectType,
}

impl ContextSlot {
    pub const ALL: [ContextSlot; 3] = [
        ContextSlot::Predicate,
        ContextSlot::SubjectType,
        ContextSlot::ObjectType,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ContextSlot::Predicate => "C1",
            ContextSlot::SubjectType => "C2",
            ContextSlot::ObjectType => "C3",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CopyToken {
    pub slot: ContextSlot,
    pub tag: PosTag,
    /// 1-based occurrence of `tag` within the context.
    pub occurrence: u8,
}

impl CopyToken {
    pub fn new(slot: ContextSlot, tag: PosTag, occurrence: u8) -> Self {
        CopyToken {
            slot,
            tag,
            occurrence,
        }
    }

    /// `C1_NOUN`, `C1_NOUN_2`, ...
    pub fn render(&self) -> String {
        if self.occurrence <= 1 {
            format!("{}_{}", self.slot.id(), self.tag)
        } else {
            format!("{}_{}_{}", self.slot.id(), self.tag, self.occurrence)
        }
    }

    /// Bracketed form used inside token streams: `[C1_NOUN]`.
    pub fn as_token(&self) -> String {
        format!("[{}]", self.render())
    }

    /// Accepts both the bare and the bracketed form.
    pub fn parse(s: &str) -> Option<CopyToken> {
        let body = s
            .strip_prefix('[')
            .and_then(|b| b.strip_suffix(']'))
            .unwrap_or(s);
        let mut parts = body.split('_');
        let slot = match parts.next()? {
            "C1" => ContextSlot::Predicate,
            "C2" => ContextSlot::SubjectType,
            "C3" => ContextSlot::ObjectType,
            _ => return None,
        };
        let tag: PosTag = parts.next()?.parse().ok()?;
        if tag == PosTag::Marker {
            return None;
        }
        let occurrence = match parts.next() {
            None => 1,
            Some(d) if d.len() == 1 && matches!(d.as_bytes()[0], b'2'..=b'9') => d.parse().ok()?,
            Some(_) => return None,
        };
        if parts.next().is_some() {
            return None;
        }
        Some(CopyToken {
            slot,
            tag,
            occurrence,
        })
    }

    /// Every token the vocabulary reserves: 3 slots × 17 tags × `MAX_REPEAT`.
    pub fn inventory() -> &'static [CopyToken] {
        static INVENTORY: OnceLock<Vec<CopyToken>> = OnceLock::new();
        INVENTORY.get_or_init(|| {
            let mut out = Vec::new();
            for slot in ContextSlot::ALL {
                for tag in PosTag::UNIVERSAL {
                    for k in 1..=MAX_REPEAT {
                        out.push(CopyToken::new(slot, tag, k));
                    }
                }
            }
            out
        })
    }
}

impl fmt::Display for CopyToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Ordered `(copy token, original word)` pairs for one context.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationMap {
    pub entries: Vec<(String, String)>,
}

impl AnnotationMap {
    pub fn lookup_token(&self, token: &CopyToken) -> Option<&str> {
        let rendered = token.render();
        self.entries
            .iter()
            .find(|(t, _)| *t == rendered)
            .map(|(_, w)| w.as_str())
    }

    pub fn lookup_word(&self, word: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, w)| w.to_lowercase() == word.to_lowercase())
            .map(|(t, _)| t.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The three per-slot maps of one fact, in C1, C2, C3 order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextMaps(pub [AnnotationMap; 3]);

impl ContextMaps {
    pub fn get(&self, slot: ContextSlot) -> &AnnotationMap {
        &self.0[slot.index()]
    }
}

/// Replaces every non-marker word with its copy token. Markers and other
/// bracketed placeholders pass through unchanged.
pub fn annotate_context(
    tagged: &[TaggedToken],
    slot: ContextSlot,
) -> Result<(Vec<String>, AnnotationMap)> {
    let mut seen = [0u8; PosTag::UNIVERSAL.len()];
    let mut tokens = Vec::with_capacity(tagged.len());
    let mut map = AnnotationMap::default();
    for t in tagged {
        if t.upos == PosTag::Marker || is_placeholder(&t.surface) {
            tokens.push(t.surface.clone());
            continue;
        }
        let k = PosTag::UNIVERSAL
            .iter()
            .position(|u| *u == t.upos)
            .expect("non-marker tags are universal");
        seen[k] += 1;
        if seen[k] > MAX_REPEAT {
            return Err(Error::Annotation {
                context: slot.id().to_string(),
                message: format!("tag {} occurs more than {MAX_REPEAT} times", t.upos),
            });
        }
        let token = CopyToken::new(slot, t.upos, seen[k]);
        tokens.push(token.as_token());
        map.entries.push((token.render(), t.surface.clone()));
    }
    Ok((tokens, map))
}

/// Rewrites question words found in a context to that context word's copy
/// token, searching C1, C2, C3 in order and each by position.
pub fn annotate_question(question: &[String], maps: &ContextMaps) -> Vec<String> {
    question
        .iter()
        .map(|w| {
            if is_placeholder(w) {
                return w.clone();
            }
            maps.0
                .iter()
                .find_map(|m| m.lookup_word(w))
                .map(|t| format!("[{t}]"))
                .unwrap_or_else(|| w.clone())
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deannotated {
    pub tokens: Vec<String>,
    /// Copy tokens that had no entry in the maps and were dropped.
    pub dropped: usize,
}

/// Maps copy tokens back to their context words.
pub fn deannotate(tokens: &[String], maps: &ContextMaps) -> Deannotated {
    let mut out = Deannotated::default();
    for t in tokens {
        match CopyToken::parse(t) {
            Some(ct) => match maps.get(ct.slot).lookup_token(&ct) {
                Some(w) => out.tokens.push(w.to_string()),
                None => out.dropped += 1,
            },
            None => out.tokens.push(t.clone()),
        }
    }
    out
}
