//! Textual contexts for facts: distant-supervision predicate patterns and
//! entity-type labels.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::copy::{annotate_context, ContextMaps, ContextSlot};
use crate::error::{Error, Result};
use crate::kb::Triple;
use crate::text::{pos_tag, tokenize, PosTag, TaggedToken, Tagger, OBJECT_MARKER, SUBJECT_MARKER};

/// Reads `key<TAB>value` lines (labels, sentences, paths, first sentences,
/// entity types). Keys may repeat.
pub fn parse_keyed(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((k, v)) if !k.is_empty() && !v.trim().is_empty() => {
                out.push((k.to_string(), v.to_string()))
            }
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected key<TAB>value".into(),
                })
            }
        }
    }
    Ok(out)
}

/// Entity id → list of tokenized surface labels (aliases included).
#[derive(Debug, Clone, Default)]
pub struct EntityLabels {
    labels: HashMap<String, Vec<Vec<String>>>,
}

impl EntityLabels {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut labels: HashMap<String, Vec<Vec<String>>> = HashMap::new();
        for (entity, label) in pairs {
            let toks = tokenize(&label);
            if toks.is_empty() {
                continue;
            }
            let entry = labels.entry(entity).or_default();
            if !entry.contains(&toks) {
                entry.push(toks);
            }
        }
        EntityLabels { labels }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(Self::from_pairs(parse_keyed(text)?))
    }

    pub fn get(&self, entity: &str) -> &[Vec<String>] {
        self.labels.get(entity).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The first listed label, joined by spaces.
    pub fn primary(&self, entity: &str) -> Option<String> {
        self.get(entity).first().map(|l| l.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedSentence {
    pub triple: Triple,
    pub doc_id: String,
    /// Sentence tokens with one `[S]` and one `[O]`.
    pub tokens: Vec<String>,
}

impl AlignedSentence {
    fn marker_positions(&self) -> (usize, usize) {
        let s = self.tokens.iter().position(|t| t == SUBJECT_MARKER);
        let o = self.tokens.iter().position(|t| t == OBJECT_MARKER);
        (
            s.expect("aligned sentence has [S]"),
            o.expect("aligned sentence has [O]"),
        )
    }

    /// Token range `[first marker, last marker]`.
    pub fn span(&self) -> std::ops::RangeInclusive<usize> {
        let (s, o) = self.marker_positions();
        s.min(o)..=s.max(o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Subject,
    Object,
}

#[derive(Debug, Clone, Copy)]
struct Mention {
    start: usize,
    len: usize,
    role: Role,
}

fn find_label(tokens: &[String], label: &[String], out: &mut Vec<(usize, usize)>) {
    if label.len() > tokens.len() {
        return;
    }
    for i in 0..=tokens.len() - label.len() {
        if tokens[i..i + label.len()] == *label {
            out.push((i, label.len()));
        }
    }
}

/// Picks longest mentions first (leftmost on ties) without overlap, then
/// keeps the first surviving subject and object mention.
fn select_mentions(mut cands: Vec<Mention>) -> Option<(Mention, Mention)> {
    cands.sort_by(|a, b| b.len.cmp(&a.len).then(a.start.cmp(&b.start)));
    let mut taken: Vec<Mention> = Vec::new();
    for m in cands {
        let overlaps = taken
            .iter()
            .any(|t| m.start < t.start + t.len && t.start < m.start + m.len);
        if !overlaps {
            taken.push(m);
        }
    }
    let s = taken.iter().find(|m| m.role == Role::Subject)?;
    let o = taken.iter().find(|m| m.role == Role::Object)?;
    Some((*s, *o))
}

fn mark(tokens: &[String], s: Mention, o: Mention) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if i == s.start {
            out.push(SUBJECT_MARKER.to_string());
            i += s.len;
        } else if i == o.start {
            out.push(OBJECT_MARKER.to_string());
            i += o.len;
        } else {
            out.push(tokens[i].clone());
            i += 1;
        }
    }
    out
}

/// Distant supervision: emits one aligned sentence per (triple, sentence) in
/// which both entities are mentioned. Output follows sentence order, then
/// triple order.
pub fn align(
    triples: &[Triple],
    labels: &EntityLabels,
    sentences: &[(String, String)],
) -> Vec<AlignedSentence> {
    let mut by_subject: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, t) in triples.iter().enumerate() {
        if t.subject != t.object {
            by_subject.entry(t.subject.as_str()).or_default().push(i);
        }
    }
    // first label token -> (entity, label)
    let mut first: HashMap<&str, Vec<(&str, &[String])>> = HashMap::new();
    for entity in triples.iter().flat_map(|t| [&t.subject, &t.object]) {
        for label in labels.get(entity) {
            let slot = first.entry(label[0].as_str()).or_default();
            if !slot
                .iter()
                .any(|(e, l)| e == entity && *l == label.as_slice())
            {
                slot.push((entity.as_str(), label.as_slice()));
            }
        }
    }
    let mut out = Vec::new();
    for (di, (doc_id, sentence)) in sentences.iter().enumerate() {
        let tokens = tokenize(sentence);
        let mut mentioned: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
        for (i, tok) in tokens.iter().enumerate() {
            for (entity, label) in first.get(tok.as_str()).into_iter().flatten() {
                if tokens[i..].starts_with(label) {
                    mentioned.entry(entity).or_default().push((i, label.len()));
                }
            }
        }
        for (subject, s_spans) in &mentioned {
            for &ti in by_subject.get(subject).into_iter().flatten() {
                let t = &triples[ti];
                let Some(o_spans) = mentioned.get(t.object.as_str()) else {
                    continue;
                };
                let cands: Vec<Mention> = s_spans
                    .iter()
                    .map(|&(start, len)| Mention {
                        start,
                        len,
                        role: Role::Subject,
                    })
                    .chain(o_spans.iter().map(|&(start, len)| Mention {
                        start,
                        len,
                        role: Role::Object,
                    }))
                    .collect();
                if let Some((s, o)) = select_mentions(cands) {
                    let a = AlignedSentence {
                        triple: t.clone(),
                        doc_id: doc_id.clone(),
                        tokens: mark(&tokens, s, o),
                    };
                    out.push(((di, ti), a));
                }
            }
        }
    }
    out.sort_by_key(|(k, _)| *k);
    out.into_iter().map(|(_, a)| a).collect()
}

/// Label-based alignment for a single sentence, exposed for tests and tools.
pub fn align_sentence(
    triple: &Triple,
    labels: &EntityLabels,
    sentence: &str,
) -> Option<Vec<String>> {
    let tokens = tokenize(sentence);
    let mut cands = Vec::new();
    for (entity, role) in [
        (&triple.subject, Role::Subject),
        (&triple.object, Role::Object),
    ] {
        let mut spans = Vec::new();
        for label in labels.get(entity) {
            find_label(&tokens, label, &mut spans);
        }
        cands.extend(
            spans
                .into_iter()
                .map(|(start, len)| Mention { start, len, role }),
        );
    }
    if triple.subject == triple.object {
        return None;
    }
    select_mentions(cands).map(|(s, o)| mark(&tokens, s, o))
}

/// Triple key → dependency-path tokens (must contain both markers).
pub type DepPaths = HashMap<String, Vec<String>>;

pub fn parse_dep_paths(text: &str) -> Result<DepPaths> {
    let mut out = HashMap::new();
    for (key, path) in parse_keyed(text)? {
        let toks = tokenize(&path);
        if !toks.iter().any(|t| t == SUBJECT_MARKER) || !toks.iter().any(|t| t == OBJECT_MARKER) {
            return Err(Error::Parse {
                line: 0,
                message: format!("dependency path for {key} lacks [S] or [O]"),
            });
        }
        out.insert(key, toks);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicatePattern {
    pub predicate: String,
    pub tokens: Vec<String>,
    pub support: usize,
    /// Tags taken from the source sentences when the pattern is a span.
    pub tags: Option<Vec<PosTag>>,
}

fn reduce(sentence: &AlignedSentence, paths: Option<&DepPaths>) -> (Vec<String>, bool) {
    if let Some(p) = paths.and_then(|p| p.get(&sentence.triple.key())) {
        return (p.clone(), false);
    }
    (sentence.tokens[sentence.span()].to_vec(), true)
}

/// Keeps the most frequent reduction; ties go to the shortest, then the
/// lexicographically smallest. When a tagger is given, span patterns carry
/// tags read off their full source sentences.
pub fn extract_pattern(
    sentences: &[AlignedSentence],
    paths: Option<&DepPaths>,
    tagger: Option<&dyn Tagger>,
) -> Result<PredicatePattern> {
    let first = sentences
        .first()
        .ok_or_else(|| Error::domain("extract_pattern needs at least one aligned sentence"))?;
    let predicate = &first.triple.predicate;
    if let Some(other) = sentences.iter().find(|s| &s.triple.predicate != predicate) {
        return Err(Error::domain(format!(
            "mixed predicates {predicate} and {}",
            other.triple.predicate
        )));
    }
    let mut counts: HashMap<Vec<String>, usize> = HashMap::new();
    let reduced: Vec<(Vec<String>, bool)> = sentences.iter().map(|s| reduce(s, paths)).collect();
    for (r, _) in &reduced {
        *counts.entry(r.clone()).or_default() += 1;
    }
    let (tokens, support) = counts
        .into_iter()
        .min_by(|a, b| {
            b.1.cmp(&a.1)
                .then(a.0.len().cmp(&b.0.len()))
                .then_with(|| a.0.cmp(&b.0))
        })
        .expect("non-empty");
    let tags = tagger.and_then(|tagger| {
        let mut tag_counts: HashMap<Vec<PosTag>, usize> = HashMap::new();
        for (s, (r, is_span)) in sentences.iter().zip(&reduced) {
            if *is_span && *r == tokens {
                let tagged = pos_tag(tagger, &s.tokens);
                let seq = tagged[s.span()].iter().map(|t| t.upos).collect();
                *tag_counts.entry(seq).or_default() += 1;
            }
        }
        tag_counts
            .into_iter()
            .min_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)))
            .map(|(seq, _)| seq)
    });
    Ok(PredicatePattern {
        predicate: predicate.clone(),
        tokens,
        support,
        tags,
    })
}

/// Groups aligned sentences by predicate and mines one pattern each.
pub fn mine_patterns(
    aligned: &[AlignedSentence],
    paths: Option<&DepPaths>,
    tagger: Option<&dyn Tagger>,
) -> Result<BTreeMap<String, PredicatePattern>> {
    let mut groups: BTreeMap<&str, Vec<AlignedSentence>> = BTreeMap::new();
    for a in aligned {
        groups
            .entry(&a.triple.predicate)
            .or_default()
            .push(a.clone());
    }
    groups
        .into_iter()
        .map(|(p, group)| Ok((p.to_string(), extract_pattern(&group, paths, tagger)?)))
        .collect()
}

fn count_mentions(label: &[String], sentences: &[Vec<String>]) -> usize {
    let mut spans = Vec::new();
    for s in sentences {
        find_label(s, label, &mut spans);
    }
    spans.len()
}

/// Returns the candidate label mentioned most often (whole-word,
/// case-insensitive) in the given first sentences; ties go to the
/// lexicographically smallest label.
pub fn select_type_context<S: AsRef<str>>(
    candidates: &[S],
    first_sentences: &[S],
) -> Result<String> {
    if candidates.is_empty() {
        return Err(Error::domain(
            "select_type_context needs at least one candidate type",
        ));
    }
    let sentences: Vec<Vec<String>> = first_sentences
        .iter()
        .map(|s| tokenize(s.as_ref()))
        .collect();
    let mut best: Option<(usize, String)> = None;
    for c in candidates {
        let label = tokenize(c.as_ref()).join(" ");
        let n = count_mentions(&tokenize(c.as_ref()), &sentences);
        let better = match &best {
            None => true,
            Some((bn, bl)) => n > *bn || (n == *bn && label < *bl),
        };
        if better {
            best = Some((n, label));
        }
    }
    Ok(best.expect("non-empty").1)
}

/// The three tagged contexts of one fact, in slot order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSet(pub [Vec<TaggedToken>; 3]);

impl ContextSet {
    pub fn get(&self, slot: ContextSlot) -> &[TaggedToken] {
        &self.0[slot.index()]
    }

    pub fn surface(&self, slot: ContextSlot) -> String {
        self.get(slot)
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn tags(&self, slot: ContextSlot) -> String {
        self.get(slot)
            .iter()
            .map(|t| t.upos.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Copy-token form of every context plus the maps to invert it.
    pub fn annotate(&self) -> Result<([Vec<String>; 3], ContextMaps)> {
        let mut tokens: [Vec<String>; 3] = Default::default();
        let mut maps: ContextMaps = ContextMaps(Default::default());
        for slot in ContextSlot::ALL {
            let (t, m) = annotate_context(self.get(slot), slot)?;
            tokens[slot.index()] = t;
            maps.0[slot.index()] = m;
        }
        Ok((tokens, maps))
    }

    /// Rebuilds tagged contexts from stored surface strings and, when
    /// present, space-joined tag strings.
    pub fn from_strings(
        surfaces: [&str; 3],
        tags: Option<[&str; 3]>,
        tagger: &dyn Tagger,
    ) -> Result<Self> {
        let mut out: [Vec<TaggedToken>; 3] = Default::default();
        for i in 0..3 {
            let toks = tokenize(surfaces[i]);
            out[i] = match tags {
                Some(t) => {
                    let parsed: Vec<PosTag> = t[i]
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<Result<_>>()?;
                    if parsed.len() != toks.len() {
                        return Err(Error::dim("context tags", &[toks.len()], &[parsed.len()]));
                    }
                    toks.into_iter()
                        .zip(parsed)
                        .map(|(w, t)| TaggedToken::new(w, t))
                        .collect()
                }
                None => pos_tag(tagger, &toks),
            };
        }
        Ok(ContextSet(out))
    }
}

pub const FALLBACK_PATTERN: &str = "[S] [O]";

/// `c1` from the mined pattern (or `[S] [O]`), `c2`/`c3` from the type labels.
pub fn assemble_contexts(
    predicate: &str,
    patterns: &BTreeMap<String, PredicatePattern>,
    sub_type_label: &str,
    obj_type_label: &str,
    tagger: &dyn Tagger,
) -> Result<ContextSet> {
    let c1 = match patterns.get(predicate) {
        Some(p) => match &p.tags {
            Some(tags) if tags.len() == p.tokens.len() => p
                .tokens
                .iter()
                .zip(tags)
                .map(|(w, t)| {
                    let t = if crate::text::is_marker(w) {
                        PosTag::Marker
                    } else {
                        *t
                    };
                    TaggedToken::new(w.clone(), t)
                })
                .collect(),
            _ => pos_tag(tagger, &p.tokens),
        },
        None => {
            log::warn!("no pattern mined for predicate {predicate}; using {FALLBACK_PATTERN}");
            pos_tag(tagger, &tokenize(FALLBACK_PATTERN))
        }
    };
    let typed = |label: &str, slot: &str| -> Result<Vec<TaggedToken>> {
        let toks = tokenize(label);
        if toks.is_empty() {
            return Err(Error::domain(format!("empty {slot} type label")));
        }
        Ok(pos_tag(tagger, &toks))
    };
    Ok(ContextSet([
        c1,
        typed(sub_type_label, "subject")?,
        typed(obj_type_label, "object")?,
    ]))
}
