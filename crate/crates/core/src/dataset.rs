//! Dataset records and their preparation from raw KB, corpus and question
//! files.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contexts::{
    align, assemble_contexts, mine_patterns, parse_keyed, select_type_context, ContextSet,
    DepPaths, EntityLabels, PredicatePattern,
};
use crate::copy::{annotate_question, ContextMaps, ContextSlot};
use crate::error::{Error, Result};
use crate::kb::Triple;
use crate::text::{tokenize, Tagger, SUBJECT_MARKER};

/// Which sample attribute a fold holds out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyKind {
    Predicate,
    SubType,
    ObjType,
}

impl KeyKind {
    pub const ALL: [KeyKind; 3] = [KeyKind::Predicate, KeyKind::SubType, KeyKind::ObjType];

    pub fn as_str(self) -> &'static str {
        match self {
            KeyKind::Predicate => "predicate",
            KeyKind::SubType => "sub_type",
            KeyKind::ObjType => "obj_type",
        }
    }
}

impl fmt::Display for KeyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KeyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KeyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown key kind {s:?}")))
    }
}

/// Context surfaces (or their tag strings) in slot order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextTexts {
    pub predicate: String,
    pub sub_type: String,
    pub obj_type: String,
}

impl ContextTexts {
    pub fn as_array(&self) -> [&str; 3] {
        [&self.predicate, &self.sub_type, &self.obj_type]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub sub_type: String,
    pub obj_type: String,
    pub question: String,
    pub contexts: ContextTexts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_tags: Option<ContextTexts>,
    /// Surface form substituted for `[S]` when realizing output.
    #[serde(default)]
    pub subject_label: String,
    /// Question with the subject as `[S]` and context words as copy tokens.
    #[serde(default)]
    pub annotated: String,
}

impl Sample {
    pub fn triple(&self) -> Triple {
        Triple::new(&self.subject, &self.predicate, &self.object)
    }

    pub fn key(&self, kind: KeyKind) -> &str {
        match kind {
            KeyKind::Predicate => &self.predicate,
            KeyKind::SubType => &self.sub_type,
            KeyKind::ObjType => &self.obj_type,
        }
    }

    pub fn context_set(&self, tagger: &dyn Tagger) -> Result<ContextSet> {
        ContextSet::from_strings(
            self.contexts.as_array(),
            self.context_tags.as_ref().map(ContextTexts::as_array),
            tagger,
        )
    }

    /// Annotated contexts and the maps that invert them.
    pub fn annotation(&self, tagger: &dyn Tagger) -> Result<([Vec<String>; 3], ContextMaps)> {
        self.context_set(tagger)?.annotate()
    }

    /// The question tokens with the subject mention replaced by `[S]`.
    pub fn placeholder_question(&self) -> Vec<String> {
        let label = tokenize(&self.subject_label);
        replace_mention(&tokenize(&self.question), &[label])
    }

    /// Raw context tokens in slot order (markers kept).
    pub fn context_tokens(&self) -> [Vec<String>; 3] {
        let [a, b, c] = self.contexts.as_array();
        [tokenize(a), tokenize(b), tokenize(c)]
    }

    pub fn annotated_tokens(&self) -> Vec<String> {
        tokenize(&self.annotated)
    }
}

/// Replaces the first occurrence of the longest matching label with `[S]`.
pub fn replace_mention(tokens: &[String], labels: &[Vec<String>]) -> Vec<String> {
    let mut sorted: Vec<&Vec<String>> = labels.iter().filter(|l| !l.is_empty()).collect();
    sorted.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    for label in sorted {
        if let Some(start) = tokens.windows(label.len()).position(|w| w == label.as_slice()) {
            let mut out = tokens[..start].to_vec();
            out.push(SUBJECT_MARKER.to_string());
            out.extend_from_slice(&tokens[start + label.len()..]);
            return out;
        }
    }
    tokens.to_vec()
}

/// Substitutes `[S]` with the subject's surface tokens.
pub fn realize(tokens: &[String], subject_label: &str) -> Vec<String> {
    let label = tokenize(subject_label);
    tokens
        .iter()
        .flat_map(|t| {
            if t == SUBJECT_MARKER {
                label.clone()
            } else {
                vec![t.clone()]
            }
        })
        .collect()
}

pub fn parse_jsonl(text: &str) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: Sample = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if s.question.trim().is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty question".into(),
            });
        }
        out.push(s);
    }
    Ok(out)
}

pub fn write_jsonl(samples: &[Sample]) -> Result<String> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    Ok(out)
}

/// SimpleQuestions-style `subject<TAB>predicate<TAB>object<TAB>question`.
pub fn parse_question_tsv(text: &str) -> Result<Vec<(Triple, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 || cols.iter().any(|c| c.trim().is_empty()) {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected subject, predicate, object and question".into(),
            });
        }
        out.push((Triple::new(cols[0], cols[1], cols[2]), cols[3].to_string()));
    }
    Ok(out)
}

/// Raw inputs for context preparation, already read into memory.
#[derive(Debug, Clone, Default)]
pub struct RawInputs {
    pub kb: Vec<Triple>,
    pub labels: Vec<(String, String)>,
    pub sentences: Vec<(String, String)>,
    pub first_sentences: Vec<(String, String)>,
    pub entity_types: Vec<(String, String)>,
    pub type_labels: Vec<(String, String)>,
    pub questions: Vec<(Triple, String)>,
    pub dep_paths: Option<DepPaths>,
}

impl RawInputs {
    /// Reads the tab-separated raw files; `dep_paths` is optional.
    pub fn parse(files: &RawFiles<'_>) -> Result<Self> {
        Ok(RawInputs {
            kb: crate::kb::parse_triples(files.kb)?,
            labels: parse_keyed(files.labels)?,
            sentences: parse_keyed(files.sentences)?,
            first_sentences: parse_keyed(files.first_sentences)?,
            entity_types: parse_keyed(files.entity_types)?,
            type_labels: parse_keyed(files.type_labels)?,
            questions: parse_question_tsv(files.questions)?,
            dep_paths: files.dep_paths.map(crate::contexts::parse_dep_paths).transpose()?,
        })
    }
}

pub struct RawFiles<'a> {
    pub kb: &'a str,
    pub labels: &'a str,
    pub sentences: &'a str,
    pub first_sentences: &'a str,
    pub entity_types: &'a str,
    pub type_labels: &'a str,
    pub questions: &'a str,
    pub dep_paths: Option<&'a str>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub samples: Vec<Sample>,
    pub patterns: BTreeMap<String, PredicatePattern>,
}

/// Mines predicate patterns over the whole KB, picks entity types from first
/// sentences and writes one annotated sample per question.
pub fn prepare_samples(inputs: &RawInputs, tagger: &dyn Tagger) -> Result<Prepared> {
    let labels = EntityLabels::from_pairs(inputs.labels.iter().cloned());
    let aligned = align(&inputs.kb, &labels, &inputs.sentences);
    let patterns = mine_patterns(&aligned, inputs.dep_paths.as_ref(), Some(tagger))?;

    let mut type_label: HashMap<&str, &str> = HashMap::new();
    for (t, l) in &inputs.type_labels {
        type_label.entry(t.as_str()).or_insert(l.as_str());
    }
    let mut candidates: HashMap<&str, Vec<&str>> = HashMap::new();
    for (e, t) in &inputs.entity_types {
        let c = candidates.entry(e.as_str()).or_default();
        if !c.contains(&t.as_str()) {
            c.push(t.as_str());
        }
    }
    let mut firsts: HashMap<&str, Vec<&str>> = HashMap::new();
    for (e, s) in &inputs.first_sentences {
        firsts.entry(e.as_str()).or_default().push(s.as_str());
    }
    let mut type_cache: HashMap<&str, (String, String)> = HashMap::new();
    let mut entity_type = |entity: &str| -> Result<(String, String)> {
        if let Some(hit) = type_cache.get(entity) {
            return Ok(hit.clone());
        }
        let types = candidates
            .get(entity)
            .ok_or_else(|| Error::domain(format!("entity {entity} has no candidate types")))?;
        let label_of = |t: &str| -> Result<String> {
            type_label
                .get(t)
                .map(|l| tokenize(l).join(" "))
                .ok_or_else(|| Error::domain(format!("type {t} has no label")))
        };
        let cand_labels: Vec<String> = types.iter().map(|t| label_of(t)).collect::<Result<_>>()?;
        let sentences: Vec<String> = firsts
            .get(entity)
            .map(|v| v.iter().map(|s| s.to_string()).collect())
            .unwrap_or_default();
        let chosen = select_type_context(&cand_labels, &sentences)?;
        let idx = cand_labels
            .iter()
            .position(|l| *l == chosen)
            .expect("chosen label is a candidate");
        let out = (types[idx].to_string(), chosen);
        let key: &str = candidates.get_key_value(entity).expect("present").0;
        type_cache.insert(key, out.clone());
        Ok(out)
    };

    let mut samples = Vec::with_capacity(inputs.questions.len());
    for (triple, question) in &inputs.questions {
        let (sub_type, sub_label) = entity_type(&triple.subject)?;
        let (obj_type, obj_label) = entity_type(&triple.object)?;
        let set = assemble_contexts(&triple.predicate, &patterns, &sub_label, &obj_label, tagger)?;
        let tags = ContextTexts {
            predicate: set.tags(ContextSlot::Predicate),
            sub_type: set.tags(ContextSlot::SubjectType),
            obj_type: set.tags(ContextSlot::ObjectType),
        };
        let (_, maps) = set.annotate()?;
        let placeholder = replace_mention(&tokenize(question), labels.get(&triple.subject));
        let annotated = annotate_question(&placeholder, &maps).join(" ");
        samples.push(Sample {
            subject: triple.subject.clone(),
            predicate: triple.predicate.clone(),
            object: triple.object.clone(),
            sub_type,
            obj_type,
            question: question.clone(),
            contexts: ContextTexts {
                predicate: set.surface(ContextSlot::Predicate),
                sub_type: set.surface(ContextSlot::SubjectType),
                obj_type: set.surface(ContextSlot::ObjectType),
            },
            context_tags: Some(tags),
            subject_label: labels.primary(&triple.subject).unwrap_or_default(),
            annotated,
        });
    }
    Ok(Prepared { samples, patterns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};
    use crate::text::LexiconTagger;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn mention_replacement_prefers_longest() {
        let q = toks("who founded new york city ?");
        let labels = vec![toks("new york"), toks("new york city")];
        assert_eq!(replace_mention(&q, &labels), toks("who founded [S] ?"));
        assert_eq!(replace_mention(&q, &[toks("paris")]), q);
    }

    #[test]
    fn realize_fills_subject() {
        assert_eq!(
            realize(&toks("where is [S] ?"), "Le Mans"),
            toks("where is le mans ?")
        );
    }

    #[test]
    fn prepared_synthetic_samples_round_trip() {
        let corpus = generate(&SynthConfig {
            predicates: 3,
            samples_per_predicate: 6,
            ..Default::default()
        });
        let files = corpus.files();
        let text = |n: &str| files.iter().find(|(f, _)| *f == n).unwrap().1.as_str();
        let raw = RawInputs::parse(&RawFiles {
            kb: text("kb.tsv"),
            labels: text("labels.tsv"),
            sentences: text("sentences.tsv"),
            first_sentences: text("first_sentences.tsv"),
            entity_types: text("entity_types.tsv"),
            type_labels: text("type_labels.tsv"),
            questions: text("questions.tsv"),
            dep_paths: None,
        })
        .unwrap();
        let tagger = LexiconTagger::default();
        let prepared = prepare_samples(&raw, &tagger).unwrap();
        assert_eq!(prepared.samples.len(), 18);
        assert_eq!(prepared.patterns["country/capital"].tokens, toks("[S] has the capital [O]"));
        let s = &prepared.samples[0];
        assert_eq!(s.sub_type, "country");
        assert_eq!(s.contexts.predicate, "[S] has the capital [O]");
        assert!(s.annotated.contains("[S]"));
        assert!(s.annotated.contains("[C1_"), "{}", s.annotated);
        let back = parse_jsonl(&write_jsonl(&prepared.samples).unwrap()).unwrap();
        assert_eq!(back, prepared.samples);
        // stored tags reproduce the annotation
        let (ann, maps) = back[0].annotation(&tagger).unwrap();
        assert_eq!(ann[0][0], "[S]");
        let de = crate::copy::deannotate(&back[0].annotated_tokens(), &maps);
        assert_eq!(de.tokens, back[0].placeholder_question());
    }
}
