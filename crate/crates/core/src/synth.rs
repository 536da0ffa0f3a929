//! Deterministic templated corpora in the raw input formats: KB triples,
//! entity labels, a sentence corpus for pattern mining, first sentences and
//! candidate types for type selection, and SimpleQuestions-style questions.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kb::Triple;

/// `(type id, label)`.
pub const TYPES: [(&str, &str); 12] = [
    ("country", "country"),
    ("city", "city"),
    ("person", "person"),
    ("book", "book"),
    ("film", "film"),
    ("company", "company"),
    ("band", "musical group"),
    ("language", "language"),
    ("album", "album"),
    ("software", "software"),
    ("team", "sports team"),
    ("school", "university"),
];

/// `(predicate noun, subject type, object type)`; predicate ids are
/// `<subject type>/<noun>`.
pub const RELATIONS: [(&str, &str, &str); 30] = [
    ("capital", "country", "city"),
    ("author", "book", "person"),
    ("director", "film", "person"),
    ("language", "film", "language"),
    ("founder", "company", "person"),
    ("birthplace", "person", "city"),
    ("spouse", "person", "person"),
    ("currency", "country", "company"),
    ("composer", "album", "person"),
    ("publisher", "book", "company"),
    ("vocalist", "band", "person"),
    ("religion", "country", "language"),
    ("nationality", "person", "country"),
    ("architect", "school", "person"),
    ("producer", "film", "company"),
    ("manufacturer", "software", "company"),
    ("headquarters", "company", "city"),
    ("mascot", "team", "person"),
    ("anthem", "country", "album"),
    ("sponsor", "team", "company"),
    ("coach", "team", "person"),
    ("editor", "book", "person"),
    ("inventor", "software", "person"),
    ("owner", "team", "person"),
    ("designer", "software", "person"),
    ("developer", "software", "company"),
    ("narrator", "album", "person"),
    ("alumnus", "school", "person"),
    ("label", "band", "company"),
    ("stadium", "team", "city"),
];

const GENERIC_TYPE: (&str, &str) = ("topic", "topic");

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ren", "zu", "tor", "vel", "an", "sa", "qui", "bor", "del", "nix", "pra",
    "yo", "ul", "gan", "fe", "ris", "om", "tek", "wa", "jin", "cue",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// How many of [`RELATIONS`] to use, from the front.
    pub predicates: usize,
    pub samples_per_predicate: usize,
    /// Aligned sentences generated per fact.
    pub sentences_per_fact: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            predicates: 30,
            samples_per_predicate: 50,
            sentences_per_fact: 2,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawQuestion {
    pub triple: Triple,
    pub question: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthCorpus {
    pub triples: Vec<Triple>,
    pub labels: Vec<(String, String)>,
    pub sentences: Vec<(String, String)>,
    pub first_sentences: Vec<(String, String)>,
    pub entity_types: Vec<(String, String)>,
    pub type_labels: Vec<(String, String)>,
    pub questions: Vec<RawQuestion>,
}

fn predicate_id(noun: &str, sub_type: &str) -> String {
    format!("{sub_type}/{noun}")
}

fn type_label(id: &str) -> &'static str {
    TYPES
        .iter()
        .chain([&GENERIC_TYPE])
        .find(|(t, _)| *t == id)
        .map(|(_, l)| *l)
        .expect("known type")
}

struct Names {
    used: BTreeSet<String>,
}

impl Names {
    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let n = rng.gen_range(2..=3);
            let word: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
            let name = if rng.gen_bool(0.25) {
                let second: String =
                    (0..2).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
                format!("{word} {second}")
            } else {
                word
            };
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }
}

/// Pattern shapes: the first is the dominant phrasing in the sentence corpus.
fn sentence_shapes(shape: usize) -> [&'static str; 2] {
    match shape % 3 {
        0 => ["{S} has the {N} {O} .", "the {N} of {S} , {O} , is known ."],
        1 => ["{O} is the {N} of {S} .", "{S} , with {O} as {N} ."],
        _ => ["{S} and its {N} {O} .", "{O} , {N} of {S} , is famous ."],
    }
}

const QUESTION_TEMPLATES: [&str; 3] = [
    "what is the {N} of {S} ?",
    "which {T} is the {N} of {S} ?",
    "what {N} does {S} have ?",
];

fn fill(template: &str, s: &str, n: &str, o: &str, t: &str) -> String {
    template
        .replace("{S}", s)
        .replace("{N}", n)
        .replace("{O}", o)
        .replace("{T}", t)
}

pub fn generate(config: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut names = Names {
        used: BTreeSet::new(),
    };
    // keep generated names clear of template and label words
    for w in ["the", "of", "is", "has", "and", "its", "with", "as", "what", "which", "does"] {
        names.used.insert(w.to_string());
    }
    let mut corpus = SynthCorpus::default();
    for (t, l) in TYPES.iter().chain([&GENERIC_TYPE]) {
        corpus.type_labels.push((t.to_string(), l.to_string()));
    }
    let mut entity_count = 0usize;
    let mut new_entity = |corpus: &mut SynthCorpus, ty: &str, rng: &mut ChaCha8Rng| -> String {
        entity_count += 1;
        let id = format!("e{entity_count:05}");
        let name = names.fresh(rng);
        corpus.labels.push((id.clone(), name.clone()));
        let label = type_label(ty);
        corpus.entity_types.push((id.clone(), ty.to_string()));
        corpus
            .entity_types
            .push((id.clone(), GENERIC_TYPE.0.to_string()));
        corpus.first_sentences.push((
            id.clone(),
            format!("{name} is a {label} , the best known {label} of its topic ."),
        ));
        id
    };
    let mut doc = 0usize;
    for (ri, &(noun, sub_type, obj_type)) in RELATIONS.iter().take(config.predicates).enumerate() {
        let pred = predicate_id(noun, sub_type);
        let shapes = sentence_shapes(ri);
        for _ in 0..config.samples_per_predicate {
            let s = new_entity(&mut corpus, sub_type, &mut rng);
            let o = new_entity(&mut corpus, obj_type, &mut rng);
            let s_name = corpus.labels[corpus.labels.len() - 2].1.clone();
            let o_name = corpus.labels[corpus.labels.len() - 1].1.clone();
            let triple = Triple::new(&s, &pred, &o);
            for k in 0..config.sentences_per_fact {
                // the secondary phrasing appears in roughly a quarter of sentences
                let shape = if k > 0 && rng.gen_bool(0.5) { shapes[1] } else { shapes[0] };
                doc += 1;
                corpus
                    .sentences
                    .push((format!("d{doc:06}"), fill(shape, &s_name, noun, &o_name, "")));
            }
            let template = QUESTION_TEMPLATES.choose(&mut rng).expect("non-empty");
            let question = fill(template, &s_name, noun, &o_name, type_label(obj_type));
            corpus.questions.push(RawQuestion {
                triple: triple.clone(),
                question,
            });
            corpus.triples.push(triple);
        }
    }
    corpus
}

fn keyed(rows: &[(String, String)]) -> String {
    rows.iter().fold(String::new(), |mut out, (k, v)| {
        let _ = writeln!(out, "{k}\t{v}");
        out
    })
}

pub fn write_questions(questions: &[RawQuestion]) -> String {
    questions.iter().fold(String::new(), |mut out, q| {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            q.triple.subject, q.triple.predicate, q.triple.object, q.question
        );
        out
    })
}

impl SynthCorpus {
    /// File name → contents, in the layout the experiment config expects.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        vec![
            ("kb.tsv", crate::kb::write_triples(&self.triples)),
            ("labels.tsv", keyed(&self.labels)),
            ("sentences.tsv", keyed(&self.sentences)),
            ("first_sentences.tsv", keyed(&self.first_sentences)),
            ("entity_types.tsv", keyed(&self.entity_types)),
            ("type_labels.tsv", keyed(&self.type_labels)),
            ("questions.tsv", write_questions(&self.questions)),
        ]
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in self.files() {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}
