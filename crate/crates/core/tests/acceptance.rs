//! Acceptance checks, one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed in order.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use factqg_core::config::{ExperimentConfig, System};
use factqg_core::copy::{annotate_context, annotate_question, deannotate, AnnotationMap, ContextMaps, ContextSlot};
use factqg_core::dataset::{self, ContextTexts, KeyKind, RawFiles, RawInputs, Sample};
use factqg_core::experiment::Pipeline;
use factqg_core::folds::{make_folds, FoldConfig};
use factqg_core::kb::{parse_triples, TransEConfig, TransEModel, TripleIds};
use factqg_core::metrics::{bleu, meteor_lite, rouge_l, BleuLevel, MetricRow, ROUGE_BETA};
use factqg_core::model::{Example, ModelConfig, ModelInput, QgModel, TrainConfig};
use factqg_core::nn::LrSchedule;
use factqg_core::synth::{generate, SynthConfig};
use factqg_core::text::{pos_tag, tokenize, LexiconTagger, PosTag, TaggedToken, Vocabulary};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::fixtures;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.1?}, limit {limit:?}"))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let checks = [
        ("affine", fixtures::affine_report()),
        ("softmax+nll", fixtures::softmax_nll_report()),
        ("gru", fixtures::gru_report(0)),
        ("gru+attn", fixtures::gru_report(3)),
        ("attention", fixtures::attention_report()),
        ("model", fixtures::full_model_report(true)),
        ("model-no-ctx", fixtures::full_model_report(false)),
    ];
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    for (name, r) in &checks {
        ensure(r.ok(), || format!("{name}: {:?}", r.failures.first()))?;
        worst = worst.max(r.worst);
        entries += r.checked;
    }
    ensure(worst < 1e-4, || format!("worst relative error {worst:e}"))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "{entries} entries, worst rel err {worst:.1e}, {:.1?}",
        start.elapsed()
    ))
}

/// LCS by enumerating every subsequence of `a` and testing it against `b`.
fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
    let is_sub = |sub: &[u8]| {
        let mut it = b.iter();
        sub.iter().all(|x| it.any(|y| y == x))
    };
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let n = mask.count_ones() as usize;
        if n <= best {
            continue;
        }
        let sub: Vec<u8> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).collect();
        if is_sub(&sub) {
            best = n;
        }
    }
    best
}

fn all_sequences(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier: Vec<Vec<u8>> = vec![vec![]];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s| (0..3u8).map(move |c| [s.clone(), vec![c]].concat()))
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

fn criterion_2() -> Outcome {
    let w = |s: &str| tokenize(s);
    // clipped unigram precision 1/4; candidate longer than reference so BP = 1
    let b1 = bleu(&[w("the the the the")], &[w("the cat")], 1, BleuLevel::Corpus).map_err(|e| e.to_string())?;
    ensure((b1 - 0.25).abs() < 1e-9, || format!("BLEU-1 {b1}"))?;

    let seqs = all_sequences(6);
    let sym = ["a", "b", "c"];
    let as_words = |s: &[u8]| -> Vec<String> { s.iter().map(|&c| sym[c as usize].to_string()).collect() };
    let words: Vec<Vec<String>> = seqs.iter().map(|s| as_words(s)).collect();
    let beta2 = ROUGE_BETA * ROUGE_BETA;
    let mut pairs = 0usize;
    for (a, wa) in seqs.iter().zip(&words) {
        for (b, wb) in seqs.iter().zip(&words) {
            let lcs = brute_lcs(a, b) as f64;
            let expected = if lcs == 0.0 {
                0.0
            } else {
                let p = lcs / a.len() as f64;
                let r = lcs / b.len() as f64;
                (1.0 + beta2) * p * r / (r + beta2 * p)
            };
            let got = rouge_l(wa, wb);
            ensure((got - expected).abs() < 1e-9, || {
                format!("ROUGE-L {:?} vs {:?}: {got} != {expected}", wa, wb)
            })?;
            pairs += 1;
        }
    }

    let m = meteor_lite(&w("a b c d"), &w("a b c d"));
    ensure((m - (1.0 - 0.5 * (0.25f64).powi(3))).abs() < 1e-9, || format!("METEOR identical {m}"))?;
    let m = meteor_lite(&w("the cat sat"), &w("the cat sat down"));
    let (p, r) = (1.0, 0.75);
    let expected = 10.0 * p * r / (r + 9.0 * p) * (1.0 - 0.5 * (1.0f64 / 3.0).powi(3));
    ensure((m - expected).abs() < 1e-9, || format!("METEOR partial {m} vs {expected}"))?;
    ensure(meteor_lite(&w("x y"), &w("a b")) == 0.0, || "METEOR disjoint".into())?;
    Ok(format!("BLEU-1 0.25, ROUGE-L exact on {pairs} pairs, METEOR-lite hand cases"))
}

fn lexicon_tagged(text: &str) -> Vec<TaggedToken> {
    pos_tag(&LexiconTagger::default(), &tokenize(text))
}

fn criterion_3() -> Outcome {
    let mut maps: [AnnotationMap; 3] = Default::default();
    let expected = ["[S] [C1_NOUN] [C1_ADP] [O]", "[C2_NOUN]", "[C3_ADJ] [C3_NOUN]"];
    let contexts = ["[S] death by [O]", "Disease", "Musical artist"];
    for ((slot, text), want) in ContextSlot::ALL.into_iter().zip(contexts).zip(expected) {
        let (toks, map) = annotate_context(&lexicon_tagged(text), slot).map_err(|e| e.to_string())?;
        ensure(toks.join(" ") == want, || format!("{text:?} -> {}", toks.join(" ")))?;
        maps[slot.index()] = map;
    }
    let maps = ContextMaps(maps);
    let q = annotate_question(&tokenize("what caused the death of the artist [S] ?"), &maps);
    let want = "what caused the [C1_NOUN] of the [C3_NOUN] [S] ?";
    ensure(q.join(" ") == want, || format!("question -> {}", q.join(" ")))?;

    // fuzzed round trip
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let lexicon: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let tags = PosTag::UNIVERSAL;
    for case in 0..10_000 {
        let mut maps: [AnnotationMap; 3] = Default::default();
        for slot in ContextSlot::ALL {
            let mut counts = [0u8; 17];
            let mut ctx = Vec::new();
            if slot == ContextSlot::Predicate {
                ctx.push(TaggedToken::new("[S]", PosTag::Marker));
            }
            for _ in 0..rng.gen_range(1..6) {
                let k = rng.gen_range(0..tags.len());
                if counts[k] == 4 {
                    continue;
                }
                counts[k] += 1;
                ctx.push(TaggedToken::new(lexicon.choose(&mut rng).unwrap().clone(), tags[k]));
            }
            if slot == ContextSlot::Predicate {
                ctx.push(TaggedToken::new("[O]", PosTag::Marker));
            }
            let (_, map) = annotate_context(&ctx, slot).map_err(|e| format!("case {case}: {e}"))?;
            maps[slot.index()] = map;
        }
        let maps = ContextMaps(maps);
        let question: Vec<String> = (0..rng.gen_range(1..12))
            .map(|_| match rng.gen_range(0..6) {
                0 => "[S]".to_string(),
                1 => "?".to_string(),
                _ => lexicon.choose(&mut rng).unwrap().clone(),
            })
            .collect();
        let back = deannotate(&annotate_question(&question, &maps), &maps);
        ensure(back.tokens == question && back.dropped == 0, || {
            format!("case {case}: {:?} -> {:?}", question, back.tokens)
        })?;
    }
    Ok("death-cause example exact, 10000 fuzzed round trips".into())
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy_kb/triples.tsv"))
        .map_err(|e| e.to_string())?;
    let triples = parse_triples(&text).map_err(|e| e.to_string())?;
    let (mut trained, mut random) = (0.0, 0.0);
    for seed in 0..5 {
        let cfg = TransEConfig {
            dim: 20,
            epochs: 200,
            seed,
            ..Default::default()
        };
        let (model, _) = TransEModel::train(&triples, &cfg).map_err(|e| e.to_string())?;
        let ids: Vec<TripleIds> = triples.iter().map(|t| model.vocab.resolve(t).unwrap()).collect();
        trained += model.mean_filtered_rank(&ids).map_err(|e| e.to_string())? / 5.0;
        let init = TransEModel::init(model.vocab.clone(), cfg.dim, seed + 1000).map_err(|e| e.to_string())?;
        random += init.mean_filtered_rank(&ids).map_err(|e| e.to_string())? / 5.0;
    }
    ensure(trained <= random / 2.0, || format!("trained rank {trained:.2} vs random {random:.2}"))?;
    within(start, Duration::from_secs(30))?;
    Ok(format!("mean filtered rank {trained:.2} vs random {random:.2}, {:.1?}", start.elapsed()))
}

fn key_sample(kind: KeyKind, key: &str) -> Sample {
    let mut s = Sample {
        subject: "s".into(),
        predicate: "p".into(),
        object: "o".into(),
        sub_type: "t".into(),
        obj_type: "u".into(),
        question: "q".into(),
        contexts: ContextTexts::default(),
        context_tags: None,
        subject_label: String::new(),
        annotated: String::new(),
    };
    match kind {
        KeyKind::Predicate => s.predicate = key.into(),
        KeyKind::SubType => s.sub_type = key.into(),
        KeyKind::ObjType => s.obj_type = key.into(),
    }
    s
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut ratio_checked = 0;
    let mut worst_dev: f64 = 0.0;
    for trial in 0..100u64 {
        let kind = KeyKind::ALL[trial as usize % 3];
        let fine = trial % 2 == 0;
        let mut sizes: Vec<usize> = if fine {
            (0..rng.gen_range(25..60)).map(|_| rng.gen_range(40..121)).collect()
        } else {
            (0..rng.gen_range(3..15)).map(|_| rng.gen_range(1..300)).collect()
        };
        while sizes.iter().filter(|&&n| n >= 50).count() < 3 {
            sizes.push(rng.gen_range(50..150));
        }
        let mut samples = Vec::new();
        for (g, &n) in sizes.iter().enumerate() {
            samples.extend((0..n).map(|_| key_sample(kind, &format!("g{g}"))));
        }
        samples.shuffle(&mut rng);
        let cfg = FoldConfig {
            kind,
            seed: trial,
            ..Default::default()
        };
        let folds = make_folds(&samples, &cfg).map_err(|e| format!("trial {trial}: {e}"))?;
        let qualifying: usize = sizes.iter().filter(|&&n| n >= 50).sum();
        let largest = sizes.iter().filter(|&&n| n >= 50).max().copied().unwrap_or(0);
        let granular = largest as f64 <= 0.05 * qualifying as f64;
        for f in &folds {
            let keys: Vec<HashSet<&str>> = f
                .splits()
                .iter()
                .map(|ids| ids.iter().map(|&i| samples[i].key(kind)).collect())
                .collect();
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                ensure(keys[a].is_disjoint(&keys[b]), || format!("trial {trial} fold {}: splits {a},{b} share keys", f.id))?;
            }
            let mut seen = HashSet::new();
            for &i in f.splits().concat().iter() {
                ensure(seen.insert(i), || format!("trial {trial}: sample {i} twice"))?;
                let g: usize = samples[i].key(kind)[1..].parse().unwrap();
                ensure(sizes[g] >= 50, || format!("trial {trial}: group of {} included", sizes[g]))?;
            }
            ensure(seen.len() == qualifying, || format!("trial {trial}: {} of {qualifying} assigned", seen.len()))?;
            if granular {
                for (n, target) in f.sizes().iter().zip(cfg.ratios) {
                    let dev = (*n as f64 / qualifying as f64 - target).abs();
                    worst_dev = worst_dev.max(dev);
                    ensure(dev <= 0.05, || format!("trial {trial} fold {}: sizes {:?}", f.id, f.sizes()))?;
                }
            }
        }
        ratio_checked += usize::from(granular);
    }
    ensure(ratio_checked > 0, || "no trial was fine-grained enough to check ratios".into())?;
    Ok(format!(
        "100 trials x 10 folds disjoint; ratios checked on {ratio_checked} trials, worst deviation {:.1} pp",
        100.0 * worst_dev
    ))
}

fn raw_inputs(files: &[(&'static str, String)]) -> RawInputs {
    let text = |n: &str| files.iter().find(|(f, _)| *f == n).unwrap().1.as_str();
    RawInputs::parse(&RawFiles {
        kb: text("kb.tsv"),
        labels: text("labels.tsv"),
        sentences: text("sentences.tsv"),
        first_sentences: text("first_sentences.tsv"),
        entity_types: text("entity_types.tsv"),
        type_labels: text("type_labels.tsv"),
        questions: text("questions.tsv"),
        dep_paths: None,
    })
    .unwrap()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let corpus = generate(&SynthConfig {
        predicates: 5,
        samples_per_predicate: 10,
        sentences_per_fact: 2,
        seed: 1,
    });
    let tagger = LexiconTagger::default();
    let raw = raw_inputs(&corpus.files());
    let samples = dataset::prepare_samples(&raw, &tagger).map_err(|e| e.to_string())?.samples;
    ensure(samples.len() == 50, || format!("{} samples", samples.len()))?;
    let (transe, _) = TransEModel::train(
        &raw.kb,
        &TransEConfig {
            dim: 16,
            epochs: 50,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let views: Vec<([Vec<String>; 3], Vec<String>)> = samples
        .iter()
        .map(|s| (s.annotation(&tagger).unwrap().0, s.annotated_tokens()))
        .collect();
    let corpus_words = views
        .iter()
        .flat_map(|(c, q)| c.iter().map(Vec::as_slice).chain(std::iter::once(q.as_slice())));
    let vocab = Vocabulary::build(corpus_words, 1000, true).map_err(|e| e.to_string())?;
    let config = ModelConfig {
        hk: 16,
        hc: 16,
        hd: 32,
        word_dim: 16,
        attn_dim: 16,
        max_len: 20,
        seed: 3,
        ..Default::default()
    };
    let mut model = QgModel::new(config, vocab, &transe).map_err(|e| e.to_string())?;
    let examples: Vec<Example> = samples
        .iter()
        .zip(&views)
        .map(|(s, (ctx, q))| {
            let input = ModelInput {
                fact: model.resolve_fact(&s.triple()).unwrap(),
                contexts: [0, 1, 2].map(|j| model.vocab.encode_all(&ctx[j])),
            };
            Example::new(input, model.vocab.encode_all(q))
        })
        .collect();
    let train = TrainConfig {
        epochs: 500,
        batch_size: 10,
        schedule: LrSchedule {
            initial: 0.01,
            decay: 0.99,
            floor: 1e-4,
        },
        validate_every: 0,
        ..Default::default()
    };
    model.train(&examples, &[], &train, None).map_err(|e| e.to_string())?;
    let acc = model.token_accuracy(&examples).map_err(|e| e.to_string())?;
    let exact = examples
        .iter()
        .filter(|ex| model.greedy(&ex.input).unwrap() == ex.target[..ex.target.len() - 1])
        .count();
    ensure(acc >= 0.99, || format!("token accuracy {acc:.4}"))?;
    ensure(exact >= 45, || format!("{exact}/50 exact"))?;
    within(start, Duration::from_secs(600))?;
    Ok(format!("token accuracy {:.2}%, {exact}/50 exact, {:.1?}", 100.0 * acc, start.elapsed()))
}

fn bundled_config(name: &str, out: &Path) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name).join("experiment.conf");
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = bundled_config("zeroshot", dir.path());
    cfg.systems = vec![System::EncoderDecoder, System::Model, System::ModelCopy];
    let pipeline = Pipeline::new(cfg);
    let folds = {
        let samples = pipeline.prepare_contexts().map_err(|e| e.to_string())?;
        let preds: BTreeSet<&str> = samples.iter().map(|s| s.predicate.as_str()).collect();
        ensure(preds.len() == 30, || format!("{} predicates", preds.len()))?;
        pipeline.make_folds(&samples).map_err(|e| e.to_string())?
    };
    ensure(folds.len() == 3, || format!("{} folds", folds.len()))?;
    ensure(folds.iter().all(|f| f.keys[2].len() == 6), || {
        format!("held out per fold: {:?}", folds.iter().map(|f| f.keys[2].len()).collect::<Vec<_>>())
    })?;
    let report = pipeline.run().map_err(|e| e.to_string())?;
    let b4 = |s: System| report.get(s).map(|a| a.mean.bleu[3]).unwrap();
    let (ed, plain, copy) = (b4(System::EncoderDecoder), b4(System::Model), b4(System::ModelCopy));
    ensure(copy > ed, || format!("model_copy {copy:.4} <= encoder_decoder {ed:.4}"))?;
    ensure(copy >= plain, || format!("model_copy {copy:.4} < model {plain:.4}"))?;
    Ok(format!(
        "BLEU-4 (3-fold mean) model_copy {:.2} > encoder_decoder {:.2}; model {:.2}",
        100.0 * copy,
        100.0 * ed,
        100.0 * plain
    ))
}

fn artifact_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Criteria 8 and 9 share the toy runs.
fn criteria_8_and_9() -> (Outcome, Outcome) {
    let run = |dir: &Path| -> Result<(Duration, String), String> {
        let start = Instant::now();
        let report = Pipeline::new(bundled_config("toy", dir)).run().map_err(|e| e.to_string())?;
        Ok((start.elapsed(), report.to_tsv()))
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run(a.path());
    let smoke = first.clone().and_then(|(took, tsv)| {
        ensure(took < Duration::from_secs(300), || format!("took {took:.1?}"))?;
        let lines: Vec<&str> = tsv.lines().collect();
        let header = format!("system\t{}", MetricRow::COLUMNS.join("\t"));
        ensure(lines[0] == header, || format!("header {:?}", lines[0]))?;
        ensure(lines.len() == 3, || format!("{} rows", lines.len() - 1))?;
        ensure(lines[1..].iter().all(|l| l.split('\t').count() == 7 && l.contains(" ± ")), || tsv.clone())?;
        for f in ["dataset.jsonl", "transe.ckpt", "folds.json", "report.json", "fold0/model_copy.ckpt"] {
            ensure(a.path().join(f).exists(), || format!("missing {f}"))?;
        }
        Ok(format!("toy run-experiment in {took:.1?}, 2 systems x 6 metrics"))
    });
    let determinism = first.and_then(|_| {
        run(b.path())?;
        let (fa, fb) = (artifact_files(a.path()), artifact_files(b.path()));
        ensure(fa.len() == fb.len(), || "different artifact sets".into())?;
        for ((na, da), (nb, db)) in fa.iter().zip(&fb) {
            ensure(na == nb && da == db, || format!("{na} differs"))?;
        }
        let ckpts = fa.iter().filter(|(n, _)| n.ends_with(".ckpt")).count();
        Ok(format!("{} artifacts byte-identical ({ckpts} checkpoints)", fa.len()))
    });
    (determinism, smoke)
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "gradient correctness", criterion_1()),
        (2, "metric oracles", criterion_2()),
        (3, "copy-action fidelity", criterion_3()),
        (4, "TransE sanity", criterion_4()),
        (5, "fold protocol", criterion_5()),
        (6, "overfit check", criterion_6()),
        (7, "zero-shot ordering", criterion_7()),
    ];
    let (c8, c9) = criteria_8_and_9();
    results.push((8, "determinism", c8));
    results.push((9, "end-to-end smoke", c9));
    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS - {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL - {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", results.len());
        std::process::exit(1);
    }
}
