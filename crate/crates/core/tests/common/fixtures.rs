//! Small models and layers shared by the gradient and acceptance suites.

use factqg_core::kb::{KbVocabulary, TransEModel, Triple};
use factqg_core::model::{Example, ModelConfig, ModelInput, QgModel};
use factqg_core::nn::{
    affine, affine_backward, softmax, softmax_backward, Attention, GruCell, Linear, ParamStore,
    Tensor,
};
use factqg_core::text::Vocabulary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{check_input, check_params, Report};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `L = c · (W x + b)` through both the free function and the layer.
pub fn affine_report() -> Report {
    let mut r = rng(11);
    let (out, inp) = (3, 4);
    let w = Tensor::uniform(&[out, inp], 1.0, &mut r);
    let b = random_vec(&mut r, out);
    let mut x = random_vec(&mut r, inp);
    let c = random_vec(&mut r, out);

    let mut gw = vec![0.0; out * inp];
    let mut gb = vec![0.0; out];
    let mut gx = vec![0.0; inp];
    affine_backward(&x, &w, &c, &mut gw, &mut gb, &mut gx);
    let mut report = check_input("affine.x", &mut x, &gx, |x| dot(&c, &affine(x, &w, &b).unwrap()));
    let mut wv = w.data().to_vec();
    report.merge(check_input("affine.W", &mut wv, &gw, |wv| {
        let w = Tensor::matrix(out, inp, wv.to_vec()).unwrap();
        dot(&c, &affine(&x, &w, &b).unwrap())
    }));
    let mut bv = b.clone();
    report.merge(check_input("affine.b", &mut bv, &gb, |b| dot(&c, &affine(&x, &w, b).unwrap())));

    let mut store = ParamStore::new();
    let layer = Linear::new(&mut store, "lin", out, inp, true, 0.8, &mut r);
    let mut grads = store.grad_buffer();
    let mut gx = vec![0.0; inp];
    layer.backward(&store, &mut grads, &x, &c, Some(&mut gx));
    report.merge(check_params(&mut store, &grads, |s| dot(&c, &layer.forward(s, &x).unwrap())));
    report.merge(check_input("linear.x", &mut x, &gx, |x| dot(&c, &layer.forward(&store, x).unwrap())));
    report
}

/// `−log softmax(z)_y` and a generic `g · softmax(z)`.
pub fn softmax_nll_report() -> Report {
    let mut r = rng(12);
    let mut z = random_vec(&mut r, 6);
    let y = 4;
    let p = softmax(&z).unwrap();
    let mut g = p.clone();
    g[y] -= 1.0;
    let mut report = check_input("nll.z", &mut z, &g, |z| -softmax(z).unwrap()[y].ln());
    let up = random_vec(&mut r, 6);
    let analytic = softmax_backward(&p, &up);
    report.merge(check_input("softmax.z", &mut z, &analytic, |z| dot(&up, &softmax(z).unwrap())));
    report
}

/// `L = c · GRU(x, h, a)`, with or without the attention input.
pub fn gru_report(attn: usize) -> Report {
    let mut r = rng(13 + attn as u64);
    let mut store = ParamStore::new();
    let cell = GruCell::new(&mut store, "gru", 3, 4, attn, 0.7, &mut r);
    let mut x = random_vec(&mut r, 3);
    let h = random_vec(&mut r, 4);
    let mut a = random_vec(&mut r, attn);
    let c = random_vec(&mut r, 4);
    let a_opt = |a: &[f64]| if attn == 0 { None } else { Some(a.to_vec()) };

    let cache = cell.forward(&store, &x, &h, a_opt(&a).as_deref()).unwrap();
    let mut grads = store.grad_buffer();
    let (mut dx, mut dh, mut da) = (vec![0.0; 3], vec![0.0; 4], vec![0.0; attn]);
    cell.backward(
        &store,
        &mut grads,
        &cache,
        &c,
        &mut dx,
        &mut dh,
        if attn == 0 { None } else { Some(&mut da) },
    );
    let f = |s: &ParamStore, x: &[f64], h: &[f64], a: &[f64]| {
        dot(&c, &cell.forward(s, x, h, a_opt(a).as_deref()).unwrap().out)
    };
    let mut report = check_params(&mut store, &grads, |s| f(s, &x, &h, &a));
    report.merge(check_input("gru.x", &mut x.clone(), &dx, |x| f(&store, x, &h, &a)));
    report.merge(check_input("gru.h", &mut h.clone(), &dh, |h| f(&store, &x, h, &a)));
    if attn > 0 {
        report.merge(check_input("gru.a", &mut a, &da, |a| f(&store, &x, &h, a)));
    }
    x.clear();
    report
}

/// `L = c · summary` for one additive attention read.
pub fn attention_report() -> Report {
    let mut r = rng(14);
    let mut store = ParamStore::new();
    let att = Attention::new(&mut store, "att", 5, 4, 3, 0.9, &mut r);
    let keys: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut r, 3)).collect();
    let mut q = random_vec(&mut r, 4);
    let c = random_vec(&mut r, 3);
    let f = |s: &ParamStore, keys: &[Vec<f64>], q: &[f64]| {
        let proj = att.project_keys(s, keys).unwrap();
        dot(&c, &att.forward(s, keys, &proj, q).unwrap().summary)
    };
    let proj = att.project_keys(&store, &keys).unwrap();
    let cache = att.forward(&store, &keys, &proj, &q).unwrap();
    let mut grads = store.grad_buffer();
    let mut dq = vec![0.0; 4];
    let mut dk = vec![vec![0.0; 3]; 4];
    let mut dp = vec![vec![0.0; 5]; 4];
    att.backward(&store, &mut grads, &keys, &cache, &q, &c, &mut dq, &mut dk, &mut dp);
    att.backward_projection(&store, &mut grads, &keys, &dp, &mut dk);
    let mut report = check_params(&mut store, &grads, |s| f(s, &keys, &q));
    report.merge(check_input("attn.query", &mut q, &dq, |q| f(&store, &keys, q)));
    let mut flat: Vec<f64> = keys.concat();
    report.merge(check_input("attn.keys", &mut flat, &dk.concat(), |flat| {
        let k: Vec<Vec<f64>> = flat.chunks(3).map(<[f64]>::to_vec).collect();
        f(&store, &k, &q)
    }));
    report
}

/// H_k = H_c = 4, H_d = 6, V = 12; one two-token context, the others empty.
pub fn mini_model(use_contexts: bool) -> (QgModel, Example) {
    let triples = vec![Triple::new("a", "p", "b"), Triple::new("b", "q", "c")];
    let transe = TransEModel::init(KbVocabulary::build(&triples), 4, 5).unwrap();
    let words: Vec<Vec<String>> = vec!["w1 w2 w3 w4 w5 w6"
        .split(' ')
        .map(String::from)
        .collect()];
    let vocab = Vocabulary::build(words.iter().map(Vec::as_slice), 12, false).unwrap();
    assert_eq!(vocab.len(), 12);
    let config = ModelConfig {
        hk: 4,
        hc: 4,
        hd: 6,
        word_dim: 3,
        attn_dim: 5,
        vocab_size: 12,
        init_scale: 1.0,
        use_contexts,
        ..ModelConfig::default()
    };
    let model = QgModel::new(config, vocab, &transe).unwrap();
    let fact = model.resolve_fact(&triples[0]).unwrap();
    let input = ModelInput {
        fact,
        contexts: [vec![7, 9], vec![], vec![]],
    };
    let example = Example::new(input, vec![6, 8, 4]);
    (model, example)
}

pub fn full_model_report(use_contexts: bool) -> Report {
    let (mut model, ex) = mini_model(use_contexts);
    let mut grads = model.store.grad_buffer();
    model.loss_and_grad(&ex, &mut grads).unwrap();
    let snapshot = model.clone();
    let mut store = model.store.clone();
    let report = check_params(&mut store, &grads, |s| {
        let mut m = snapshot.clone();
        m.store = s.clone();
        m.loss(&ex).unwrap()
    });
    model.store = store;
    report
}
