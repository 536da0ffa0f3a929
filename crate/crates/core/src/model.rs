//! Fact-to-question encoder-decoder: frozen TransE fact encoder, three
//! context GRUs, a GRU decoder fed by fact and context attention, and a
//! softmax over the word vocabulary (copy tokens included).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{KbVocabulary, TransEModel, Triple};
use crate::nn::{
    clip_gradients, softmax, Attention, AttentionCache, GradBuffer, GruCache, GruCell, Linear,
    LrSchedule, ParamId, ParamStore, RmsProp, Tensor,
};
use crate::text::{Vocabulary, EOS, PAD, SOS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Fact embedding size; must equal the TransE dimension.
    pub hk: usize,
    pub hc: usize,
    pub hd: usize,
    pub word_dim: usize,
    /// Inner size of both additive attention modules.
    pub attn_dim: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub beam: usize,
    pub seed: u64,
    pub init_scale: f64,
    /// `false` drops the context encoders and context attention.
    pub use_contexts: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hk: 200,
            hc: 200,
            hd: 500,
            word_dim: 100,
            attn_dim: 200,
            vocab_size: 30_000,
            max_len: 30,
            beam: 1,
            seed: 0,
            init_scale: 0.1,
            use_contexts: true,
        }
    }
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        let dims = [
            ("hk", self.hk),
            ("hc", self.hc),
            ("hd", self.hd),
            ("word_dim", self.word_dim),
            ("attn_dim", self.attn_dim),
            ("max_len", self.max_len),
            ("beam", self.beam),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config("init_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub clip: f64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    pub seed: u64,
    /// Run the validator every this many epochs (0 disables it).
    pub validate_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 200,
            schedule: LrSchedule::default(),
            clip: 0.1,
            rms_decay: 0.9,
            rms_epsilon: 1e-8,
            seed: 0,
            validate_every: 1,
        }
    }
}

/// Model input: fact ids into the KB vocabulary plus word ids of the
/// three (possibly copy-annotated) contexts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInput {
    pub fact: [usize; 3],
    pub contexts: [Vec<usize>; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub input: ModelInput,
    /// Gold question ids, ending in EOS, without SOS.
    pub target: Vec<usize>,
}

impl Example {
    pub fn new(input: ModelInput, mut question: Vec<usize>) -> Self {
        question.push(EOS);
        Example {
            input,
            target: question,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ContextPath {
    encoders: [GruCell; 3],
    attention: Attention,
}

/// Trained or untrained model. All parameters live in `store`; the fact
/// table is stored there too but marked frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct QgModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub kb: KbVocabulary,
    pub store: ParamStore,
    fact_table: ParamId,
    words: ParamId,
    context: Option<ContextPath>,
    decoder: GruCell,
    fact_attn: Attention,
    init: Linear,
    output: Linear,
}

/// Encoder outputs reused by every decoder step.
#[derive(Debug, Clone)]
pub struct Encoded {
    fact_keys: Vec<Vec<f64>>,
    fact_proj: Vec<Vec<f64>>,
    ctx_keys: Vec<Vec<f64>>,
    ctx_proj: Vec<Vec<f64>>,
    ctx_ids: [Vec<usize>; 3],
    ctx_caches: [Vec<GruCache>; 3],
    init_in: Vec<f64>,
    s0: Vec<f64>,
}

impl Encoded {
    pub fn initial_state(&self) -> &[f64] {
        &self.s0
    }

    /// `[h_s; h_p; h_o]`.
    pub fn fact_vector(&self) -> Vec<f64> {
        self.fact_keys.concat()
    }

    /// Hidden states of each context, in slot order.
    pub fn context_states(&self) -> [Vec<&[f64]>; 3] {
        let mut out: [Vec<&[f64]>; 3] = Default::default();
        for (j, caches) in self.ctx_caches.iter().enumerate() {
            out[j] = caches.iter().map(|c| c.out.as_slice()).collect();
        }
        out
    }

    /// Concatenated final state of each context.
    pub fn context_vector(&self) -> Vec<f64> {
        self.ctx_caches
            .iter()
            .flat_map(|c| c.last().map(|c| c.out.clone()).unwrap_or_default())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct StepCache {
    pub fact_attention: AttentionCache,
    pub context_attention: Option<AttentionCache>,
    gru: GruCache,
    pub probs: Vec<f64>,
}

impl StepCache {
    pub fn state(&self) -> &[f64] {
        &self.gru.out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    /// Mean per-sample loss seen during each epoch.
    pub train_loss: Vec<f64>,
    /// Mean per-sample loss on the validation examples after each epoch.
    pub valid_loss: Vec<f64>,
    pub valid_score: Vec<Option<f64>>,
    pub best_epoch: Option<usize>,
}

pub type Validator<'a> = dyn FnMut(&QgModel) -> Result<f64> + 'a;

fn dot_row(store: &ParamStore, id: ParamId, row: usize, width: usize) -> &[f64] {
    &store.value(id)[row * width..(row + 1) * width]
}

impl QgModel {
    /// Builds a fresh model. `transe` supplies the frozen fact table and the
    /// KB vocabulary.
    pub fn new(config: ModelConfig, vocab: Vocabulary, transe: &TransEModel) -> Result<Self> {
        config.validate()?;
        if transe.dim() != config.hk {
            return Err(Error::Config(format!(
                "hk = {} but TransE embeddings have size {}",
                config.hk,
                transe.dim()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let scale = config.init_scale;
        let (hk, hc, hd, m) = (config.hk, config.hc, config.hd, config.word_dim);
        let v = vocab.len();
        let fact_table = store.add("E_f", transe.table.clone(), false);
        let words = store.add("E_w", Tensor::uniform(&[v, m], scale, &mut rng), true);
        let context = if config.use_contexts {
            let encoders = [0, 1, 2].map(|j| {
                GruCell::new(
                    &mut store,
                    &format!("enc{}", j + 1),
                    m,
                    hc,
                    0,
                    scale,
                    &mut rng,
                )
            });
            let attention = Attention::new(
                &mut store,
                "ctx_attn",
                config.attn_dim,
                hd,
                hc,
                scale,
                &mut rng,
            );
            Some(ContextPath {
                encoders,
                attention,
            })
        } else {
            None
        };
        let attn_in = if config.use_contexts { hk + hc } else { hk };
        let decoder = GruCell::new(&mut store, "dec", m, hd, attn_in, scale, &mut rng);
        let fact_attn = Attention::new(
            &mut store,
            "fact_attn",
            config.attn_dim,
            hd,
            hk,
            scale,
            &mut rng,
        );
        let init_in = if config.use_contexts {
            3 * hk + 3 * hc
        } else {
            3 * hk
        };
        let init = Linear::new(&mut store, "W_init", hd, init_in, true, scale, &mut rng);
        let output = Linear::new(&mut store, "W_o", v, hd, true, scale, &mut rng);
        Ok(QgModel {
            config,
            vocab,
            kb: transe.vocab.clone(),
            store,
            fact_table,
            words,
            context,
            decoder,
            fact_attn,
            init,
            output,
        })
    }

    pub fn fact_table_id(&self) -> ParamId {
        self.fact_table
    }

    pub fn word_table_id(&self) -> ParamId {
        self.words
    }

    pub fn uses_contexts(&self) -> bool {
        self.context.is_some()
    }

    /// Replaces every parameter value; shapes and names must match.
    pub fn load_params(&mut self, values: Vec<(String, Tensor)>) -> Result<()> {
        if values.len() != self.store.len() {
            return Err(Error::Integrity(format!(
                "expected {} arrays, found {}",
                self.store.len(),
                values.len()
            )));
        }
        for (p, (name, t)) in self.store.iter_mut().zip(values) {
            if p.name != name || p.value.shape() != t.shape() {
                return Err(Error::Integrity(format!(
                    "array {name} {:?} does not match {} {:?}",
                    t.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            p.value = t;
        }
        Ok(())
    }

    /// TransE ids for a symbolic fact.
    pub fn resolve_fact(&self, t: &Triple) -> Result<[usize; 3]> {
        let ids = self.kb.resolve(t)?;
        Ok([ids.s, self.kb.entities.len() + ids.p, ids.o])
    }

    /// Initialises word rows from a whitespace-separated text embedding file
    /// (`word v1 … vm` per line). Returns how many vocabulary words were set.
    pub fn load_word_vectors(&mut self, text: &str) -> Result<usize> {
        let m = self.config.word_dim;
        let mut loaded = 0;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let Some(id) = self.vocab.get(word) else {
                continue;
            };
            let values: Vec<f64> = parts
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if values.len() != m {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {m} values, found {}", values.len()),
                });
            }
            self.store.get_mut(self.words).value.data_mut()[id * m..(id + 1) * m]
                .copy_from_slice(&values);
            loaded += 1;
        }
        Ok(loaded)
    }

    fn embed(&self, id: usize) -> Result<&[f64]> {
        if id >= self.vocab.len() {
            return Err(Error::Index {
                index: id,
                len: self.vocab.len(),
            });
        }
        Ok(dot_row(&self.store, self.words, id, self.config.word_dim))
    }

    pub fn encode(&self, input: &ModelInput) -> Result<Encoded> {
        let hk = self.config.hk;
        let table = self.store.tensor(self.fact_table);
        let mut fact_keys = Vec::with_capacity(3);
        for &id in &input.fact {
            if id >= table.rows() {
                return Err(Error::Vocabulary(format!("fact id {id} outside KB table")));
            }
            fact_keys.push(table.row(id).to_vec());
        }
        let fact_proj = self.fact_attn.project_keys(&self.store, &fact_keys)?;
        let mut init_in: Vec<f64> = fact_keys.concat();
        debug_assert_eq!(init_in.len(), 3 * hk);
        let mut ctx_keys = Vec::new();
        let mut ctx_ids: [Vec<usize>; 3] = Default::default();
        let mut ctx_caches: [Vec<GruCache>; 3] = Default::default();
        let mut ctx_proj = Vec::new();
        if let Some(path) = &self.context {
            for j in 0..3 {
                let ids = if input.contexts[j].is_empty() {
                    vec![PAD]
                } else {
                    input.contexts[j].clone()
                };
                let mut h = vec![0.0; self.config.hc];
                for &id in &ids {
                    let cache = path.encoders[j].forward(&self.store, self.embed(id)?, &h, None)?;
                    h.clone_from(&cache.out);
                    ctx_keys.push(cache.out.clone());
                    ctx_caches[j].push(cache);
                }
                init_in.extend_from_slice(&h);
                ctx_ids[j] = ids;
            }
            ctx_proj = path.attention.project_keys(&self.store, &ctx_keys)?;
        }
        let s0 = self
            .init
            .forward(&self.store, &init_in)?
            .into_iter()
            .map(f64::tanh)
            .collect();
        Ok(Encoded {
            fact_keys,
            fact_proj,
            ctx_keys,
            ctx_proj,
            ctx_ids,
            ctx_caches,
            init_in,
            s0,
        })
    }

    /// One decoder step: attention on `s_prev`, GRU update, softmax.
    pub fn step(&self, enc: &Encoded, y_prev: usize, s_prev: &[f64]) -> Result<StepCache> {
        let fa = self
            .fact_attn
            .forward(&self.store, &enc.fact_keys, &enc.fact_proj, s_prev)?;
        let mut a = fa.summary.clone();
        let ca = match &self.context {
            Some(path) => {
                let ca =
                    path.attention
                        .forward(&self.store, &enc.ctx_keys, &enc.ctx_proj, s_prev)?;
                a.extend_from_slice(&ca.summary);
                Some(ca)
            }
            None => None,
        };
        let gru = self
            .decoder
            .forward(&self.store, self.embed(y_prev)?, s_prev, Some(&a))?;
        let logits = self.output.forward(&self.store, &gru.out)?;
        let probs = softmax(&logits)?;
        Ok(StepCache {
            fact_attention: fa,
            context_attention: ca,
            gru,
            probs,
        })
    }

    /// Teacher-forced forward pass.
    pub fn forward(&self, ex: &Example) -> Result<(Encoded, Vec<StepCache>)> {
        if ex.target.is_empty() {
            return Err(Error::domain("empty target sequence"));
        }
        let enc = self.encode(&ex.input)?;
        let mut steps: Vec<StepCache> = Vec::with_capacity(ex.target.len());
        for t in 0..ex.target.len() {
            let y_prev = if t == 0 { SOS } else { ex.target[t - 1] };
            let s_prev = steps
                .last()
                .map_or(enc.s0.as_slice(), |s| s.gru.out.as_slice());
            let step = self.step(&enc, y_prev, s_prev)?;
            steps.push(step);
        }
        Ok((enc, steps))
    }

    fn nll(steps: &[StepCache], target: &[usize]) -> Result<f64> {
        let mut loss = 0.0;
        for (s, &y) in steps.iter().zip(target) {
            let p = *s.probs.get(y).ok_or(Error::Index {
                index: y,
                len: s.probs.len(),
            })?;
            loss -= p.max(f64::MIN_POSITIVE).ln();
        }
        Ok(loss)
    }

    /// `−Σ_t log p(y_t | y_<t, F, C)` for one example.
    pub fn loss(&self, ex: &Example) -> Result<f64> {
        let (_, steps) = self.forward(ex)?;
        Self::nll(&steps, &ex.target)
    }

    /// Loss of one example; its gradient is accumulated into `grads`.
    pub fn loss_and_grad(&self, ex: &Example, grads: &mut GradBuffer) -> Result<f64> {
        let (enc, steps) = self.forward(ex)?;
        let loss = Self::nll(&steps, &ex.target)?;
        self.backward(&enc, &steps, ex, grads);
        Ok(loss)
    }

    fn add_word_grad(&self, grads: &mut GradBuffer, id: usize, dx: &[f64]) {
        let m = self.config.word_dim;
        for (g, d) in grads.get_mut(self.words)[id * m..(id + 1) * m]
            .iter_mut()
            .zip(dx)
        {
            *g += d;
        }
    }

    fn backward(&self, enc: &Encoded, steps: &[StepCache], ex: &Example, grads: &mut GradBuffer) {
        let (hk, hd, m) = (self.config.hk, self.config.hd, self.config.word_dim);
        let attn_in = self.decoder.attn_dim;
        let zeros = |n: usize, w: usize| vec![vec![0.0; w]; n];
        let mut d_fact_keys = zeros(3, hk);
        let mut d_fact_proj = zeros(3, self.fact_attn.hidden_dim);
        let n_ctx = enc.ctx_keys.len();
        let ctx_hidden = self.context.map_or(0, |p| p.attention.hidden_dim);
        let mut d_ctx_keys = zeros(n_ctx, self.config.hc);
        let mut d_ctx_proj = zeros(n_ctx, ctx_hidden);

        let mut ds = vec![0.0; hd];
        for t in (0..steps.len()).rev() {
            let st = &steps[t];
            let y_prev = if t == 0 { SOS } else { ex.target[t - 1] };
            let mut d_logits = st.probs.clone();
            d_logits[ex.target[t]] -= 1.0;
            self.output
                .backward(&self.store, grads, &st.gru.out, &d_logits, Some(&mut ds));
            let mut dx = vec![0.0; m];
            let mut dh_prev = vec![0.0; hd];
            let mut da = vec![0.0; attn_in];
            self.decoder.backward(
                &self.store,
                grads,
                &st.gru,
                &ds,
                &mut dx,
                &mut dh_prev,
                Some(&mut da),
            );
            self.add_word_grad(grads, y_prev, &dx);
            self.fact_attn.backward(
                &self.store,
                grads,
                &enc.fact_keys,
                &st.fact_attention,
                &st.gru.h_prev,
                &da[..hk],
                &mut dh_prev,
                &mut d_fact_keys,
                &mut d_fact_proj,
            );
            if let (Some(path), Some(ca)) = (&self.context, &st.context_attention) {
                path.attention.backward(
                    &self.store,
                    grads,
                    &enc.ctx_keys,
                    ca,
                    &st.gru.h_prev,
                    &da[hk..],
                    &mut dh_prev,
                    &mut d_ctx_keys,
                    &mut d_ctx_proj,
                );
            }
            ds = dh_prev;
        }
        // fact keys are frozen: their gradient is computed and dropped
        self.fact_attn.backward_projection(
            &self.store,
            grads,
            &enc.fact_keys,
            &d_fact_proj,
            &mut d_fact_keys,
        );

        let d_pre: Vec<f64> = ds
            .iter()
            .zip(&enc.s0)
            .map(|(d, s)| d * (1.0 - s * s))
            .collect();
        let mut d_init_in = vec![0.0; enc.init_in.len()];
        self.init.backward(
            &self.store,
            grads,
            &enc.init_in,
            &d_pre,
            Some(&mut d_init_in),
        );

        let Some(path) = &self.context else { return };
        path.attention.backward_projection(
            &self.store,
            grads,
            &enc.ctx_keys,
            &d_ctx_proj,
            &mut d_ctx_keys,
        );
        let hc = self.config.hc;
        let mut offset = 0;
        for j in 0..3 {
            let caches = &enc.ctx_caches[j];
            let d_final = &d_init_in[3 * hk + j * hc..3 * hk + (j + 1) * hc];
            let mut dh = vec![0.0; hc];
            for i in (0..caches.len()).rev() {
                for (a, b) in dh.iter_mut().zip(&d_ctx_keys[offset + i]) {
                    *a += b;
                }
                if i + 1 == caches.len() {
                    for (a, b) in dh.iter_mut().zip(d_final) {
                        *a += b;
                    }
                }
                let mut dx = vec![0.0; m];
                let mut dh_prev = vec![0.0; hc];
                path.encoders[j].backward(
                    &self.store,
                    grads,
                    &caches[i],
                    &dh,
                    &mut dx,
                    &mut dh_prev,
                    None,
                );
                self.add_word_grad(grads, enc.ctx_ids[j][i], &dx);
                dh = dh_prev;
            }
            offset += caches.len();
        }
    }

    /// Fraction of target tokens that are the teacher-forced argmax.
    pub fn token_accuracy(&self, examples: &[Example]) -> Result<f64> {
        let (mut hit, mut total) = (0usize, 0usize);
        for ex in examples {
            let (_, steps) = self.forward(ex)?;
            for (s, &y) in steps.iter().zip(&ex.target) {
                hit += usize::from(argmax(&s.probs, &[]) == y);
                total += 1;
            }
        }
        Ok(if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        })
    }

    pub fn mean_loss(&self, examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let mut sum = 0.0;
        for ex in examples {
            sum += self.loss(ex)?;
        }
        Ok(sum / examples.len() as f64)
    }

    /// Mini-batch RMSProp with global-norm clipping. When a validator is
    /// given, the parameters with the best validator score are restored at
    /// the end.
    pub fn train(
        &mut self,
        train: &[Example],
        valid: &[Example],
        config: &TrainConfig,
        mut validator: Option<&mut Validator<'_>>,
    ) -> Result<TrainReport> {
        if train.is_empty() {
            return Err(Error::domain("training set is empty"));
        }
        if config.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut optim = RmsProp::new(&self.store, config.rms_decay, config.rms_epsilon);
        let mut report = TrainReport {
            initial_loss: self.mean_loss(train)?,
            ..Default::default()
        };
        let mut best: Option<(f64, Vec<Tensor>)> = None;
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut grads = self.store.grad_buffer();
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let lr = config.schedule.at_epoch(epoch);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(config.batch_size) {
                grads.clear();
                for &i in batch {
                    epoch_loss += self.loss_and_grad(&train[i], &mut grads)?;
                }
                self.store.zero_grads();
                self.store.accumulate(&grads, 1.0 / batch.len() as f64);
                clip_gradients(&mut self.store, config.clip);
                optim.step(&mut self.store, lr);
            }
            report.train_loss.push(epoch_loss / train.len() as f64);
            report.valid_loss.push(self.mean_loss(valid)?);
            let due = config.validate_every > 0
                && ((epoch + 1) % config.validate_every == 0 || epoch + 1 == config.epochs);
            let score = match validator.as_mut() {
                Some(v) if due => Some(v(self)?),
                _ => None,
            };
            report.valid_score.push(score);
            if let Some(score) = score {
                if best.as_ref().map_or(true, |(b, _)| score > *b) {
                    best = Some((score, self.store.iter().map(|p| p.value.clone()).collect()));
                    report.best_epoch = Some(epoch);
                }
            }
            log::info!(
                "epoch {} lr {lr:.2e} train {:.4} valid {:.4} score {:?}",
                epoch + 1,
                report.train_loss[epoch],
                report.valid_loss[epoch],
                score
            );
        }
        if let Some((_, values)) = best {
            for (p, v) in self.store.iter_mut().zip(values) {
                p.value = v;
            }
        }
        self.store.zero_grads();
        Ok(report)
    }

    /// Greedy decoding (PAD and SOS never emitted). Returns ids without EOS.
    pub fn greedy(&self, input: &ModelInput) -> Result<Vec<usize>> {
        let enc = self.encode(input)?;
        let mut s = enc.s0.clone();
        let mut y = SOS;
        let mut out = Vec::new();
        for _ in 0..self.config.max_len {
            let step = self.step(&enc, y, &s)?;
            y = argmax(&step.probs, &[PAD, SOS]);
            if y == EOS {
                break;
            }
            out.push(y);
            s = step.gru.out;
        }
        Ok(out)
    }

    /// Beam search scored by mean token log-probability (EOS counted).
    /// `beam(1)` is exactly [`Self::greedy`].
    pub fn beam_search(&self, input: &ModelInput, width: usize) -> Result<Vec<usize>> {
        if width <= 1 {
            return self.greedy(input);
        }
        let enc = self.encode(input)?;
        struct Hyp {
            tokens: Vec<usize>,
            logp: f64,
            state: Vec<f64>,
        }
        let score = |logp: f64, len: usize| logp / len.max(1) as f64;
        let mut alive = vec![Hyp {
            tokens: Vec::new(),
            logp: 0.0,
            state: enc.s0.clone(),
        }];
        let mut finished: Vec<(f64, Vec<usize>)> = Vec::new();
        for t in 0..self.config.max_len {
            let mut cands: Vec<(f64, usize, usize, Vec<f64>)> = Vec::new();
            for (hi, h) in alive.iter().enumerate() {
                let y_prev = h.tokens.last().copied().unwrap_or(SOS);
                let step = self.step(&enc, y_prev, &h.state)?;
                let mut ranked: Vec<usize> = (0..step.probs.len())
                    .filter(|&i| i != PAD && i != SOS)
                    .collect();
                ranked.sort_by(|&a, &b| step.probs[b].total_cmp(&step.probs[a]).then(a.cmp(&b)));
                for &y in ranked.iter().take(width) {
                    let lp = h.logp + step.probs[y].max(f64::MIN_POSITIVE).ln();
                    cands.push((lp, hi, y, step.gru.out.clone()));
                }
            }
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut next = Vec::new();
            for (lp, hi, y, state) in cands {
                if next.len() + finished.len() >= width {
                    break;
                }
                let mut tokens = alive[hi].tokens.clone();
                if y == EOS {
                    finished.push((score(lp, tokens.len() + 1), tokens));
                } else {
                    tokens.push(y);
                    if t + 1 == self.config.max_len {
                        finished.push((score(lp, tokens.len()), tokens));
                    } else {
                        next.push(Hyp {
                            tokens,
                            logp: lp,
                            state,
                        });
                    }
                }
            }
            if finished.len() >= width || next.is_empty() {
                break;
            }
            alive = next;
        }
        Ok(finished
            .into_iter()
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, t)| t)
            .unwrap_or_default())
    }

    pub fn generate(&self, input: &ModelInput, beam: usize) -> Result<Vec<usize>> {
        self.beam_search(input, beam)
    }

    pub fn generate_tokens(&self, input: &ModelInput, beam: usize) -> Result<Vec<String>> {
        Ok(self
            .generate(input, beam)?
            .into_iter()
            .map(|id| self.vocab.decode(id).unwrap_or("<unk>").to_string())
            .collect())
    }
}

/// Index of the largest value, skipping `banned`; lowest index on ties.
fn argmax(values: &[f64], banned: &[usize]) -> usize {
    let mut best = usize::MAX;
    for (i, &v) in values.iter().enumerate() {
        if banned.contains(&i) {
            continue;
        }
        if best == usize::MAX || v > values[best] {
            best = i;
        }
    }
    best
}
