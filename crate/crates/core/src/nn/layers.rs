use rand::Rng;

use super::kernels::{gemv_acc, gemv_t_acc, ger_acc};
use super::{sigmoid, softmax_in_place, GradBuffer, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Affine map `W x (+ b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub out_dim: usize,
    pub in_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        out_dim: usize,
        in_dim: usize,
        bias: bool,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let w = store.add(
            format!("{name}.weight"),
            Tensor::uniform(&[out_dim, in_dim], scale, rng),
            true,
        );
        let b = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]), true));
        Linear {
            w,
            b,
            out_dim,
            in_dim,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::dim(
                "linear",
                &[self.out_dim, self.in_dim],
                &[x.len()],
            ));
        }
        let mut out = match self.b {
            Some(b) => store.value(b).to_vec(),
            None => vec![0.0; self.out_dim],
        };
        gemv_acc(store.value(self.w), self.out_dim, self.in_dim, x, &mut out);
        Ok(out)
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut GradBuffer,
        x: &[f64],
        grad_out: &[f64],
        grad_x: Option<&mut [f64]>,
    ) {
        ger_acc(
            grads.get_mut(self.w),
            self.out_dim,
            self.in_dim,
            grad_out,
            x,
        );
        if let Some(b) = self.b {
            for (gb, g) in grads.get_mut(b).iter_mut().zip(grad_out) {
                *gb += g;
            }
        }
        if let Some(gx) = grad_x {
            gemv_t_acc(store.value(self.w), self.out_dim, self.in_dim, grad_out, gx);
        }
    }
}

/// One GRU gate: `W x + U h + A a + b`, the `A` term present only in the
/// attention-fed (decoder) form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    pub w: ParamId,
    pub u: ParamId,
    pub a: Option<ParamId>,
    pub b: ParamId,
}

/// Gated recurrent unit. In the decoder form each gate also receives
/// `A · a` where `a` is the attention summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GruCell {
    /// Produces the candidate state `s̃`.
    pub candidate: Gate,
    /// `z`: interpolation between the previous and candidate state.
    pub update: Gate,
    /// `r`: masks the previous state inside the candidate.
    pub reset: Gate,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// 0 for the encoder form.
    pub attn_dim: usize,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub a: Option<Vec<f64>>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub rh: Vec<f64>,
    pub candidate: Vec<f64>,
    pub out: Vec<f64>,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        attn_dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut gate = |suffix: &str| {
            let w = store.add(
                format!("{name}.W{suffix}"),
                Tensor::uniform(&[hidden_dim, input_dim], scale, rng),
                true,
            );
            let u = store.add(
                format!("{name}.U{suffix}"),
                Tensor::uniform(&[hidden_dim, hidden_dim], scale, rng),
                true,
            );
            let a = (attn_dim > 0).then(|| {
                store.add(
                    format!("{name}.A{suffix}"),
                    Tensor::uniform(&[hidden_dim, attn_dim], scale, rng),
                    true,
                )
            });
            let b = store.add(
                format!("{name}.b{suffix}"),
                Tensor::zeros(&[hidden_dim]),
                true,
            );
            Gate { w, u, a, b }
        };
        let candidate = gate("");
        let update = gate("_z");
        let reset = gate("_r");
        GruCell {
            candidate,
            update,
            reset,
            input_dim,
            hidden_dim,
            attn_dim,
        }
    }

    fn pre_activation(
        &self,
        store: &ParamStore,
        gate: &Gate,
        x: &[f64],
        h: &[f64],
        a: Option<&[f64]>,
    ) -> Vec<f64> {
        let hd = self.hidden_dim;
        let mut pre = store.value(gate.b).to_vec();
        gemv_acc(store.value(gate.w), hd, self.input_dim, x, &mut pre);
        gemv_acc(store.value(gate.u), hd, hd, h, &mut pre);
        if let (Some(aid), Some(a)) = (gate.a, a) {
            gemv_acc(store.value(aid), hd, self.attn_dim, a, &mut pre);
        }
        pre
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &[f64],
        h_prev: &[f64],
        a: Option<&[f64]>,
    ) -> Result<GruCache> {
        if x.len() != self.input_dim {
            return Err(Error::dim("gru input", &[self.input_dim], &[x.len()]));
        }
        if h_prev.len() != self.hidden_dim {
            return Err(Error::dim("gru state", &[self.hidden_dim], &[h_prev.len()]));
        }
        match (self.attn_dim, a) {
            (0, None) => {}
            (n, Some(a)) if n == a.len() => {}
            (n, a) => {
                return Err(Error::dim(
                    "gru attention input",
                    &[n],
                    &[a.map_or(0, <[f64]>::len)],
                ))
            }
        }
        let z: Vec<f64> = self
            .pre_activation(store, &self.update, x, h_prev, a)
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<f64> = self
            .pre_activation(store, &self.reset, x, h_prev, a)
            .into_iter()
            .map(sigmoid)
            .collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(r, h)| r * h).collect();
        let candidate: Vec<f64> = self
            .pre_activation(store, &self.candidate, x, &rh, a)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let out = z
            .iter()
            .zip(h_prev)
            .zip(&candidate)
            .map(|((z, h), c)| z * h + (1.0 - z) * c)
            .collect();
        Ok(GruCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            a: a.map(<[f64]>::to_vec),
            z,
            r,
            rh,
            candidate,
            out,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn gate_backward(
        &self,
        store: &ParamStore,
        grads: &mut GradBuffer,
        gate: &Gate,
        cache: &GruCache,
        h_in: &[f64],
        dpre: &[f64],
        dx: &mut [f64],
        dh_in: &mut [f64],
        da: &mut Option<&mut [f64]>,
    ) {
        let hd = self.hidden_dim;
        ger_acc(grads.get_mut(gate.w), hd, self.input_dim, dpre, &cache.x);
        gemv_t_acc(store.value(gate.w), hd, self.input_dim, dpre, dx);
        ger_acc(grads.get_mut(gate.u), hd, hd, dpre, h_in);
        gemv_t_acc(store.value(gate.u), hd, hd, dpre, dh_in);
        if let (Some(aid), Some(a)) = (gate.a, cache.a.as_deref()) {
            ger_acc(grads.get_mut(aid), hd, self.attn_dim, dpre, a);
            if let Some(da) = da.as_deref_mut() {
                gemv_t_acc(store.value(aid), hd, self.attn_dim, dpre, da);
            }
        }
        for (gb, g) in grads.get_mut(gate.b).iter_mut().zip(dpre) {
            *gb += g;
        }
    }

    /// Accumulates parameter gradients and writes `∂L/∂x`, `∂L/∂h_prev`,
    /// `∂L/∂a` (all accumulated, not overwritten) given `∂L/∂s_t`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut GradBuffer,
        cache: &GruCache,
        d_out: &[f64],
        dx: &mut [f64],
        dh_prev: &mut [f64],
        mut da: Option<&mut [f64]>,
    ) {
        let hd = self.hidden_dim;
        let mut dz = vec![0.0; hd];
        let mut dpre_c = vec![0.0; hd];
        for i in 0..hd {
            let ds = d_out[i];
            let z = cache.z[i];
            dh_prev[i] += ds * z;
            dz[i] = ds * (cache.h_prev[i] - cache.candidate[i]);
            let dcand = ds * (1.0 - z);
            dpre_c[i] = dcand * (1.0 - cache.candidate[i] * cache.candidate[i]);
        }

        // candidate gate reads r ∘ h_prev
        let mut d_rh = vec![0.0; hd];
        self.gate_backward(
            store,
            grads,
            &self.candidate,
            cache,
            &cache.rh,
            &dpre_c,
            dx,
            &mut d_rh,
            &mut da,
        );
        let mut dpre_r = vec![0.0; hd];
        for i in 0..hd {
            dh_prev[i] += d_rh[i] * cache.r[i];
            let dr = d_rh[i] * cache.h_prev[i];
            dpre_r[i] = dr * cache.r[i] * (1.0 - cache.r[i]);
        }
        let dpre_z: Vec<f64> = dz
            .iter()
            .zip(&cache.z)
            .map(|(d, z)| d * z * (1.0 - z))
            .collect();
        self.gate_backward(
            store,
            grads,
            &self.update,
            cache,
            &cache.h_prev,
            &dpre_z,
            dx,
            dh_prev,
            &mut da,
        );
        self.gate_backward(
            store,
            grads,
            &self.reset,
            cache,
            &cache.h_prev,
            &dpre_r,
            dx,
            dh_prev,
            &mut da,
        );
    }
}

/// Additive attention: `e_i = vᵀ tanh(W q + U k_i)`, `α = softmax(e)`,
/// summary `Σ α_i k_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attention {
    pub w: ParamId,
    pub u: ParamId,
    pub v: ParamId,
    pub hidden_dim: usize,
    pub query_dim: usize,
    pub key_dim: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub activations: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub summary: Vec<f64>,
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        hidden_dim: usize,
        query_dim: usize,
        key_dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let w = store.add(
            format!("{name}.W_a"),
            Tensor::uniform(&[hidden_dim, query_dim], scale, rng),
            true,
        );
        let u = store.add(
            format!("{name}.U_a"),
            Tensor::uniform(&[hidden_dim, key_dim], scale, rng),
            true,
        );
        let v = store.add(
            format!("{name}.v_a"),
            Tensor::uniform(&[hidden_dim], scale, rng),
            true,
        );
        Attention {
            w,
            u,
            v,
            hidden_dim,
            query_dim,
            key_dim,
        }
    }

    /// `U k_i` for every key. Independent of the query, so it is computed
    /// once per input sequence.
    pub fn project_keys(&self, store: &ParamStore, keys: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        keys.iter()
            .map(|k| {
                if k.len() != self.key_dim {
                    return Err(Error::dim("attention key", &[self.key_dim], &[k.len()]));
                }
                let mut out = vec![0.0; self.hidden_dim];
                gemv_acc(
                    store.value(self.u),
                    self.hidden_dim,
                    self.key_dim,
                    k,
                    &mut out,
                );
                Ok(out)
            })
            .collect()
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        keys: &[Vec<f64>],
        projected: &[Vec<f64>],
        query: &[f64],
    ) -> Result<AttentionCache> {
        if keys.is_empty() {
            return Err(Error::domain("attention over zero inputs"));
        }
        if query.len() != self.query_dim {
            return Err(Error::dim(
                "attention query",
                &[self.query_dim],
                &[query.len()],
            ));
        }
        if projected.len() != keys.len() {
            return Err(Error::dim(
                "attention projection",
                &[keys.len()],
                &[projected.len()],
            ));
        }
        let mut wq = vec![0.0; self.hidden_dim];
        gemv_acc(
            store.value(self.w),
            self.hidden_dim,
            self.query_dim,
            query,
            &mut wq,
        );
        let v = store.value(self.v);
        let mut activations = Vec::with_capacity(keys.len());
        let mut scores = Vec::with_capacity(keys.len());
        for uk in projected {
            let t: Vec<f64> = wq.iter().zip(uk).map(|(a, b)| (a + b).tanh()).collect();
            scores.push(t.iter().zip(v).map(|(a, b)| a * b).sum::<f64>());
            activations.push(t);
        }
        softmax_in_place(&mut scores);
        let mut summary = vec![0.0; self.key_dim];
        for (alpha, k) in scores.iter().zip(keys) {
            if k.len() != self.key_dim {
                return Err(Error::dim("attention key", &[self.key_dim], &[k.len()]));
            }
            for (s, x) in summary.iter_mut().zip(k) {
                *s += alpha * x;
            }
        }
        Ok(AttentionCache {
            activations,
            weights: scores,
            summary,
        })
    }

    /// Backward through one attention read. Key gradients flowing through the
    /// weighted sum go to `d_keys`; those flowing through `U k_i` go to
    /// `d_projected` and are resolved later by [`Self::backward_projection`].
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut GradBuffer,
        keys: &[Vec<f64>],
        cache: &AttentionCache,
        query: &[f64],
        d_summary: &[f64],
        d_query: &mut [f64],
        d_keys: &mut [Vec<f64>],
        d_projected: &mut [Vec<f64>],
    ) {
        let n = keys.len();
        let mut d_alpha = vec![0.0; n];
        for i in 0..n {
            let alpha = cache.weights[i];
            let mut dot = 0.0;
            for ((dk, k), ds) in d_keys[i].iter_mut().zip(&keys[i]).zip(d_summary) {
                *dk += alpha * ds;
                dot += k * ds;
            }
            d_alpha[i] = dot;
        }
        let mean: f64 = cache.weights.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
        let v = store.value(self.v);
        let mut d_wq = vec![0.0; self.hidden_dim];
        {
            let dv = grads.get_mut(self.v);
            for i in 0..n {
                let de = cache.weights[i] * (d_alpha[i] - mean);
                if de == 0.0 {
                    continue;
                }
                let t = &cache.activations[i];
                for j in 0..self.hidden_dim {
                    dv[j] += de * t[j];
                    let dpre = de * v[j] * (1.0 - t[j] * t[j]);
                    d_wq[j] += dpre;
                    d_projected[i][j] += dpre;
                }
            }
        }
        ger_acc(
            grads.get_mut(self.w),
            self.hidden_dim,
            self.query_dim,
            &d_wq,
            query,
        );
        gemv_t_acc(
            store.value(self.w),
            self.hidden_dim,
            self.query_dim,
            &d_wq,
            d_query,
        );
    }

    pub fn backward_projection(
        &self,
        store: &ParamStore,
        grads: &mut GradBuffer,
        keys: &[Vec<f64>],
        d_projected: &[Vec<f64>],
        d_keys: &mut [Vec<f64>],
    ) {
        for ((k, dp), dk) in keys.iter().zip(d_projected).zip(d_keys.iter_mut()) {
            ger_acc(grads.get_mut(self.u), self.hidden_dim, self.key_dim, dp, k);
            gemv_t_acc(store.value(self.u), self.hidden_dim, self.key_dim, dp, dk);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell(attn: usize) -> (ParamStore, GruCell) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 2, 3, attn, 0.5, &mut rng);
        (store, cell)
    }

    fn set(store: &mut ParamStore, id: ParamId, v: f64) {
        store.get_mut(id).value.data_mut().fill(v);
    }

    #[test]
    fn saturated_update_gate_copies_previous_state() {
        let (mut store, cell) = cell(0);
        set(&mut store, cell.update.b, 60.0);
        let h = [0.3, -0.2, 0.9];
        let out = cell.forward(&store, &[1.0, -1.0], &h, None).unwrap().out;
        for (o, e) in out.iter().zip(&h) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_closed_update_gate_gives_zero() {
        let (mut store, cell) = cell(0);
        for p in store.iter_mut() {
            p.value.data_mut().fill(0.0);
        }
        set(&mut store, cell.update.b, -60.0);
        set(&mut store, cell.reset.b, 60.0);
        let out = cell
            .forward(&store, &[1.0, 2.0], &[0.5, 0.5, 0.5], None)
            .unwrap()
            .out;
        assert!(out.iter().all(|v| v.abs() < 1e-12), "{out:?}");
    }

    #[test]
    fn attention_input_is_required_when_declared() {
        let (store, cell) = cell(2);
        assert!(cell.forward(&store, &[0.0, 0.0], &[0.0; 3], None).is_err());
        assert!(cell
            .forward(&store, &[0.0, 0.0], &[0.0; 3], Some(&[0.0; 3]))
            .is_err());
        assert!(cell
            .forward(&store, &[0.0, 0.0], &[0.0; 3], Some(&[0.0; 2]))
            .is_ok());
        assert!(cell
            .forward(&store, &[0.0], &[0.0; 3], Some(&[0.0; 2]))
            .is_err());
    }

    #[test]
    fn zero_attention_input_matches_plain_cell_math() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let with_a = GruCell::new(&mut store, "a", 2, 3, 4, 0.5, &mut rng);
        let x = [0.2, -0.4];
        let h = [0.1, 0.0, -0.3];
        let full = with_a.forward(&store, &x, &h, Some(&[0.0; 4])).unwrap().out;
        let plain = GruCell {
            attn_dim: 0,
            ..with_a
        };
        let stripped = GruCell {
            candidate: Gate {
                a: None,
                ..plain.candidate
            },
            update: Gate {
                a: None,
                ..plain.update
            },
            reset: Gate {
                a: None,
                ..plain.reset
            },
            ..plain
        };
        let reduced = stripped.forward(&store, &x, &h, None).unwrap().out;
        assert_eq!(full, reduced);
    }

    #[test]
    fn single_key_attention_returns_that_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let att = Attention::new(&mut store, "att", 4, 3, 2, 0.5, &mut rng);
        let keys = vec![vec![0.7, -0.1]];
        let proj = att.project_keys(&store, &keys).unwrap();
        let c = att.forward(&store, &keys, &proj, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(c.weights, vec![1.0]);
        assert_eq!(c.summary, keys[0]);
    }

    #[test]
    fn identical_keys_get_uniform_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let att = Attention::new(&mut store, "att", 4, 3, 2, 0.5, &mut rng);
        let keys = vec![vec![0.5, 0.5]; 4];
        let proj = att.project_keys(&store, &keys).unwrap();
        let c = att
            .forward(&store, &keys, &proj, &[1.0, -1.0, 0.0])
            .unwrap();
        for w in c.weights {
            assert!((w - 0.25).abs() < 1e-15);
        }
        assert!(att.forward(&store, &[], &[], &[0.0; 3]).is_err());
    }
}
