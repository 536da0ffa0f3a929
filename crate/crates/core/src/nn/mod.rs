//! Dense fp64 arrays, trainable parameters, and the handful of differentiable
//! operations the encoder-decoder is written in.
//!
//! There is no tape: every layer exposes a `forward` that returns a cache and a
//! `backward` that consumes it, accumulating into a [`GradBuffer`]. Matrices are
//! row-major and always oriented `output × input`.

mod kernels;
mod layers;
mod optim;

pub use kernels::{gemv_acc, gemv_t_acc, ger_acc};
pub use layers::{Attention, AttentionCache, Gate, GruCache, GruCell, Linear};
pub use optim::{clip_gradients, clip_gradients_slices, LrSchedule, RmsProp};

use rand::Rng;

use crate::error::{Error, Result};

/// A dense array of `f64` with row-major semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::domain(format!(
                "tensor shape {shape:?} has a zero dimension"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim("tensor", &[n], &[data.len()]));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("tensor values must be finite"));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::from_vec(&[n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(&[rows, cols], data)
    }

    /// Uniform initialisation in `[-scale, scale)`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], scale: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                if scale > 0.0 {
                    rng.gen_range(-scale..scale)
                } else {
                    0.0
                }
            })
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension (the vector length for 1-D tensors).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Product of the trailing dimensions (1 for vectors).
    pub fn cols(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A named trainable (or frozen) array with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor, trainable: bool) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param {
            name: name.into(),
            value,
            grad,
            trainable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Owns every parameter of a model, addressed by [`ParamId`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        self.params.push(Param::new(name, value, trainable));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        self.params[id.0].value.data()
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Number of scalar values across trainable parameters.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Zero-filled scratch buffer shaped like the trainable parameters.
    ///
    /// Frozen parameters get an empty slot, so writing into one panics.
    pub fn grad_buffer(&self) -> GradBuffer {
        GradBuffer {
            grads: self
                .params
                .iter()
                .map(|p| {
                    if p.trainable {
                        vec![0.0; p.value.len()]
                    } else {
                        Vec::new()
                    }
                })
                .collect(),
        }
    }

    /// `grad += scale * buffer` for every trainable parameter.
    pub fn accumulate(&mut self, buffer: &GradBuffer, scale: f64) {
        for (p, g) in self.params.iter_mut().zip(&buffer.grads) {
            if !p.trainable {
                continue;
            }
            for (dst, src) in p.grad.data_mut().iter_mut().zip(g) {
                *dst += scale * src;
            }
        }
    }
}

/// Per-parameter gradient scratch space, kept apart from the store so that
/// forward reads and backward writes never alias.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    grads: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn add_assign(&mut self, other: &GradBuffer) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn clear(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }
}

/// `W x + b`.
pub fn affine(x: &[f64], w: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    if w.shape().len() != 2 || w.cols() != x.len() || w.rows() != b.len() {
        return Err(Error::dim("affine", &[b.len(), x.len()], w.shape()));
    }
    let mut out = b.to_vec();
    gemv_acc(w.data(), w.rows(), w.cols(), x, &mut out);
    Ok(out)
}

/// Accumulates the gradients of `W x + b` given the upstream `grad_out`.
pub fn affine_backward(
    x: &[f64],
    w: &Tensor,
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    grad_x: &mut [f64],
) {
    let (rows, cols) = (w.rows(), w.cols());
    ger_acc(grad_w, rows, cols, grad_out, x);
    for (gb, g) in grad_b.iter_mut().zip(grad_out) {
        *gb += g;
    }
    gemv_t_acc(w.data(), rows, cols, grad_out, grad_x);
}

/// Numerically stable softmax (max is subtracted before exponentiation).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::domain("softmax of an empty vector"));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Vector-Jacobian product of softmax: `p ∘ (g − ⟨p, g⟩)`.
pub fn softmax_backward(p: &[f64], grad_p: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(grad_p).map(|(a, b)| a * b).sum();
    p.iter()
        .zip(grad_p)
        .map(|(pi, gi)| pi * (gi - dot))
        .collect()
}

/// Negative log-likelihood summed over time steps and averaged over the batch.
///
/// `probs[b][t]` is the distribution at step `t` of sample `b`, `targets[b][t]`
/// the gold token id.
pub fn nll_loss(probs: &[Vec<Vec<f64>>], targets: &[Vec<usize>]) -> Result<f64> {
    if probs.len() != targets.len() {
        return Err(Error::dim("nll_loss", &[probs.len()], &[targets.len()]));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (seq, tgt) in probs.iter().zip(targets) {
        total += sequence_nll(seq, tgt)?;
    }
    Ok(total / probs.len() as f64)
}

/// `−Σ_t log p_t(y_t)` for one sequence.
pub fn sequence_nll(probs: &[Vec<f64>], targets: &[usize]) -> Result<f64> {
    if probs.len() != targets.len() {
        return Err(Error::dim("sequence_nll", &[probs.len()], &[targets.len()]));
    }
    let mut loss = 0.0;
    for (p, &y) in probs.iter().zip(targets) {
        let py = *p.get(y).ok_or(Error::Index {
            index: y,
            len: p.len(),
        })?;
        loss -= py.max(f64::MIN_POSITIVE).ln();
    }
    Ok(loss)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    macro_rules! assert_close {
        ($a:expr, $b:expr, $tol:expr) => {{
            let (a, b): (f64, f64) = ($a, $b);
            assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
        }};
    }

    #[test]
    fn affine_identity() {
        let w = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(
            affine(&[1.0, 0.0], &w, &[0.0, 0.0]).unwrap(),
            vec![1.0, 0.0]
        );
    }

    #[test]
    fn affine_hand_multiply() {
        let w = Tensor::matrix(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(
            affine(&[1.0, 2.0], &w, &[1.0, 0.0]).unwrap(),
            vec![4.0, 2.0]
        );
    }

    #[test]
    fn affine_zero_weights() {
        let w = Tensor::zeros(&[3, 2]);
        assert_eq!(affine(&[5.0, -7.0], &w, &[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let w = Tensor::zeros(&[3, 2]);
        let err = affine(&[1.0, 2.0, 3.0], &w, &[0.0; 3]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[3, 3]") && msg.contains("[3, 2]"), "{msg}");
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in &p {
            assert_close!(*v, 1.0 / 3.0, 1e-15);
        }
        // exp(k) / (e + e^2 + e^3) evaluated directly
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        for (k, v) in p.iter().enumerate() {
            assert_close!(*v, ((k + 1) as f64).exp() / z, 1e-15);
        }
        assert_close!(p[0], 0.09003, 1e-5);
        assert_close!(p[1], 0.24473, 1e-5);
        assert_close!(p[2], 0.66524, 1e-5);
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert_close!(p[0], 1.0, 1e-15);
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn nll_examples() {
        assert_eq!(nll_loss(&[vec![vec![0.0, 1.0]]], &[vec![1]]).unwrap(), 0.0);
        assert_close!(
            nll_loss(&[vec![vec![0.5, 0.5]]], &[vec![0]]).unwrap(),
            std::f64::consts::LN_2,
            1e-15
        );
        assert_close!(
            nll_loss(&[vec![vec![0.5, 0.5], vec![0.5, 0.5]]], &[vec![0, 1]]).unwrap(),
            2.0 * std::f64::consts::LN_2,
            1e-15
        );
        // batch mean
        assert_close!(
            nll_loss(
                &[vec![vec![0.5, 0.5]], vec![vec![1.0, 0.0]]],
                &[vec![0], vec![0]]
            )
            .unwrap(),
            std::f64::consts::LN_2 / 2.0,
            1e-15
        );
        assert!(matches!(
            nll_loss(&[vec![vec![1.0]]], &[vec![3]]),
            Err(Error::Index { index: 3, len: 1 })
        ));
    }

    #[test]
    fn tensor_rejects_bad_input() {
        assert!(Tensor::from_vec(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::from_vec(&[0], vec![]).is_err());
        assert!(Tensor::from_vec(&[1], vec![f64::NAN]).is_err());
    }
}
