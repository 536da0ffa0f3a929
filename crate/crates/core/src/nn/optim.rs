use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};

/// Rescales trainable gradients so that their global L2 norm is at most
/// `max_norm`. Returns the scale factor that was applied (1 when untouched).
pub fn clip_gradients(store: &mut ParamStore, max_norm: f64) -> f64 {
    let mut grads: Vec<&mut [f64]> = store
        .iter_mut()
        .filter(|p| p.trainable)
        .map(|p| p.grad.data_mut())
        .collect();
    clip_gradients_slices(&mut grads, max_norm)
}

pub fn clip_gradients_slices(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm <= max_norm {
        return 1.0;
    }
    let scale = max_norm / norm;
    for g in grads.iter_mut() {
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    scale
}

/// RMSProp with one squared-gradient accumulator per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub decay: f64,
    pub epsilon: f64,
    accumulators: Vec<Tensor>,
}

impl RmsProp {
    pub fn new(store: &ParamStore, decay: f64, epsilon: f64) -> Self {
        assert!(decay > 0.0 && decay < 1.0, "decay must lie in (0, 1)");
        assert!(epsilon > 0.0);
        RmsProp {
            decay,
            epsilon,
            accumulators: store
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect(),
        }
    }

    pub fn accumulators(&self) -> &[Tensor] {
        &self.accumulators
    }

    /// `acc ← ρ acc + (1−ρ) g²`, `θ ← θ − lr g / (√acc + ε)` on trainable params.
    pub fn step(&mut self, store: &mut ParamStore, learning_rate: f64) {
        let (rho, eps) = (self.decay, self.epsilon);
        for (p, acc) in store.iter_mut().zip(self.accumulators.iter_mut()) {
            if !p.trainable {
                continue;
            }
            let grad = p.grad.data();
            let value = p.value.data_mut();
            for ((v, a), g) in value.iter_mut().zip(acc.data_mut()).zip(grad) {
                *a = rho * *a + (1.0 - rho) * g * g;
                *v -= learning_rate * g / (a.sqrt() + eps);
            }
        }
    }
}

/// Multiplicative per-epoch learning-rate decay with a floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial: 1e-3,
            decay: 0.99,
            floor: 1e-5,
        }
    }
}

impl LrSchedule {
    pub fn at_epoch(&self, epoch: usize) -> f64 {
        (self.initial * self.decay.powi(epoch as i32)).max(self.floor.min(self.initial))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(value: f64, grad: f64) -> ParamStore {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::vector(vec![value]).unwrap(), true);
        store.get_mut(id).grad.data_mut()[0] = grad;
        store
    }

    #[test]
    fn clip_leaves_small_gradients() {
        let mut store = scalar_store(0.0, 0.05);
        assert_eq!(clip_gradients(&mut store, 0.1), 1.0);
        assert_eq!(store.iter().next().unwrap().grad.data(), &[0.05]);
    }

    #[test]
    fn clip_scales_large_gradients() {
        let mut store = ParamStore::new();
        let id = store.add("g", Tensor::zeros(&[2]), true);
        store
            .get_mut(id)
            .grad
            .data_mut()
            .copy_from_slice(&[3.0, 4.0]);
        let s = clip_gradients(&mut store, 0.1);
        assert!((s - 0.02).abs() < 1e-15);
        let g = store.get(id).grad.data();
        assert!((g[0] - 0.06).abs() < 1e-15 && (g[1] - 0.08).abs() < 1e-15);
    }

    #[test]
    fn clip_all_zero() {
        let mut store = ParamStore::new();
        store.add("g", Tensor::zeros(&[4]), true);
        assert_eq!(clip_gradients(&mut store, 0.1), 1.0);
    }

    #[test]
    fn clip_ignores_frozen_params() {
        let mut store = ParamStore::new();
        let frozen = store.add("f", Tensor::zeros(&[1]), false);
        store.get_mut(frozen).grad.data_mut()[0] = 100.0;
        assert_eq!(clip_gradients(&mut store, 0.1), 1.0);
    }

    #[test]
    fn rmsprop_zero_grad_is_noop() {
        let mut store = scalar_store(0.7, 0.0);
        let mut opt = RmsProp::new(&store, 0.9, 1e-8);
        opt.step(&mut store, 0.001);
        assert_eq!(store.iter().next().unwrap().value.data(), &[0.7]);
    }

    #[test]
    fn rmsprop_scalar_step() {
        let mut store = scalar_store(1.0, 1.0);
        let mut opt = RmsProp::new(&store, 0.9, 1e-8);
        opt.step(&mut store, 0.001);
        let expected = 1.0 - 0.001 / (0.1f64.sqrt() + 1e-8);
        assert!((store.iter().next().unwrap().value.data()[0] - expected).abs() < 1e-15);
        assert!((opt.accumulators()[0].data()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_descends_quadratic() {
        // f(x) = (x - 3)^2
        let mut store = scalar_store(0.0, 0.0);
        let mut opt = RmsProp::new(&store, 0.9, 1e-8);
        let loss = |x: f64| (x - 3.0) * (x - 3.0);
        let mut prev = loss(0.0);
        for _ in 0..2 {
            let x = store.iter().next().unwrap().value.data()[0];
            store.iter_mut().next().unwrap().grad.data_mut()[0] = 2.0 * (x - 3.0);
            opt.step(&mut store, 0.01);
            let now = loss(store.iter().next().unwrap().value.data()[0]);
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn schedule_decays_to_floor() {
        let s = LrSchedule::default();
        assert_eq!(s.at_epoch(0), 1e-3);
        assert!((s.at_epoch(1) - 0.99e-3).abs() < 1e-18);
        assert_eq!(s.at_epoch(10_000), 1e-5);
    }
}
