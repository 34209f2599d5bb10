//! AdamW with a linear warm-up / linear decay learning-rate schedule.

use ndarray::Zip;

use crate::nn::{named_params, Matrix, Module};

/// Learning rate rising linearly to `peak` over the warm-up steps, then
/// falling linearly to zero at `total` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub peak: f64,
    pub warmup: usize,
    pub total: usize,
}

impl LinearSchedule {
    pub fn new(peak: f64, total: usize, warmup_ratio: f64) -> Self {
        LinearSchedule {
            peak,
            warmup: (total as f64 * warmup_ratio).round() as usize,
            total,
        }
    }

    /// Rate for the 0-based `step`.
    pub fn rate(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.peak * (step + 1) as f64 / self.warmup as f64;
        }
        let remaining = self.total.saturating_sub(self.warmup);
        if remaining == 0 {
            return self.peak;
        }
        self.peak * (self.total.saturating_sub(step)) as f64 / remaining as f64
    }
}

pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    decays: Vec<bool>,
    t: i32,
}

/// Biases and LayerNorm scale/shift are not decayed.
fn decays(name: &str) -> bool {
    let leaf = name.rsplit('.').next().unwrap_or(name);
    !matches!(leaf, "bias" | "gamma" | "beta")
}

impl AdamW {
    pub fn new<M: Module>(model: &M, weight_decay: f64) -> Self {
        let params = named_params(model);
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: params.iter().map(|(_, p)| Matrix::zeros(p.raw_dim())).collect(),
            v: params.iter().map(|(_, p)| Matrix::zeros(p.raw_dim())).collect(),
            decays: params.iter().map(|(name, _)| decays(name)).collect(),
            t: 0,
        }
    }

    pub fn step<M: Module>(&mut self, model: &mut M, grad: &M, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let grads = named_params(grad);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let mut i = 0;
        model.visit_mut("", &mut |_, p| {
            let g = grads[i].1;
            let decay = if self.decays[i] { lr * self.weight_decay } else { 0.0 };
            Zip::from(p)
                .and(g)
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let update = (*m / c1) / ((*v / c2).sqrt() + eps);
                    *p -= lr * update + decay * *p;
                });
            i += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Linear, Rng};
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn schedule_shape() {
        let s = LinearSchedule::new(1.0, 10, 0.2);
        let rates: Vec<f64> = (0..10).map(|i| s.rate(i)).collect();
        assert_eq!(rates[0], 0.5);
        assert_eq!(rates[1], 1.0);
        assert!(rates[2..].windows(2).all(|w| w[1] < w[0]));
        assert!(rates[9] > 0.0);
        let flat = LinearSchedule::new(0.3, 4, 0.0);
        assert_eq!(flat.rate(0), 0.3);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut rng = Rng::seed_from_u64(0);
        let mut layer = Linear::new(&mut rng, 2, 1);
        let before = layer.clone();
        let mut grad = layer.clone();
        grad.weight = array![[2.0], [-3.0]];
        grad.bias = array![[0.5]];
        let mut opt = AdamW::new(&layer, 0.0);
        opt.step(&mut layer, &grad, 0.01);
        // Bias-corrected first step is sign(g) * lr.
        let delta = &before.weight - &layer.weight;
        assert!((delta[[0, 0]] - 0.01).abs() < 1e-9);
        assert!((delta[[1, 0]] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn decay_skips_bias() {
        let mut rng = Rng::seed_from_u64(0);
        let mut layer = Linear::new(&mut rng, 2, 1);
        layer.bias = array![[1.0]];
        let before = layer.clone();
        let grad = crate::nn::zeros_like(&layer);
        let mut opt = AdamW::new(&layer, 0.5);
        opt.step(&mut layer, &grad, 0.1);
        assert_eq!(layer.bias, before.bias);
        assert!((&layer.weight - &(&before.weight * 0.95)).iter().all(|d| d.abs() < 1e-12));
    }
}
