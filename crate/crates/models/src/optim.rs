//! Momentum SGD with global-norm gradient clipping.

use crate::nn::Params;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { lr: 0.05, momentum: 0.9, clip_norm: 5.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Sgd {
    pub cfg: SgdConfig,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig, n_params: usize) -> Self {
        Self { cfg, velocity: vec![0.0; n_params] }
    }

    /// Applies one update; returns the pre-clipping gradient norm.
    pub fn step<P: Params>(&mut self, model: &mut P, grad: &[f64]) -> f64 {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if norm > self.cfg.clip_norm { self.cfg.clip_norm / norm } else { 1.0 };
        let mut k = 0;
        for t in model.tensors_mut() {
            for p in t.iter_mut() {
                let v = self.cfg.momentum * self.velocity[k] - self.cfg.lr * scale * grad[k];
                self.velocity[k] = v;
                *p += v;
                k += 1;
            }
        }
        norm
    }
}

/// Minibatch schedule shared by the neural models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 32, sgd: SgdConfig::default() }
    }
}

/// Runs shuffled minibatch SGD and returns the mean training loss of every
/// epoch.
pub fn fit_minibatch<M: crate::nn::Differentiable>(
    model: &mut M,
    windows: &[nalgebra::DMatrix<f64>],
    labels: &[usize],
    cfg: &LoopConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<f64>, crate::ModelError> {
    use rand::seq::SliceRandom;
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(crate::ModelError::Config("epochs and batch_size must be positive".into()));
    }
    let mut opt = Sgd::new(cfg.sgd, model.n_params());
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut last_finite = None;
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<&nalgebra::DMatrix<f64>> = idx.iter().map(|&i| &windows[i]).collect();
            let ys: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = model.loss_and_grad(&xs, &ys, Some(&mut *rng as &mut dyn rand::RngCore));
            let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !loss.is_finite() || !grad_norm.is_finite() {
                return Err(crate::ModelError::NonFiniteLoss { epoch, batch, last_finite, grad_norm });
            }
            last_finite = Some(loss);
            opt.step(model, &grad);
            total += loss * idx.len() as f64;
        }
        let mean = total / windows.len() as f64;
        tracing::debug!(epoch, loss = mean, "epoch done");
        curve.push(mean);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat(Vec<f64>);

    impl Params for Flat {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn clips_to_global_norm_and_accumulates_momentum() {
        let mut p = Flat(vec![0.0, 0.0]);
        let mut opt = Sgd::new(SgdConfig { lr: 1.0, momentum: 0.5, clip_norm: 5.0 }, 2);
        let norm = opt.step(&mut p, &[30.0, 40.0]);
        assert_eq!(norm, 50.0);
        assert_eq!(p.0, vec![-3.0, -4.0]);
        opt.step(&mut p, &[0.0, 0.0]);
        assert_eq!(p.0, vec![-4.5, -6.0]);
    }
}
