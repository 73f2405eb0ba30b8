//! Pieces shared by the neural models: activations, loss, parameter
//! plumbing and input standardization.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Column-wise softmax of a (classes × batch) logit matrix.
pub fn softmax_cols(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut col in out.column_iter_mut() {
        let m = col.max();
        col.apply(|v| *v = (*v - m).exp());
        let s = col.sum();
        col /= s;
    }
    out
}

pub fn softmax(logits: &DVector<f64>) -> DVector<f64> {
    let m = logits.max();
    let e = logits.map(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(probs: &DMatrix<f64>, labels: &[usize]) -> (f64, DMatrix<f64>) {
    let b = labels.len() as f64;
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for (j, &y) in labels.iter().enumerate() {
        loss -= probs[(y, j)].max(1e-300).ln();
        grad[(y, j)] -= 1.0;
    }
    (loss / b, grad / b)
}

pub fn uniform_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

/// Flat access to every trainable tensor of a model, in a fixed order.
pub trait Params {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn get(&self, mut i: usize) -> f64 {
        for t in self.tensors() {
            if i < t.len() {
                return t[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range")
    }

    fn set(&mut self, mut i: usize, v: f64) {
        for t in self.tensors_mut() {
            if i < t.len() {
                t[i] = v;
                return;
            }
            i -= t.len();
        }
        panic!("parameter index out of range")
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Per-channel affine standardization fitted on training windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], scale: vec![1.0; channels] }
    }

    pub fn fit(windows: &[DMatrix<f64>]) -> Self {
        let ch = windows.first().map_or(0, |w| w.nrows());
        let mut sum = vec![0.0; ch];
        let mut sq = vec![0.0; ch];
        let mut n = 0.0;
        for w in windows {
            for c in 0..ch {
                for v in w.row(c).iter() {
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
            n += w.ncols() as f64;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let sd = (q / n - m * m).max(0.0).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(w.nrows(), w.ncols(), |c, t| (w[(c, t)] - self.mean[c]) * self.scale[c])
    }
}

/// Loss and flat gradient, the contract the optimizer and gradient checks
/// rely on.
pub trait Differentiable: Params {
    /// Mean cross-entropy over the batch and the gradient of every tensor
    /// (same order as [`Params::tensors`]). Dropout is disabled when
    /// `rng` is `None`.
    fn loss_and_grad(
        &self,
        windows: &[&DMatrix<f64>],
        labels: &[usize],
        rng: Option<&mut dyn rand::RngCore>,
    ) -> (f64, Vec<f64>);

    fn loss(&self, windows: &[&DMatrix<f64>], labels: &[usize]) -> f64;
}

/// Maximum per-parameter relative error between the analytic gradient and
/// central differences, `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check<M: Differentiable + Clone>(
    model: &M,
    windows: &[&DMatrix<f64>],
    labels: &[usize],
    eps: f64,
    floor: f64,
) -> f64 {
    let (_, analytic) = model.loss_and_grad(windows, labels, None);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in 0..model.n_params() {
        let v = model.get(i);
        probe.set(i, v + eps);
        let up = probe.loss(windows, labels);
        probe.set(i, v - eps);
        let down = probe.loss(windows, labels);
        probe.set(i, v);
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}
