//! Multinomial logistic regression over the concatenated base-model
//! probabilities.

use crate::nn::softmax;
use crate::ModelError;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaConfig {
    pub lr: f64,
    pub iterations: usize,
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self { lr: 1.0, iterations: 2000, l2: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaModel {
    /// `n_classes × n_inputs`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl MetaModel {
    pub fn n_inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn predict(&self, stacked: &[f64]) -> Result<DVector<f64>, ModelError> {
        if stacked.len() != self.n_inputs() {
            return Err(ModelError::Shape(format!("meta expects {} inputs, got {}", self.n_inputs(), stacked.len())));
        }
        let x = DVector::from_column_slice(stacked);
        Ok(softmax(&(&self.weights * x + &self.bias)))
    }
}

/// Row indices used to fit the base models and the meta-classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackingFolds {
    pub base_train: Vec<usize>,
    pub meta_train: Vec<usize>,
}

impl StackingFolds {
    pub fn check_disjoint(&self) -> Result<(), ModelError> {
        let base: BTreeSet<usize> = self.base_train.iter().copied().collect();
        let shared = self.meta_train.iter().filter(|i| base.contains(i)).count();
        if shared > 0 {
            return Err(ModelError::FoldLeakage(shared));
        }
        Ok(())
    }
}

/// Fits the fusion stage on held-out base probabilities. `stacked[i]` must
/// come from row `folds.meta_train[i]`.
pub fn train_meta(
    stacked: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    folds: &StackingFolds,
    cfg: &MetaConfig,
) -> Result<MetaModel, ModelError> {
    folds.check_disjoint()?;
    if stacked.len() != folds.meta_train.len() || stacked.len() != labels.len() {
        return Err(ModelError::Shape(format!(
            "{} stacked rows, {} labels, {} meta indices",
            stacked.len(),
            labels.len(),
            folds.meta_train.len()
        )));
    }
    let dim = stacked.first().ok_or(ModelError::Empty)?.len();
    if let Some(r) = stacked.iter().find(|r| r.len() != dim) {
        return Err(ModelError::Shape(format!("stacked row of length {} (expected {dim})", r.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(ModelError::Label { label, n_classes });
    }
    let n = stacked.len();
    let x = DMatrix::from_fn(dim, n, |r, c| stacked[c][r]);
    let mut y = DMatrix::zeros(n_classes, n);
    labels.iter().enumerate().for_each(|(j, &l)| y[(l, j)] = 1.0);
    let mut w = DMatrix::zeros(n_classes, dim);
    let mut b = DVector::zeros(n_classes);
    for _ in 0..cfg.iterations {
        let mut logits = &w * &x;
        for mut col in logits.column_iter_mut() {
            col += &b;
        }
        let err = (crate::nn::softmax_cols(&logits) - &y) / n as f64;
        let gw = &err * x.transpose() + &w * cfg.l2;
        let gb = crate::lstm::row_sums(&err);
        w -= gw * cfg.lr;
        b -= gb * cfg.lr;
    }
    if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteLoss { epoch: 0, batch: 0, last_finite: None, grad_norm: f64::NAN });
    }
    Ok(MetaModel { weights: w, bias: b })
}
