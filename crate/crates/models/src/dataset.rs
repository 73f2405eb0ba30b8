//! Trials, stratified trial-level splits and window extraction.

use crate::ModelError;
use nalgebra::DMatrix;
use neuroarm_core::ClassLabel;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub start: usize,
    pub len: usize,
    pub label: ClassLabel,
}

/// Cuts the label track into trials: maximal constant-label runs, further
/// split into pieces of `trial_samples` when a run holds several
/// back-to-back trials of the same class.
pub fn find_trials(labels: &[ClassLabel], trial_samples: Option<usize>) -> Vec<Trial> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            let run = i - start;
            let piece = trial_samples.filter(|&p| p > 0 && run >= 2 * p).unwrap_or(run);
            let pieces = run / piece;
            for k in 0..pieces {
                let len = if k + 1 == pieces { run - k * piece } else { piece };
                out.push(Trial { start: start + k * piece, len, label: labels[start] });
            }
            start = i;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train: 0.70, val: 0.15, seed: 0 }
    }
}

/// Trial indices per partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified by class: each class's trials are shuffled and cut by the
/// configured fractions, so every class with at least 3 trials appears in
/// every partition.
pub fn split_trials(trials: &[Trial], cfg: &SplitConfig) -> Result<TrialSplit, ModelError> {
    if !(cfg.train > 0.0 && cfg.val > 0.0 && cfg.train + cfg.val < 1.0) {
        return Err(ModelError::Config(format!("split fractions train={} val={}", cfg.train, cfg.val)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut split = TrialSplit { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for class in ClassLabel::ALL {
        let mut idx: Vec<usize> = (0..trials.len()).filter(|&i| trials[i].label == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 3 {
            return Err(ModelError::Dataset(format!("class {class} has {} trials, need at least 3", idx.len())));
        }
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let n_val = ((n * cfg.val).round() as usize).max(1);
        let n_test = ((n * (1.0 - cfg.train - cfg.val)).round() as usize).max(1);
        let n_train = idx.len() - n_val - n_test;
        if n_train == 0 {
            return Err(ModelError::Dataset(format!("class {class} leaves no training trials")));
        }
        split.train.extend(&idx[..n_train]);
        split.val.extend(&idx[n_train..n_train + n_val]);
        split.test.extend(&idx[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRef {
    pub trial: usize,
    /// First sample of the window in the recording.
    pub start: usize,
    pub label: ClassLabel,
}

/// Windows of `len` samples lying wholly inside each listed trial, starting
/// at the trial onset and advancing by `step`.
pub fn trial_windows(trials: &[Trial], which: &[usize], len: usize, step: usize) -> Vec<WindowRef> {
    let step = step.max(1);
    let mut out = Vec::new();
    for &ti in which {
        let tr = trials[ti];
        let mut off = 0;
        while off + len <= tr.len {
            out.push(WindowRef { trial: ti, start: tr.start + off, label: tr.label });
            off += step;
        }
    }
    out
}

pub fn cut(signal: &DMatrix<f64>, w: &WindowRef, len: usize) -> DMatrix<f64> {
    signal.columns(w.start, len).into_owned()
}
