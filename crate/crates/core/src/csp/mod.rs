//! Epoching, common spatial patterns, feature extraction and the sliding
//! window scheduler.

mod windows;

pub use windows::{sliding_windows, SlidingWindow, SlidingWindows, WindowSpec, Windower};

use crate::linalg::{covariance, sym_eigen_desc};
use crate::ClassLabel;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CspError {
    #[error("class {0} has fewer than 2 epochs")]
    TooFewEpochs(String),
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("n_pairs = {n_pairs} needs at least {needed} channels, got {channels}")]
    Pairs { n_pairs: usize, needed: usize, channels: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid window spec: {0}")]
    WindowSpec(String),
}

/// Fixed-length labeled segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub samples: DMatrix<f64>,
    pub label: ClassLabel,
}

/// Cuts non-overlapping epochs of `len_s` seconds. Epochs that straddle a
/// label change are dropped.
pub fn epoch_recording(samples: &DMatrix<f64>, labels: &[ClassLabel], fs: f64, len_s: f64) -> Vec<Epoch> {
    let len = (fs * len_s).round() as usize;
    if len == 0 || labels.len() != samples.ncols() {
        return Vec::new();
    }
    (0..samples.ncols() / len)
        .filter_map(|k| {
            let span = &labels[k * len..(k + 1) * len];
            let first = span[0];
            span.iter().all(|&l| l == first).then(|| Epoch {
                samples: samples.columns(k * len, len).into_owned(),
                label: first,
            })
        })
        .collect()
}

/// Which classes a block of filters separates. `negative` is `None` for a
/// one-vs-rest block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CspBlock {
    pub positive: ClassLabel,
    pub negative: Option<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspModel {
    /// One row per spatial filter, `2 * n_pairs` rows per block.
    pub filters: DMatrix<f64>,
    /// Block index of each filter row.
    pub pair_index: Vec<usize>,
    pub blocks: Vec<CspBlock>,
    /// Generalized eigenvalue of each filter, descending within a block.
    pub eigvals: Vec<f64>,
    pub n_pairs: usize,
    /// Ridge added to the composite covariance of each block (0 if none).
    pub ridge: Vec<f64>,
}

impl CspModel {
    pub fn n_channels(&self) -> usize {
        self.filters.ncols()
    }

    pub fn n_filters(&self) -> usize {
        self.filters.nrows()
    }

    pub fn block_rows(&self, block: usize) -> std::ops::Range<usize> {
        let w = 2 * self.n_pairs;
        block * w..(block + 1) * w
    }
}

fn normalized_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let c = covariance(x);
    let tr = c.trace();
    if tr > 0.0 {
        c / tr
    } else {
        c
    }
}

fn mean_covariance(epochs: &[&Epoch]) -> DMatrix<f64> {
    let ch = epochs[0].samples.nrows();
    let mut acc = DMatrix::zeros(ch, ch);
    for e in epochs {
        acc += normalized_covariance(&e.samples);
    }
    acc / epochs.len() as f64
}

/// Result of a single generalized eigenproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct CspPair {
    pub filters: DMatrix<f64>,
    pub eigvals: Vec<f64>,
    pub ridge: f64,
}

/// Solves `C_a w = λ (C_a + C_b) w` and keeps `n_pairs` filters from each end
/// of the spectrum.
pub fn fit_csp_covariances(c_a: &DMatrix<f64>, c_b: &DMatrix<f64>, n_pairs: usize) -> Result<CspPair, CspError> {
    let ch = c_a.nrows();
    if c_a.shape() != (ch, ch) || c_b.shape() != (ch, ch) {
        return Err(CspError::Shape("covariances must be square and equal-sized".into()));
    }
    if n_pairs == 0 || 2 * n_pairs > ch {
        return Err(CspError::Pairs { n_pairs, needed: 2 * n_pairs.max(1), channels: ch });
    }
    let mut composite = c_a + c_b;
    let (vals, _) = sym_eigen_desc(&composite);
    let tr = composite.trace();
    let mut ridge = 0.0;
    if vals[ch - 1] <= 1e-10 * vals[0].max(f64::MIN_POSITIVE) {
        ridge = 1e-6 * tr.max(f64::MIN_POSITIVE);
        composite += DMatrix::identity(ch, ch) * ridge;
        tracing::debug!(ridge, "composite covariance singular, ridge applied");
    }
    let (cv, ce) = sym_eigen_desc(&composite);
    let p = DMatrix::from_diagonal(&cv.map(|v| 1.0 / v.sqrt())) * ce.transpose();
    let s = &p * c_a * p.transpose();
    let (lam, u) = sym_eigen_desc(&s);
    let full = u.transpose() * p;
    let keep: Vec<usize> = (0..n_pairs).chain(ch - n_pairs..ch).collect();
    let mut filters = DMatrix::zeros(keep.len(), ch);
    for (r, &k) in keep.iter().enumerate() {
        filters.set_row(r, &full.row(k));
    }
    Ok(CspPair { filters, eigvals: keep.iter().map(|&k| lam[k]).collect(), ridge })
}

/// Two-class CSP.
pub fn fit_csp(epochs_a: &[Epoch], epochs_b: &[Epoch], n_pairs: usize) -> Result<CspModel, CspError> {
    let label_of = |e: &[Epoch]| e.first().map(|x| x.label);
    let a = label_of(epochs_a).unwrap_or(ClassLabel::Left);
    let b = label_of(epochs_b).unwrap_or(ClassLabel::Right);
    for (eps, l) in [(epochs_a, a), (epochs_b, b)] {
        if eps.len() < 2 {
            return Err(CspError::TooFewEpochs(l.to_string()));
        }
    }
    check_shapes(epochs_a.iter().chain(epochs_b))?;
    let ra: Vec<&Epoch> = epochs_a.iter().collect();
    let rb: Vec<&Epoch> = epochs_b.iter().collect();
    let pair = fit_csp_covariances(&mean_covariance(&ra), &mean_covariance(&rb), n_pairs)?;
    Ok(CspModel {
        pair_index: vec![0; pair.filters.nrows()],
        blocks: vec![CspBlock { positive: a, negative: Some(b) }],
        eigvals: pair.eigvals,
        filters: pair.filters,
        n_pairs,
        ridge: vec![pair.ridge],
    })
}

fn check_shapes<'a>(mut it: impl Iterator<Item = &'a Epoch>) -> Result<(), CspError> {
    let Some(first) = it.next() else { return Ok(()) };
    let shape = first.samples.shape();
    match it.find(|e| e.samples.nrows() != shape.0) {
        Some(e) => Err(CspError::Shape(format!("epochs with {} and {} channels", shape.0, e.samples.nrows()))),
        None => Ok(()),
    }
}

/// One-vs-rest CSP over the classes present, in `classes` order. With two
/// classes this reduces to [`fit_csp`].
pub fn fit_csp_multiclass(epochs: &[Epoch], classes: &[ClassLabel], n_pairs: usize) -> Result<CspModel, CspError> {
    if classes.len() < 2 {
        return Err(CspError::TooFewClasses(classes.len()));
    }
    let by_class: Vec<Vec<Epoch>> = classes
        .iter()
        .map(|&c| epochs.iter().filter(|e| e.label == c).cloned().collect())
        .collect();
    for (c, eps) in classes.iter().zip(&by_class) {
        if eps.len() < 2 {
            return Err(CspError::TooFewEpochs(c.to_string()));
        }
    }
    if classes.len() == 2 {
        return fit_csp(&by_class[0], &by_class[1], n_pairs);
    }
    check_shapes(epochs.iter())?;
    let means: Vec<DMatrix<f64>> = by_class.iter().map(|eps| mean_covariance(&eps.iter().collect::<Vec<_>>())).collect();
    let ch = means[0].nrows();
    let mut rows = Vec::new();
    let mut model = CspModel {
        filters: DMatrix::zeros(0, ch),
        pair_index: Vec::new(),
        blocks: Vec::new(),
        eigvals: Vec::new(),
        n_pairs,
        ridge: Vec::new(),
    };
    for (k, &c) in classes.iter().enumerate() {
        let rest_n: usize = by_class.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, e)| e.len()).sum();
        let mut rest = DMatrix::zeros(ch, ch);
        for (j, eps) in by_class.iter().enumerate().filter(|(j, _)| *j != k) {
            rest += &means[j] * (eps.len() as f64 / rest_n as f64);
        }
        let pair = fit_csp_covariances(&means[k], &rest, n_pairs)?;
        rows.extend(pair.filters.row_iter().map(|r| r.into_owned()));
        model.pair_index.extend(std::iter::repeat(k).take(pair.filters.nrows()));
        model.eigvals.extend(pair.eigvals);
        model.blocks.push(CspBlock { positive: c, negative: None });
        model.ridge.push(pair.ridge);
    }
    model.filters = DMatrix::from_rows(&rows);
    Ok(model)
}

const VAR_FLOOR: f64 = 1e-12;

/// Normalized log-variance of each projected signal, normalized within its
/// block.
pub fn csp_features(model: &CspModel, window: &DMatrix<f64>) -> Result<Vec<f64>, CspError> {
    if window.nrows() != model.n_channels() {
        return Err(CspError::Shape(format!(
            "model expects {} channels, window has {}",
            model.n_channels(),
            window.nrows()
        )));
    }
    let projected = &model.filters * window;
    let vars: Vec<f64> = projected
        .row_iter()
        .map(|r| {
            let n = r.len() as f64;
            let m = r.sum() / n;
            (r.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).max(VAR_FLOOR)
        })
        .collect();
    let mut out = vec![0.0; vars.len()];
    for b in 0..model.blocks.len() {
        let rows = model.block_rows(b);
        let total: f64 = vars[rows.clone()].iter().sum();
        for r in rows {
            out[r] = (vars[r] / total).ln();
        }
    }
    Ok(out)
}

/// Mean, population variance, standard deviation, max and min of every
/// channel, channel-major.
pub fn stat_features(window: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(window.nrows() * 5);
    for r in window.row_iter() {
        let n = r.len() as f64;
        let mean = r.sum() / n;
        let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        out.extend([mean, var, var.sqrt(), r.max(), r.min()]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_features_of_ramp() {
        let w = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let f = stat_features(&w);
        assert_eq!(f[0], 2.5);
        assert_eq!(f[1], 1.25);
        assert!((f[2] - 1.118_034).abs() < 1e-6);
        assert_eq!((f[3], f[4]), (4.0, 1.0));
    }

    #[test]
    fn epochs_drop_mixed_labels() {
        let x = DMatrix::zeros(2, 250);
        let mut labels = vec![ClassLabel::Left; 250];
        for l in &mut labels[60..] {
            *l = ClassLabel::Right;
        }
        let e = epoch_recording(&x, &labels, 125.0, 1.0);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].label, ClassLabel::Right);
    }

    #[test]
    fn singular_composite_gets_ridge() {
        let mut c = DMatrix::zeros(3, 3);
        c[(0, 0)] = 1.0;
        c[(1, 1)] = 1.0;
        let p = fit_csp_covariances(&c, &c, 1).unwrap();
        assert!(p.ridge > 0.0);
        assert!(p.filters.iter().all(|v| v.is_finite()));
    }
}
