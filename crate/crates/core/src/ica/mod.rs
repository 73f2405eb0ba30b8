//! Artifact removal by independent component analysis.
//!
//! Fitting happens offline: [`fit_whitener`] decorrelates the (band-limited)
//! calibration data, [`fit_fastica`] finds a rotation of maximally
//! non-Gaussian components, [`score_components`] and [`auto_reject`] flag
//! ocular, muscular and line-noise components, and an [`IcaCleaner`] applies
//! the resulting fixed projection sample by sample in the live path.

use crate::acquisition::Recording;
use crate::dsp::{band_power, welch_psd, FilterChainSpec, MultiChannelFilter};
use crate::linalg::{self, center_rows, covariance, inv_sqrt_sym, random_orthonormal, row_means, sym_eigen_desc};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IcaError {
    #[error("need at least {needed} samples for {channels} channels, got {got}")]
    TooFewSamples { needed: usize, channels: usize, got: usize },
    #[error("covariance has zero numerical rank")]
    ZeroRank,
    #[error("requested {requested} components but only {available} are available")]
    Components { requested: usize, available: usize },
    #[error("component index {index} out of range (n_components = {n})")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}

const RANK_TOL: f64 = 1e-9;

/// PCA whitening restricted to the numerical rank of the covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whitener {
    pub mean: DVector<f64>,
    /// rank × channels.
    pub matrix: DMatrix<f64>,
    /// channels × rank, the pseudo-inverse of `matrix`.
    pub dewhiten: DMatrix<f64>,
    pub explained_rank: usize,
}

impl Whitener {
    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * center_rows(x, &self.mean)
    }
}

pub fn fit_whitener(x: &DMatrix<f64>) -> Result<Whitener, IcaError> {
    let ch = x.nrows();
    let needed = 10 * ch;
    if x.ncols() < needed {
        return Err(IcaError::TooFewSamples { needed, channels: ch, got: x.ncols() });
    }
    let mean = row_means(x);
    let cov = covariance(x);
    let (vals, vecs) = sym_eigen_desc(&cov);
    let top = vals[0];
    if !(top > 0.0) {
        return Err(IcaError::ZeroRank);
    }
    let rank = vals.iter().take_while(|&&v| v > top * RANK_TOL).count();
    let mut matrix = DMatrix::zeros(rank, ch);
    let mut dewhiten = DMatrix::zeros(ch, rank);
    for k in 0..rank {
        let s = vals[k].sqrt();
        let e = vecs.column(k);
        matrix.set_row(k, &(e.transpose() / s));
        dewhiten.set_column(k, &(e * s));
    }
    Ok(Whitener { mean, matrix, dewhiten, explained_rank: rank })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FastIcaConfig {
    /// Defaults to every available dimension (the channel count when the
    /// covariance has full rank).
    pub n_components: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for FastIcaConfig {
    fn default() -> Self {
        Self { n_components: None, tol: 1e-4, max_iter: 200, seed: 0 }
    }
}

/// Linear unmixing model. Rows of `unmixing` map inputs to component
/// activations; columns of `mixing` are the component scalp projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaModel {
    /// components × inputs.
    pub unmixing: DMatrix<f64>,
    /// inputs × components.
    pub mixing: DMatrix<f64>,
    pub n_components: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Set when no component departs measurably from Gaussianity, in which
    /// case the decomposition is not identifiable.
    pub degenerate: bool,
}

impl IcaModel {
    /// Re-expresses a model fitted on whitened data in channel coordinates.
    pub fn in_channel_space(&self, whitener: &Whitener) -> IcaModel {
        IcaModel {
            unmixing: &self.unmixing * &whitener.matrix,
            mixing: &whitener.dewhiten * &self.mixing,
            ..self.clone()
        }
    }

    pub fn activations(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.unmixing * x
    }
}

fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    inv_sqrt_sym(&(w * w.transpose())) * w
}

/// Symmetric FastICA with the log-cosh (tanh) contrast on whitened data
/// (rows = whitened dimensions).
pub fn fit_fastica(xw: &DMatrix<f64>, cfg: &FastIcaConfig) -> Result<IcaModel, IcaError> {
    let dims = xw.nrows();
    let n = xw.ncols();
    if n == 0 || dims == 0 {
        return Err(IcaError::Shape("empty input".into()));
    }
    let k = cfg.n_components.unwrap_or(dims);
    if k == 0 || k > dims {
        return Err(IcaError::Components { requested: k, available: dims });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = random_orthonormal(dims, &mut rng);
    let mut w = symmetric_decorrelation(&init.rows(0, k).into_owned());

    let inv_n = 1.0 / n as f64;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iter {
        iterations = it;
        let y = &w * xw;
        let g = y.map(f64::tanh);
        let g_prime_mean = DVector::from_iterator(k, g.row_iter().map(|r| r.iter().map(|v| 1.0 - v * v).sum::<f64>() * inv_n));
        let mut w_new = (&g * xw.transpose()) * inv_n;
        for i in 0..k {
            let scaled = w.row(i) * g_prime_mean[i];
            let mut row = w_new.row_mut(i);
            row -= scaled;
        }
        let w_new = symmetric_decorrelation(&w_new);
        let lim = (0..k)
            .map(|i| ((w_new.row(i).dot(&w.row(i))).abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = w_new;
        if lim < cfg.tol {
            converged = true;
            break;
        }
    }

    let y = &w * xw;
    let gauss_band = 5.0 * (24.0 / n as f64).sqrt();
    let degenerate = !converged
        || y.row_iter()
            .all(|r| linalg::excess_kurtosis(r.transpose().as_slice()).abs() < gauss_band);

    Ok(IcaModel {
        mixing: w.transpose(),
        unmixing: w,
        n_components: k,
        converged,
        iterations,
        degenerate,
    })
}

/// Whitening followed by FastICA; the model is returned in channel space.
pub fn fit_ica(x: &DMatrix<f64>, cfg: &FastIcaConfig) -> Result<(Whitener, IcaModel), IcaError> {
    let whitener = fit_whitener(x)?;
    let xw = whitener.transform(x);
    let mut cfg = cfg.clone();
    if let Some(k) = cfg.n_components {
        if k > whitener.explained_rank {
            cfg.n_components = Some(whitener.explained_rank);
        }
    }
    let model = fit_fastica(&xw, &cfg)?;
    Ok((whitener.clone(), model.in_channel_space(&whitener)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentScore {
    pub ic_index: usize,
    pub excess_kurtosis: f64,
    /// Pearson correlation with the mean of the frontal channels.
    pub frontal_corr: f64,
    /// Fraction of activation power within 48–52 Hz.
    pub line_ratio: f64,
}

pub fn score_components(
    model: &IcaModel,
    x: &DMatrix<f64>,
    frontal_indices: &[usize],
    fs: f64,
) -> Result<Vec<ComponentScore>, IcaError> {
    if x.nrows() != model.unmixing.ncols() {
        return Err(IcaError::Shape(format!(
            "model expects {} channels, data has {}",
            model.unmixing.ncols(),
            x.nrows()
        )));
    }
    if let Some(&bad) = frontal_indices.iter().find(|&&i| i >= x.nrows()) {
        return Err(IcaError::IndexOutOfRange { index: bad, n: x.nrows() });
    }
    let n = x.ncols();
    let mut reference = vec![0.0; n];
    for &ch in frontal_indices {
        for (t, r) in reference.iter_mut().enumerate() {
            *r += x[(ch, t)] / frontal_indices.len() as f64;
        }
    }
    let acts = model.activations(x);
    let seg = n.min(256);
    let mut scores = Vec::with_capacity(model.n_components);
    for i in 0..model.n_components {
        let a: Vec<f64> = acts.row(i).iter().copied().collect();
        let psd = welch_psd(&a, fs, seg, seg / 2)?;
        let total = band_power(&psd, 0.0, fs / 2.0);
        let line = band_power(&psd, 48.0, 52.0);
        scores.push(ComponentScore {
            ic_index: i,
            excess_kurtosis: linalg::excess_kurtosis(&a),
            frontal_corr: if frontal_indices.is_empty() { 0.0 } else { linalg::pearson(&a, &reference) },
            line_ratio: if total > 0.0 { (line / total).clamp(0.0, 1.0) } else { 0.0 },
        });
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RejectThresholds {
    pub frontal_corr: f64,
    pub excess_kurtosis: f64,
    pub line_ratio: f64,
}

impl Default for RejectThresholds {
    fn default() -> Self {
        Self { frontal_corr: 0.7, excess_kurtosis: 5.0, line_ratio: 0.6 }
    }
}

impl RejectThresholds {
    pub fn never() -> Self {
        Self { frontal_corr: f64::INFINITY, excess_kurtosis: f64::INFINITY, line_ratio: f64::INFINITY }
    }
}

pub fn auto_reject(scores: &[ComponentScore], thresholds: &RejectThresholds) -> BTreeSet<usize> {
    scores
        .iter()
        .filter(|s| {
            s.frontal_corr.abs() > thresholds.frontal_corr
                || s.excess_kurtosis > thresholds.excess_kurtosis
                || s.line_ratio > thresholds.line_ratio
        })
        .map(|s| s.ic_index)
        .collect()
}

/// Fixed channel-space projection that removes a set of components:
/// `x_clean = P (x - mean) + mean` with `P = A · diag(keep) · W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaCleaner {
    pub mean: DVector<f64>,
    pub projection: DMatrix<f64>,
    pub rejected: BTreeSet<usize>,
}

impl IcaCleaner {
    pub fn new(model: &IcaModel, whitener: &Whitener, rejected: &BTreeSet<usize>) -> Result<Self, IcaError> {
        check_indices(model, rejected)?;
        let mut w = model.unmixing.clone();
        for &i in rejected {
            w.row_mut(i).fill(0.0);
        }
        Ok(Self { mean: whitener.mean.clone(), projection: &model.mixing * w, rejected: rejected.clone() })
    }

    pub fn n_channels(&self) -> usize {
        self.projection.nrows()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.projection * center_rows(x, &self.mean);
        for mut col in out.column_iter_mut() {
            col += &self.mean;
        }
        out
    }
}

fn check_indices(model: &IcaModel, rejected: &BTreeSet<usize>) -> Result<(), IcaError> {
    match rejected.iter().find(|&&i| i >= model.n_components) {
        Some(&index) => Err(IcaError::IndexOutOfRange { index, n: model.n_components }),
        None => Ok(()),
    }
}

/// Back-projects `x` with the `rejected` components zeroed.
pub fn reject_and_reconstruct(
    model: &IcaModel,
    whitener: &Whitener,
    x: &DMatrix<f64>,
    rejected: &BTreeSet<usize>,
) -> Result<DMatrix<f64>, IcaError> {
    if x.nrows() != model.mixing.nrows() {
        return Err(IcaError::Shape(format!("model has {} channels, data has {}", model.mixing.nrows(), x.nrows())));
    }
    Ok(IcaCleaner::new(model, whitener, rejected)?.apply(x))
}

/// 1–40 Hz bandpass plus 50 Hz notch, applied causally to a copy.
pub fn preprocess_signal(x: &DMatrix<f64>, fs: f64) -> Result<DMatrix<f64>, IcaError> {
    let cascade = FilterChainSpec::ica_prefilter().build(fs)?;
    let mut filt = MultiChannelFilter::new(&cascade, x.nrows());
    let mut out = x.clone();
    filt.apply_block(&mut out)?;
    Ok(out)
}

pub fn preprocess_for_ica(rec: &Recording) -> Result<Recording, IcaError> {
    let filtered = preprocess_signal(&rec.samples_f64(), rec.fs())?;
    let mut out = rec.clone();
    out.samples = filtered.map(|v| v as f32);
    Ok(out)
}
