//! The deployed model: acquisition front end, artifact cleaner, CSP, the
//! three base classifiers and the fusion stage.

use crate::cnn::CnnModel;
use crate::features::{feature_dim, forest_features};
use crate::forest::ForestModel;
use crate::lstm::LstmModel;
use crate::meta::MetaModel;
use crate::ModelError;
use nalgebra::DMatrix;
use neuroarm_core::acquisition::pga_amplify;
use neuroarm_core::csp::CspModel;
use neuroarm_core::dsp::{FilterChainSpec, MultiChannelFilter};
use neuroarm_core::ica::{ComponentScore, IcaCleaner, IcaModel, Whitener};
use neuroarm_core::ClassLabel;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Gain followed by the bandpass/notch chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontEnd {
    pub gain: f32,
    pub filter: FilterChainSpec,
    pub fs: f64,
}

impl FrontEnd {
    pub fn stream(&self, n_channels: usize) -> Result<FrontEndState, ModelError> {
        let cascade = self.filter.build(self.fs)?;
        Ok(FrontEndState { gain: self.gain, filter: MultiChannelFilter::new(&cascade, n_channels) })
    }

    /// Amplifies without filtering, as fed to ICA fitting.
    pub fn amplify(&self, raw: &DMatrix<f32>) -> Result<DMatrix<f64>, ModelError> {
        let amp = pga_amplify(raw, self.gain).map_err(|e| ModelError::Config(e.to_string()))?;
        Ok(amp.map(f64::from))
    }
}

/// Streaming front end; chunked and whole-recording calls agree exactly.
#[derive(Debug, Clone)]
pub struct FrontEndState {
    gain: f32,
    filter: MultiChannelFilter,
}

impl FrontEndState {
    pub fn process(&mut self, chunk: &DMatrix<f32>) -> Result<DMatrix<f64>, ModelError> {
        let amp = pga_amplify(chunk, self.gain).map_err(|e| ModelError::Config(e.to_string()))?;
        let mut out = amp.map(f64::from);
        self.filter.apply_block(&mut out)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_channels: usize,
    pub window_len: usize,
    pub classes: Vec<ClassLabel>,
    pub front_end: FrontEnd,
}

impl EnsembleConfig {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactStage {
    pub whitener: Whitener,
    pub ica: IcaModel,
    pub scores: Vec<ComponentScore>,
    pub cleaner: IcaCleaner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub config: EnsembleConfig,
    pub artifact: ArtifactStage,
    pub csp: CspModel,
    pub lstm: LstmModel,
    pub cnn: CnnModel,
    pub forest: ForestModel,
    pub meta: MetaModel,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimings {
    pub ica_ns: u64,
    pub features_ns: u64,
    pub lstm_ns: u64,
    pub cnn_ns: u64,
    pub rf_ns: u64,
    pub meta_ns: u64,
}

impl StageTimings {
    pub fn total_ns(&self) -> u64 {
        self.ica_ns + self.features_ns + self.lstm_ns + self.cnn_ns + self.rf_ns + self.meta_ns
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub p_lstm: Vec<f64>,
    pub p_cnn: Vec<f64>,
    pub p_rf: Vec<f64>,
    pub p_final: Vec<f64>,
    pub label: ClassLabel,
    pub timings: StageTimings,
}

impl EnsemblePrediction {
    pub fn stacked(&self) -> Vec<f64> {
        [self.p_lstm.as_slice(), self.p_cnn.as_slice(), self.p_rf.as_slice()].concat()
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn elapsed(t: Instant) -> u64 {
    t.elapsed().as_nanos() as u64
}

impl Ensemble {
    /// Checks that every stage agrees on channel count, feature width and
    /// class count.
    pub fn validate(&self) -> Result<(), ModelError> {
        let ch = self.config.n_channels;
        let k = self.config.n_classes();
        let checks = [
            ("ICA cleaner channels", self.artifact.cleaner.n_channels(), ch),
            ("CSP channels", self.csp.n_channels(), ch),
            ("LSTM input size", self.lstm.input_size, ch),
            ("CNN input size", self.cnn.input_size, ch),
            ("forest feature width", self.forest.feature_dim, feature_dim(&self.csp)),
            ("LSTM classes", self.lstm.n_classes, k),
            ("CNN classes", self.cnn.n_classes, k),
            ("forest classes", self.forest.n_classes, k),
            ("meta inputs", self.meta.n_inputs(), 3 * k),
        ];
        for (what, found, expected) in checks {
            if found != expected {
                return Err(ModelError::Shape(format!("{what} is {found}, expected {expected}")));
            }
        }
        Ok(())
    }

    pub fn clean(&self, window: &DMatrix<f64>) -> DMatrix<f64> {
        self.artifact.cleaner.apply(window)
    }

    /// Classifies one front-end-filtered window (`channels × window_len`).
    pub fn predict(&self, window: &DMatrix<f64>) -> Result<EnsemblePrediction, ModelError> {
        let (ch, len) = window.shape();
        if ch != self.config.n_channels || len != self.config.window_len {
            return Err(ModelError::Shape(format!(
                "window is {ch}×{len}, bundle expects {}×{}",
                self.config.n_channels, self.config.window_len
            )));
        }
        let mut tm = StageTimings::default();
        let t = Instant::now();
        let cleaned = self.clean(window);
        tm.ica_ns = elapsed(t);
        let t = Instant::now();
        let f = forest_features(&self.csp, &cleaned)?;
        tm.features_ns = elapsed(t);
        let t = Instant::now();
        let p_lstm = self.lstm.predict(&cleaned)?;
        tm.lstm_ns = elapsed(t);
        let t = Instant::now();
        let p_cnn = self.cnn.predict(&cleaned)?;
        tm.cnn_ns = elapsed(t);
        let t = Instant::now();
        let p_rf = self.forest.predict(&f)?;
        tm.rf_ns = elapsed(t);
        let t = Instant::now();
        let stacked = [p_lstm.as_slice(), p_cnn.as_slice(), p_rf.as_slice()].concat();
        let p_final = self.meta.predict(&stacked)?;
        let label = self.config.classes[argmax(p_final.as_slice())];
        tm.meta_ns = elapsed(t);
        Ok(EnsemblePrediction {
            p_lstm: p_lstm.as_slice().to_vec(),
            p_cnn: p_cnn.as_slice().to_vec(),
            p_rf: p_rf.as_slice().to_vec(),
            p_final: p_final.as_slice().to_vec(),
            label,
            timings: tm,
        })
    }
}
