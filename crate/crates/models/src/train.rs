//! Offline training: front end, ICA, CSP, base classifiers on the training
//! trials, the fusion stage on the validation trials, and evaluation.

use crate::cnn::{train_cnn, CnnConfig};
use crate::dataset::{cut, find_trials, split_trials, trial_windows, SplitConfig, Trial, TrialSplit, WindowRef};
use crate::ensemble::{argmax, ArtifactStage, Ensemble, EnsembleConfig, FrontEnd};
use crate::features::forest_features;
use crate::forest::{train_forest, ForestConfig};
use crate::lstm::{train_lstm, LstmConfig};
use crate::meta::{train_meta, MetaConfig, StackingFolds};
use crate::metrics::ConfusionMatrix;
use crate::ModelError;
use nalgebra::DMatrix;
use neuroarm_core::acquisition::{ChannelRoles, Recording, DEFAULT_PGA_GAIN};
use neuroarm_core::csp::{fit_csp_multiclass, Epoch};
use neuroarm_core::dsp::FilterChainSpec;
use neuroarm_core::ica::{auto_reject, fit_ica, preprocess_signal, score_components, FastIcaConfig, IcaCleaner, RejectThresholds};
use neuroarm_core::ClassLabel;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub window_len: usize,
    /// Stride between training windows inside a trial.
    pub train_step: usize,
    /// Stride between validation/test windows inside a trial.
    pub eval_step: usize,
    /// Nominal trial length, used to separate back-to-back trials of the
    /// same class.
    pub trial_len_s: Option<f64>,
    pub gain: f32,
    pub filter: FilterChainSpec,
    pub ica: FastIcaConfig,
    pub reject: RejectThresholds,
    pub csp_pairs: usize,
    pub split: SplitConfig,
    pub lstm: LstmConfig,
    pub cnn: CnnConfig,
    pub forest: ForestConfig,
    pub meta: MetaConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window_len: 150,
            train_step: 25,
            eval_step: 25,
            trial_len_s: Some(4.0),
            gain: DEFAULT_PGA_GAIN,
            filter: FilterChainSpec::default(),
            ica: FastIcaConfig::default(),
            reject: RejectThresholds::default(),
            csp_pairs: 2,
            split: SplitConfig::default(),
            lstm: LstmConfig::default(),
            cnn: CnnConfig::default(),
            forest: ForestConfig::default(),
            meta: MetaConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Derives every stage seed from one master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let mix = |k: u64| seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k);
        self.split.seed = mix(1);
        self.ica.seed = mix(2);
        self.lstm.seed = mix(3);
        self.cnn.seed = mix(4);
        self.forest.seed = mix(5);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub lstm: f64,
    pub cnn: f64,
    pub rf: f64,
    pub ensemble: f64,
}

impl ModelScores {
    pub fn best_base(&self) -> f64 {
        self.lstm.max(self.cnn).max(self.rf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub truth: Vec<usize>,
    pub lstm: Vec<usize>,
    pub cnn: Vec<usize>,
    pub rf: Vec<usize>,
    pub ensemble: Vec<usize>,
    pub p_final: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn confusion(&self, classes: &[ClassLabel]) -> [(&'static str, ConfusionMatrix); 4] {
        [
            ("lstm", ConfusionMatrix::from_pairs(classes, &self.truth, &self.lstm)),
            ("cnn", ConfusionMatrix::from_pairs(classes, &self.truth, &self.cnn)),
            ("rf", ConfusionMatrix::from_pairs(classes, &self.truth, &self.rf)),
            ("ensemble", ConfusionMatrix::from_pairs(classes, &self.truth, &self.ensemble)),
        ]
    }

    pub fn scores(&self) -> ModelScores {
        let acc = |p: &[usize]| {
            if p.is_empty() {
                return 0.0;
            }
            p.iter().zip(&self.truth).filter(|(a, b)| a == b).count() as f64 / p.len() as f64
        };
        ModelScores { lstm: acc(&self.lstm), cnn: acc(&self.cnn), rf: acc(&self.rf), ensemble: acc(&self.ensemble) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub n_trials: usize,
    pub split: TrialSplit,
    pub n_train_windows: usize,
    pub n_val_windows: usize,
    pub n_test_windows: usize,
    pub rejected_components: Vec<usize>,
    pub ica_converged: bool,
    pub lstm_loss: Vec<f64>,
    pub cnn_loss: Vec<f64>,
    pub val: ModelScores,
    pub test: ModelScores,
    pub test_eval: Evaluation,
    pub stage_seconds: Vec<(String, f64)>,
}

/// Front-end output plus trial bookkeeping for one recording.
pub struct Prepared {
    pub filtered: DMatrix<f64>,
    pub trials: Vec<Trial>,
}

pub fn prepare(rec: &Recording, front_end: &FrontEnd, trial_len_s: Option<f64>) -> Result<Prepared, ModelError> {
    let mut fe = front_end.stream(rec.n_channels())?;
    let filtered = fe.process(&rec.samples)?;
    let trial_samples = trial_len_s.map(|s| (s * rec.fs()).round() as usize);
    Ok(Prepared { filtered, trials: find_trials(&rec.labels, trial_samples) })
}

fn columns_of(signal: &DMatrix<f64>, trials: &[Trial], which: &[usize]) -> DMatrix<f64> {
    let n: usize = which.iter().map(|&i| trials[i].len).sum();
    let mut out = DMatrix::zeros(signal.nrows(), n);
    let mut at = 0;
    for &i in which {
        let t = trials[i];
        out.columns_mut(at, t.len).copy_from(&signal.columns(t.start, t.len));
        at += t.len;
    }
    out
}

fn windows_of(signal: &DMatrix<f64>, refs: &[WindowRef], len: usize) -> (Vec<DMatrix<f64>>, Vec<usize>) {
    (refs.iter().map(|w| cut(signal, w, len)).collect(), refs.iter().map(|w| w.label.index()).collect())
}

/// Runs the fitted ensemble over already-cleaned windows.
pub fn evaluate_cleaned(ens: &Ensemble, windows: &[DMatrix<f64>], truth: &[usize]) -> Result<Evaluation, ModelError> {
    let refs: Vec<&DMatrix<f64>> = windows.iter().collect();
    let mut ev = Evaluation {
        truth: truth.to_vec(),
        lstm: Vec::new(),
        cnn: Vec::new(),
        rf: Vec::new(),
        ensemble: Vec::new(),
        p_final: Vec::new(),
    };
    if windows.is_empty() {
        return Ok(ev);
    }
    let pl = ens.lstm.predict_batch(&refs);
    let pc = ens.cnn.predict_batch(&refs);
    for (j, w) in windows.iter().enumerate() {
        let p_lstm = pl.column(j).as_slice().to_vec();
        let p_cnn = pc.column(j).as_slice().to_vec();
        let p_rf = ens.forest.predict(&forest_features(&ens.csp, w)?)?.as_slice().to_vec();
        let stacked = [p_lstm.as_slice(), p_cnn.as_slice(), p_rf.as_slice()].concat();
        let p_final = ens.meta.predict(&stacked)?.as_slice().to_vec();
        ev.lstm.push(argmax(&p_lstm));
        ev.cnn.push(argmax(&p_cnn));
        ev.rf.push(argmax(&p_rf));
        ev.ensemble.push(argmax(&p_final));
        ev.p_final.push(p_final);
    }
    Ok(ev)
}

fn stacked_outputs(
    lstm: &crate::lstm::LstmModel,
    cnn: &crate::cnn::CnnModel,
    forest: &crate::forest::ForestModel,
    csp: &neuroarm_core::csp::CspModel,
    windows: &[DMatrix<f64>],
) -> Result<Vec<Vec<f64>>, ModelError> {
    let refs: Vec<&DMatrix<f64>> = windows.iter().collect();
    let pl = lstm.predict_batch(&refs);
    let pc = cnn.predict_batch(&refs);
    windows
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let p_rf = forest.predict(&forest_features(csp, w)?)?;
            Ok([pl.column(j).as_slice(), pc.column(j).as_slice(), p_rf.as_slice()].concat())
        })
        .collect()
}

/// Evaluates a bundle on the given trials of a recording (all trials when
/// `which` is `None`).
pub fn evaluate_recording(
    ens: &Ensemble,
    rec: &Recording,
    trial_len_s: Option<f64>,
    step: usize,
    which: Option<&[usize]>,
) -> Result<Evaluation, ModelError> {
    ens.validate()?;
    if rec.n_channels() != ens.config.n_channels {
        return Err(ModelError::Shape(format!(
            "recording has {} channels, bundle expects {}",
            rec.n_channels(),
            ens.config.n_channels
        )));
    }
    let prep = prepare(rec, &ens.config.front_end, trial_len_s)?;
    let cleaned = ens.clean(&prep.filtered);
    let all: Vec<usize> = (0..prep.trials.len()).collect();
    let refs = trial_windows(&prep.trials, which.unwrap_or(&all), ens.config.window_len, step);
    let (w, y) = windows_of(&cleaned, &refs, ens.config.window_len);
    evaluate_cleaned(ens, &w, &y)
}

pub fn train_ensemble(rec: &Recording, cfg: &TrainConfig) -> Result<(Ensemble, TrainReport), ModelError> {
    let classes = ClassLabel::ALL.to_vec();
    let n_classes = classes.len();
    let fs = rec.fs();
    let ch = rec.n_channels();
    let front_end = FrontEnd { gain: cfg.gain, filter: cfg.filter.clone(), fs };
    let mut stage_seconds = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, clock: &mut Instant| {
        stage_seconds.push((name.to_string(), clock.elapsed().as_secs_f64()));
        *clock = Instant::now();
    };

    let prep = prepare(rec, &front_end, cfg.trial_len_s)?;
    let split = split_trials(&prep.trials, &cfg.split)?;
    if prep.trials.iter().any(|t| t.len < cfg.window_len) {
        return Err(ModelError::Dataset(format!("a trial is shorter than the {}-sample window", cfg.window_len)));
    }
    lap("front_end", &mut clock);

    let ica_input = preprocess_signal(&front_end.amplify(&rec.samples)?, fs)?;
    let ica_train = columns_of(&ica_input, &prep.trials, &split.train);
    let (whitener, ica) = fit_ica(&ica_train, &cfg.ica)?;
    let roles = ChannelRoles::for_count(ch);
    let scores = score_components(&ica, &ica_train, &roles.frontal, fs)?;
    let rejected = auto_reject(&scores, &cfg.reject);
    let cleaner = IcaCleaner::new(&ica, &whitener, &rejected)?;
    let cleaned = cleaner.apply(&prep.filtered);
    lap("ica", &mut clock);

    let epochs: Vec<Epoch> = split
        .train
        .iter()
        .map(|&i| {
            let t = prep.trials[i];
            Epoch { samples: cleaned.columns(t.start, t.len).into_owned(), label: t.label }
        })
        .collect();
    let mut present: Vec<ClassLabel> = epochs.iter().map(|e| e.label).collect();
    present.sort();
    present.dedup();
    let csp = fit_csp_multiclass(&epochs, &present, cfg.csp_pairs)?;
    lap("csp", &mut clock);

    let len = cfg.window_len;
    let train_refs = trial_windows(&prep.trials, &split.train, len, cfg.train_step);
    let val_refs = trial_windows(&prep.trials, &split.val, len, cfg.eval_step);
    let test_refs = trial_windows(&prep.trials, &split.test, len, cfg.eval_step);
    let (train_w, train_y) = windows_of(&cleaned, &train_refs, len);
    let (val_w, val_y) = windows_of(&cleaned, &val_refs, len);
    let (test_w, test_y) = windows_of(&cleaned, &test_refs, len);

    let (lstm, lstm_curve) = train_lstm(&train_w, &train_y, n_classes, &cfg.lstm)?;
    lap("lstm", &mut clock);
    let (cnn, cnn_curve) = train_cnn(&train_w, &train_y, n_classes, &cfg.cnn)?;
    lap("cnn", &mut clock);
    let train_f = train_w.iter().map(|w| forest_features(&csp, w)).collect::<Result<Vec<_>, _>>()?;
    let forest = train_forest(&train_f, &train_y, n_classes, &cfg.forest)?;
    lap("rf", &mut clock);

    // Window indices are global over train ++ val ++ test.
    let folds = StackingFolds {
        base_train: (0..train_refs.len()).collect(),
        meta_train: (train_refs.len()..train_refs.len() + val_refs.len()).collect(),
    };
    let stacked = stacked_outputs(&lstm, &cnn, &forest, &csp, &val_w)?;
    let meta = train_meta(&stacked, &val_y, n_classes, &folds, &cfg.meta)?;
    lap("meta", &mut clock);

    let ensemble = Ensemble {
        config: EnsembleConfig { n_channels: ch, window_len: len, classes: classes.clone(), front_end },
        artifact: ArtifactStage { whitener, ica: ica.clone(), scores, cleaner },
        csp,
        lstm,
        cnn,
        forest,
        meta,
    };
    ensemble.validate()?;
    let val_eval = evaluate_cleaned(&ensemble, &val_w, &val_y)?;
    let test_eval = evaluate_cleaned(&ensemble, &test_w, &test_y)?;
    lap("evaluate", &mut clock);

    let report = TrainReport {
        n_trials: prep.trials.len(),
        split,
        n_train_windows: train_w.len(),
        n_val_windows: val_w.len(),
        n_test_windows: test_w.len(),
        rejected_components: rejected.into_iter().collect(),
        ica_converged: ica.converged,
        lstm_loss: lstm_curve.epoch_loss,
        cnn_loss: cnn_curve.epoch_loss,
        val: val_eval.scores(),
        test: test_eval.scores(),
        test_eval,
        stage_seconds,
    };
    Ok((ensemble, report))
}
