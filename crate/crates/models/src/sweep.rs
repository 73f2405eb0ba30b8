//! Accuracy and inference cost as a function of window length.

use crate::dataset::{cut, trial_windows};
use crate::features::forest_features;
use crate::train::{evaluate_recording, prepare, train_ensemble, TrainConfig};
use crate::ModelError;
use nalgebra::DMatrix;
use neuroarm_core::acquisition::Recording;
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use std::hint::black_box;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    /// Windows timed per model and size.
    pub timing_windows: usize,
    /// Timing repeats; the fastest repeat is reported.
    pub timing_rounds: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { sizes: vec![50, 100, 150, 200, 250], timing_windows: 40, timing_rounds: 5 }
    }
}

/// One row per window length. Times are mean milliseconds per window.
/// `ms_rf` includes feature extraction; `ms_fusion` is the logistic stage
/// alone and `ms_meta` the stacked cost of producing the fused output
/// (artifact cleaning, every base model and fusion).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window_len: usize,
    pub acc_lstm: f64,
    pub acc_cnn: f64,
    pub acc_rf: f64,
    pub acc_ensemble: f64,
    pub ms_lstm: f64,
    pub ms_cnn: f64,
    pub ms_rf: f64,
    pub ms_fusion: f64,
    pub ms_meta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

const HEADER: &str = "window_len,acc_lstm,acc_cnn,acc_rf,acc_ensemble,ms_lstm,ms_cnn,ms_rf,ms_fusion,ms_meta";

impl SweepTable {
    pub fn row(&self, window_len: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.window_len == window_len)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{HEADER}\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.window_len, r.acc_lstm, r.acc_cnn, r.acc_rf, r.acc_ensemble, r.ms_lstm, r.ms_cnn, r.ms_rf, r.ms_fusion, r.ms_meta
            )
            .unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, ModelError> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(ModelError::Config("sweep CSV header mismatch".into()));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || ModelError::Config(format!("sweep CSV row {}: {line:?}", n + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(bad());
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            rows.push(SweepRow {
                window_len: f[0].parse().map_err(|_| bad())?,
                acc_lstm: num(1)?,
                acc_cnn: num(2)?,
                acc_rf: num(3)?,
                acc_ensemble: num(4)?,
                ms_lstm: num(5)?,
                ms_cnn: num(6)?,
                ms_rf: num(7)?,
                ms_fusion: num(8)?,
                ms_meta: num(9)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "{:>6} {:>7} {:>7} {:>7} {:>7} | {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            "window", "lstm", "cnn", "rf", "ens", "lstm ms", "cnn ms", "rf ms", "fuse ms", "meta ms"
        );
        for r in &self.rows {
            writeln!(
                s,
                "{:>6} {:>7.3} {:>7.3} {:>7.3} {:>7.3} | {:>8.3} {:>8.3} {:>8.3} {:>8.4} {:>8.3}",
                r.window_len, r.acc_lstm, r.acc_cnn, r.acc_rf, r.acc_ensemble, r.ms_lstm, r.ms_cnn, r.ms_rf, r.ms_fusion, r.ms_meta
            )
            .unwrap();
        }
        s
    }
}

/// Mean milliseconds per call of `f` over `items`, fastest of `rounds`.
fn time_ms<T>(items: &[T], rounds: usize, mut f: impl FnMut(&T)) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..rounds.max(1) {
        let t = Instant::now();
        for it in items {
            f(it);
        }
        best = best.min(t.elapsed().as_secs_f64() * 1e3 / items.len().max(1) as f64);
    }
    best
}

/// Retrains the ensemble at every window length and measures held-out
/// accuracy and per-model inference time.
pub fn window_sweep(rec: &Recording, base: &TrainConfig, cfg: &SweepConfig) -> Result<SweepTable, ModelError> {
    let mut rows = Vec::with_capacity(cfg.sizes.len());
    for &len in &cfg.sizes {
        let train_cfg = TrainConfig { window_len: len, ..base.clone() };
        let (ens, report) = train_ensemble(rec, &train_cfg)?;
        let scores = report.test;
        let test = &report.split.test;
        debug_assert_eq!(evaluate_recording(&ens, rec, train_cfg.trial_len_s, train_cfg.eval_step, Some(test))?.scores(), scores);

        let prep = prepare(rec, &ens.config.front_end, train_cfg.trial_len_s)?;
        let refs = trial_windows(&prep.trials, test, len, train_cfg.eval_step);
        let raw: Vec<DMatrix<f64>> = refs.iter().take(cfg.timing_windows.max(1)).map(|w| cut(&prep.filtered, w, len)).collect();
        let cleaned: Vec<DMatrix<f64>> = raw.iter().map(|w| ens.clean(w)).collect();
        let stacked: Vec<Vec<f64>> = raw.iter().map(|w| ens.predict(w).map(|p| p.stacked())).collect::<Result<_, _>>()?;
        let rounds = cfg.timing_rounds;
        let ms_lstm = time_ms(&cleaned, rounds, |w| {
            black_box(ens.lstm.predict(w).unwrap());
        });
        let ms_cnn = time_ms(&cleaned, rounds, |w| {
            black_box(ens.cnn.predict(w).unwrap());
        });
        let ms_rf = time_ms(&cleaned, rounds, |w| {
            black_box(ens.forest.predict(&forest_features(&ens.csp, w).unwrap()).unwrap());
        });
        let ms_fusion = time_ms(&stacked, rounds, |s| {
            black_box(ens.meta.predict(s).unwrap());
        });
        let ms_meta = time_ms(&raw, rounds, |w| {
            black_box(ens.predict(w).unwrap());
        });
        tracing::info!(len, ?scores, ms_lstm, ms_cnn, ms_rf, ms_meta, "sweep row");
        rows.push(SweepRow {
            window_len: len,
            acc_lstm: scores.lstm,
            acc_cnn: scores.cnn,
            acc_rf: scores.rf,
            acc_ensemble: scores.ensemble,
            ms_lstm,
            ms_cnn,
            ms_rf,
            ms_fusion,
            ms_meta,
        });
    }
    Ok(SweepTable { rows })
}
