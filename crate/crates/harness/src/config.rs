//! TOML pipeline configuration. Every section has defaults, so an empty
//! file is a valid configuration.

use crate::error::{HarnessError, Result};
use neuroarm_core::acquisition::SessionSpec;
use neuroarm_core::control::ControllerConfig;
use neuroarm_core::csp::WindowSpec;
use neuroarm_models::sweep::SweepConfig;
use neuroarm_models::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed. Recordings use `seed`, `seed + 1` and `seed + 2`; every
    /// training stage seed is derived from it.
    pub seed: u64,
    pub paths: PathsConfig,
    pub data: DataConfig,
    pub window: WindowSpec,
    pub train: TrainConfig,
    pub control: ControllerConfig,
    pub asr: AsrConfig,
    pub live: LiveConfig,
    pub hitl: HitlConfig,
    pub service: ServiceConfig,
    pub sweep: SweepConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            paths: PathsConfig::default(),
            data: DataConfig::default(),
            window: WindowSpec::default(),
            train: TrainConfig::default(),
            control: ControllerConfig::default(),
            asr: AsrConfig::default(),
            live: LiveConfig::default(),
            hitl: HitlConfig::default(),
            service: ServiceConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Unset file paths default to fixed names inside `out_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
    pub train_recording: Option<PathBuf>,
    pub calib_recording: Option<PathBuf>,
    pub test_recording: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("out"), train_recording: None, calib_recording: None, test_recording: None, bundle: None }
    }
}

impl PathsConfig {
    fn or_default(&self, p: &Option<PathBuf>, name: &str) -> PathBuf {
        p.clone().unwrap_or_else(|| self.out_dir.join(name))
    }

    pub fn train(&self) -> PathBuf {
        self.or_default(&self.train_recording, "train.brec")
    }

    pub fn calib(&self) -> PathBuf {
        self.or_default(&self.calib_recording, "calib.brec")
    }

    pub fn test(&self) -> PathBuf {
        self.or_default(&self.test_recording, "test.brec")
    }

    pub fn bundle(&self) -> PathBuf {
        self.or_default(&self.bundle, "model.brvm")
    }

    pub fn recording(&self, which: RecordingKind) -> PathBuf {
        match which {
            RecordingKind::Train => self.train(),
            RecordingKind::Calib => self.calib(),
            RecordingKind::Test => self.test(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordingKind {
    Train,
    Calib,
    Test,
}

/// Synthetic session shape. `session.n_trials_per_class` sizes the training
/// recording; the other two recordings share everything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub session: SessionSpec,
    pub calib_trials_per_class: usize,
    pub test_trials_per_class: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            session: SessionSpec { n_trials_per_class: 40, ..SessionSpec::default() },
            calib_trials_per_class: 10,
            test_trials_per_class: 20,
        }
    }
}

impl DataConfig {
    /// Specs for the train, calib and test recordings.
    pub fn specs(&self, seed: u64) -> [(RecordingKind, SessionSpec); 3] {
        let base = &self.session;
        [
            (RecordingKind::Train, SessionSpec { seed, ..base.clone() }),
            (
                RecordingKind::Calib,
                SessionSpec { seed: seed.wrapping_add(1), n_trials_per_class: self.calib_trials_per_class, ..base.clone() },
            ),
            (
                RecordingKind::Test,
                SessionSpec { seed: seed.wrapping_add(2), n_trials_per_class: self.test_trials_per_class, ..base.clone() },
            ),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AsrConfig {
    /// Simulated word error rate.
    pub wer: f64,
    pub vad_threshold: f64,
}

impl Default for AsrConfig {
    fn default() -> Self {
        Self { wer: 0.0, vad_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub duration_s: f64,
    /// Samples per pushed chunk.
    pub chunk_size: usize,
    /// Pace the replay at the sample rate; off replays as fast as possible.
    pub realtime: bool,
    pub source: RecordingKind,
    /// Inbound messages keyed by tick, one JSON object per line.
    pub script: Option<PathBuf>,
    /// Also write command lines to this device or file.
    pub serial_port: Option<PathBuf>,
    /// A pull that waits this long past the expected arrival is an underrun.
    pub underrun_timeout_ms: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            chunk_size: 8,
            realtime: true,
            source: RecordingKind::Calib,
            script: None,
            serial_port: None,
            underrun_timeout_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HitlConfig {
    /// Chance that a wrong prediction is overridden by the oracle.
    pub p_correct: f64,
}

impl Default for HitlConfig {
    fn default() -> Self {
        Self { p_correct: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    /// 0 picks a free port.
    pub port: u16,
    /// Hold the replay until the first client connects.
    pub wait_for_client: bool,
    /// Outbound events buffered per client before the oldest are dropped.
    pub outbound_capacity: usize,
    pub inbound_capacity: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { bind: "127.0.0.1".into(), port: 8765, wait_for_client: false, outbound_capacity: 256, inbound_capacity: 1024 }
    }
}

fn bad(field: &str, reason: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{field}: {reason}"))
}

fn unit(field: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(bad(field, format!("must lie in [0, 1], got {v}")))
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => HarnessError::missing("config file", path),
            _ => HarnessError::Config(format!("{}: {e}", path.display())),
        })?;
        Self::from_toml(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Training configuration with the window length and stage seeds this
    /// pipeline implies.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { window_len: self.window.window_len, ..self.train.clone() }.with_seed(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        for (_, spec) in self.data.specs(self.seed) {
            spec.validate()?;
        }
        self.window.validate().map_err(|e| bad("window", e))?;
        if self.window.window_len < neuroarm_models::cnn::CnnModel::MIN_LEN {
            return Err(bad("window.window_len", "shorter than the CNN accepts"));
        }
        let fs = self.data.session.fs;
        self.train.filter.build(fs).map_err(|e| bad("train.filter", e))?;
        if !(self.train.gain > 0.0) {
            return Err(bad("train.gain", "must be > 0"));
        }
        self.control.gains.validate().map_err(|e| bad("control.gains", e))?;
        let p = &self.control.presets;
        let lim = neuroarm_core::control::ArmState::default().limits[neuroarm_core::control::Dof::FingerAperture.index()];
        for (name, v) in [("grip", p.grip), ("pinch", p.pinch), ("open", p.open)] {
            if !lim.contains(v) {
                return Err(bad(&format!("control.presets.{name}"), format!("{v} outside finger limits")));
            }
        }
        if !(self.control.correction_expiry_s > 0.0) || !(self.control.settle_deg >= 0.0) {
            return Err(bad("control", "correction_expiry_s must be > 0 and settle_deg >= 0"));
        }
        unit("asr.wer", self.asr.wer)?;
        unit("asr.vad_threshold", self.asr.vad_threshold)?;
        unit("hitl.p_correct", self.hitl.p_correct)?;
        if !(self.live.duration_s > 0.0) || !self.live.duration_s.is_finite() {
            return Err(bad("live.duration_s", format!("must be > 0, got {}", self.live.duration_s)));
        }
        if self.live.chunk_size == 0 {
            return Err(bad("live.chunk_size", "must be >= 1"));
        }
        if self.live.underrun_timeout_ms == 0 {
            return Err(bad("live.underrun_timeout_ms", "must be >= 1"));
        }
        if self.service.outbound_capacity == 0 || self.service.inbound_capacity == 0 {
            return Err(bad("service", "queue capacities must be >= 1"));
        }
        if self.sweep.sizes.is_empty() {
            return Err(bad("sweep.sizes", "empty"));
        }
        for &s in &self.sweep.sizes {
            if s < self.train.train_step.max(neuroarm_models::cnn::CnnModel::MIN_LEN) {
                return Err(bad("sweep.sizes", format!("window {s} is shorter than the training stride")));
            }
        }
        Ok(())
    }
}
