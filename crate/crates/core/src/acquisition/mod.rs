//! Synthetic EEG sessions, programmable gain and recording persistence.

mod file;
mod montage;
mod synth;

pub use file::{load_recording, read_recording, save_recording, write_recording, RecordingFileError, RECORDING_MAGIC, RECORDING_VERSION};
pub use montage::{channel_name, channel_names, ChannelRoles, MONTAGE_10_20};
pub use synth::generate_session;

use crate::labels::ClassLabel;
use crate::transport::StreamHeader;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AcquisitionError {
    #[error("invalid session spec field `{field}`: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("programmable gain must be > 0, got {0}")]
    Gain(f32),
    #[error("inconsistent recording: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// RMS of the spatially mixed pink background, µV.
    pub pink_amp: f64,
    /// Amplitude of the 50 Hz powerline sine, µV.
    pub line_amp: f64,
    /// RMS of independent white sensor noise per channel, µV.
    pub sensor_amp: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { pink_amp: 5.0, line_amp: 5.0, sensor_amp: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArtifactSpec {
    /// Blink events per minute on the frontal channels.
    pub blink_rate: f64,
    /// Peak blink amplitude on Fp1, µV.
    pub blink_amp: f64,
    /// EMG bursts per minute (30–45 Hz) on the temporal channels.
    pub emg_burst_rate: f64,
    /// Peak EMG burst amplitude, µV.
    pub emg_amp: f64,
}

impl Default for ArtifactSpec {
    fn default() -> Self {
        Self { blink_rate: 12.0, blink_amp: 80.0, emg_burst_rate: 6.0, emg_amp: 15.0 }
    }
}

impl ArtifactSpec {
    pub fn none() -> Self {
        Self { blink_rate: 0.0, blink_amp: 0.0, emg_burst_rate: 0.0, emg_amp: 0.0 }
    }
}

/// Sensorimotor mu rhythm and its class-dependent desynchronization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RhythmSpec {
    /// Peak amplitude of the C3/C4 mu oscillations at rest, µV.
    pub mu_amp: f64,
    /// Center frequency of the mu rhythm, Hz.
    pub mu_freq: f64,
    /// Power ratio (active / rest) in the 8–12 Hz band on the contralateral
    /// channel. 1.0 disables modulation.
    pub erd_factor: f64,
}

impl Default for RhythmSpec {
    fn default() -> Self {
        Self { mu_amp: 20.0, mu_freq: 10.0, erd_factor: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionSpec {
    pub n_channels: usize,
    /// Sample rate, Hz.
    pub fs: f64,
    pub classes: Vec<ClassLabel>,
    /// Seconds per labeled trial.
    pub trial_len: f64,
    pub n_trials_per_class: usize,
    pub noise: NoiseSpec,
    pub artifacts: ArtifactSpec,
    pub rhythm: RhythmSpec,
    pub seed: u64,
}

impl Default for SessionSpec {
    fn default() -> Self {
        Self {
            n_channels: 16,
            fs: 125.0,
            classes: ClassLabel::ALL.to_vec(),
            trial_len: 4.0,
            n_trials_per_class: 10,
            noise: NoiseSpec::default(),
            artifacts: ArtifactSpec::default(),
            rhythm: RhythmSpec::default(),
            seed: 0,
        }
    }
}

impl SessionSpec {
    pub fn validate(&self) -> Result<(), AcquisitionError> {
        let bad = |field: &'static str, reason: String| Err(AcquisitionError::InvalidSpec { field, reason });
        if self.n_channels < 2 {
            return bad("n_channels", format!("need at least 2, got {}", self.n_channels));
        }
        if !(self.fs > 90.0) || !self.fs.is_finite() {
            return bad("fs", format!("must exceed 90 Hz (2 × 45 Hz), got {}", self.fs));
        }
        if self.classes.is_empty() {
            return bad("classes", "empty class set".into());
        }
        let mut seen = self.classes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.classes.len() {
            return bad("classes", "duplicate class".into());
        }
        if !(self.trial_len > 0.0) || !self.trial_len.is_finite() {
            return bad("trial_len", format!("must be > 0, got {}", self.trial_len));
        }
        if (self.trial_len * self.fs).round() < 1.0 {
            return bad("trial_len", "shorter than one sample".into());
        }
        if self.n_trials_per_class == 0 {
            return bad("n_trials_per_class", "must be at least 1".into());
        }
        let amps = [
            ("noise.pink_amp", self.noise.pink_amp),
            ("noise.line_amp", self.noise.line_amp),
            ("noise.sensor_amp", self.noise.sensor_amp),
            ("artifacts.blink_rate", self.artifacts.blink_rate),
            ("artifacts.blink_amp", self.artifacts.blink_amp),
            ("artifacts.emg_burst_rate", self.artifacts.emg_burst_rate),
            ("artifacts.emg_amp", self.artifacts.emg_amp),
            ("rhythm.mu_amp", self.rhythm.mu_amp),
        ];
        for (field, v) in amps {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(field, format!("must be finite and >= 0, got {v}"));
            }
        }
        if !(self.rhythm.erd_factor > 0.0 && self.rhythm.erd_factor <= 1.0) {
            return bad("rhythm.erd_factor", format!("must lie in (0, 1], got {}", self.rhythm.erd_factor));
        }
        if !(self.rhythm.mu_freq > 0.0 && self.rhythm.mu_freq < self.fs / 2.0) {
            return bad("rhythm.mu_freq", format!("must lie in (0, fs/2), got {}", self.rhythm.mu_freq));
        }
        Ok(())
    }

    pub fn trial_samples(&self) -> usize {
        (self.trial_len * self.fs).round() as usize
    }

    pub fn total_samples(&self) -> usize {
        self.trial_samples() * self.n_trials_per_class * self.classes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArtifactKind {
    Blink,
    EmgBurst,
}

impl ArtifactKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            ArtifactKind::Blink => 1,
            ArtifactKind::EmgBurst => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(ArtifactKind::Blink),
            2 => Some(ArtifactKind::EmgBurst),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEvent {
    /// Onset, seconds on the recording timeline.
    pub timestamp: f64,
    pub duration: f64,
    pub kind: ArtifactKind,
}

/// A labeled multi-channel session. Samples are channels × time in µV.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub header: StreamHeader,
    /// Timestamp of sample 0; sample `i` sits at `t0 + i / fs`.
    pub t0: f64,
    pub samples: DMatrix<f32>,
    pub labels: Vec<ClassLabel>,
    pub event_log: Vec<ArtifactEvent>,
}

impl Recording {
    pub fn new(
        header: StreamHeader,
        t0: f64,
        samples: DMatrix<f32>,
        labels: Vec<ClassLabel>,
        event_log: Vec<ArtifactEvent>,
    ) -> Result<Self, AcquisitionError> {
        let rec = Self { header, t0, samples, labels, event_log };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<(), AcquisitionError> {
        if self.samples.nrows() != self.header.n_channels {
            return Err(AcquisitionError::Inconsistent(format!(
                "header declares {} channels, samples hold {} rows",
                self.header.n_channels,
                self.samples.nrows()
            )));
        }
        if self.labels.len() != self.samples.ncols() {
            return Err(AcquisitionError::Inconsistent(format!(
                "{} labels for {} samples",
                self.labels.len(),
                self.samples.ncols()
            )));
        }
        if !(self.header.fs_nominal > 0.0) {
            return Err(AcquisitionError::Inconsistent("non-positive sample rate".into()));
        }
        Ok(())
    }

    pub fn fs(&self) -> f64 {
        self.header.fs_nominal
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn timestamp(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.fs()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.fs()
    }

    /// Samples widened to f64 for processing.
    pub fn samples_f64(&self) -> DMatrix<f64> {
        self.samples.map(f64::from)
    }

    /// Count of samples per class, in [`ClassLabel::ALL`] order.
    pub fn label_histogram(&self) -> [usize; 3] {
        let mut h = [0; 3];
        for l in &self.labels {
            h[l.index()] += 1;
        }
        h
    }
}

/// Programmable gain amplifier: `V_out = A · V_in`.
pub fn pga_amplify(chunk: &DMatrix<f32>, gain: f32) -> Result<DMatrix<f32>, AcquisitionError> {
    if !(gain > 0.0) || !gain.is_finite() {
        return Err(AcquisitionError::Gain(gain));
    }
    Ok(chunk * gain)
}

/// Gain chosen for the acquisition front end.
pub const DEFAULT_PGA_GAIN: f32 = 8.0;
