//! IIR filter design/application and Welch spectral estimation.

mod biquad;
mod design;
mod welch;

pub use biquad::{BiquadSection, FilterCascade, MultiChannelFilter};
pub use design::{design_butterworth_bandpass, design_notch, FilterChainSpec};
pub use welch::{band_power, welch_psd, PsdEstimate};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DspError {
    #[error("invalid band edges {low} Hz .. {high} Hz for fs {fs} Hz")]
    BandEdges { low: f64, high: f64, fs: f64 },
    #[error("invalid notch: f0 {f0} Hz, q {q}, fs {fs} Hz")]
    Notch { f0: f64, q: f64, fs: f64 },
    #[error("filter order must be at least 1")]
    Order,
    #[error("non-finite input sample at index {0}")]
    NonFinite(usize),
    #[error("segment length {seg_len} exceeds signal length {len}")]
    SegmentTooLong { seg_len: usize, len: usize },
    #[error("overlap {overlap} must be smaller than segment length {seg_len}")]
    Overlap { overlap: usize, seg_len: usize },
    #[error("channel count mismatch: filter has {expected}, block has {found}")]
    Channels { expected: usize, found: usize },
    #[error("coefficient text parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("designed section {0} is unstable")]
    Unstable(usize),
}
