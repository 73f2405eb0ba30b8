//! Timestamped multi-channel streaming between one outlet and one inlet.
//!
//! Streams are found by name through a process-wide registry. An outlet can
//! live in-process (shared buffer) or behind a loopback TCP socket using the
//! framing in [`wire`]; inlets look the same either way.
//!
//! `Chunk::seq` is the running sample index of the chunk's first sample, so
//! a gap in `seq` is directly the number of samples lost upstream.

mod buffer;
mod registry;
mod stats;
pub mod tcp;
pub mod wire;

pub use buffer::{stream_pair, Inlet, Outlet, OutletOptions, Window};
pub use registry::{open_inlet, open_outlet, open_outlet_with};
pub use stats::{measure_stats, StreamStats};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub name: String,
    pub n_channels: usize,
    /// Nominal sample rate, Hz.
    pub fs_nominal: f64,
    pub source_id: String,
}

impl StreamHeader {
    pub fn new(name: impl Into<String>, n_channels: usize, fs_nominal: f64) -> Self {
        let name = name.into();
        Self { source_id: format!("{name}-src"), name, n_channels, fs_nominal }
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if self.n_channels == 0 {
            return Err(TransportError::InvalidHeader("n_channels must be >= 1".into()));
        }
        if !(self.fs_nominal > 0.0) || !self.fs_nominal.is_finite() {
            return Err(TransportError::InvalidHeader(format!("bad fs_nominal {}", self.fs_nominal)));
        }
        if self.name.is_empty() || self.name.contains('\n') || self.source_id.contains('\n') {
            return Err(TransportError::InvalidHeader("name/source_id must be single-line and non-empty".into()));
        }
        Ok(())
    }
}

/// Block of `k` samples for every channel (channels × k).
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    /// Timestamp of the first sample, seconds on the monotonic clock.
    pub t0: f64,
    /// Sample index of the first sample within the stream.
    pub seq: u64,
    pub samples: DMatrix<f32>,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("a stream named `{0}` is already open")]
    NameCollision(String),
    #[error("could not resolve stream `{0}` before the timeout")]
    ResolveTimeout(String),
    #[error("stream `{0}` already has a reader")]
    AlreadyConnected(String),
    #[error("timed out waiting for {requested} samples ({available} available)")]
    Timeout { requested: usize, available: usize },
    #[error("stream closed")]
    Closed,
    #[error("sequence {got} does not follow previous chunk ending at {expected_at_least}")]
    NonMonotonicSeq { expected_at_least: u64, got: u64 },
    #[error("timestamp {got} precedes previous chunk timestamp {last}")]
    NonMonotonicTime { last: f64, got: f64 },
    #[error("chunk has {found} channels, stream has {expected}")]
    Shape { expected: usize, found: usize },
    #[error("invalid stream header: {0}")]
    InvalidHeader(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("wire format error: {0}")]
    Wire(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TransportError {
    fn from(e: std::io::Error) -> Self {
        TransportError::Io(e.to_string())
    }
}
