use super::{Chunk, Inlet, TransportError};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StreamStats {
    /// Delivered samples per second of observation.
    pub effective_rate: f64,
    /// Samples missing according to sequence gaps.
    pub dropped: u64,
    /// Longest interval between consecutive chunk arrivals, seconds.
    pub max_gap: f64,
    /// RMS deviation of inter-arrival intervals from their mean, seconds.
    pub jitter_rms: f64,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct StatsTracker {
    delivered: u64,
    dropped: u64,
    expected: Option<u64>,
    last_arrival: Option<Instant>,
    max_gap: f64,
    n_intervals: u64,
    mean_interval: f64,
    m2_interval: f64,
}

impl StatsTracker {
    pub(crate) fn record(&mut self, chunk: &Chunk, at: Instant) {
        if let Some(exp) = self.expected {
            if chunk.seq > exp {
                self.dropped += chunk.seq - exp;
            }
        }
        self.expected = Some(chunk.seq + chunk.len() as u64);
        self.delivered += chunk.len() as u64;
        if let Some(prev) = self.last_arrival {
            let dt = at.saturating_duration_since(prev).as_secs_f64();
            self.max_gap = self.max_gap.max(dt);
            self.n_intervals += 1;
            let delta = dt - self.mean_interval;
            self.mean_interval += delta / self.n_intervals as f64;
            self.m2_interval += delta * (dt - self.mean_interval);
        }
        self.last_arrival = Some(at);
    }

    pub(crate) fn stats(&self, elapsed_s: f64) -> StreamStats {
        StreamStats {
            effective_rate: if elapsed_s > 0.0 { self.delivered as f64 / elapsed_s } else { 0.0 },
            dropped: self.dropped,
            max_gap: self.max_gap,
            jitter_rms: if self.n_intervals > 0 {
                (self.m2_interval / self.n_intervals as f64).sqrt()
            } else {
                0.0
            },
        }
    }

    /// Fresh tracker that continues the sequence accounting of `self`.
    pub(crate) fn continuing(&self) -> Self {
        Self { expected: self.expected, ..Default::default() }
    }
}

/// Consumes the stream for `horizon_s` seconds and reports what arrived.
pub fn measure_stats(inlet: &mut Inlet, horizon_s: f64) -> Result<StreamStats, TransportError> {
    if !(horizon_s >= 1.0) {
        return Err(TransportError::InvalidRequest(format!("horizon must be >= 1 s, got {horizon_s}")));
    }
    inlet.begin_window();
    let deadline = Instant::now() + Duration::from_secs_f64(horizon_s);
    let mut result = Ok(());
    loop {
        let now = Instant::now();
        if now >= deadline {
            break;
        }
        match inlet.pull_available(deadline - now) {
            Ok(_) => {}
            Err(TransportError::Closed) => break,
            Err(e) => {
                result = Err(e);
                break;
            }
        }
    }
    let window = inlet.end_window();
    result.map(|_| window.stats(horizon_s))
}
