use super::CspError;
use crate::transport::{Inlet, TransportError};
use nalgebra::{DMatrix, RealField};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub window_len: usize,
    pub step: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { window_len: 150, step: 8 }
    }
}

impl WindowSpec {
    pub fn new(window_len: usize, step: usize) -> Result<Self, CspError> {
        let s = Self { window_len, step };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CspError> {
        if self.step == 0 || self.step > self.window_len {
            return Err(CspError::WindowSpec(format!(
                "need 0 < step <= window_len, got step {} window_len {}",
                self.step, self.window_len
            )));
        }
        Ok(())
    }

    /// Windows per second at sample rate `fs`.
    pub fn emission_rate(&self, fs: f64) -> f64 {
        fs / self.step as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlidingWindow<T: RealField + Copy = f32> {
    pub samples: DMatrix<T>,
    /// Index (in pushed samples) one past the last sample of the window.
    pub end: u64,
    /// Arrival time of the newest sample, when known.
    pub last_arrival: Option<Instant>,
}

/// Push-based window scheduler: the first window is complete after
/// `window_len` samples, then one more every `step` samples.
#[derive(Debug, Clone)]
pub struct Windower<T: RealField + Copy = f32> {
    spec: WindowSpec,
    ring: DMatrix<T>,
    head: usize,
    seen: u64,
}

impl<T: RealField + Copy> Windower<T> {
    pub fn new(n_channels: usize, spec: WindowSpec) -> Result<Self, CspError> {
        spec.validate()?;
        Ok(Self { spec, ring: DMatrix::zeros(n_channels, spec.window_len), head: 0, seen: 0 })
    }

    pub fn spec(&self) -> WindowSpec {
        self.spec
    }

    pub fn samples_seen(&self) -> u64 {
        self.seen
    }

    pub fn push(&mut self, chunk: &DMatrix<T>, arrival: Option<Instant>) -> Result<Vec<SlidingWindow<T>>, CspError> {
        if chunk.nrows() != self.ring.nrows() {
            return Err(CspError::Shape(format!("expected {} channels, got {}", self.ring.nrows(), chunk.nrows())));
        }
        let w = self.spec.window_len;
        let mut out = Vec::new();
        for col in chunk.column_iter() {
            self.ring.set_column(self.head, &col);
            self.head = (self.head + 1) % w;
            self.seen += 1;
            if self.seen >= w as u64 && (self.seen - w as u64) % self.spec.step as u64 == 0 {
                out.push(SlidingWindow { samples: self.snapshot(), end: self.seen, last_arrival: arrival });
            }
        }
        Ok(out)
    }

    fn snapshot(&self) -> DMatrix<T> {
        let w = self.spec.window_len;
        let mut m = DMatrix::zeros(self.ring.nrows(), w);
        let tail = w - self.head;
        m.columns_mut(0, tail).copy_from(&self.ring.columns(self.head, tail));
        m.columns_mut(tail, self.head).copy_from(&self.ring.columns(0, self.head));
        m
    }
}

/// Blocking iterator of windows read from an inlet; ends when the stream
/// closes.
pub struct SlidingWindows<'a> {
    inlet: &'a mut Inlet,
    windower: Windower,
    ready: std::collections::VecDeque<SlidingWindow>,
    poll: Duration,
    done: bool,
}

pub fn sliding_windows(inlet: &mut Inlet, spec: WindowSpec) -> Result<SlidingWindows<'_>, CspError> {
    let windower = Windower::new(inlet.header().n_channels, spec)?;
    Ok(SlidingWindows { inlet, windower, ready: Default::default(), poll: Duration::from_millis(50), done: false })
}

impl Iterator for SlidingWindows<'_> {
    type Item = SlidingWindow;

    fn next(&mut self) -> Option<SlidingWindow> {
        loop {
            if let Some(w) = self.ready.pop_front() {
                return Some(w);
            }
            if self.done {
                return None;
            }
            match self.inlet.pull_available(self.poll) {
                Ok(Some(win)) => {
                    let got = self.windower.push(&win.samples, Some(win.last_arrival)).ok()?;
                    self.ready.extend(got);
                }
                Ok(None) => {}
                Err(TransportError::Closed) => self.done = true,
                Err(e) => {
                    tracing::warn!(error = %e, "window stream ended");
                    self.done = true;
                }
            }
        }
    }
}
