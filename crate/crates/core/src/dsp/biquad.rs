use super::DspError;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Second-order section with `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiquadSection {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadSection {
    /// Transfer function evaluated at `z = e^{jω}`.
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }

    pub fn poles(&self) -> [Complex64; 2] {
        // z^2 + a1 z + a2 = 0
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_pole_radius() < 1.0
    }
}

/// Ordered chain of biquads with per-section transposed direct-form II state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCascade {
    sections: Vec<BiquadSection>,
    state: Vec<[f64; 2]>,
}

impl FilterCascade {
    pub fn new(sections: Vec<BiquadSection>) -> Self {
        let state = vec![[0.0; 2]; sections.len()];
        Self { sections, state }
    }

    pub fn sections(&self) -> &[BiquadSection] {
        &self.sections
    }

    /// Appends another cascade's sections (state is reset).
    pub fn then(mut self, other: &FilterCascade) -> Self {
        self.sections.extend_from_slice(&other.sections);
        self.state = vec![[0.0; 2]; self.sections.len()];
        self
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = [0.0; 2]);
    }

    /// Complex response of the whole chain at `freq_hz`.
    pub fn response(&self, freq_hz: f64, fs: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / fs;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(omega))
    }

    pub fn magnitude_db(&self, freq_hz: f64, fs: f64) -> f64 {
        20.0 * self.response(freq_hz, fs).norm().log10()
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(BiquadSection::is_stable)
    }

    #[inline]
    pub fn process_sample(&mut self, x: f64) -> f64 {
        let mut v = x;
        for (s, st) in self.sections.iter().zip(self.state.iter_mut()) {
            let y = s.b0 * v + st[0];
            st[0] = s.b1 * v - s.a1 * y + st[1];
            st[1] = s.b2 * v - s.a2 * y;
            v = y;
        }
        v
    }

    /// Causal filtering of `signal`; state carries over to the next call.
    pub fn apply(&mut self, signal: &[f64]) -> Result<Vec<f64>, DspError> {
        let mut out = signal.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&mut self, signal: &mut [f64]) -> Result<(), DspError> {
        if let Some(i) = signal.iter().position(|v| !v.is_finite()) {
            return Err(DspError::NonFinite(i));
        }
        for v in signal.iter_mut() {
            *v = self.process_sample(*v);
        }
        Ok(())
    }

    /// Plain-text coefficient dump: one `b0 b1 b2 a1 a2` line per section.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# b0 b1 b2 a1 a2\n");
        for sec in &self.sections {
            let _ = writeln!(
                s,
                "{:e} {:e} {:e} {:e} {:e}",
                sec.b0, sec.b1, sec.b2, sec.a1, sec.a2
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, DspError> {
        let mut sections = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|e| DspError::Parse {
                line: i + 1,
                msg: format!("{e}"),
            })?;
            if vals.len() != 5 {
                return Err(DspError::Parse {
                    line: i + 1,
                    msg: format!("expected 5 coefficients, found {}", vals.len()),
                });
            }
            sections.push(BiquadSection {
                b0: vals[0],
                b1: vals[1],
                b2: vals[2],
                a1: vals[3],
                a2: vals[4],
            });
        }
        Ok(Self::new(sections))
    }
}

/// One cascade per channel, for channels × samples blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiChannelFilter {
    channels: Vec<FilterCascade>,
}

impl MultiChannelFilter {
    pub fn new(prototype: &FilterCascade, n_channels: usize) -> Self {
        let mut proto = prototype.clone();
        proto.reset();
        Self {
            channels: vec![proto; n_channels],
        }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn reset(&mut self) {
        self.channels.iter_mut().for_each(FilterCascade::reset);
    }

    /// Filters a channels × samples block in place, streaming across calls.
    pub fn apply_block(&mut self, block: &mut DMatrix<f64>) -> Result<(), DspError> {
        if block.nrows() != self.channels.len() {
            return Err(DspError::Channels {
                expected: self.channels.len(),
                found: block.nrows(),
            });
        }
        if let Some(i) = block.iter().position(|v| !v.is_finite()) {
            return Err(DspError::NonFinite(i));
        }
        for (ch, cascade) in self.channels.iter_mut().enumerate() {
            for t in 0..block.ncols() {
                let y = cascade.process_sample(block[(ch, t)]);
                block[(ch, t)] = y;
            }
        }
        Ok(())
    }
}
