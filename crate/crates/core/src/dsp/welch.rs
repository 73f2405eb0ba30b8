use super::DspError;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One-sided power spectral density in signal-units²/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub fs: f64,
    pub seg_len: usize,
}

impl PsdEstimate {
    pub fn df(&self) -> f64 {
        self.fs / self.seg_len as f64
    }

    /// Index of the bin closest to `freq`.
    pub fn bin(&self, freq: f64) -> usize {
        ((freq / self.df()).round() as usize).min(self.freqs.len() - 1)
    }

    pub fn peak_freq(&self) -> f64 {
        let (i, _) = self
            .power
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        self.freqs[i]
    }
}

/// Welch's averaged periodogram with a periodic Hann window and per-segment
/// mean removal.
pub fn welch_psd(
    signal: &[f64],
    fs: f64,
    seg_len: usize,
    overlap: usize,
) -> Result<PsdEstimate, DspError> {
    if seg_len == 0 || seg_len > signal.len() {
        return Err(DspError::SegmentTooLong { seg_len, len: signal.len() });
    }
    if overlap >= seg_len {
        return Err(DspError::Overlap { overlap, seg_len });
    }
    let window: Vec<f64> = (0..seg_len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg_len as f64).cos())
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let step = seg_len - overlap;
    let n_bins = seg_len / 2 + 1;

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(seg_len);
    let mut buf = vec![Complex::new(0.0, 0.0); seg_len];
    let mut acc = vec![0.0; n_bins];
    let mut n_segments = 0usize;

    let mut start = 0;
    while start + seg_len <= signal.len() {
        let seg = &signal[start..start + seg_len];
        let m = seg.iter().sum::<f64>() / seg_len as f64;
        for (b, (&x, &w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            *b = Complex::new((x - m) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        n_segments += 1;
        start += step;
    }

    let scale = 1.0 / (fs * win_power * n_segments as f64);
    let power: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || (seg_len % 2 == 0 && k == n_bins - 1) {
                1.0
            } else {
                2.0
            };
            p * scale * one_sided
        })
        .collect();
    let freqs = (0..n_bins).map(|k| k as f64 * fs / seg_len as f64).collect();
    Ok(PsdEstimate { freqs, power, fs, seg_len })
}

/// Integrated power over `[lo, hi]` Hz (rectangle rule over bins).
pub fn band_power(psd: &PsdEstimate, lo: f64, hi: f64) -> f64 {
    let df = psd.df();
    psd.freqs
        .iter()
        .zip(&psd.power)
        .filter(|(f, _)| **f >= lo && **f <= hi)
        .map(|(_, p)| p * df)
        .sum()
}
