use super::{BiquadSection, DspError, FilterCascade};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Butterworth bandpass by bilinear transform with pre-warped band edges.
///
/// `prototype_order` is the order of the analog lowpass prototype; the
/// lowpass-to-bandpass mapping doubles the pole count, so the result holds
/// `prototype_order` biquads. Every section carries zeros at z = +1 and
/// z = -1, and the overall gain is unity at the geometric band center.
pub fn design_butterworth_bandpass(
    prototype_order: usize,
    low_hz: f64,
    high_hz: f64,
    fs: f64,
) -> Result<FilterCascade, DspError> {
    if prototype_order == 0 {
        return Err(DspError::Order);
    }
    if !(fs > 0.0 && low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(DspError::BandEdges { low: low_hz, high: high_hz, fs });
    }
    let k = 2.0 * fs;
    let w_lo = k * (PI * low_hz / fs).tan();
    let w_hi = k * (PI * high_hz / fs).tan();
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    let n = prototype_order;
    let bilinear = |s: Complex64| (k + s) / (k - s);

    let mut sections = Vec::with_capacity(n);
    let mut push_pair = |z1: Complex64, z2: Complex64| {
        sections.push(BiquadSection {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1: -(z1 + z2).re,
            a2: (z1 * z2).re,
        });
    };

    for i in 0..n {
        let theta = PI * (2 * i + n + 1) as f64 / (2 * n) as f64;
        let p = Complex64::from_polar(1.0, theta);
        if p.im < -1e-12 {
            // Lower-half poles are handled as conjugates of the upper half.
            continue;
        }
        let half = p * (bw / 2.0);
        let root = (half * half - w0_sq).sqrt();
        let s1 = half + root;
        let s2 = half - root;
        if p.im.abs() <= 1e-12 {
            // Real prototype pole: its two bandpass poles form one section.
            push_pair(bilinear(s1), bilinear(s2));
        } else {
            let z1 = bilinear(s1);
            let z2 = bilinear(s2);
            push_pair(z1, z1.conj());
            push_pair(z2, z2.conj());
        }
    }

    let mut cascade = FilterCascade::new(sections);
    let center_hz = fs / PI * (w0_sq.sqrt() / k).atan();
    let g = cascade.response(center_hz, fs).norm();
    let per_section = g.powf(-1.0 / n as f64);
    let scaled = cascade
        .sections()
        .iter()
        .map(|s| BiquadSection {
            b0: s.b0 * per_section,
            b1: s.b1 * per_section,
            b2: s.b2 * per_section,
            ..*s
        })
        .collect();
    cascade = FilterCascade::new(scaled);
    if let Some(i) = cascade.sections().iter().position(|s| !s.is_stable()) {
        return Err(DspError::Unstable(i));
    }
    Ok(cascade)
}

/// Second-order notch whose -3 dB bandwidth is `f0 / q`.
pub fn design_notch(f0: f64, q: f64, fs: f64) -> Result<FilterCascade, DspError> {
    if !(fs > 0.0 && f0 > 0.0 && f0 < fs / 2.0 && q > 0.0) {
        return Err(DspError::Notch { f0, q, fs });
    }
    let w0 = 2.0 * PI * f0 / fs;
    let bw = w0 / q;
    let beta = (bw / 2.0).tan();
    let gain = 1.0 / (1.0 + beta);
    let c = w0.cos();
    Ok(FilterCascade::new(vec![BiquadSection {
        b0: gain,
        b1: -2.0 * gain * c,
        b2: gain,
        a1: -2.0 * gain * c,
        a2: 2.0 * gain - 1.0,
    }]))
}

/// Bandpass + notch chain parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterChainSpec {
    pub prototype_order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub notch_hz: f64,
    pub notch_q: f64,
}

impl Default for FilterChainSpec {
    fn default() -> Self {
        Self {
            prototype_order: 6,
            low_hz: 0.5,
            high_hz: 45.0,
            notch_hz: 50.0,
            notch_q: 30.0,
        }
    }
}

impl FilterChainSpec {
    /// The narrower band used before fitting ICA.
    pub fn ica_prefilter() -> Self {
        Self {
            low_hz: 1.0,
            high_hz: 40.0,
            ..Self::default()
        }
    }

    pub fn build(&self, fs: f64) -> Result<FilterCascade, DspError> {
        let bp = design_butterworth_bandpass(self.prototype_order, self.low_hz, self.high_hz, fs)?;
        let notch = design_notch(self.notch_hz, self.notch_q, fs)?;
        Ok(bp.then(&notch))
    }
}
