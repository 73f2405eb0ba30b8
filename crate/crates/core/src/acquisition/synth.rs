use super::montage::{position, ChannelRoles};
use super::{AcquisitionError, ArtifactEvent, ArtifactKind, Recording, SessionSpec};
use crate::labels::ClassLabel;
use crate::transport::StreamHeader;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use std::f64::consts::PI;

const BLINK_DURATION_S: f64 = 0.4;
const BLINK_FP2_RATIO: f64 = 0.8;
const EMG_DURATION_S: f64 = 0.3;
const BACKGROUND_SIGMA: f64 = 0.35;
const MU_SIGMA: f64 = 0.25;

/// Generates a labeled session.
///
/// Signal model per channel: spatially mixed pink background, white sensor
/// noise, C3/C4 mu oscillators whose power drops by `erd_factor` on the
/// hemisphere contralateral to the imagined side, a 50 Hz line component,
/// half-sine blinks on Fp1/Fp2 and 30–45 Hz EMG bursts on T7/T8.
pub fn generate_session(spec: &SessionSpec) -> Result<Recording, AcquisitionError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_ch = spec.n_channels;
    let fs = spec.fs;
    let trial_n = spec.trial_samples();

    let mut order: Vec<ClassLabel> = spec
        .classes
        .iter()
        .flat_map(|&c| std::iter::repeat(c).take(spec.n_trials_per_class))
        .collect();
    order.shuffle(&mut rng);
    let labels: Vec<ClassLabel> = order
        .iter()
        .flat_map(|&c| std::iter::repeat(c).take(trial_n))
        .collect();
    let n = labels.len();
    let roles = ChannelRoles::for_count(n_ch);

    let mut x = DMatrix::<f64>::zeros(n_ch, n);

    // Background: one pink source under each electrode, blurred by a
    // Gaussian spatial kernel so neighboring channels correlate.
    if spec.noise.pink_amp > 0.0 {
        let mixing = spatial_kernel(n_ch, BACKGROUND_SIGMA);
        for k in 0..n_ch {
            let src = pink_noise(n, &mut rng);
            for i in 0..n_ch {
                let w = mixing[(i, k)] * spec.noise.pink_amp;
                if w != 0.0 {
                    for t in 0..n {
                        x[(i, t)] += w * src[t];
                    }
                }
            }
        }
    }

    if spec.noise.sensor_amp > 0.0 {
        for v in x.iter_mut() {
            *v += spec.noise.sensor_amp * rng.sample::<f64, _>(StandardNormal);
        }
    }

    // Mu rhythm. LEFT imagery desynchronizes C4, RIGHT desynchronizes C3.
    let erd_gain = spec.rhythm.erd_factor.sqrt();
    for (site, suppressed_by) in [(roles.c3, ClassLabel::Right), (roles.c4, ClassLabel::Left)] {
        let src = mu_oscillator(n, fs, spec.rhythm.mu_freq, &mut rng);
        let pattern = focal_pattern(n_ch, site, MU_SIGMA);
        for t in 0..n {
            let g = if labels[t] == suppressed_by { erd_gain } else { 1.0 };
            let v = spec.rhythm.mu_amp * g * src[t];
            for (i, w) in pattern.iter().enumerate() {
                x[(i, t)] += w * v;
            }
        }
    }

    if spec.noise.line_amp > 0.0 {
        let gains: Vec<f64> = (0..n_ch).map(|_| 0.8 + 0.4 * rng.gen::<f64>()).collect();
        for t in 0..n {
            let s = (2.0 * PI * 50.0 * t as f64 / fs).sin() * spec.noise.line_amp;
            for (i, g) in gains.iter().enumerate() {
                x[(i, t)] += g * s;
            }
        }
    }

    let mut events = Vec::new();
    let duration = n as f64 / fs;
    if spec.artifacts.blink_rate > 0.0 && spec.artifacts.blink_amp > 0.0 {
        for onset in poisson_onsets(spec.artifacts.blink_rate, BLINK_DURATION_S, duration, &mut rng) {
            let start = (onset * fs).round() as usize;
            let len = (BLINK_DURATION_S * fs).round() as usize;
            let ratios: Vec<(usize, f64)> = roles
                .frontal
                .iter()
                .enumerate()
                .map(|(j, &ch)| (ch, if j == 0 { 1.0 } else { BLINK_FP2_RATIO }))
                .collect();
            for k in 0..len.min(n - start) {
                let v = spec.artifacts.blink_amp * (PI * k as f64 / len as f64).sin();
                for &(ch, r) in &ratios {
                    x[(ch, start + k)] += r * v;
                }
            }
            events.push(ArtifactEvent {
                timestamp: start as f64 / fs,
                duration: BLINK_DURATION_S,
                kind: ArtifactKind::Blink,
            });
        }
    }
    if spec.artifacts.emg_burst_rate > 0.0 && spec.artifacts.emg_amp > 0.0 {
        for onset in poisson_onsets(spec.artifacts.emg_burst_rate, EMG_DURATION_S, duration, &mut rng) {
            let start = (onset * fs).round() as usize;
            let len = (EMG_DURATION_S * fs).round() as usize;
            let burst = emg_burst(len, fs, &mut rng);
            let ratios: Vec<(usize, f64)> = roles
                .emg
                .iter()
                .enumerate()
                .map(|(j, &ch)| (ch, if j == 0 { 1.0 } else { 0.6 }))
                .collect();
            for k in 0..len.min(n - start) {
                let v = spec.artifacts.emg_amp * burst[k];
                for &(ch, r) in &ratios {
                    x[(ch, start + k)] += r * v;
                }
            }
            events.push(ArtifactEvent {
                timestamp: start as f64 / fs,
                duration: EMG_DURATION_S,
                kind: ArtifactKind::EmgBurst,
            });
        }
    }
    events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));

    let header = StreamHeader {
        name: "synthetic-eeg".into(),
        n_channels: n_ch,
        fs_nominal: fs,
        source_id: format!("synth-{}", spec.seed),
    };
    Recording::new(header, 0.0, x.map(|v| v as f32), labels, events)
}

/// Row-normalized Gaussian kernel over scalp distance (channels × sources).
fn spatial_kernel(n: usize, sigma: f64) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(n, n, |i, k| {
        let (xi, yi) = position(i, n);
        let (xk, yk) = position(k, n);
        let d2 = (xi - xk).powi(2) + (yi - yk).powi(2);
        (-d2 / (2.0 * sigma * sigma)).exp()
    });
    for mut row in m.row_iter_mut() {
        let norm = row.norm();
        row /= norm;
    }
    m
}

/// Projection weights of a point source at `site` (1 at the site itself).
fn focal_pattern(n: usize, site: usize, sigma: f64) -> Vec<f64> {
    let (xs, ys) = position(site, n);
    (0..n)
        .map(|i| {
            let (xi, yi) = position(i, n);
            let d2 = (xi - xs).powi(2) + (yi - ys).powi(2);
            let w = (-d2 / (2.0 * sigma * sigma)).exp();
            if w < 1e-3 {
                0.0
            } else {
                w
            }
        })
        .collect()
}

/// Unit-RMS pink noise: white noise through a bank of first-order
/// low-pass sections approximating a 1/f power slope.
fn pink_noise<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let w: f64 = rng.sample(StandardNormal);
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        out.push(b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362);
        b[6] = w * 0.115926;
    }
    normalize(&mut out);
    out
}

fn normalize(x: &mut [f64]) {
    let m = crate::linalg::mean(x);
    let sd = crate::linalg::variance(x).sqrt();
    for v in x.iter_mut() {
        *v = if sd > 0.0 { (*v - m) / sd } else { 0.0 };
    }
}

/// Unit-amplitude sinusoid whose frequency wanders within ±1 Hz of `f0`.
fn mu_oscillator<R: Rng>(n: usize, fs: f64, f0: f64, rng: &mut R) -> Vec<f64> {
    let mut phase = rng.gen::<f64>() * 2.0 * PI;
    let mut f = f0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(phase.sin());
        f += 0.02 * rng.sample::<f64, _>(StandardNormal);
        f = f.clamp(f0 - 1.0, f0 + 1.0);
        phase = (phase + 2.0 * PI * f / fs) % (2.0 * PI);
    }
    out
}

/// Hann-windowed sum of random 30–45 Hz tones, peak-normalized to 1.
fn emg_burst<R: Rng>(len: usize, fs: f64, rng: &mut R) -> Vec<f64> {
    let tones: Vec<(f64, f64)> = (0..6)
        .map(|_| (30.0 + 15.0 * rng.gen::<f64>(), 2.0 * PI * rng.gen::<f64>()))
        .collect();
    let mut out: Vec<f64> = (0..len)
        .map(|k| {
            let t = k as f64 / fs;
            let env = 0.5 - 0.5 * (2.0 * PI * k as f64 / len as f64).cos();
            env * tones.iter().map(|(f, p)| (2.0 * PI * f * t + p).sin()).sum::<f64>()
        })
        .collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v /= peak);
    }
    out
}

/// Non-overlapping event onsets of a Poisson process with rate `per_min`;
/// every event fits entirely inside `[0, total_s)`.
fn poisson_onsets<R: Rng>(per_min: f64, event_s: f64, total_s: f64, rng: &mut R) -> Vec<f64> {
    let exp = Exp::new(per_min / 60.0).expect("positive rate");
    let mut out = Vec::new();
    let mut t = exp.sample(rng);
    while t + event_s < total_s {
        out.push(t);
        t += event_s + exp.sample(rng);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pink_noise_is_unit_rms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = pink_noise(5000, &mut rng);
        assert!((crate::linalg::variance(&p) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn onsets_do_not_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let o = poisson_onsets(60.0, 0.4, 120.0, &mut rng);
        assert!(o.len() > 50);
        for w in o.windows(2) {
            assert!(w[1] - w[0] >= 0.4);
        }
        assert!(o.last().unwrap() + 0.4 < 120.0);
    }

    #[test]
    fn kernel_rows_unit_norm() {
        let m = spatial_kernel(16, BACKGROUND_SIGMA);
        for r in m.row_iter() {
            assert!((r.norm() - 1.0).abs() < 1e-12);
        }
    }
}
