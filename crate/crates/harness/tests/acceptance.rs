//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use nalgebra::{DMatrix, DVector};
use neuroarm_core::acquisition::{generate_session, load_recording, ArtifactSpec, ChannelRoles, SessionSpec};
use neuroarm_core::control::{
    hitl_update, human_feedback, ArmState, ControlGains, ControlMode, Controller, ControllerConfig, CorrectionEvent,
    Dof, JointLimits, VoiceCommand, VOCABULARY,
};
use neuroarm_core::csp::{fit_csp, fit_csp_covariances, Epoch};
use neuroarm_core::dsp::{band_power, welch_psd, FilterChainSpec};
use neuroarm_core::ica::{auto_reject, fit_ica, preprocess_for_ica, reject_and_reconstruct, score_components};
use neuroarm_core::ica::{FastIcaConfig, RejectThresholds};
use neuroarm_core::linalg::pearson;
use neuroarm_core::ClassLabel;
use neuroarm_harness::commands::{cmd_eval, cmd_gen, cmd_hitl_exp, cmd_run_live, cmd_sweep, cmd_train};
use neuroarm_harness::telemetry::{deterministic_ticks, parse_log};
use neuroarm_harness::PipelineConfig;
use neuroarm_models::bundle::{bundle_from_bytes, bundle_to_bytes};
use neuroarm_models::cnn::{CnnConfig, CnnModel};
use neuroarm_models::dataset::{cut, trial_windows};
use neuroarm_models::lstm::LstmModel;
use neuroarm_models::nn::{gradient_check, Params};
use neuroarm_models::train::{prepare, train_ensemble};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

const FS: f64 = 125.0;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(elapsed: Duration, limit_s: f64) -> Outcome {
    let s = elapsed.as_secs_f64();
    ensure!(s < limit_s, "took {s:.1} s, limit {limit_s} s");
    Ok(format!("{s:.1} s"))
}

fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

fn sine(freq: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * PI * freq * i as f64 / FS).sin()).collect()
}

fn dft_amplitude(x: &[f64], freq: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let ph = 2.0 * PI * freq * i as f64 / FS;
        re += v * ph.cos();
        im -= v * ph.sin();
    }
    2.0 * (re * re + im * im).sqrt() / x.len() as f64
}

fn laplace(rng: &mut ChaCha8Rng) -> f64 {
    let e = -(1.0 - rng.gen::<f64>()).ln();
    if rng.gen_bool(0.5) {
        e
    } else {
        -e
    }
}

fn filter_chain() -> Outcome {
    let t = Instant::now();
    let chain = FilterChainSpec::default().build(FS).map_err(|e| e.to_string())?;
    let (r50, r10) = (chain.magnitude_db(50.0, FS), chain.magnitude_db(10.0, FS));
    ensure!(r50 <= -30.0, "response at 50 Hz is {r50:.2} dB");
    ensure!(r10.abs() <= 1.0, "response at 10 Hz is {r10:.3} dB");

    let n = (10.0 * FS) as usize;
    let tail = (2.0 * FS) as usize;
    let mut steady = [0.0; 2];
    for (k, f) in [50.0, 10.0].into_iter().enumerate() {
        let x = sine(f, n);
        let y = chain.clone().apply(&x).map_err(|e| e.to_string())?;
        steady[k] = 20.0 * (dft_amplitude(&y[n - tail..], f) / dft_amplitude(&x[n - tail..], f)).log10();
    }
    ensure!(steady[0] <= -30.0, "steady-state 50 Hz gain {:.2} dB", steady[0]);
    ensure!(steady[1].abs() <= 1.0, "steady-state 10 Hz gain {:.3} dB", steady[1]);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..5000).map(|_| rng.gen_range(-50.0..50.0)).collect();
    let batch = chain.clone().apply(&x).map_err(|e| e.to_string())?;
    let mut s = chain.clone();
    let mut chunked = Vec::new();
    for c in x.chunks(8) {
        chunked.extend(s.apply(c).map_err(|e| e.to_string())?);
    }
    let err = chunked.iter().zip(&batch).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(err < 1e-9, "chunked vs batch differ by {err:e}");
    let time = within(t.elapsed(), 1.0)?;
    Ok(format!(
        "50 Hz {r50:.1} dB (steady {:.1}), 10 Hz {r10:+.3} dB (steady {:+.3}), chunk err {err:.1e}, {time}",
        steady[0], steady[1]
    ))
}

fn matched_correlation(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    fn perms(p: &mut Vec<usize>, at: usize, f: &mut impl FnMut(&[usize])) {
        if at == p.len() {
            return f(p);
        }
        for i in at..p.len() {
            p.swap(at, i);
            perms(p, at + 1, f);
            p.swap(at, i);
        }
    }
    let k = truth.nrows();
    let r = DMatrix::from_fn(k, k, |i, j| pearson(&row(truth, i), &row(est, j)).abs());
    let mut best = (f64::MIN, 0.0);
    perms(&mut (0..k).collect(), 0, &mut |p| {
        let sum: f64 = p.iter().enumerate().map(|(i, &j)| r[(i, j)]).sum();
        if sum > best.0 {
            best = (sum, p.iter().enumerate().map(|(i, &j)| r[(i, j)]).fold(f64::MAX, f64::min));
        }
    });
    best.1
}

fn ica_recovery() -> Outcome {
    let t = Instant::now();
    let mut worst_r = f64::MAX;
    let mut worst_rec = 0.0f64;
    for seed in 0..12u64 {
        let k = 2 + (seed % 3) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let s = DMatrix::from_fn(k, 5000, |_, _| laplace(&mut rng));
        let mix = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0)) + DMatrix::identity(k, k) * 1.5;
        let mut x = &mix * &s;
        for mut c in x.column_iter_mut() {
            c += DVector::from_fn(k, |i, _| i as f64 - 1.0);
        }
        let (wh, model) = fit_ica(&x, &FastIcaConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        worst_r = worst_r.min(matched_correlation(&model.activations(&x), &s));
        let same = reject_and_reconstruct(&model, &wh, &x, &BTreeSet::new()).map_err(|e| e.to_string())?;
        worst_rec = worst_rec.max((&same - &x).amax());
    }
    ensure!(worst_r >= 0.95, "worst matched correlation {worst_r:.4}");
    ensure!(worst_rec < 1e-6, "reconstruction error {worst_rec:e}");

    let spec = SessionSpec {
        seed: 21,
        artifacts: ArtifactSpec { emg_burst_rate: 0.0, ..ArtifactSpec::default() },
        ..SessionSpec::default()
    };
    let rec = generate_session(&spec).map_err(|e| e.to_string())?;
    let roles = ChannelRoles::for_count(rec.n_channels());
    let x = preprocess_for_ica(&rec).map_err(|e| e.to_string())?.samples_f64();
    let (wh, model) = fit_ica(&x, &FastIcaConfig::default()).map_err(|e| e.to_string())?;
    let scores = score_components(&model, &x, &roles.frontal, rec.fs()).map_err(|e| e.to_string())?;
    let rejected = auto_reject(&scores, &RejectThresholds::default());
    ensure!(!rejected.is_empty(), "no component rejected");
    let clean = reject_and_reconstruct(&model, &wh, &x, &rejected).map_err(|e| e.to_string())?;
    let power = |m: &DMatrix<f64>, ch: usize, lo: f64, hi: f64| {
        band_power(&welch_psd(&row(m, ch), FS, 256, 128).unwrap(), lo, hi)
    };
    let before: f64 = roles.frontal.iter().map(|&c| power(&x, c, 0.5, 3.0)).sum();
    let after: f64 = roles.frontal.iter().map(|&c| power(&clean, c, 0.5, 3.0)).sum();
    let cut_frac = 1.0 - after / before;
    ensure!(cut_frac >= 0.8, "frontal 0.5-3 Hz power cut by {:.1}%", 100.0 * cut_frac);
    let mut mu_change = 0.0f64;
    for ch in [roles.c3, roles.c4] {
        mu_change = mu_change.max((power(&clean, ch, 8.0, 12.0) / power(&x, ch, 8.0, 12.0) - 1.0).abs());
    }
    ensure!(mu_change <= 0.1, "C3/C4 mu power changed by {:.1}%", 100.0 * mu_change);
    let time = within(t.elapsed(), 30.0)?;
    Ok(format!(
        "min r {worst_r:.4}, recon {worst_rec:.1e}, blink cut {:.1}%, mu change {:.2}%, {time}",
        100.0 * cut_frac,
        100.0 * mu_change
    ))
}

fn variance_ratio(w: &[f64], ca: &DMatrix<f64>, cb: &DMatrix<f64>) -> f64 {
    let w = DMatrix::from_row_slice(1, w.len(), w);
    let a = (&w * ca * w.transpose())[(0, 0)];
    let b = (&w * cb * w.transpose())[(0, 0)];
    a / (a + b)
}

fn csp_optimality() -> Outcome {
    let mut worst = 0.0f64;
    let cases = [
        ([0.8, 0.0, 0.0, 0.2], [0.2, 0.0, 0.0, 0.8], false),
        ([4.0, 1.5, 1.5, 1.0], [1.0, -0.5, -0.5, 4.0], true),
    ];
    for (a, b, strict) in cases {
        let ca = DMatrix::from_row_slice(2, 2, &a);
        let cb = DMatrix::from_row_slice(2, 2, &b);
        let pair = fit_csp_covariances(&ca, &cb, 1).map_err(|e| e.to_string())?;
        let top = variance_ratio(&row(&pair.filters, 0), &ca, &cb);
        // closed-form largest root of det(Ca - l (Ca + Cb)) = 0
        let s = &ca + &cb;
        let (qa, qb, qc) = (
            s.determinant(),
            -(ca[(0, 0)] * s[(1, 1)] + ca[(1, 1)] * s[(0, 0)] - ca[(0, 1)] * s[(1, 0)] - ca[(1, 0)] * s[(0, 1)]),
            ca.determinant(),
        );
        let oracle = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        worst = worst.max((top - oracle).abs()).max((pair.eigvals[0] - oracle).abs());
        for ch in 0..2 {
            let raw = ca[(ch, ch)] / (ca[(ch, ch)] + cb[(ch, ch)]);
            ensure!(if strict { top > raw } else { top >= raw - 1e-12 }, "channel {ch} ratio {raw} vs top {top}");
        }
    }
    ensure!(worst < 1e-8, "top ratio off the oracle by {worst:e}");

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scales = [1.0, 2.0, 0.5, 1.5];
    let a: Vec<Epoch> = (0..10)
        .map(|_| Epoch {
            samples: DMatrix::from_fn(4, 125, |c, _| scales[c] * rng.gen_range(-1.0..1.0)),
            label: ClassLabel::Left,
        })
        .collect();
    let b: Vec<Epoch> = a.iter().map(|e| Epoch { label: ClassLabel::Right, ..e.clone() }).collect();
    let m = fit_csp(&a, &b, 2).map_err(|e| e.to_string())?;
    let dev = m.eigvals.iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    ensure!(dev <= 1e-9, "identical classes: eigenvalue off 0.5 by {dev:e}");
    Ok(format!("oracle err {worst:.1e}, identical-class dev {dev:.1e}"))
}

fn random_inputs(rows: usize, cols: usize, n: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-2.0..2.0))).collect()
}

struct Artifacts {
    _dir: tempfile::TempDir,
    cfg: PipelineConfig,
}

fn artifacts() -> Result<Artifacts, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::default();
    cfg.paths.out_dir = dir.path().join("a");
    cmd_gen(&cfg).map_err(|e| e.to_string())?;
    Ok(Artifacts { _dir: dir, cfg })
}

fn learning(art: &Artifacts) -> Outcome {
    let mut m = LstmModel::new(2, 64, 3, 0.0, 5);
    for i in 0..m.n_params() {
        let v = m.get(i);
        m.set(i, v * 1.5);
    }
    let xs = random_inputs(2, 5, 3, 4);
    let refs: Vec<&DMatrix<f64>> = xs.iter().collect();
    let g_lstm = gradient_check(&m, &refs, &[0, 2, 1], 1e-5, 1e-6);
    let c = CnnModel::new(2, &CnnConfig { seed: 3, ..Default::default() }, 3);
    let xs = random_inputs(2, 9, 3, 8);
    let refs: Vec<&DMatrix<f64>> = xs.iter().collect();
    let g_cnn = gradient_check(&c, &refs, &[1, 0, 2], 1e-5, 1e-6);
    ensure!(g_lstm < 1e-4 && g_cnn < 1e-4, "gradient rel err lstm {g_lstm:e}, cnn {g_cnn:e}");

    let t = Instant::now();
    let out = cmd_train(&art.cfg).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let s = out.report.test;
    ensure!(s.ensemble >= 0.90, "ensemble accuracy {:.3}", s.ensemble);
    ensure!(s.ensemble >= s.best_base(), "ensemble {:.3} below best base {:.3}", s.ensemble, s.best_base());
    let time = within(elapsed, 600.0)?;
    Ok(format!(
        "grad err lstm {g_lstm:.1e} cnn {g_cnn:.1e}; test acc lstm {:.3} cnn {:.3} rf {:.3} ensemble {:.3}; train {time}",
        s.lstm, s.cnn, s.rf, s.ensemble
    ))
}

fn window_sweep(art: &Artifacts) -> Outcome {
    let t = Instant::now();
    let out = cmd_sweep(&art.cfg).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let sizes: Vec<usize> = out.table.rows.iter().map(|r| r.window_len).collect();
    ensure!(sizes == [50, 100, 150, 200, 250], "sizes {sizes:?}");
    ensure!(out.table.row(150).is_some(), "no row for 150");
    let cols: [(&str, fn(&neuroarm_models::sweep::SweepRow) -> f64); 4] =
        [("lstm", |r| r.ms_lstm), ("cnn", |r| r.ms_cnn), ("rf", |r| r.ms_rf), ("meta", |r| r.ms_meta)];
    for (name, get) in cols {
        let v: Vec<f64> = out.table.rows.iter().map(get).collect();
        ensure!(v.windows(2).all(|w| w[1] >= w[0]), "{name} times not monotone: {v:?}");
    }
    let r = out.table.row(150).unwrap();
    let time = within(elapsed, 1800.0)?;
    Ok(format!(
        "5 rows; at 150: lstm {:.3} cnn {:.3} rf {:.3} meta {:.3} ms, acc {:.3}; {time}",
        r.ms_lstm, r.ms_cnn, r.ms_rf, r.ms_meta, r.acc_ensemble
    ))
}

fn realtime_loop(art: &Artifacts) -> Outcome {
    let mut cfg = art.cfg.clone();
    cfg.paths.out_dir = art.cfg.paths.out_dir.join("rt");
    cfg.paths.bundle = Some(art.cfg.paths.bundle());
    cfg.paths.calib_recording = Some(art.cfg.paths.calib());
    cfg.live.duration_s = 60.0;
    cfg.live.realtime = true;
    let s = cmd_run_live(&cfg).map_err(|e| e.to_string())?.summary;
    ensure!(s.dropped_samples == 0, "{} samples dropped", s.dropped_samples);
    ensure!((s.cadence_hz - 15.6).abs() <= 0.5, "cadence {:.2} Hz", s.cadence_hz);
    ensure!(s.latency.e2e_p50_ms <= 150.0, "p50 latency {:.2} ms", s.latency.e2e_p50_ms);
    Ok(format!(
        "{} ticks in {:.1} s, cadence {:.2} Hz, drops 0, underruns {}, e2e p50 {:.2} ms p95 {:.2} ms (newest sample arrival to command written)",
        s.ticks, s.wall_s, s.cadence_hz, s.underruns, s.latency.e2e_p50_ms, s.latency.e2e_p95_ms
    ))
}

fn hitl_law(art: &Artifacts) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let mode = [ControlMode::Elbow, ControlMode::Arm, ControlMode::Fingers][rng.gen_range(0..3)];
        let dof = mode.dof();
        let mut s = ArmState { mode, ..ArmState::default() };
        let JointLimits { min: lo, max: hi } = s.limits[dof.index()];
        s.theta[dof.index()] = rng.gen_range(lo..=hi);
        let target = rng.gen_range(lo..=hi);
        let g = ControlGains { k_a: 2.0, k_h: rng.gen_range(0.01..=1.0) };
        let c = CorrectionEvent { timestamp: 0.0, target: dof, theta_desired: target, label_override: None };
        let e = human_feedback(Some(&c), &s);
        let e_next = human_feedback(Some(&c), &hitl_update(&s, 0, e, &g));
        worst = worst.max((e_next - (1.0 - g.k_h) * e).abs() / (1.0 + e.abs()));
    }
    ensure!(worst <= 1e-12, "contraction error {worst:e}");

    for _ in 0..100_000 {
        let gains = ControlGains { k_a: rng.gen_range(0.0..20.0), k_h: rng.gen_range(0.0..=1.0) };
        let mut c = Controller::new(ArmState::default(), ControllerConfig { gains, ..Default::default() });
        let mut now = 0.0;
        for _ in 0..rng.gen_range(1..40) {
            now += rng.gen_range(0.0..0.2);
            match rng.gen_range(0..4) {
                0 => {
                    c.voice(&VoiceCommand::new(VOCABULARY[rng.gen_range(0..VOCABULARY.len())], 1.0, now));
                }
                1 => {
                    let target = Dof::ALL[rng.gen_range(0..3)];
                    let theta_desired = rng.gen_range(-300.0..300.0);
                    c.correct(CorrectionEvent { timestamp: now, target, theta_desired, label_override: None });
                }
                _ => {
                    c.tick(rng.gen_range(-1..=1), now);
                }
            }
            ensure!(c.state.within_limits(), "limits violated: {:?}", c.state);
        }
    }

    let mut cfg = art.cfg.clone();
    cfg.paths.out_dir = art.cfg.paths.out_dir.join("hitl_law");
    cfg.paths.bundle = Some(art.cfg.paths.bundle());
    cfg.paths.test_recording = Some(art.cfg.paths.test());
    cfg.hitl.p_correct = 1.0;
    let full = cmd_hitl_exp(&cfg).map_err(|e| e.to_string())?.result;
    ensure!(!full.ticks.is_empty(), "no windows");
    if let Some(t) = full.ticks.iter().find(|t| t.acc_hitl < t.acc_plain) {
        return Err(format!("tick {}: corrected {} < plain {}", t.tick, t.acc_hitl, t.acc_plain));
    }
    cfg.hitl.p_correct = 0.0;
    let none = cmd_hitl_exp(&cfg).map_err(|e| e.to_string())?.result;
    ensure!(none.plain_series() == none.hitl_series(), "p_correct 0 series differ");
    let (plain, hitl) = full.final_accuracy();
    Ok(format!(
        "contraction err {worst:.1e}, 1e5 sequences within limits, {} ticks: final acc {plain:.3} -> {hitl:.3} with {} corrections",
        full.ticks.len(),
        full.n_corrected()
    ))
}

fn determinism(art: &Artifacts) -> Outcome {
    let cfg = &art.cfg;
    let mut twin = cfg.clone();
    twin.paths.out_dir = cfg.paths.out_dir.with_extension("twin");
    cmd_gen(&twin).map_err(|e| e.to_string())?;
    for name in ["train.brec", "calib.brec", "test.brec"] {
        let a = fs::read(cfg.paths.out_dir.join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(twin.paths.out_dir.join(name)).map_err(|e| e.to_string())?;
        ensure!(a == b, "{name} differs between gen runs");
    }

    let rec = load_recording(cfg.paths.train()).map_err(|e| e.to_string())?;
    let (ens, _) = train_ensemble(&rec, &cfg.train_config()).map_err(|e| e.to_string())?;
    let bytes = bundle_to_bytes(&ens).map_err(|e| e.to_string())?;
    let saved = fs::read(cfg.paths.bundle()).map_err(|e| e.to_string())?;
    ensure!(bytes == saved, "retrained bundle differs from the saved one");
    let reloaded = bundle_from_bytes(&saved).map_err(|e| e.to_string())?;
    let test = load_recording(cfg.paths.test()).map_err(|e| e.to_string())?;
    let prep = prepare(&test, &ens.config.front_end, cfg.train.trial_len_s).map_err(|e| e.to_string())?;
    let all: Vec<usize> = (0..prep.trials.len()).collect();
    let refs = trial_windows(&prep.trials, &all, cfg.window.window_len, cfg.train.eval_step);
    for w in refs.iter().take(200) {
        let x = cut(&prep.filtered, w, cfg.window.window_len);
        let (a, b) = (ens.predict(&x).map_err(|e| e.to_string())?, reloaded.predict(&x).map_err(|e| e.to_string())?);
        ensure!(a.p_final == b.p_final && a.stacked() == b.stacked(), "reloaded bundle predicts differently");
    }

    let mut reruns = Vec::new();
    for k in 0..2 {
        let mut c = cfg.clone();
        c.paths.out_dir = cfg.paths.out_dir.join(format!("det{k}"));
        c.paths.bundle = Some(cfg.paths.bundle());
        c.paths.test_recording = Some(cfg.paths.test());
        c.paths.calib_recording = Some(cfg.paths.calib());
        c.live.realtime = false;
        c.live.duration_s = 20.0;
        c.asr.wer = 0.2;
        c.hitl.p_correct = 0.5;
        let eval = cmd_eval(&c).map_err(|e| e.to_string())?;
        let hitl = cmd_hitl_exp(&c).map_err(|e| e.to_string())?.result;
        let live = cmd_run_live(&c).map_err(|e| e.to_string())?;
        let log = fs::read_to_string(live.dir.join("telemetry.jsonl")).map_err(|e| e.to_string())?;
        let ticks = deterministic_ticks(&parse_log(&log).map_err(|e| e.to_string())?);
        let csv = fs::read(eval.dir.join("accuracy.csv")).map_err(|e| e.to_string())?;
        reruns.push((eval.confusion, csv, hitl, ticks));
    }
    let (a, b) = (&reruns[0], &reruns[1]);
    ensure!(a.0 == b.0 && a.1 == b.1, "eval differs between runs");
    ensure!(a.2 == b.2, "hitl-exp differs between runs");
    ensure!(a.3 == b.3, "run-live trajectories differ between runs");
    Ok(format!(
        "gen, train bundle ({} bytes), eval, hitl-exp and run-live ({} ticks) reproduce; reload predictions exact",
        saved.len(),
        a.3.len()
    ))
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let outcome = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    };
    let secs = t.elapsed().as_secs_f64();
    match &outcome {
        Ok(detail) => println!("[PASS] {name}: {detail} [{secs:.1} s]"),
        Err(why) => println!("[FAIL] {name}: {why} [{secs:.1} s]"),
    }
    outcome.is_ok()
}

fn main() {
    let quiet = std::env::args().any(|a| a == "--list");
    if quiet {
        return;
    }
    let mut ok = run("filter chain", filter_chain);
    ok &= run("ica recovery", ica_recovery);
    ok &= run("csp optimality", csp_optimality);
    let art = match artifacts() {
        Ok(a) => a,
        Err(e) => {
            println!("[FAIL] dataset generation: {e}");
            std::process::exit(1);
        }
    };
    let trained = run("learning", || learning(&art));
    ok &= trained;
    if trained || Path::new(&art.cfg.paths.bundle()).exists() {
        ok &= run("window sweep", || window_sweep(&art));
        ok &= run("realtime loop", || realtime_loop(&art));
        ok &= run("hitl law", || hitl_law(&art));
        ok &= run("determinism", || determinism(&art));
    } else {
        for name in ["window sweep", "realtime loop", "hitl law", "determinism"] {
            println!("[FAIL] {name}: no trained bundle");
        }
        ok = false;
    }
    println!("acceptance: {}", if ok { "all criteria pass" } else { "some criteria FAIL" });
    if !ok {
        std::process::exit(1);
    }
}
