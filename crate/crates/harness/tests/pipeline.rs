use futures::{SinkExt, StreamExt};
use neuroarm_core::acquisition::load_recording;
use neuroarm_core::control::{map_prediction, ControlMode, Dof};
use neuroarm_core::csp::WindowSpec;
use neuroarm_core::ClassLabel;
use neuroarm_harness::commands::{
    cmd_eval, cmd_gen, cmd_hitl_exp, cmd_run_live, cmd_serve, cmd_sweep, cmd_train, render_session_dir, LiveOutput,
};
use neuroarm_harness::config::RecordingKind;
use neuroarm_harness::protocol::{Command, Inbound};
use neuroarm_harness::telemetry::{deterministic_ticks, parse_log, trajectory, LogRecord, Rendered};
use neuroarm_harness::{HarnessError, PipelineConfig};
use neuroarm_models::dataset::{find_trials, trial_windows};
use neuroarm_models::metrics::ConfusionMatrix;
use neuroarm_models::sweep::SweepTable;
use serde_json::Value;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::thread;
use tempfile::TempDir;
use tokio_tungstenite::tungstenite::Message;

fn small_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.paths.out_dir = out.to_path_buf();
    cfg.data.session.n_trials_per_class = 8;
    cfg.data.calib_trials_per_class = 3;
    cfg.data.test_trials_per_class = 4;
    cfg.train.lstm.schedule.epochs = 4;
    cfg.train.cnn.schedule.epochs = 5;
    cfg.train.forest.n_trees = 30;
    cfg.live.duration_s = 6.0;
    cfg.live.realtime = false;
    cfg.service.port = 0;
    cfg.sweep.sizes = vec![50, 100];
    cfg.sweep.timing_windows = 8;
    cfg.sweep.timing_rounds = 2;
    cfg
}

/// Recordings and a bundle trained once for the whole file.
struct Fixture {
    _dir: TempDir,
    cfg: PipelineConfig,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        cmd_gen(&cfg).unwrap();
        cmd_train(&cfg).unwrap();
        Fixture { _dir: dir, cfg }
    })
}

/// The fixture's inputs with outputs redirected to a fresh directory.
fn scratch(f: &Fixture) -> (TempDir, PipelineConfig) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = f.cfg.clone();
    let src = &f.cfg.paths;
    cfg.paths.train_recording = Some(src.train());
    cfg.paths.calib_recording = Some(src.calib());
    cfg.paths.test_recording = Some(src.test());
    cfg.paths.bundle = Some(src.bundle());
    cfg.paths.out_dir = dir.path().to_path_buf();
    (dir, cfg)
}

fn read_log(out: &LiveOutput) -> Vec<LogRecord> {
    parse_log(&fs::read_to_string(out.dir.join("telemetry.jsonl")).unwrap()).unwrap()
}

fn ticks_per_run(cfg: &PipelineConfig) -> u64 {
    let n = (cfg.live.duration_s * cfg.data.session.fs).round() as u64;
    let w = cfg.window;
    (n - w.window_len as u64) / w.step as u64 + 1
}

#[test]
fn gen_is_balanced_loadable_and_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out_a = cmd_gen(&small_config(a.path())).unwrap();
    cmd_gen(&small_config(b.path())).unwrap();
    assert_eq!(out_a.files.len(), 3);
    for (kind, path, hist) in &out_a.files {
        assert!(hist.iter().all(|&h| h == hist[0] && h > 0), "{kind:?} unbalanced: {hist:?}");
        let rec = load_recording(path).unwrap();
        assert_eq!(rec.label_histogram(), *hist);
        let twin = b.path().join(path.file_name().unwrap());
        assert_eq!(fs::read(path).unwrap(), fs::read(twin).unwrap(), "{kind:?} differs between runs");
    }
    let kinds: Vec<RecordingKind> = out_a.files.iter().map(|f| f.0).collect();
    assert_eq!(kinds, [RecordingKind::Train, RecordingKind::Calib, RecordingKind::Test]);
}

#[test]
fn gen_with_zero_trials_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(&dir.path().join("out"));
    cfg.data.test_trials_per_class = 0;
    let err = cmd_gen(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
    assert!(!cfg.paths.out_dir.exists());
}

#[test]
fn missing_inputs_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cases: [(&str, fn(&PipelineConfig) -> Result<(), HarnessError>, PathBuf); 3] = [
        ("train", |c| cmd_train(c).map(drop), cfg.paths.train()),
        ("eval", |c| cmd_eval(c).map(drop), cfg.paths.bundle()),
        ("run-live", |c| cmd_run_live(c).map(drop), cfg.paths.bundle()),
    ];
    for (name, run, path) in cases {
        let err = run(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{name}: {err}");
        assert!(err.to_string().contains(&path.display().to_string()), "{name}: {err}");
    }
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_neuroarm");
    let status = |args: &[&str]| std::process::Command::new(bin).args(args).output().unwrap();
    let ok = status(&["show-config"]);
    assert_eq!(ok.status.code(), Some(0));
    let shown = String::from_utf8(ok.stdout).unwrap();
    assert_eq!(PipelineConfig::from_toml(&shown).unwrap(), PipelineConfig::default());
    assert_eq!(status(&["train", "--config", "/nonexistent/cfg.toml"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(status(&["eval", "--out-dir", out]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[asr]\nwer = 2.0\n").unwrap();
    assert_eq!(status(&["gen", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let f = fixture();
    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port().to_string();
    let bundle = f.cfg.paths.bundle();
    let calib = f.cfg.paths.calib();
    let cfg_path = dir.path().join("serve.toml");
    fs::write(
        &cfg_path,
        format!(
            "[paths]\nout_dir = {out:?}\nbundle = {:?}\ncalib_recording = {:?}\n",
            bundle.display().to_string(),
            calib.display().to_string()
        ),
    )
    .unwrap();
    let r = status(&["serve", "--config", cfg_path.to_str().unwrap(), "--port", &port]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn perfect_predictions_give_a_diagonal_matrix() {
    let truth = [0, 0, 1, 2, 2, 2];
    let m = ConfusionMatrix::from_pairs(&ClassLabel::ALL, &truth, &truth);
    for (i, row) in m.counts.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            assert_eq!(v == 0, i != j || m.row_sums()[i] == 0);
        }
    }
    assert_eq!(m.accuracy(), 1.0);
}

#[test]
fn eval_rows_sum_to_window_counts() {
    let f = fixture();
    let (_dir, cfg) = scratch(f);
    let out = cmd_eval(&cfg).unwrap();
    let rec = load_recording(cfg.paths.test()).unwrap();
    let trial_samples = cfg.train.trial_len_s.map(|s| (s * rec.fs()).round() as usize);
    let trials = find_trials(&rec.labels, trial_samples);
    let all: Vec<usize> = (0..trials.len()).collect();
    let refs = trial_windows(&trials, &all, cfg.window.window_len, cfg.train.eval_step);
    let mut expected = [0u64; 3];
    for r in &refs {
        expected[r.label.index()] += 1;
    }
    assert_eq!(out.confusion.len(), 4);
    for (name, m) in &out.confusion {
        assert_eq!(m.row_sums(), expected, "{name}");
        let csv = fs::read_to_string(out.dir.join(format!("confusion_{name}.csv"))).unwrap();
        assert_eq!(csv, m.to_csv());
    }
    let acc = fs::read_to_string(out.dir.join("accuracy.csv")).unwrap();
    assert_eq!(acc.lines().count(), 5);
    assert!(out.scores.ensemble > 0.6, "{:?}", out.scores);
    assert_eq!(cmd_eval(&cfg).unwrap().confusion, out.confusion);
}

#[test]
fn sweep_table_schema_and_round_trip() {
    assert_eq!(PipelineConfig::default().sweep.sizes, [50, 100, 150, 200, 250]);
    let f = fixture();
    let (_dir, cfg) = scratch(f);
    let out = cmd_sweep(&cfg).unwrap();
    let csv = fs::read_to_string(&out.csv).unwrap();
    assert!(csv.starts_with("window_len,acc_lstm,acc_cnn,acc_rf,acc_ensemble,ms_lstm,ms_cnn,ms_rf,ms_fusion,ms_meta\n"));
    assert_eq!(SweepTable::from_csv(&csv).unwrap(), out.table);
    let sizes: Vec<usize> = out.table.rows.iter().map(|r| r.window_len).collect();
    assert_eq!(sizes, cfg.sweep.sizes);
    assert!(cfg.paths.out_dir.join("sweep.txt").exists());
}

#[test]
fn hitl_experiment_series() {
    let f = fixture();
    let (_dir, mut cfg) = scratch(f);
    let rec = load_recording(cfg.paths.test()).unwrap();
    let expected_len = (rec.n_samples() - cfg.window.window_len) / cfg.window.step + 1;

    cfg.hitl.p_correct = 0.0;
    let none = cmd_hitl_exp(&cfg).unwrap().result;
    assert_eq!(none.ticks.len(), expected_len);
    assert_eq!(none.plain_series(), none.hitl_series());
    assert_eq!(none.n_corrected(), 0);

    cfg.hitl.p_correct = 1.0;
    let all = cmd_hitl_exp(&cfg).unwrap().result;
    assert_eq!(all.plain_series(), none.plain_series());
    for t in &all.ticks {
        assert!(t.acc_hitl >= t.acc_plain, "tick {}", t.tick);
        assert!((0.0..=1.0).contains(&t.acc_plain) && (0.0..=1.0).contains(&t.acc_hitl));
    }
    assert_eq!(all.final_accuracy().1, 1.0);

    cfg.hitl.p_correct = 0.5;
    let half = cmd_hitl_exp(&cfg).unwrap().result;
    assert_eq!(cmd_hitl_exp(&cfg).unwrap().result, half);
    let wrong = none.ticks.iter().filter(|t| t.truth != t.predicted).count();
    assert!(half.n_corrected() <= wrong);
    let csv = fs::read_to_string(cfg.paths.out_dir.join("hitl/hitl.csv")).unwrap();
    assert_eq!(csv.lines().count(), expected_len + 1);
}

fn script_lines() -> Vec<Inbound> {
    vec![
        Inbound::new(Command::Voice { token: "arm".into(), confidence: 0.9 }).at_tick(3).with_id("v1"),
        Inbound::new(Command::Correction { dof: Dof::BaseRotation, theta_desired: 30.0, label_override: None })
            .at_tick(5)
            .with_id("c1"),
        Inbound::new(Command::Voice { token: "stop".into(), confidence: 1.0 }).at_tick(12),
        Inbound::new(Command::Gains { k_a: 3.0, k_h: 0.25 }).at_tick(15),
        Inbound::new(Command::Voice { token: "grip".into(), confidence: 0.95 }).at_tick(18),
        Inbound::new(Command::Voice { token: "mumble".into(), confidence: 0.2 }).at_tick(19),
        Inbound::new(Command::Voice { token: "elbow".into(), confidence: 1.0 }).at_tick(20),
        Inbound::new(Command::Correction {
            dof: Dof::ElbowFlexion,
            theta_desired: 20.0,
            label_override: Some(ClassLabel::Right),
        })
        .at_tick(24)
        .with_id("c2"),
    ]
}

fn write_script(dir: &Path) -> PathBuf {
    let text: String = script_lines().iter().map(|m| serde_json::to_string(m).unwrap() + "\n").collect();
    let path = dir.join("script.jsonl");
    fs::write(&path, format!("# scripted operator\n{text}")).unwrap();
    path
}

#[test]
fn scripted_run_applies_inputs_on_schedule() {
    let f = fixture();
    let (dir, mut cfg) = scratch(f);
    cfg.live.script = Some(write_script(dir.path()));
    let out = cmd_run_live(&cfg).unwrap();
    assert_eq!(out.summary.ticks, ticks_per_run(&cfg));
    let log = read_log(&out);
    let ticks = deterministic_ticks(&log);
    assert_eq!(ticks.len() as u64, out.summary.ticks);

    assert_eq!(ticks[2].arm.mode, ControlMode::Elbow);
    assert_eq!(ticks[3].arm.mode, ControlMode::Arm);
    // stop forces â = 0 on the tick after it is heard, and only that tick
    assert_eq!(ticks[12].a_hat, 0);
    assert!(ticks[12].packet.contains(";A:0;"));
    assert_eq!(ticks[13].a_hat, map_prediction(&ticks[13].prediction.p_final));
    assert!(ticks[18].packet.contains(";A:GRIP;"));
    assert_eq!(ticks[18].arm.theta[Dof::FingerAperture.index()], cfg.control.presets.grip);
    // the label override replaces exactly one prediction
    assert!(ticks[24].overridden && ticks[24].a_hat == 1);
    assert!(!ticks[25].overridden);
    for t in &ticks {
        assert!(t.arm.within_limits());
    }

    let inputs: Vec<(u64, Value)> = log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Input { tick, outcome, .. } => Some((*tick, serde_json::to_value(outcome).unwrap())),
            _ => None,
        })
        .collect();
    let at: Vec<u64> = inputs.iter().map(|i| i.0).collect();
    assert_eq!(at, [3, 5, 12, 15, 18, 19, 20, 24]);
    assert_eq!(inputs[5].1["outcome"], "vad_rejected");
    assert_eq!(inputs[1].1["event"]["kind"], "correction_accepted");

    let commands = fs::read_to_string(out.dir.join("commands.txt")).unwrap();
    let packets: Vec<&str> = ticks.iter().map(|t| t.packet.as_str()).collect();
    assert_eq!(commands.lines().collect::<Vec<_>>(), packets);
}

#[test]
fn telemetry_rerenders_to_identical_csvs() {
    let f = fixture();
    let (dir, mut cfg) = scratch(f);
    cfg.live.script = Some(write_script(dir.path()));
    let out = cmd_run_live(&cfg).unwrap();
    let before: Vec<String> = Rendered::FILES.iter().map(|n| fs::read_to_string(out.dir.join(n)).unwrap()).collect();
    for n in Rendered::FILES {
        fs::remove_file(out.dir.join(n)).unwrap();
    }
    render_session_dir(&out.dir).unwrap();
    let after: Vec<String> = Rendered::FILES.iter().map(|n| fs::read_to_string(out.dir.join(n)).unwrap()).collect();
    assert_eq!(before, after);
    assert_eq!(before[0].lines().count() as u64, out.summary.ticks + 1);
}

#[test]
fn live_runs_are_reproducible() {
    let f = fixture();
    let (dir, mut cfg) = scratch(f);
    cfg.live.script = Some(write_script(dir.path()));
    cfg.asr.wer = 0.3;
    let a = read_log(&cmd_run_live(&cfg).unwrap());
    let b = read_log(&cmd_run_live(&cfg).unwrap());
    assert_eq!(deterministic_ticks(&a), deterministic_ticks(&b));
}

#[test]
fn realtime_run_is_paced_without_loss() {
    let f = fixture();
    let (_dir, mut cfg) = scratch(f);
    cfg.live.realtime = true;
    cfg.live.duration_s = 3.0;
    let t = std::time::Instant::now();
    let out = cmd_run_live(&cfg).unwrap();
    assert!(t.elapsed().as_secs_f64() >= 2.9);
    assert_eq!(out.summary.ticks, ticks_per_run(&cfg));
    assert_eq!(out.summary.dropped_samples, 0);
    let fast = {
        let (_d, mut c) = scratch(f);
        c.live.duration_s = 3.0;
        read_log(&cmd_run_live(&c).unwrap())
    };
    assert_eq!(deterministic_ticks(&read_log(&out)), deterministic_ticks(&fast));
}

/// Runs `serve` on a background thread and returns its address.
fn start_service(cfg: PipelineConfig) -> (SocketAddr, thread::JoinHandle<Result<LiveOutput, HarnessError>>) {
    let (tx, rx) = std::sync::mpsc::channel();
    let h = thread::spawn(move || cmd_serve(&cfg, move |a| tx.send(a).unwrap()));
    (rx.recv().unwrap(), h)
}

/// Connects, sends `msgs` right after the greeting and collects everything
/// until the session ends.
fn client_session(addr: SocketAddr, msgs: Vec<String>) -> Vec<Value> {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async move {
        let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
        let mut got = Vec::new();
        let mut sent = false;
        while let Some(Ok(m)) = ws.next().await {
            let Message::Text(t) = m else { continue };
            let v: Value = serde_json::from_str(&t).unwrap();
            let end = v["type"] == "end";
            got.push(v);
            if !sent {
                for m in &msgs {
                    ws.send(Message::Text(m.clone())).await.unwrap();
                }
                sent = true;
            }
            if end {
                break;
            }
        }
        got
    })
}

fn service_config(f: &Fixture) -> (TempDir, PipelineConfig) {
    let (dir, mut cfg) = scratch(f);
    cfg.live.realtime = true;
    cfg.live.duration_s = 4.0;
    cfg.service.wait_for_client = true;
    (dir, cfg)
}

#[test]
fn service_voice_and_malformed_messages() {
    let f = fixture();
    let (_dir, cfg) = service_config(f);
    let (addr, h) = start_service(cfg.clone());
    let msgs = vec![
        "{not json".to_string(),
        r#"{"v":1,"type":"voice","token":"fingers","tick":4,"id":"a"}"#.to_string(),
        r#"{"v":1,"type":"gains","k_a":1.0,"k_h":1.5,"id":"g"}"#.to_string(),
        r#"{"v":9,"type":"voice","token":"elbow"}"#.to_string(),
        r#"{"v":1,"type":"voice","token":"elbow","tick":10,"id":"b"}"#.to_string(),
    ];
    let got = client_session(addr, msgs);
    let out = h.join().unwrap().unwrap();

    assert_eq!(got[0]["type"], "hello");
    assert_eq!(got[0]["v"], 1);
    let errors: Vec<&Value> = got.iter().filter(|m| m["type"] == "error").collect();
    assert_eq!(errors.len(), 2, "{errors:?}");
    let states: Vec<&Value> = got.iter().filter(|m| m["type"] == "state").collect();
    let mode_at = |tick: u64| states.iter().find(|s| s["tick"] == tick).map(|s| s["arm"]["mode"].clone());
    assert_eq!(mode_at(3), Some("ELBOW".into()));
    assert_eq!(mode_at(4), Some("FINGERS".into()));
    assert_eq!(mode_at(9), Some("FINGERS".into()));
    assert_eq!(mode_at(10), Some("ELBOW".into()));
    let acks: Vec<&Value> = got.iter().filter(|m| m["type"] == "ack").collect();
    let gains = acks.iter().find(|a| a["id"] == "g").unwrap();
    assert_eq!(gains["event"]["kind"], "gains_invalid");
    assert_eq!(got.last().unwrap()["type"], "end");
    assert_eq!(out.summary.ticks, ticks_per_run(&cfg));
}

#[test]
fn service_runs_without_clients() {
    let f = fixture();
    let (_dir, mut cfg) = service_config(f);
    cfg.service.wait_for_client = false;
    cfg.live.duration_s = 3.0;
    let (_addr, h) = start_service(cfg.clone());
    let served = read_log(&h.join().unwrap().unwrap());
    let (_d, mut plain) = scratch(f);
    plain.live.duration_s = 3.0;
    let replay = read_log(&cmd_run_live(&plain).unwrap());
    assert_eq!(deterministic_ticks(&served), deterministic_ticks(&replay));
}

#[test]
fn script_and_service_produce_the_same_trajectory() {
    let f = fixture();
    let (dir, mut scripted) = scratch(f);
    scripted.live.duration_s = 4.0;
    scripted.live.script = Some(write_script(dir.path()));
    let via_script = read_log(&cmd_run_live(&scripted).unwrap());

    let (_sdir, cfg) = service_config(f);
    let (addr, h) = start_service(cfg);
    let msgs = script_lines().iter().map(|m| serde_json::to_string(m).unwrap()).collect();
    let got = client_session(addr, msgs);
    let via_service = read_log(&h.join().unwrap().unwrap());
    assert!(got.iter().all(|m| m["type"] != "error"));
    assert_eq!(trajectory(&via_script), trajectory(&via_service));
    assert_eq!(deterministic_ticks(&via_script), deterministic_ticks(&via_service));
}

#[test]
fn window_shape_must_match_bundle() {
    let f = fixture();
    let (_dir, mut cfg) = scratch(f);
    cfg.window = WindowSpec { window_len: 100, step: 8 };
    assert_eq!(cmd_run_live(&cfg).unwrap_err().exit_code(), 2);
    assert_eq!(cmd_hitl_exp(&cfg).unwrap_err().exit_code(), 2);
}
