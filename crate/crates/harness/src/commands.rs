//! One function per CLI subcommand. Each reads its inputs from the config,
//! writes its outputs under `paths.out_dir` and returns what it produced.

use crate::config::{PipelineConfig, RecordingKind};
use crate::error::{HarnessError, Result};
use crate::hitl::{hitl_experiment, HitlExperimentResult};
use crate::live::{parse_script, run_session, LiveOptions, Sinks};
use crate::protocol::{Inbound, SessionSummary};
use crate::service::{serve_session, ServiceOptions};
use crate::telemetry::{parse_log, render};
use neuroarm_core::acquisition::{generate_session, load_recording, save_recording, Recording};
use neuroarm_models::bundle::{load_bundle, save_bundle};
use neuroarm_models::metrics::ConfusionMatrix;
use neuroarm_models::sweep::{window_sweep, SweepTable};
use neuroarm_models::train::{evaluate_recording, train_ensemble, ModelScores, TrainReport};
use neuroarm_models::Ensemble;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(v)? + "\n")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

pub fn load_input_recording(path: &Path) -> Result<Recording> {
    if !path.exists() {
        return Err(HarnessError::missing("recording", path));
    }
    Ok(load_recording(path)?)
}

pub fn load_input_bundle(path: &Path) -> Result<Ensemble> {
    if !path.exists() {
        return Err(HarnessError::missing("model bundle", path));
    }
    Ok(load_bundle(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenOutput {
    pub files: Vec<(RecordingKind, PathBuf, [usize; 3])>,
}

/// Writes the train, calib and test recordings. Every spec is validated
/// before anything is written.
pub fn cmd_gen(cfg: &PipelineConfig) -> Result<GenOutput> {
    let specs = cfg.data.specs(cfg.seed);
    for (_, spec) in &specs {
        spec.validate()?;
    }
    let mut files = Vec::new();
    for (kind, spec) in specs {
        let rec = generate_session(&spec)?;
        let path = cfg.paths.recording(kind);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        save_recording(&rec, &path)?;
        tracing::info!(?kind, path = %path.display(), samples = rec.n_samples(), "recording written");
        files.push((kind, path, rec.label_histogram()));
    }
    Ok(GenOutput { files })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainOutput {
    pub bundle: PathBuf,
    pub report_path: PathBuf,
    pub report: TrainReport,
}

pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainOutput> {
    let rec = load_input_recording(&cfg.paths.train())?;
    let (ens, report) = train_ensemble(&rec, &cfg.train_config())?;
    let bundle = cfg.paths.bundle();
    if let Some(dir) = bundle.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    save_bundle(&ens, &bundle)?;
    let report_path = cfg.paths.out_dir.join("train_report.json");
    write_json(&report_path, &report)?;
    Ok(TrainOutput { bundle, report_path, report })
}

pub fn scores_table(title: &str, s: &ModelScores) -> String {
    format!(
        "{title}: lstm {:.3}  cnn {:.3}  rf {:.3}  ensemble {:.3}\n",
        s.lstm, s.cnn, s.rf, s.ensemble
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOutput {
    pub scores: ModelScores,
    pub confusion: Vec<(String, ConfusionMatrix)>,
    pub dir: PathBuf,
}

/// Confusion matrices and accuracy of every model on the test recording.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<EvalOutput> {
    let ens = load_input_bundle(&cfg.paths.bundle())?;
    let rec = load_input_recording(&cfg.paths.test())?;
    let eval = evaluate_recording(&ens, &rec, cfg.train.trial_len_s, cfg.train.eval_step, None)?;
    let scores = eval.scores();
    let dir = cfg.paths.out_dir.join("eval");
    let mut text = String::new();
    let mut csv = String::from("model,accuracy,windows\n");
    let mut confusion = Vec::new();
    for (name, m) in eval.confusion(&ens.config.classes) {
        write_file(&dir.join(format!("confusion_{name}.csv")), m.to_csv())?;
        text.push_str(&m.render(name));
        text.push('\n');
        writeln!(csv, "{name},{},{}", m.accuracy(), m.total()).unwrap();
        confusion.push((name.to_string(), m));
    }
    write_file(&dir.join("confusion.txt"), &text)?;
    write_file(&dir.join("accuracy.csv"), &csv)?;
    Ok(EvalOutput { scores, confusion, dir })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub table: SweepTable,
    pub csv: PathBuf,
}

pub fn cmd_sweep(cfg: &PipelineConfig) -> Result<SweepOutput> {
    let rec = load_input_recording(&cfg.paths.train())?;
    let table = window_sweep(&rec, &cfg.train_config(), &cfg.sweep)?;
    let csv = cfg.paths.out_dir.join("sweep.csv");
    write_file(&csv, table.to_csv())?;
    write_file(&cfg.paths.out_dir.join("sweep.txt"), table.render())?;
    Ok(SweepOutput { table, csv })
}

fn live_options(cfg: &PipelineConfig) -> LiveOptions {
    LiveOptions {
        window: cfg.window,
        chunk_size: cfg.live.chunk_size,
        duration_s: cfg.live.duration_s,
        realtime: cfg.live.realtime,
        underrun_timeout: Duration::from_millis(cfg.live.underrun_timeout_ms),
        asr: cfg.asr,
        seed: cfg.seed,
    }
}

/// Command bytes go to `commands.txt` and, when configured, the serial port.
struct CommandSink {
    file: BufWriter<File>,
    port: Option<File>,
}

impl Write for CommandSink {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.file.write_all(buf)?;
        if let Some(p) = self.port.as_mut() {
            p.write_all(buf)?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        if let Some(p) = self.port.as_mut() {
            p.flush()?;
        }
        Ok(())
    }
}

impl CommandSink {
    fn open(dir: &Path, port: Option<&Path>) -> Result<Self> {
        let port = match port {
            Some(p) => Some(
                fs::OpenOptions::new()
                    .write(true)
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| HarnessError::Config(format!("serial port {}: {e}", p.display())))?,
            ),
            None => None,
        };
        Ok(Self { file: create(&dir.join("commands.txt"))?, port })
    }

    fn finish(mut self) -> Result<()> {
        self.file.flush().map_err(|e| HarnessError::Runtime(format!("commands.txt: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiveOutput {
    pub summary: SessionSummary,
    pub dir: PathBuf,
}

/// Re-derives the CSV views of a session directory from its telemetry log.
pub fn render_session_dir(dir: &Path) -> Result<()> {
    let log_path = dir.join("telemetry.jsonl");
    let text = fs::read_to_string(&log_path).map_err(|e| HarnessError::io(&log_path, e))?;
    for (name, body) in render(&parse_log(&text)?).files() {
        write_file(&dir.join(name), body)?;
    }
    Ok(())
}

fn finish_session(dir: &Path, summary: &SessionSummary) -> Result<()> {
    render_session_dir(dir)?;
    write_json(&dir.join("summary.json"), summary)
}

fn session_inputs(cfg: &PipelineConfig) -> Result<(Ensemble, Recording)> {
    let ens = load_input_bundle(&cfg.paths.bundle())?;
    let rec = load_input_recording(&cfg.paths.recording(cfg.live.source))?;
    Ok((ens, rec))
}

pub fn load_script(path: &Path) -> Result<Vec<Inbound>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => HarnessError::missing("script", path),
        _ => HarnessError::io(path, e),
    })?;
    parse_script(&text)
}

/// Paced replay of the configured source through the whole loop.
pub fn cmd_run_live(cfg: &PipelineConfig) -> Result<LiveOutput> {
    let script = match &cfg.live.script {
        Some(p) => load_script(p)?,
        None => Vec::new(),
    };
    let (ens, rec) = session_inputs(cfg)?;
    let dir = cfg.paths.out_dir.join("live");
    let mut log = create(&dir.join("telemetry.jsonl"))?;
    let mut commands = CommandSink::open(&dir, cfg.live.serial_port.as_deref())?;
    let summary = run_session(
        &ens,
        &rec,
        cfg.control,
        &live_options(cfg),
        script,
        None,
        Sinks { log: &mut log, commands: &mut commands, outbound: None },
    )?;
    log.flush().map_err(|e| HarnessError::Runtime(format!("telemetry: {e}")))?;
    drop(log);
    commands.finish()?;
    finish_session(&dir, &summary)?;
    Ok(LiveOutput { summary, dir })
}

/// Like [`cmd_run_live`], with inputs taken from WebSocket clients.
pub fn cmd_serve(cfg: &PipelineConfig, on_bound: impl FnOnce(SocketAddr)) -> Result<LiveOutput> {
    let (ens, rec) = session_inputs(cfg)?;
    let dir = cfg.paths.out_dir.join("serve");
    let mut log = create(&dir.join("telemetry.jsonl"))?;
    let mut commands = CommandSink::open(&dir, cfg.live.serial_port.as_deref())?;
    let svc = ServiceOptions {
        bind: cfg.service.bind.clone(),
        port: cfg.service.port,
        wait_for_client: cfg.service.wait_for_client,
        outbound_capacity: cfg.service.outbound_capacity,
        inbound_capacity: cfg.service.inbound_capacity,
    };
    let summary =
        serve_session(&ens, &rec, cfg.control, &live_options(cfg), &svc, &mut log, &mut commands, on_bound)?;
    log.flush().map_err(|e| HarnessError::Runtime(format!("telemetry: {e}")))?;
    drop(log);
    commands.finish()?;
    finish_session(&dir, &summary)?;
    Ok(LiveOutput { summary, dir })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HitlOutput {
    pub result: HitlExperimentResult,
    pub dir: PathBuf,
}

pub fn cmd_hitl_exp(cfg: &PipelineConfig) -> Result<HitlOutput> {
    let ens = load_input_bundle(&cfg.paths.bundle())?;
    let rec = load_input_recording(&cfg.paths.test())?;
    let result = hitl_experiment(&ens, &rec, cfg.window, cfg.control, cfg.hitl.p_correct, cfg.seed)?;
    let dir = cfg.paths.out_dir.join("hitl");
    write_file(&dir.join("hitl.csv"), result.to_csv())?;
    let (plain, hitl) = result.final_accuracy();
    write_json(
        &dir.join("summary.json"),
        &serde_json::json!({
            "p_correct": result.p_correct,
            "ticks": result.ticks.len(),
            "corrections": result.n_corrected(),
            "final_accuracy_plain": plain,
            "final_accuracy_hitl": hitl,
        }),
    )?;
    Ok(HitlOutput { result, dir })
}
