//! The closed loop: paced replay into the transport, front end, sliding
//! windows, ensemble, control law and command emission.

use crate::config::AsrConfig;
use crate::error::{HarnessError, Result};
use crate::protocol::{
    Command, Inbound, Outbound, Outcome, Prediction, SessionInfo, SessionSummary, Source, TickLatency, TickState,
    PROTOCOL_VERSION,
};
use crate::telemetry::{latency_report, LogRecord, TelemetryLog};
use nalgebra::DMatrix;
use neuroarm_core::acquisition::Recording;
use neuroarm_core::control::{
    encode_command, label_action, map_prediction, simulate_asr, vad_gate, ArmState, ControlEvent, ControlGains,
    Controller, ControllerConfig, CorrectionEvent, VoiceCommand,
};
use neuroarm_core::csp::{WindowSpec, Windower};
use neuroarm_core::transport::{stream_pair, OutletOptions, StreamHeader, TransportError};
use neuroarm_core::ClassLabel;
use neuroarm_models::Ensemble;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::io::Write;
use std::sync::mpsc::{Receiver, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub struct LiveOptions {
    pub window: WindowSpec,
    pub chunk_size: usize,
    pub duration_s: f64,
    pub realtime: bool,
    pub underrun_timeout: Duration,
    pub asr: AsrConfig,
    pub seed: u64,
}

/// Where a session writes. `commands` receives the encoded command lines;
/// `outbound` sees every state, ack and the final summary.
pub struct Sinks<'a> {
    pub log: &'a mut dyn Write,
    pub commands: &'a mut dyn Write,
    pub outbound: Option<&'a mut dyn FnMut(Outbound)>,
}

pub fn session_info(ens: &Ensemble, window: WindowSpec) -> SessionInfo {
    let fs = ens.config.front_end.fs;
    SessionInfo {
        n_channels: ens.config.n_channels,
        fs,
        window_len: window.window_len,
        step: window.step,
        tick_hz: window.emission_rate(fs),
        classes: ens.config.classes.clone(),
        arm: ArmState::default(),
    }
}

/// The first `duration_s` seconds of `rec`, wrapping around if it is
/// shorter.
pub fn replay_source(rec: &Recording, duration_s: f64) -> (DMatrix<f32>, Vec<ClassLabel>) {
    let n = (duration_s * rec.fs()).round() as usize;
    let total = rec.n_samples();
    let mut samples = DMatrix::zeros(rec.n_channels(), n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        samples.set_column(i, &rec.samples.column(i % total));
        labels.push(rec.labels[i % total]);
    }
    (samples, labels)
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn ns_ms(ns: u64) -> f64 {
    ns as f64 / 1e6
}

/// Control-side state owned by the pipeline context.
struct Operator {
    ctrl: Controller,
    asr: AsrConfig,
    rng: ChaCha8Rng,
    pending_override: Option<ClassLabel>,
}

impl Operator {
    fn apply(&mut self, msg: &Inbound, now: f64) -> Outcome {
        match &msg.command {
            Command::Voice { token, confidence } => {
                let Some(heard) = simulate_asr(token, self.asr.wer, *confidence, now, &mut self.rng) else {
                    return Outcome::AsrDropped { token: token.clone() };
                };
                let (passed, _) = vad_gate(vec![heard], self.asr.vad_threshold);
                match passed.into_iter().next() {
                    Some(cmd) => Outcome::Applied { event: self.ctrl.voice(&VoiceCommand { timestamp: now, ..cmd }) },
                    None => Outcome::VadRejected { token: token.clone(), confidence: *confidence },
                }
            }
            Command::Correction { dof, theta_desired, label_override } => {
                let event = self.ctrl.correct(CorrectionEvent {
                    timestamp: now,
                    target: *dof,
                    theta_desired: *theta_desired,
                    label_override: *label_override,
                });
                if matches!(event, ControlEvent::CorrectionAccepted { .. }) {
                    if let Some(l) = label_override {
                        self.pending_override = Some(*l);
                    }
                }
                Outcome::Applied { event }
            }
            Command::Gains { k_a, k_h } => Outcome::Applied { event: self.ctrl.set_gains(ControlGains { k_a: *k_a, k_h: *k_h }) },
        }
    }
}

fn due(msg: &Inbound, tick: u64, t: f64) -> bool {
    msg.tick.map_or(true, |k| k <= tick) && msg.at_s.map_or(true, |a| a <= t)
}

/// Runs one session until the replay ends. Scripted inputs and anything
/// arriving on `inbound` are applied at the start of the tick they are
/// scheduled for, in arrival order.
pub fn run_session(
    ens: &Ensemble,
    rec: &Recording,
    control: ControllerConfig,
    opts: &LiveOptions,
    script: Vec<Inbound>,
    inbound: Option<Receiver<Inbound>>,
    sinks: Sinks<'_>,
) -> Result<SessionSummary> {
    ens.validate()?;
    let ch = ens.config.n_channels;
    if rec.n_channels() != ch {
        return Err(HarnessError::Runtime(format!("recording has {} channels, bundle expects {ch}", rec.n_channels())));
    }
    if opts.window.window_len != ens.config.window_len {
        return Err(HarnessError::Config(format!(
            "window.window_len is {}, bundle was trained with {}",
            opts.window.window_len, ens.config.window_len
        )));
    }
    let fs = rec.fs();
    if (ens.config.front_end.fs - fs).abs() > 1e-9 {
        return Err(HarnessError::Runtime(format!("recording is {fs} Hz, bundle expects {}", ens.config.front_end.fs)));
    }
    let Sinks { log, commands, mut outbound } = sinks;
    let mut log = TelemetryLog::new(log);
    let info = session_info(ens, opts.window);
    log.append(&LogRecord::Start { session: info, seed: opts.seed })?;

    let (samples, labels) = replay_source(rec, opts.duration_s);
    let n = samples.ncols();
    let chunk = opts.chunk_size.max(1);
    let capacity = OutletOptions::default().capacity_samples.max(n + chunk);
    let (mut outlet, mut inlet) =
        stream_pair(StreamHeader::new("neuroarm-live", ch, fs), OutletOptions { capacity_samples: capacity, ..Default::default() })?;
    let realtime = opts.realtime;
    let producer = thread::Builder::new()
        .name("replay".into())
        .spawn(move || -> Result<(), TransportError> {
            let start = Instant::now();
            let mut c0 = 0;
            while c0 < n {
                let len = chunk.min(n - c0);
                if realtime {
                    let due = start + Duration::from_secs_f64((c0 + len) as f64 / fs);
                    let now = Instant::now();
                    if due > now {
                        thread::sleep(due - now);
                    }
                }
                outlet.push_samples(samples.columns(c0, len).into_owned())?;
                c0 += len;
            }
            Ok(())
        })
        .map_err(|e| HarnessError::Runtime(format!("spawn replay thread: {e}")))?;

    let mut op = Operator {
        ctrl: Controller::new(ArmState::default(), control),
        asr: opts.asr,
        rng: ChaCha8Rng::seed_from_u64(opts.seed ^ 0xa5a5_0001),
        pending_override: None,
    };
    let mut queue: VecDeque<(Source, Inbound)> = script.into_iter().map(|m| (Source::Script, m)).collect();
    let mut inbound = inbound;
    let mut front = ens.config.front_end.stream(ch)?;
    let mut windower = Windower::<f64>::new(ch, opts.window)?;
    let w = opts.window.window_len as u64;
    let step = opts.window.step as u64;
    let mut tick: u64 = 0;
    let mut underruns = 0;
    let mut latencies = Vec::new();
    let mut first_tick: Option<Instant> = None;
    let mut last_tick = Instant::now();
    let started = Instant::now();

    loop {
        let seen = windower.samples_seen();
        let need = if seen < w { w - seen } else { step - (seen - w) % step } as usize;
        let wait = opts.underrun_timeout + Duration::from_secs_f64(need as f64 / fs);
        let t_wait = Instant::now();
        let win = match inlet.pull_window(need, wait) {
            Ok(win) => win,
            Err(TransportError::Timeout { .. }) => {
                underruns += 1;
                tracing::warn!(after_tick = tick, "stream underrun, skipping tick");
                log.append(&LogRecord::Underrun { after_tick: tick, waited_ms: ms(t_wait.elapsed()) })?;
                continue;
            }
            Err(TransportError::Closed) => break,
            Err(e) => return Err(e.into()),
        };
        let t_pulled = Instant::now();
        let filtered = front.process(&win.samples)?;
        let Some(sw) = windower.push(&filtered, Some(win.last_arrival))?.pop() else {
            continue;
        };
        let t_filtered = Instant::now();
        let t_stream = sw.end as f64 / fs;

        if let Some(rx) = &inbound {
            loop {
                match rx.try_recv() {
                    Ok(m) => queue.push_back((Source::Service, m)),
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => {
                        inbound = None;
                        break;
                    }
                }
            }
        }
        let mut i = 0;
        while i < queue.len() {
            if due(&queue[i].1, tick, t_stream) {
                let (source, msg) = queue.remove(i).unwrap();
                let outcome = op.apply(&msg, t_stream);
                if let Some(f) = outbound.as_mut() {
                    f(Outbound::Ack { v: PROTOCOL_VERSION, id: msg.id.clone(), tick, outcome: outcome.clone() });
                }
                log.append(&LogRecord::Input { tick, source, message: msg, outcome })?;
            } else {
                i += 1;
            }
        }

        let pred = ens.predict(&sw.samples)?;
        let t_pred = Instant::now();
        let (a_hat, overridden) = match op.pending_override.take() {
            Some(l) => (label_action(l), true),
            None => (map_prediction(&pred.p_final), false),
        };
        let (out, control_event) = op.ctrl.tick(a_hat, t_stream);
        let line = encode_command(&out.packet);
        let t_ctrl = Instant::now();
        commands
            .write_all(&line)
            .and_then(|_| commands.flush())
            .map_err(|e| HarnessError::Runtime(format!("command sink: {e}")))?;
        let t_emit = Instant::now();

        let arrival = sw.last_arrival.unwrap_or(t_pulled);
        let tm = pred.timings;
        let latency = TickLatency {
            pull: ms(t_pulled.saturating_duration_since(arrival)),
            filter: ms(t_filtered - t_pulled),
            ica: ns_ms(tm.ica_ns),
            features: ns_ms(tm.features_ns),
            lstm: ns_ms(tm.lstm_ns),
            cnn: ns_ms(tm.cnn_ns),
            rf: ns_ms(tm.rf_ns),
            meta: ns_ms(tm.meta_ns),
            control: ms(t_ctrl - t_pred),
            emit: ms(t_emit - t_ctrl),
            e2e: ms(t_emit.saturating_duration_since(arrival)),
        };
        latencies.push(latency);
        first_tick.get_or_insert(t_emit);
        last_tick = t_emit;
        let state = TickState {
            tick,
            t: t_stream,
            truth: labels[(sw.end - 1) as usize],
            prediction: Prediction {
                label: pred.label,
                p_lstm: pred.p_lstm,
                p_cnn: pred.p_cnn,
                p_rf: pred.p_rf,
                p_final: pred.p_final,
            },
            a_hat: out.telemetry.a_hat,
            overridden,
            h: out.telemetry.h,
            packet: String::from_utf8_lossy(&line).trim_end().to_string(),
            arm: op.ctrl.state,
            control_event,
            latency,
            stream: inlet.stats(),
        };
        log.append(&LogRecord::Tick(Box::new(state.clone())))?;
        if let Some(f) = outbound.as_mut() {
            f(Outbound::State { v: PROTOCOL_VERSION, state: Box::new(state) });
        }
        tick += 1;
    }

    producer
        .join()
        .map_err(|_| HarnessError::Runtime("replay thread panicked".into()))??;
    for (source, msg) in &queue {
        tracing::warn!(?source, ?msg, "input scheduled after the session ended was not applied");
    }
    let stream = inlet.stats();
    let cadence_hz = match first_tick {
        Some(f) if tick > 1 && last_tick > f => (tick - 1) as f64 / (last_tick - f).as_secs_f64(),
        _ => 0.0,
    };
    let summary = SessionSummary {
        ticks: tick,
        samples: windower.samples_seen(),
        wall_s: started.elapsed().as_secs_f64(),
        cadence_hz,
        underruns,
        dropped_samples: stream.dropped,
        stream,
        latency: latency_report(&latencies),
        final_arm: op.ctrl.state,
    };
    log.append(&LogRecord::Summary(Box::new(summary.clone())))?;
    log.flush()?;
    if let Some(f) = outbound.as_mut() {
        f(Outbound::End { v: PROTOCOL_VERSION, summary: Box::new(summary.clone()) });
    }
    Ok(summary)
}

/// Reads a script: one inbound message per line; blank lines and lines
/// starting with `#` are skipped.
pub fn parse_script(text: &str) -> Result<Vec<Inbound>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| Inbound::parse(l).map_err(|e| HarnessError::Config(format!("script line {}: {e}", i + 1))))
        .collect()
}
