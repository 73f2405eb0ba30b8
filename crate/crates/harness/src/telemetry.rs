//! Append-only JSONL session log and the CSV views derived from it.

use crate::error::{HarnessError, Result};
use crate::protocol::{
    Inbound, LatencyReport, Outcome, SessionInfo, SessionSummary, Source, StageSummary, TickLatency, TickState,
};
use neuroarm_core::control::ArmState;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Start { session: SessionInfo, seed: u64 },
    Input { tick: u64, source: Source, message: Inbound, #[serde(flatten)] outcome: Outcome },
    Tick(Box<TickState>),
    Underrun { after_tick: u64, waited_ms: f64 },
    Summary(Box<SessionSummary>),
}

pub struct TelemetryLog<'a> {
    out: &'a mut dyn Write,
}

impl<'a> TelemetryLog<'a> {
    pub fn new(out: &'a mut dyn Write) -> Self {
        Self { out }
    }

    pub fn append(&mut self, rec: &LogRecord) -> Result<()> {
        let mut line = serde_json::to_string(rec)?;
        line.push('\n');
        self.out
            .write_all(line.as_bytes())
            .map_err(|e| HarnessError::Runtime(format!("telemetry write: {e}")))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| HarnessError::Runtime(format!("telemetry flush: {e}")))
    }
}

pub fn parse_log(text: &str) -> Result<Vec<LogRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Runtime(format!("telemetry line {}: {e}", i + 1)))
        })
        .collect()
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

pub fn latency_report(ticks: &[TickLatency]) -> LatencyReport {
    let stages = TickLatency::STAGES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let v = sorted(ticks.iter().map(|t| t.stages()[i]).collect());
            StageSummary {
                stage: name.to_string(),
                mean_ms: if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 },
                p50_ms: percentile(&v, 50.0),
                p95_ms: percentile(&v, 95.0),
                max_ms: v.last().copied().unwrap_or(0.0),
            }
        })
        .collect();
    let e2e = sorted(ticks.iter().map(|t| t.e2e).collect());
    LatencyReport {
        n: ticks.len(),
        stages,
        e2e_p50_ms: percentile(&e2e, 50.0),
        e2e_p95_ms: percentile(&e2e, 95.0),
        e2e_p99_ms: percentile(&e2e, 99.0),
        e2e_max_ms: e2e.last().copied().unwrap_or(0.0),
    }
}

/// CSV files derived from a session log.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub trajectory_csv: String,
    pub latency_csv: String,
    pub inputs_csv: String,
}

impl Rendered {
    pub const FILES: [&'static str; 3] = ["trajectory.csv", "latency.csv", "inputs.csv"];

    pub fn files(&self) -> [(&'static str, &str); 3] {
        [
            (Self::FILES[0], self.trajectory_csv.as_str()),
            (Self::FILES[1], self.latency_csv.as_str()),
            (Self::FILES[2], self.inputs_csv.as_str()),
        ]
    }
}

pub fn render(records: &[LogRecord]) -> Rendered {
    let mut traj = String::from(
        "tick,t,truth,predicted,a_hat,overridden,h,mode,base_rotation,elbow_flexion,finger_aperture,pose,packet\n",
    );
    let mut lat = String::from("tick");
    for s in TickLatency::STAGES {
        write!(lat, ",{s}_ms").unwrap();
    }
    lat.push_str(",e2e_ms\n");
    let mut inputs = String::from("tick,source,id,message,outcome\n");
    for rec in records {
        match rec {
            LogRecord::Tick(s) => {
                let a = &s.arm;
                writeln!(
                    traj,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    s.tick,
                    s.t,
                    s.truth,
                    s.prediction.label,
                    s.a_hat,
                    s.overridden,
                    s.h,
                    a.mode,
                    a.theta[0],
                    a.theta[1],
                    a.theta[2],
                    a.pose.map_or("", |p| p.as_str()),
                    s.packet.trim_end()
                )
                .unwrap();
                write!(lat, "{}", s.tick).unwrap();
                for v in s.latency.stages() {
                    write!(lat, ",{v}").unwrap();
                }
                writeln!(lat, ",{}", s.latency.e2e).unwrap();
            }
            LogRecord::Input { tick, source, message, outcome } => {
                let msg = serde_json::to_string(&message.command).unwrap().replace('"', "'");
                let out = serde_json::to_string(outcome).unwrap().replace('"', "'");
                writeln!(
                    inputs,
                    "{tick},{},{},\"{msg}\",\"{out}\"",
                    serde_json::to_value(source).unwrap().as_str().unwrap(),
                    message.id.as_deref().unwrap_or("")
                )
                .unwrap();
            }
            _ => {}
        }
    }
    Rendered { trajectory_csv: traj, latency_csv: lat, inputs_csv: inputs }
}

/// Arm state after every tick, in tick order.
pub fn trajectory(records: &[LogRecord]) -> Vec<(u64, ArmState)> {
    records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Tick(s) => Some((s.tick, s.arm)),
            _ => None,
        })
        .collect()
}

/// Tick records with the wall-clock fields zeroed.
pub fn deterministic_ticks(records: &[LogRecord]) -> Vec<TickState> {
    records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Tick(s) => {
                let mut s = (**s).clone();
                s.latency = TickLatency::default();
                s.stream = Default::default();
                Some(s)
            }
            _ => None,
        })
        .collect()
}
