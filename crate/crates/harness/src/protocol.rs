//! Messages shared by correction scripts, the WebSocket service and the
//! telemetry log. Every object carries `"v": PROTOCOL_VERSION`.

use neuroarm_core::control::{ArmState, ControlEvent, Dof};
use neuroarm_core::transport::StreamStats;
use neuroarm_core::ClassLabel;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

fn default_confidence() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Voice {
        token: String,
        #[serde(default = "default_confidence")]
        confidence: f64,
    },
    Correction {
        dof: Dof,
        theta_desired: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label_override: Option<ClassLabel>,
    },
    Gains {
        k_a: f64,
        k_h: f64,
    },
}

/// An operator input. `tick` (or `at_s`, seconds of stream time) schedules
/// it; with neither it applies at the next tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inbound {
    pub v: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tick: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_s: Option<f64>,
    #[serde(flatten)]
    pub command: Command,
}

impl Inbound {
    pub fn new(command: Command) -> Self {
        Self { v: PROTOCOL_VERSION, id: None, tick: None, at_s: None, command }
    }

    pub fn at_tick(mut self, tick: u64) -> Self {
        self.tick = Some(tick);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
        match value.get("v").and_then(serde_json::Value::as_u64) {
            Some(v) if v == PROTOCOL_VERSION as u64 => {}
            Some(v) => return Err(format!("unsupported protocol version {v}, expected {PROTOCOL_VERSION}")),
            None => return Err("missing protocol version field \"v\"".into()),
        }
        let msg: Inbound = serde_json::from_value(value).map_err(|e| format!("invalid message: {e}"))?;
        if let Some(t) = msg.at_s {
            if !t.is_finite() {
                return Err("at_s must be finite".into());
            }
        }
        Ok(msg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Script,
    Service,
}

/// What became of an inbound message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Applied { event: ControlEvent },
    /// The simulated recognizer lost the utterance.
    AsrDropped { token: String },
    VadRejected { token: String, confidence: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: ClassLabel,
    pub p_lstm: Vec<f64>,
    pub p_cnn: Vec<f64>,
    pub p_rf: Vec<f64>,
    pub p_final: Vec<f64>,
}

/// Milliseconds per stage for one tick. `e2e` runs from the arrival of the
/// window's newest sample to the command bytes being written.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TickLatency {
    pub pull: f64,
    pub filter: f64,
    pub ica: f64,
    pub features: f64,
    pub lstm: f64,
    pub cnn: f64,
    pub rf: f64,
    pub meta: f64,
    pub control: f64,
    pub emit: f64,
    pub e2e: f64,
}

impl TickLatency {
    pub const STAGES: [&'static str; 10] = ["pull", "filter", "ica", "features", "lstm", "cnn", "rf", "meta", "control", "emit"];

    pub fn stages(&self) -> [f64; 10] {
        [self.pull, self.filter, self.ica, self.features, self.lstm, self.cnn, self.rf, self.meta, self.control, self.emit]
    }
}

/// Per-tick state. Everything except `latency` and `stream` is
/// deterministic for a fixed seed and input schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickState {
    pub tick: u64,
    /// Stream time of the window end, seconds.
    pub t: f64,
    pub truth: ClassLabel,
    pub prediction: Prediction,
    pub a_hat: i8,
    pub overridden: bool,
    pub h: f64,
    pub packet: String,
    pub arm: ArmState,
    /// Raised by the controller during this tick (a correction clearing).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_event: Option<ControlEvent>,
    pub latency: TickLatency,
    pub stream: StreamStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub n: usize,
    pub stages: Vec<StageSummary>,
    pub e2e_p50_ms: f64,
    pub e2e_p95_ms: f64,
    pub e2e_p99_ms: f64,
    pub e2e_max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub ticks: u64,
    pub samples: u64,
    pub wall_s: f64,
    /// Ticks per wall-clock second between the first and last tick.
    pub cadence_hz: f64,
    pub underruns: u64,
    pub dropped_samples: u64,
    pub stream: StreamStats,
    pub latency: LatencyReport,
    pub final_arm: ArmState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub n_channels: usize,
    pub fs: f64,
    pub window_len: usize,
    pub step: usize,
    pub tick_hz: f64,
    pub classes: Vec<ClassLabel>,
    pub arm: ArmState,
}

/// Server-to-client messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    Hello { v: u32, protocol: String, session: SessionInfo },
    State { v: u32, #[serde(flatten)] state: Box<TickState> },
    Ack { v: u32, id: Option<String>, tick: u64, #[serde(flatten)] outcome: Outcome },
    Error { v: u32, message: String },
    End { v: u32, summary: Box<SessionSummary> },
}

impl Outbound {
    pub fn error(message: impl Into<String>) -> Self {
        Outbound::Error { v: PROTOCOL_VERSION, message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("outbound message serializes")
    }
}
