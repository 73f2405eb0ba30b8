//! Human-in-the-loop arm control: prediction mapping, the update law, voice
//! tokens, corrections and the command line protocol.

mod wire;

pub use wire::{decode_command, encode_command, WireError};

use crate::ClassLabel;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ControlMode {
    Elbow,
    Arm,
    Fingers,
}

impl ControlMode {
    pub fn dof(self) -> Dof {
        match self {
            ControlMode::Elbow => Dof::ElbowFlexion,
            ControlMode::Arm => Dof::BaseRotation,
            ControlMode::Fingers => Dof::FingerAperture,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ControlMode::Elbow => "ELBOW",
            ControlMode::Arm => "ARM",
            ControlMode::Fingers => "FINGERS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ELBOW" => Some(ControlMode::Elbow),
            "ARM" => Some(ControlMode::Arm),
            "FINGERS" => Some(ControlMode::Fingers),
            _ => None,
        }
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dof {
    BaseRotation,
    ElbowFlexion,
    FingerAperture,
}

impl Dof {
    pub const ALL: [Dof; 3] = [Dof::BaseRotation, Dof::ElbowFlexion, Dof::FingerAperture];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dof::BaseRotation => "base_rotation",
            Dof::ElbowFlexion => "elbow_flexion",
            Dof::FingerAperture => "finger_aperture",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pose {
    Grip,
    Pinch,
    Open,
}

impl Pose {
    pub fn as_str(self) -> &'static str {
        match self {
            Pose::Grip => "GRIP",
            Pose::Pinch => "PINCH",
            Pose::Open => "OPEN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "GRIP" => Some(Pose::Grip),
            "PINCH" => Some(Pose::Pinch),
            "OPEN" => Some(Pose::Open),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub min: f64,
    pub max: f64,
}

impl JointLimits {
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PosePresets {
    pub grip: f64,
    pub pinch: f64,
    pub open: f64,
}

impl Default for PosePresets {
    fn default() -> Self {
        Self { grip: 10.0, pinch: 35.0, open: 90.0 }
    }
}

impl PosePresets {
    pub fn aperture(&self, pose: Pose) -> f64 {
        match pose {
            Pose::Grip => self.grip,
            Pose::Pinch => self.pinch,
            Pose::Open => self.open,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub mode: ControlMode,
    /// Degrees, indexed by [`Dof::index`].
    pub theta: [f64; 3],
    pub limits: [JointLimits; 3],
    pub pose: Option<Pose>,
}

impl Default for ArmState {
    fn default() -> Self {
        Self {
            mode: ControlMode::Elbow,
            theta: [0.0; 3],
            limits: [
                JointLimits { min: -90.0, max: 90.0 },
                JointLimits { min: 0.0, max: 135.0 },
                JointLimits { min: 0.0, max: 90.0 },
            ],
            pose: None,
        }
    }
}

impl ArmState {
    pub fn angle(&self, dof: Dof) -> f64 {
        self.theta[dof.index()]
    }

    pub fn set_angle(&mut self, dof: Dof, v: f64) {
        self.theta[dof.index()] = self.limits[dof.index()].clamp(v);
    }

    pub fn active_dof(&self) -> Dof {
        self.mode.dof()
    }

    pub fn within_limits(&self) -> bool {
        Dof::ALL.iter().all(|d| self.limits[d.index()].contains(self.angle(*d)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlGains {
    /// Degrees per action step.
    pub k_a: f64,
    pub k_h: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self { k_a: 2.0, k_h: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("invalid gains: k_a = {k_a}, k_h = {k_h} (need k_a >= 0, 0 <= k_h <= 1)")]
    Gains { k_a: f64, k_h: f64 },
    #[error("desired angle {value} outside {dof} limits [{min}, {max}]")]
    OutOfLimits { dof: &'static str, value: f64, min: f64, max: f64 },
}

impl ControlGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        if self.k_a >= 0.0 && (0.0..=1.0).contains(&self.k_h) {
            Ok(())
        } else {
            Err(ControlError::Gains { k_a: self.k_a, k_h: self.k_h })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEvent {
    pub timestamp: f64,
    pub target: Dof,
    pub theta_desired: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_override: Option<ClassLabel>,
}

impl CorrectionEvent {
    pub fn validate(&self, state: &ArmState) -> Result<(), ControlError> {
        let lim = state.limits[self.target.index()];
        if lim.contains(self.theta_desired) {
            Ok(())
        } else {
            Err(ControlError::OutOfLimits {
                dof: self.target.as_str(),
                value: self.theta_desired,
                min: lim.min,
                max: lim.max,
            })
        }
    }
}

pub const VOCABULARY: [&str; 7] = ["elbow", "arm", "fingers", "grip", "pinch", "open", "stop"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceCommand {
    pub token: String,
    pub confidence: f64,
    pub timestamp: f64,
}

impl VoiceCommand {
    pub fn new(token: &str, confidence: f64, timestamp: f64) -> Self {
        Self { token: token.trim().to_lowercase(), confidence, timestamp }
    }
}

/// Action field of a command packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Step(i8),
    Pose(Pose),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandPacket {
    pub mode: ControlMode,
    pub action: Action,
    pub seq: u64,
}

/// LEFT → −1, RIGHT → +1, IDLE → 0. Probabilities are ordered as
/// [`ClassLabel::ALL`]; ties resolve toward 0.
pub fn map_prediction(p: &[f64]) -> i8 {
    let (l, r, i) = (p[0], p[1], p[2]);
    if i >= l && i >= r || l == r {
        0
    } else if l > r {
        -1
    } else {
        1
    }
}

pub fn label_action(label: ClassLabel) -> i8 {
    match label {
        ClassLabel::Left => -1,
        ClassLabel::Right => 1,
        ClassLabel::Idle => 0,
    }
}

/// `θ' = θ + K_a·â + K_h·H` on the active DOF, clamped to its limits.
pub fn hitl_update(state: &ArmState, a_hat: i8, h: f64, gains: &ControlGains) -> ArmState {
    let mut next = *state;
    let dof = state.active_dof();
    let v = state.angle(dof) + gains.k_a * a_hat as f64 + gains.k_h * h;
    next.set_angle(dof, v);
    next
}

/// `θ_desired − θ_actual` for a correction on the active DOF, else 0.
pub fn human_feedback(correction: Option<&CorrectionEvent>, state: &ArmState) -> f64 {
    match correction {
        Some(c) if c.target == state.active_dof() => c.theta_desired - state.angle(c.target),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VoiceOutcome {
    Mode { mode: ControlMode },
    Pose { pose: Pose, aperture: f64 },
    Stop,
    Rejected { token: String },
}

pub fn apply_voice(state: &ArmState, cmd: &VoiceCommand, presets: &PosePresets) -> (ArmState, VoiceOutcome) {
    let mut next = *state;
    let outcome = match cmd.token.as_str() {
        "elbow" => set_mode(&mut next, ControlMode::Elbow),
        "arm" => set_mode(&mut next, ControlMode::Arm),
        "fingers" => set_mode(&mut next, ControlMode::Fingers),
        "grip" => set_pose(&mut next, Pose::Grip, presets),
        "pinch" => set_pose(&mut next, Pose::Pinch, presets),
        "open" => set_pose(&mut next, Pose::Open, presets),
        "stop" => VoiceOutcome::Stop,
        other => {
            tracing::warn!(token = other, "voice token rejected");
            VoiceOutcome::Rejected { token: other.to_string() }
        }
    };
    (next, outcome)
}

fn set_mode(s: &mut ArmState, mode: ControlMode) -> VoiceOutcome {
    s.mode = mode;
    VoiceOutcome::Mode { mode }
}

fn set_pose(s: &mut ArmState, pose: Pose, presets: &PosePresets) -> VoiceOutcome {
    s.set_angle(Dof::FingerAperture, presets.aperture(pose));
    s.pose = Some(pose);
    VoiceOutcome::Pose { pose, aperture: s.angle(Dof::FingerAperture) }
}

/// Passes `token` through a noisy recognizer. With probability `wer` the
/// token is either replaced by a different vocabulary word or lost (even
/// odds). `None` means the utterance was dropped.
pub fn simulate_asr<R: Rng + ?Sized>(
    true_token: &str,
    wer: f64,
    confidence: f64,
    timestamp: f64,
    rng: &mut R,
) -> Option<VoiceCommand> {
    let token = true_token.trim().to_lowercase();
    if rng.gen::<f64>() >= wer {
        return Some(VoiceCommand { token, confidence, timestamp });
    }
    if rng.gen_bool(0.5) {
        return None;
    }
    let others: Vec<&str> = VOCABULARY.iter().copied().filter(|t| *t != token).collect();
    let pick = others[rng.gen_range(0..others.len())];
    Some(VoiceCommand { token: pick.to_string(), confidence, timestamp })
}

/// Keeps events with `confidence >= threshold`; returns them with the number
/// discarded.
pub fn vad_gate(events: Vec<VoiceCommand>, threshold: f64) -> (Vec<VoiceCommand>, usize) {
    let before = events.len();
    let passed: Vec<VoiceCommand> = events.into_iter().filter(|e| e.confidence >= threshold).collect();
    let dropped = before - passed.len();
    (passed, dropped)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTelemetry {
    pub theta_before: [f64; 3],
    pub theta_after: [f64; 3],
    pub a_hat: i8,
    pub h: f64,
    /// Correction error on the active DOF before the update (0 without a
    /// correction).
    pub e_h: f64,
}

/// One control tick for a packet and an optional active correction.
pub fn step_virtual_arm(
    state: &ArmState,
    packet: &CommandPacket,
    gains: &ControlGains,
    presets: &PosePresets,
    correction: Option<&CorrectionEvent>,
) -> (ArmState, StepTelemetry) {
    let mut current = *state;
    current.mode = packet.mode;
    let (next, a_hat, h) = match packet.action {
        Action::Step(a) => {
            let h = human_feedback(correction, &current);
            (hitl_update(&current, a, h, gains), a, h)
        }
        Action::Pose(p) => {
            let mut s = current;
            set_pose(&mut s, p, presets);
            (s, 0, 0.0)
        }
    };
    let tel = StepTelemetry { theta_before: state.theta, theta_after: next.theta, a_hat, h, e_h: h };
    (next, tel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub gains: ControlGains,
    pub presets: PosePresets,
    pub correction_expiry_s: f64,
    pub settle_deg: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self { gains: ControlGains::default(), presets: PosePresets::default(), correction_expiry_s: 2.0, settle_deg: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlEvent {
    Voice { outcome: VoiceOutcome },
    CorrectionAccepted { target: Dof, theta_desired: f64 },
    CorrectionIgnored { target: Dof, active: Dof },
    CorrectionInvalid { message: String },
    CorrectionCleared { reason: String },
    GainsChanged { gains: ControlGains },
    GainsInvalid { message: String },
}

/// Owns the arm and the active correction; one [`Controller::tick`] per
/// prediction.
#[derive(Debug, Clone)]
pub struct Controller {
    pub state: ArmState,
    pub config: ControllerConfig,
    correction: Option<CorrectionEvent>,
    stop_pending: bool,
    pose_pending: Option<Pose>,
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickOutput {
    pub packet: CommandPacket,
    pub telemetry: StepTelemetry,
}

impl Controller {
    pub fn new(state: ArmState, config: ControllerConfig) -> Self {
        Self { state, config, correction: None, stop_pending: false, pose_pending: None, seq: 0 }
    }

    pub fn active_correction(&self) -> Option<&CorrectionEvent> {
        self.correction.as_ref()
    }

    pub fn set_gains(&mut self, gains: ControlGains) -> ControlEvent {
        match gains.validate() {
            Ok(()) => {
                self.config.gains = gains;
                ControlEvent::GainsChanged { gains }
            }
            Err(e) => ControlEvent::GainsInvalid { message: e.to_string() },
        }
    }

    pub fn voice(&mut self, cmd: &VoiceCommand) -> ControlEvent {
        let (next, outcome) = apply_voice(&self.state, cmd, &self.config.presets);
        self.state = next;
        match &outcome {
            VoiceOutcome::Stop => self.stop_pending = true,
            VoiceOutcome::Pose { pose, .. } => self.pose_pending = Some(*pose),
            VoiceOutcome::Mode { .. } => {
                if self.correction.is_some_and(|c| c.target != self.state.active_dof()) {
                    self.correction = None;
                }
            }
            VoiceOutcome::Rejected { .. } => {}
        }
        ControlEvent::Voice { outcome }
    }

    pub fn correct(&mut self, c: CorrectionEvent) -> ControlEvent {
        if let Err(e) = c.validate(&self.state) {
            return ControlEvent::CorrectionInvalid { message: e.to_string() };
        }
        let active = self.state.active_dof();
        if c.target != active {
            tracing::warn!(target = c.target.as_str(), active = active.as_str(), "correction ignored");
            return ControlEvent::CorrectionIgnored { target: c.target, active };
        }
        self.correction = Some(c);
        ControlEvent::CorrectionAccepted { target: c.target, theta_desired: c.theta_desired }
    }

    /// Advances one tick at time `now` (seconds, same clock as correction
    /// timestamps).
    pub fn tick(&mut self, a_hat: i8, now: f64) -> (TickOutput, Option<ControlEvent>) {
        let mut event = None;
        if let Some(c) = self.correction {
            let e = c.theta_desired - self.state.angle(c.target);
            let reason = if now - c.timestamp > self.config.correction_expiry_s {
                Some("expired")
            } else if e.abs() < self.config.settle_deg {
                Some("settled")
            } else {
                None
            };
            if let Some(r) = reason {
                self.correction = None;
                event = Some(ControlEvent::CorrectionCleared { reason: r.into() });
            }
        }
        let action = match self.pose_pending.take() {
            Some(p) => Action::Pose(p),
            None if self.stop_pending => Action::Step(0),
            None => Action::Step(a_hat),
        };
        self.stop_pending = false;
        let packet = CommandPacket { mode: self.state.mode, action, seq: self.seq };
        self.seq += 1;
        let (next, telemetry) = step_virtual_arm(
            &self.state,
            &packet,
            &self.config.gains,
            &self.config.presets,
            self.correction.as_ref(),
        );
        self.state = next;
        (TickOutput { packet, telemetry }, event)
    }
}
