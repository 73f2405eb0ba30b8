use super::{Action, CommandPacket, ControlMode, Pose};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("malformed command line: {0}")]
    Malformed(String),
    #[error("unknown mode {0:?}")]
    Mode(String),
    #[error("action {0:?} out of range")]
    Action(String),
    #[error("bad sequence number {0:?}")]
    Seq(String),
}

/// `M:<mode>;A:<action>;S:<seq>\n`
pub fn encode_command(p: &CommandPacket) -> Vec<u8> {
    let action = match p.action {
        Action::Step(1) => "+1".to_string(),
        Action::Step(a) => a.to_string(),
        Action::Pose(pose) => pose.as_str().to_string(),
    };
    format!("M:{};A:{};S:{}\n", p.mode, action, p.seq).into_bytes()
}

pub fn decode_command(bytes: &[u8]) -> Result<CommandPacket, WireError> {
    let text = std::str::from_utf8(bytes).map_err(|_| WireError::Malformed("not UTF-8".into()))?;
    let line = text
        .strip_suffix('\n')
        .ok_or_else(|| WireError::Malformed("missing line terminator".into()))?;
    let mut fields = line.split(';');
    let mut field = |key: &str| -> Result<&str, WireError> {
        fields
            .next()
            .and_then(|f| f.strip_prefix(key))
            .ok_or_else(|| WireError::Malformed(format!("expected field {key}")))
    };
    let mode = field("M:")?;
    let action = field("A:")?;
    let seq = field("S:")?;
    if fields.next().is_some() {
        return Err(WireError::Malformed("trailing fields".into()));
    }
    let mode = ControlMode::parse(mode).ok_or_else(|| WireError::Mode(mode.into()))?;
    let action = match action {
        "+1" => Action::Step(1),
        "0" => Action::Step(0),
        "-1" => Action::Step(-1),
        other => Action::Pose(Pose::parse(other).ok_or_else(|| WireError::Action(other.into()))?),
    };
    if seq.is_empty() || !seq.bytes().all(|b| b.is_ascii_digit()) {
        return Err(WireError::Seq(seq.into()));
    }
    let seq = seq.parse().map_err(|_| WireError::Seq(seq.into()))?;
    Ok(CommandPacket { mode, action, seq })
}
