use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Motor-imagery class. The declaration order (LEFT, RIGHT, IDLE) is the
/// index order used by every probability vector in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ClassLabel {
    Left,
    Right,
    Idle,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Left, ClassLabel::Right, ClassLabel::Idle];

    pub fn index(self) -> usize {
        match self {
            ClassLabel::Left => 0,
            ClassLabel::Right => 1,
            ClassLabel::Idle => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Left => "LEFT",
            ClassLabel::Right => "RIGHT",
            ClassLabel::Idle => "IDLE",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown class label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for ClassLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LEFT" => Ok(ClassLabel::Left),
            "RIGHT" => Ok(ClassLabel::Right),
            "IDLE" => Ok(ClassLabel::Idle),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}
