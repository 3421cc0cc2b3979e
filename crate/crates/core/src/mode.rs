use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The nine device modes the input can be switched between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    TranslateFb,
    TranslateLr,
    TranslateUd,
    RotateX,
    RotateY,
    RotateZ,
    Fingers,
    SavePoint,
    GotoPoint,
}

impl ControlMode {
    /// Display and auto-scroll order.
    pub const ALL: [ControlMode; 9] = [
        ControlMode::TranslateFb,
        ControlMode::TranslateLr,
        ControlMode::TranslateUd,
        ControlMode::RotateX,
        ControlMode::RotateY,
        ControlMode::RotateZ,
        ControlMode::Fingers,
        ControlMode::SavePoint,
        ControlMode::GotoPoint,
    ];

    /// Save and goto fire once instead of driving an axis.
    pub fn is_momentary(self) -> bool {
        matches!(self, ControlMode::SavePoint | ControlMode::GotoPoint)
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&m| m == self).unwrap()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ControlMode::TranslateFb => "translate_fb",
            ControlMode::TranslateLr => "translate_lr",
            ControlMode::TranslateUd => "translate_ud",
            ControlMode::RotateX => "rotate_x",
            ControlMode::RotateY => "rotate_y",
            ControlMode::RotateZ => "rotate_z",
            ControlMode::Fingers => "fingers",
            ControlMode::SavePoint => "save_point",
            ControlMode::GotoPoint => "goto_point",
        }
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown control mode `{0}`")]
pub struct UnknownMode(pub String);

impl FromStr for ControlMode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| UnknownMode(s.to_string()))
    }
}
