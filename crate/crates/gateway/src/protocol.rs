//! Wire messages. Every body is a UTF-8 JSON object tagged by `type`;
//! timestamps are integer milliseconds on the session clock.

use serde::{Deserialize, Serialize};
use sipmatch::arm::{ArmState, TaskProgress};
use sipmatch::controller::{Binding, InterfaceKind, Phase};
use sipmatch::matcher::MatchOutcome;
use sipmatch::mode::ControlMode;
use sipmatch::pipeline::SessionMetrics;
use sipmatch::signal::{Level, PeakEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Sip,
    Puff,
}

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Inbound {
    Press { channel: Channel, t_ms: u64 },
    Release { channel: Channel, t_ms: u64 },
    Sample { t_ms: u64, v: f64 },
}

impl Inbound {
    pub fn t_ms(&self) -> u64 {
        match *self {
            Inbound::Press { t_ms, .. } | Inbound::Release { t_ms, .. } | Inbound::Sample { t_ms, .. } => t_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStatus {
    pub id: String,
    #[serde(flatten)]
    pub progress: TaskProgress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedOutcome {
    pub t_ms: u64,
    #[serde(flatten)]
    pub outcome: MatchOutcome,
}

/// Engine state after one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub seq: u64,
    pub t_ms: u64,
    pub interface: InterfaceKind,
    pub phase: Phase,
    pub active_mode: Option<ControlMode>,
    pub level: Level,
    /// Current sequence codes.
    pub cs: Vec<i64>,
    pub candidates: Vec<String>,
    pub t_match_remaining_ms: Option<u64>,
    pub t_idle_remaining_ms: Option<u64>,
    /// Auto-scroll highlight, BSP scroll phase only.
    pub highlight_index: Option<usize>,
    /// Peaks detected since the previous frame.
    pub events: Vec<PeakEvent>,
    /// Matcher outcomes since the previous frame.
    pub outcomes: Vec<TimedOutcome>,
    pub arm: ArmState,
    pub task: Option<TaskStatus>,
    pub metrics: SessionMetrics,
    /// Present on the engine's first frame only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bindings: Option<Vec<Binding>>,
    /// Wall-clock send time; not part of the engine state.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_ms: Option<u64>,
}

impl StateFrame {
    pub fn without_wall_clock(&self) -> StateFrame {
        StateFrame {
            wall_ms: None,
            ..self.clone()
        }
    }
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    /// First message on every stream.
    Hello {
        session_id: String,
        interface: InterfaceKind,
        tick_ms: u64,
        input_delay_ms: u64,
        bindings: Vec<Binding>,
    },
    State(Box<StateFrame>),
    Ack { t_ms: u64 },
    Error { reason: String },
    Closed { reason: String },
}

/// One line of a session's inbound log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Session {
        session_id: String,
        interface: InterfaceKind,
        task: Option<String>,
        config: String,
    },
    Tick { t_ms: u64 },
    Input { msg: Inbound },
}
