//! Mode selection and command generation.
//!
//! Two selection front-ends share one command phase:
//!
//! * [`AspController`] selects a mode by matching peak sequences.
//! * [`BspController`] auto-scrolls through the modes and enters the
//!   highlighted one on a puff.
//!
//! In the command phase a held puff drives the active axis forward and a
//! held sip drives it backward. Inactivity for `t_idle_ms` returns to
//! selection.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Timers;
use crate::matcher::{MatchError, MatchOutcome, Matcher, SequenceLibrary};
use crate::mode::ControlMode;
use crate::signal::{Code, Direction, Level, PeakEvent};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControllerError {
    #[error("time went backwards: {now} ms < {last} ms")]
    NonMonotonic { now: u64, last: u64 },
    #[error(transparent)]
    Matcher(#[from] MatchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Detection,
    Command,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Detection => "detection",
            Phase::Command => "command",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceKind {
    Asp,
    Bsp,
}

impl InterfaceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InterfaceKind::Asp => "asp",
            InterfaceKind::Bsp => "bsp",
        }
    }
}

impl std::str::FromStr for InterfaceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "asp" => Ok(InterfaceKind::Asp),
            "bsp" => Ok(InterfaceKind::Bsp),
            other => Err(format!("unknown interface `{other}` (expected asp or bsp)")),
        }
    }
}

/// What the device is told to do for the next interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceCommand {
    pub mode: Option<ControlMode>,
    /// +1 forward/open, -1 backward/close, 0 hold still.
    pub direction: i8,
    pub momentary_fire: bool,
}

impl DeviceCommand {
    pub const NEUTRAL: DeviceCommand = DeviceCommand {
        mode: None,
        direction: 0,
        momentary_fire: false,
    };

    pub fn idle(mode: ControlMode) -> Self {
        Self {
            mode: Some(mode),
            direction: 0,
            momentary_fire: false,
        }
    }

    pub fn is_moving(&self) -> bool {
        self.direction != 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CommandPhase {
    mode: ControlMode,
    last_activity_t: u64,
    fired: bool,
}

impl CommandPhase {
    fn enter(mode: ControlMode, now: u64) -> Self {
        Self {
            mode,
            last_activity_t: now,
            fired: false,
        }
    }

    /// Returns the command, or `None` once the idle timeout has expired.
    fn drive(&mut self, level: Level, events: &[PeakEvent], now: u64, t_idle_ms: u64) -> Option<DeviceCommand> {
        let active = level != Level::Neutral || !events.is_empty();
        if active {
            self.last_activity_t = self.last_activity_t.max(now);
        } else if now.saturating_sub(self.last_activity_t) >= t_idle_ms {
            return None;
        }
        if self.mode.is_momentary() {
            let puffed = events.iter().any(|e| e.direction() == Direction::Puff);
            let fire = puffed && !self.fired;
            self.fired |= fire;
            return Some(DeviceCommand {
                mode: Some(self.mode),
                direction: 0,
                momentary_fire: fire,
            });
        }
        let direction = match level {
            Level::PuffActive => 1,
            Level::SipActive => -1,
            Level::Neutral => 0,
        };
        Some(DeviceCommand {
            mode: Some(self.mode),
            direction,
            momentary_fire: false,
        })
    }

    fn idle_remaining(&self, now: u64, t_idle_ms: u64) -> u64 {
        (self.last_activity_t + t_idle_ms).saturating_sub(now)
    }
}

/// Result of one controller step.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StepReport {
    pub command: DeviceCommand,
    /// Matcher outcomes produced this step, with the time they refer to.
    /// Pushes are always reported; ticks only when they resolve something.
    pub outcomes: Vec<(u64, MatchOutcome)>,
    pub entered: Option<ControlMode>,
    pub exited: bool,
}

impl Default for DeviceCommand {
    fn default() -> Self {
        DeviceCommand::NEUTRAL
    }
}

/// Sequence-matching selection.
#[derive(Debug, Clone)]
pub struct AspController {
    timers: Timers,
    matcher: Matcher,
    command: Option<CommandPhase>,
    last_now: Option<u64>,
}

impl AspController {
    pub fn new(library: Arc<SequenceLibrary>, timers: Timers) -> Self {
        Self {
            timers,
            matcher: Matcher::new(library),
            command: None,
            last_now: None,
        }
    }

    pub fn matcher(&self) -> &Matcher {
        &self.matcher
    }

    pub fn phase(&self) -> Phase {
        if self.command.is_some() {
            Phase::Command
        } else {
            Phase::Detection
        }
    }

    pub fn active_mode(&self) -> Option<ControlMode> {
        self.command.as_ref().map(|c| c.mode)
    }

    pub fn idle_remaining(&self, now: u64) -> Option<u64> {
        self.command
            .as_ref()
            .map(|c| c.idle_remaining(now, self.timers.t_idle_ms))
    }

    pub fn step(&mut self, level: Level, events: &[PeakEvent], now: u64) -> Result<StepReport, ControllerError> {
        check_now(&mut self.last_now, now)?;
        let mut report = StepReport::default();

        if let Some(cmd) = self.command.as_mut() {
            match cmd.drive(level, events, now, self.timers.t_idle_ms) {
                Some(command) => report.command = command,
                None => {
                    self.command = None;
                    report.exited = true;
                }
            }
            return Ok(report);
        }

        for event in events {
            let timed = self.matcher.tick(event.offset_t)?;
            if !matches!(timed, MatchOutcome::Idle | MatchOutcome::Pending { .. }) {
                report.outcomes.push((event.offset_t, timed.clone()));
            }
            if let MatchOutcome::Matched { mode, .. } = timed {
                return Ok(self.enter(mode, now, report));
            }
            let pushed = self.matcher.push(event.code, event.offset_t)?;
            report.outcomes.push((event.offset_t, pushed.clone()));
            if let MatchOutcome::Matched { mode, .. } = pushed {
                return Ok(self.enter(mode, now, report));
            }
        }

        let ticked = self.matcher.tick(now)?;
        match ticked {
            MatchOutcome::Matched { mode, .. } => {
                report.outcomes.push((now, ticked));
                Ok(self.enter(mode, now, report))
            }
            MatchOutcome::Reset { .. } => {
                report.outcomes.push((now, ticked));
                Ok(report)
            }
            _ => Ok(report),
        }
    }

    fn enter(&mut self, mode: ControlMode, now: u64, mut report: StepReport) -> StepReport {
        self.matcher.reset();
        self.command = Some(CommandPhase::enter(mode, now));
        report.command = DeviceCommand::idle(mode);
        report.entered = Some(mode);
        report
    }
}

/// Auto-scroll selection.
#[derive(Debug, Clone)]
pub struct BspController {
    timers: Timers,
    scroll_origin: u64,
    command: Option<CommandPhase>,
    last_now: Option<u64>,
}

impl BspController {
    pub fn new(timers: Timers, start_t: u64) -> Self {
        Self {
            timers,
            scroll_origin: start_t,
            command: None,
            last_now: None,
        }
    }

    pub fn phase(&self) -> Phase {
        if self.command.is_some() {
            Phase::Command
        } else {
            Phase::Detection
        }
    }

    pub fn active_mode(&self) -> Option<ControlMode> {
        self.command.as_ref().map(|c| c.mode)
    }

    pub fn scroll_origin(&self) -> u64 {
        self.scroll_origin
    }

    /// Highlighted mode index at time `t` while scrolling.
    pub fn highlight_index(&self, t: u64) -> usize {
        let elapsed = t.saturating_sub(self.scroll_origin);
        ((elapsed / self.timers.scroll_period_ms) % ControlMode::ALL.len() as u64) as usize
    }

    pub fn idle_remaining(&self, now: u64) -> Option<u64> {
        self.command
            .as_ref()
            .map(|c| c.idle_remaining(now, self.timers.t_idle_ms))
    }

    pub fn step(&mut self, level: Level, events: &[PeakEvent], now: u64) -> Result<StepReport, ControllerError> {
        check_now(&mut self.last_now, now)?;
        let mut report = StepReport::default();

        if let Some(cmd) = self.command.as_mut() {
            match cmd.drive(level, events, now, self.timers.t_idle_ms) {
                Some(command) => report.command = command,
                None => {
                    self.command = None;
                    self.scroll_origin = now;
                    report.exited = true;
                }
            }
            return Ok(report);
        }

        // the highlight at the moment the exhale started is the one selected
        if let Some(puff) = events.iter().find(|e| e.direction() == Direction::Puff) {
            let mode = ControlMode::ALL[self.highlight_index(puff.onset_t)];
            self.command = Some(CommandPhase::enter(mode, now));
            report.command = DeviceCommand::idle(mode);
            report.entered = Some(mode);
        }
        Ok(report)
    }
}

fn check_now(last: &mut Option<u64>, now: u64) -> Result<(), ControllerError> {
    if let Some(prev) = *last {
        if now < prev {
            return Err(ControllerError::NonMonotonic { now, last: prev });
        }
    }
    *last = Some(now);
    Ok(())
}

/// Either selection front-end behind one interface.
#[derive(Debug, Clone)]
pub enum Controller {
    Asp(AspController),
    Bsp(BspController),
}

impl Controller {
    pub fn new(kind: InterfaceKind, library: Arc<SequenceLibrary>, timers: Timers, start_t: u64) -> Self {
        match kind {
            InterfaceKind::Asp => Controller::Asp(AspController::new(library, timers)),
            InterfaceKind::Bsp => Controller::Bsp(BspController::new(timers, start_t)),
        }
    }

    pub fn kind(&self) -> InterfaceKind {
        match self {
            Controller::Asp(_) => InterfaceKind::Asp,
            Controller::Bsp(_) => InterfaceKind::Bsp,
        }
    }

    pub fn step(&mut self, level: Level, events: &[PeakEvent], now: u64) -> Result<StepReport, ControllerError> {
        match self {
            Controller::Asp(c) => c.step(level, events, now),
            Controller::Bsp(c) => c.step(level, events, now),
        }
    }

    pub fn phase(&self) -> Phase {
        match self {
            Controller::Asp(c) => c.phase(),
            Controller::Bsp(c) => c.phase(),
        }
    }

    pub fn active_mode(&self) -> Option<ControlMode> {
        match self {
            Controller::Asp(c) => c.active_mode(),
            Controller::Bsp(c) => c.active_mode(),
        }
    }

    pub fn idle_remaining(&self, now: u64) -> Option<u64> {
        match self {
            Controller::Asp(c) => c.idle_remaining(now),
            Controller::Bsp(c) => c.idle_remaining(now),
        }
    }

    pub fn matcher(&self) -> Option<&Matcher> {
        match self {
            Controller::Asp(c) => Some(c.matcher()),
            Controller::Bsp(_) => None,
        }
    }

    /// Highlighted index, BSP in its scroll phase only.
    pub fn highlight_index(&self, now: u64) -> Option<usize> {
        match self {
            Controller::Bsp(c) if c.phase() == Phase::Detection => Some(c.highlight_index(now)),
            _ => None,
        }
    }
}

/// `t,phase,active_mode,direction,momentary` step trace line.
pub fn step_trace_line(t: u64, phase: Phase, command: &DeviceCommand) -> String {
    format!(
        "{},{},{},{},{}",
        t,
        phase.as_str(),
        command.mode.filter(|_| phase == Phase::Command).map_or("-", ControlMode::as_str),
        command.direction,
        u8::from(command.momentary_fire)
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub id: String,
    pub codes: Vec<Code>,
    pub mode: ControlMode,
}

/// Library contents as display rows, in library order.
pub fn binding_table(library: &SequenceLibrary) -> Vec<Binding> {
    library
        .sequences()
        .iter()
        .map(|s| Binding {
            id: s.id.clone(),
            codes: s.codes.clone(),
            mode: s.mode,
        })
        .collect()
}
