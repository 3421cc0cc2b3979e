//! Sample-driven session: detector, controller, arm and task tracker wired
//! together, with timing metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{Arm, TaskProgress, TaskSpec, TaskTracker};
use crate::config::EngineConfig;
use crate::controller::{Controller, ControllerError, DeviceCommand, InterfaceKind, Phase, StepReport};
use crate::matcher::MatchOutcome;
use crate::signal::{Level, PeakDetector, PeakEvent, Sample, SignalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

/// Timing summary of one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub completion_ms: u64,
    /// Time the arm was commanded to move or was executing a goto.
    pub moving_ms: u64,
    pub wasted_ms: u64,
    pub mode_selection_count: u32,
    pub reset_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineStep {
    pub t: u64,
    pub level: Level,
    pub event: Option<PeakEvent>,
    pub report: StepReport,
    pub phase: Phase,
    pub progress: Option<TaskProgress>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    detector: PeakDetector,
    controller: Controller,
    arm: Arm,
    tracker: Option<TaskTracker>,
    start_t: u64,
    last_t: Option<u64>,
    last_command: DeviceCommand,
    moving_ms: u64,
    selections: u32,
    resets: u32,
    completed_at: Option<u64>,
}

impl Pipeline {
    pub fn new(config: &EngineConfig, kind: InterfaceKind, task: Option<TaskSpec>, start_t: u64) -> Self {
        Self {
            detector: PeakDetector::new(config.detector.clone()).expect("validated with the config"),
            controller: Controller::new(kind, config.library.clone(), config.timers, start_t),
            arm: Arm::new(config.arm.clone()),
            tracker: task.map(TaskTracker::new),
            start_t,
            last_t: None,
            last_command: DeviceCommand::NEUTRAL,
            moving_ms: 0,
            selections: 0,
            resets: 0,
            completed_at: None,
        }
    }

    pub fn detector(&self) -> &PeakDetector {
        &self.detector
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn arm(&self) -> &Arm {
        &self.arm
    }

    pub fn tracker(&self) -> Option<&TaskTracker> {
        self.tracker.as_ref()
    }

    pub fn last_t(&self) -> Option<u64> {
        self.last_t
    }

    pub fn last_command(&self) -> &DeviceCommand {
        &self.last_command
    }

    pub fn is_done(&self) -> bool {
        self.completed_at.is_some()
    }

    /// Advances by one sample. The previous command is held over the
    /// interval since the last sample, then the new sample is processed.
    pub fn step(&mut self, sample: Sample) -> Result<PipelineStep, PipelineError> {
        let event = self.detector.feed(sample)?;
        let t = sample.t;
        if let Some(last) = self.last_t {
            let moved = self
                .arm
                .apply(&self.last_command, t - last)
                .expect("detector guarantees t > last");
            if moved && self.completed_at.is_none() {
                self.moving_ms += t - last;
            }
        }
        self.last_t = Some(t);
        let level = self.detector.level();
        let events: Vec<PeakEvent> = event.into_iter().collect();
        let report = self.controller.step(level, &events, t)?;
        Ok(self.finish_step(t, level, event, report))
    }

    /// Closes any open peak at the last sample time and lets the controller
    /// see it.
    pub fn finish(&mut self) -> Result<Option<PipelineStep>, PipelineError> {
        let Some(t) = self.last_t else {
            return Ok(None);
        };
        let Some(event) = self.detector.flush(t) else {
            return Ok(None);
        };
        let report = self.controller.step(Level::Neutral, &[event], t)?;
        Ok(Some(self.finish_step(t, Level::Neutral, Some(event), report)))
    }

    fn finish_step(&mut self, t: u64, level: Level, event: Option<PeakEvent>, report: StepReport) -> PipelineStep {
        if self.completed_at.is_none() {
            self.selections += u32::from(report.entered.is_some());
            self.resets += report
                .outcomes
                .iter()
                .filter(|(_, o)| matches!(o, MatchOutcome::Reset { .. }))
                .count() as u32;
        }
        self.last_command = report.command;
        let progress = self.tracker.as_mut().map(|tr| tr.observe(self.arm.state()));
        if progress.is_some_and(|p| p.done) && self.completed_at.is_none() {
            self.completed_at = Some(t);
        }
        PipelineStep {
            t,
            level,
            event,
            report,
            phase: self.controller.phase(),
            progress,
        }
    }

    pub fn metrics(&self) -> SessionMetrics {
        let end = self.completed_at.or(self.last_t).unwrap_or(self.start_t);
        let completion_ms = end.saturating_sub(self.start_t);
        SessionMetrics {
            completion_ms,
            moving_ms: self.moving_ms,
            wasted_ms: completion_ms - self.moving_ms,
            mode_selection_count: self.selections,
            reset_count: self.resets,
        }
    }
}
