//! Deterministic per-session engine.
//!
//! Inputs are queued as voltage edges on the session clock and only turned
//! into samples when [`SessionEngine::advance_to`] reaches them, so a log of
//! ticks and inputs replays to the same frames.

use std::collections::VecDeque;
use std::sync::Arc;

use sipmatch::arm::TaskSpec;
use sipmatch::config::EngineConfig;
use sipmatch::controller::{binding_table, InterfaceKind};
use sipmatch::matcher::MatchOutcome;
use sipmatch::pipeline::Pipeline;
use sipmatch::signal::{PeakEvent, Sample, V_MAX};
use thiserror::Error;

use crate::protocol::{Channel, Inbound, LogLine, StateFrame, TaskStatus, TimedOutcome};

pub const SAMPLE_PERIOD_MS: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InputError {
    #[error("stale t_ms {t_ms}: session clock already at {horizon}")]
    Stale { t_ms: u64, horizon: u64 },
    #[error("t_ms {t_ms} is before the previous input at {last}")]
    OutOfOrder { t_ms: u64, last: u64 },
    #[error("release of {0:?} without a matching press")]
    ReleaseWithoutPress(Channel),
    #[error("press while {0:?} is already held")]
    AlreadyHeld(Channel),
    #[error("voltage is not a number")]
    NotANumber,
}

#[derive(Debug, Error)]
pub enum ReplayLogError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("log does not start with a session header")]
    MissingHeader,
    #[error(transparent)]
    Config(#[from] sipmatch::config::ConfigError),
    #[error(transparent)]
    Task(#[from] sipmatch::arm::ArmError),
}

pub struct SessionEngine {
    config: Arc<EngineConfig>,
    kind: InterfaceKind,
    task_id: Option<String>,
    pipeline: Pipeline,
    volts: f64,
    edges: VecDeque<(u64, f64)>,
    next_grid: u64,
    last_fed: Option<u64>,
    last_input: Option<u64>,
    held: Option<Channel>,
    horizon: Option<u64>,
    seq: u64,
    events: Vec<PeakEvent>,
    outcomes: Vec<TimedOutcome>,
}

impl SessionEngine {
    pub fn new(config: Arc<EngineConfig>, kind: InterfaceKind, task: Option<TaskSpec>) -> Self {
        let pipeline = Pipeline::new(&config, kind, task.clone(), 0);
        Self {
            volts: config.detector.neutral_v,
            kind,
            task_id: task.map(|t| t.id),
            pipeline,
            config,
            edges: VecDeque::new(),
            next_grid: 0,
            last_fed: None,
            last_input: None,
            held: None,
            horizon: None,
            seq: 0,
            events: Vec::new(),
            outcomes: Vec::new(),
        }
    }

    pub fn kind(&self) -> InterfaceKind {
        self.kind
    }

    pub fn config(&self) -> &Arc<EngineConfig> {
        &self.config
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    /// Queues one input. Rejected inputs leave the engine untouched.
    pub fn handle(&mut self, msg: &Inbound) -> Result<(), InputError> {
        let t_ms = msg.t_ms();
        if let Some(horizon) = self.last_fed {
            if t_ms <= horizon {
                return Err(InputError::Stale { t_ms, horizon });
            }
        }
        if let Some(last) = self.last_input {
            if t_ms < last {
                return Err(InputError::OutOfOrder { t_ms, last });
            }
        }
        let volts = match *msg {
            Inbound::Press { channel, .. } => {
                if let Some(held) = self.held {
                    return Err(InputError::AlreadyHeld(held));
                }
                self.held = Some(channel);
                match channel {
                    Channel::Sip => 0.0,
                    Channel::Puff => V_MAX,
                }
            }
            Inbound::Release { channel, .. } => {
                if self.held != Some(channel) {
                    return Err(InputError::ReleaseWithoutPress(channel));
                }
                self.held = None;
                self.config.detector.neutral_v
            }
            Inbound::Sample { v, .. } => {
                if v.is_nan() {
                    return Err(InputError::NotANumber);
                }
                v
            }
        };
        self.last_input = Some(t_ms);
        self.edges.push_back((t_ms, volts));
        Ok(())
    }

    /// Feeds every sample up to `t_ms` and returns the resulting frame.
    ///
    /// Panics if `t_ms` does not increase between calls.
    pub fn advance_to(&mut self, t_ms: u64) -> StateFrame {
        if let Some(h) = self.horizon {
            assert!(t_ms > h, "tick times must increase ({t_ms} after {h})");
        }
        loop {
            let edge = self.edges.front().map(|&(t, _)| t);
            let t = edge.map_or(self.next_grid, |e| e.min(self.next_grid));
            if t > t_ms {
                break;
            }
            while let Some(&(_, v)) = self.edges.front().filter(|(e, _)| *e == t) {
                self.volts = v;
                self.edges.pop_front();
            }
            if t == self.next_grid {
                self.next_grid += SAMPLE_PERIOD_MS;
            }
            let step = self
                .pipeline
                .step(Sample::new(t, self.volts))
                .expect("inputs are validated against the fed horizon");
            self.last_fed = Some(t);
            self.events.extend(step.event);
            self.outcomes.extend(
                step.report
                    .outcomes
                    .into_iter()
                    .map(|(t_ms, outcome)| TimedOutcome { t_ms, outcome }),
            );
        }
        self.horizon = Some(t_ms);
        self.frame(t_ms)
    }

    fn frame(&mut self, t_ms: u64) -> StateFrame {
        let controller = self.pipeline.controller();
        let matcher = controller.matcher();
        let candidates = match matcher.map(|m| m.outcome()) {
            Some(MatchOutcome::Pending { candidates }) => candidates,
            _ => Vec::new(),
        };
        let seq = self.seq;
        self.seq += 1;
        StateFrame {
            seq,
            t_ms,
            interface: self.kind,
            phase: controller.phase(),
            active_mode: controller.active_mode(),
            level: self.pipeline.detector().level(),
            cs: matcher.map_or_else(Vec::new, |m| m.current().iter().map(|c| c.value()).collect()),
            candidates,
            t_match_remaining_ms: matcher.and_then(|m| m.remaining_ms(t_ms)),
            t_idle_remaining_ms: controller.idle_remaining(t_ms),
            highlight_index: controller.highlight_index(t_ms),
            events: std::mem::take(&mut self.events),
            outcomes: std::mem::take(&mut self.outcomes),
            arm: self.pipeline.arm().state().clone(),
            task: self.task_id.clone().zip(self.pipeline.tracker()).map(|(id, tr)| TaskStatus {
                id,
                progress: tr.progress(),
            }),
            metrics: self.pipeline.metrics(),
            bindings: (seq == 0).then(|| binding_table(&self.config.library)),
            wall_ms: None,
        }
    }
}

/// Re-runs a session log and returns the frames it produced.
pub fn replay_log(text: &str) -> Result<Vec<StateFrame>, ReplayLogError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let parse = |(i, line): (usize, &str)| {
        serde_json::from_str::<LogLine>(line).map_err(|e| ReplayLogError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })
    };
    let header = lines.next().ok_or(ReplayLogError::MissingHeader).and_then(parse)?;
    let LogLine::Session {
        interface,
        task,
        config,
        ..
    } = header
    else {
        return Err(ReplayLogError::MissingHeader);
    };
    let config = Arc::new(EngineConfig::from_toml(&config)?);
    let task = task.map(|id| TaskSpec::shipped(&id)).transpose()?;
    let mut engine = SessionEngine::new(config, interface, task);
    let mut frames = Vec::new();
    for entry in lines {
        let line_no = entry.0 + 1;
        match parse(entry)? {
            LogLine::Tick { t_ms } => {
                if engine.horizon.is_some_and(|h| t_ms <= h) {
                    return Err(ReplayLogError::Malformed {
                        line: line_no,
                        reason: format!("tick {t_ms} does not advance the clock"),
                    });
                }
                frames.push(engine.advance_to(t_ms));
            }
            LogLine::Input { msg } => {
                // rejected inputs were rejected live too
                let _ = engine.handle(&msg);
            }
            LogLine::Session { .. } => {
                return Err(ReplayLogError::Malformed {
                    line: line_no,
                    reason: "second session header".into(),
                })
            }
        }
    }
    Ok(frames)
}
