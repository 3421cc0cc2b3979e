//! Seeded virtual user driving a task through the full signal pipeline.
//!
//! The user watches the same things a person would see on screen (phase,
//! active mode, current sequence, auto-scroll highlight, arm pose) and
//! answers with a pressure waveform sampled every `SAMPLE_PERIOD_MS`.
//! Every decision is delayed by a reaction time drawn from a truncated
//! normal distribution; in the auto-scroll interface each pass of the
//! wanted mode is missed with `miss_probability`.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{ArmState, GripAction, TaskSpec, Waypoint, GRIP_CLOSED_MAX, GRIP_OPEN_MIN};
use crate::config::EngineConfig;
use crate::controller::{Controller, InterfaceKind, Phase};
use crate::mode::ControlMode;
use crate::pipeline::{Pipeline, PipelineError, SessionMetrics};
use crate::signal::{Code, DetectorConfig, Direction, DurationClass};

pub const SAMPLE_PERIOD_MS: u64 = 10;
/// Sessions still running after this much simulated time are aborted.
pub const SESSION_LIMIT_MS: u64 = 20 * 60 * 1000;

const PUFF_V: f64 = 4.0;
const SIP_V: f64 = 1.0;
const NEUTRAL_V: f64 = 2.5;

/// An axis is worth driving once its error exceeds this share of the tolerance.
const START_FRACTION: f64 = 0.3;
/// The user lets go once the error is within this share of the tolerance.
const STOP_FRACTION: f64 = 0.1;
const GRIP_STOP_MARGIN: f64 = 0.02;
/// How long the user waits for a selection to register before retrying.
const SELECTION_GRACE_MS: u64 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("session did not finish within {limit_ms} ms of simulated time")]
    Timeout { limit_ms: u64 },
    #[error("no sequence is bound to mode {0}")]
    UnboundMode(ControlMode),
    #[error("invalid virtual user: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VirtualUserModel {
    pub reaction_mean_ms: f64,
    pub reaction_sd_ms: f64,
    pub short_peak_ms: u64,
    pub long_peak_ms: u64,
    pub inter_peak_gap_ms: u64,
    /// Chance of letting one auto-scroll pass of the wanted mode go by.
    pub miss_probability: f64,
    pub rng_seed: u64,
}

impl Default for VirtualUserModel {
    fn default() -> Self {
        Self {
            reaction_mean_ms: 250.0,
            reaction_sd_ms: 50.0,
            short_peak_ms: 200,
            long_peak_ms: 600,
            inter_peak_gap_ms: 150,
            miss_probability: 0.1,
            rng_seed: 0,
        }
    }
}

impl VirtualUserModel {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            rng_seed: seed,
            ..self.clone()
        }
    }

    pub fn validate(&self, detector: &DetectorConfig) -> Result<(), String> {
        if !(self.reaction_mean_ms.is_finite() && self.reaction_sd_ms >= 0.0) {
            return Err("reaction time parameters must be finite, sd non-negative".into());
        }
        if !(self.short_peak_ms < detector.long_threshold_ms && detector.long_threshold_ms <= self.long_peak_ms) {
            return Err(format!(
                "need short_peak_ms ({}) < long_threshold_ms ({}) <= long_peak_ms ({})",
                self.short_peak_ms, detector.long_threshold_ms, self.long_peak_ms
            ));
        }
        if self.short_peak_ms <= detector.debounce_ms {
            return Err("short_peak_ms must exceed debounce_ms".into());
        }
        if self.long_peak_ms >= detector.max_peak_ms {
            return Err("long_peak_ms must stay below max_peak_ms".into());
        }
        if self.inter_peak_gap_ms < SAMPLE_PERIOD_MS {
            return Err(format!("inter_peak_gap_ms must be at least {SAMPLE_PERIOD_MS}"));
        }
        if !(0.0..1.0).contains(&self.miss_probability) {
            return Err("miss_probability must be in [0, 1)".into());
        }
        Ok(())
    }

    fn pulse_ms(&self, code: Code) -> u64 {
        match code.class() {
            DurationClass::Short => self.short_peak_ms,
            DurationClass::Long => self.long_peak_ms,
        }
    }
}

fn code_volts(code: Code) -> f64 {
    match code.direction() {
        Direction::Sip => SIP_V,
        Direction::Puff => PUFF_V,
    }
}

/// One degree of freedom the user wants to drive, toward `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Goal {
    mode: ControlMode,
    target: f64,
    direction: i8,
    stop: f64,
}

impl Goal {
    fn volts(&self) -> f64 {
        if self.direction > 0 {
            PUFF_V
        } else {
            SIP_V
        }
    }

    fn reached(&self, arm: &ArmState) -> bool {
        let remaining = (self.target - axis_value(arm, self.mode)) * f64::from(self.direction);
        remaining <= self.stop
    }
}

fn axis_value(arm: &ArmState, mode: ControlMode) -> f64 {
    let p = &arm.pose;
    match mode {
        ControlMode::TranslateFb => p.x,
        ControlMode::TranslateLr => p.y,
        ControlMode::TranslateUd => p.z,
        ControlMode::RotateX => p.roll,
        ControlMode::RotateY => p.pitch,
        ControlMode::RotateZ => p.yaw,
        ControlMode::Fingers => arm.gripper,
        ControlMode::SavePoint | ControlMode::GotoPoint => 0.0,
    }
}

/// Axes still to drive for `wp`, in the order the user works through them.
fn open_goals(wp: &Waypoint, arm: &ArmState) -> Vec<Goal> {
    let target = wp.pose();
    let axes = [
        (ControlMode::TranslateFb, target.x, wp.tol_m),
        (ControlMode::TranslateLr, target.y, wp.tol_m),
        (ControlMode::TranslateUd, target.z, wp.tol_m),
        (ControlMode::RotateX, target.roll, wp.tol_rad),
        (ControlMode::RotateY, target.pitch, wp.tol_rad),
        (ControlMode::RotateZ, target.yaw, wp.tol_rad),
    ];
    let mut goals: Vec<Goal> = axes
        .into_iter()
        .filter_map(|(mode, target, tol)| {
            let err = target - axis_value(arm, mode);
            (err.abs() > START_FRACTION * tol).then_some(Goal {
                mode,
                target,
                direction: if err > 0.0 { 1 } else { -1 },
                stop: STOP_FRACTION * tol,
            })
        })
        .collect();
    if goals.is_empty() {
        let grip = match wp.grip {
            GripAction::Close if arm.gripper > GRIP_CLOSED_MAX => Some((0.0, -1)),
            GripAction::Open if arm.gripper < GRIP_OPEN_MIN => Some((1.0, 1)),
            _ => None,
        };
        goals.extend(grip.map(|(target, direction)| Goal {
            mode: ControlMode::Fingers,
            target,
            direction,
            stop: GRIP_STOP_MARGIN,
        }));
    }
    goals
}

/// What the user can see at the start of a sample period.
struct Observation<'a> {
    t: u64,
    phase: Phase,
    active_mode: Option<ControlMode>,
    sequence_len: usize,
    /// (pass number, highlighted index) while auto-scrolling.
    scroll: Option<(u64, usize)>,
    arm: &'a ArmState,
    waypoint: Option<&'a Waypoint>,
}

impl<'a> Observation<'a> {
    fn of(pipeline: &'a Pipeline, t: u64, scroll_period_ms: u64) -> Self {
        let controller = pipeline.controller();
        let scroll = match controller {
            Controller::Bsp(b) if b.phase() == Phase::Detection => {
                let pass = t.saturating_sub(b.scroll_origin()) / scroll_period_ms;
                Some((pass, b.highlight_index(t)))
            }
            _ => None,
        };
        Self {
            t,
            phase: controller.phase(),
            active_mode: controller.active_mode(),
            sequence_len: controller.matcher().map_or(0, |m| m.current().len()),
            scroll,
            arm: pipeline.arm().state(),
            waypoint: pipeline.tracker().and_then(|tr| tr.current_waypoint()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum After {
    AwaitSelection,
    Hold(Goal),
}

#[derive(Debug, Clone, PartialEq)]
enum Activity {
    Ready,
    /// Timed voltage segments: hold `volts` until `end_t`.
    Script { segments: VecDeque<(u64, f64)>, then: After },
    Hold(Goal),
    WaitIdle,
    AwaitSelection { since: u64 },
    AwaitHighlight { target: usize, considered: Option<u64> },
}

struct VirtualUser<'c> {
    model: VirtualUserModel,
    config: &'c EngineConfig,
    kind: InterfaceKind,
    rng: ChaCha8Rng,
    reaction: Normal<f64>,
    activity: Activity,
}

impl<'c> VirtualUser<'c> {
    fn new(model: VirtualUserModel, config: &'c EngineConfig, kind: InterfaceKind) -> Result<Self, SimError> {
        model.validate(&config.detector).map_err(SimError::InvalidModel)?;
        let reaction =
            Normal::new(model.reaction_mean_ms, model.reaction_sd_ms).map_err(|e| SimError::InvalidModel(e.to_string()))?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(model.rng_seed),
            model,
            config,
            kind,
            reaction,
            activity: Activity::Ready,
        })
    }

    fn reaction_ms(&mut self) -> u64 {
        self.reaction.sample(&mut self.rng).max(0.0).round() as u64
    }

    fn voltage(&mut self, obs: &Observation<'_>) -> Result<f64, SimError> {
        // a decision may hand over to an activity that acts right away
        for _ in 0..4 {
            if let Some(v) = self.act(obs)? {
                return Ok(v);
            }
        }
        Ok(NEUTRAL_V)
    }

    /// `None` means the activity changed and should be re-evaluated now.
    fn act(&mut self, obs: &Observation<'_>) -> Result<Option<f64>, SimError> {
        let t = obs.t;
        match &mut self.activity {
            Activity::Ready => {
                self.decide(obs)?;
                Ok(matches!(self.activity, Activity::Ready).then_some(NEUTRAL_V))
            }
            Activity::Script { segments, then } => {
                while segments.front().is_some_and(|&(end, _)| end <= t) {
                    segments.pop_front();
                }
                if let Some(&(_, v)) = segments.front() {
                    return Ok(Some(v));
                }
                self.activity = match then.clone() {
                    After::AwaitSelection => Activity::AwaitSelection { since: t },
                    After::Hold(goal) => Activity::Hold(goal),
                };
                Ok(None)
            }
            Activity::Hold(goal) => {
                if obs.phase != Phase::Command || goal.reached(obs.arm) {
                    self.activity = Activity::Ready;
                    return Ok(Some(NEUTRAL_V));
                }
                Ok(Some(goal.volts()))
            }
            Activity::WaitIdle => {
                if obs.phase == Phase::Detection {
                    self.activity = Activity::Ready;
                    return Ok(None);
                }
                Ok(Some(NEUTRAL_V))
            }
            Activity::AwaitSelection { since } => {
                let settled = obs.phase == Phase::Command
                    || (obs.sequence_len == 0 && t.saturating_sub(*since) >= SELECTION_GRACE_MS);
                if settled {
                    self.activity = Activity::Ready;
                    return Ok(None);
                }
                Ok(Some(NEUTRAL_V))
            }
            Activity::AwaitHighlight { target, considered } => {
                let target = *target;
                let Some((pass, index)) = obs.scroll else {
                    self.activity = Activity::Ready;
                    return Ok(None);
                };
                if index != target || *considered == Some(pass) {
                    return Ok(Some(NEUTRAL_V));
                }
                *considered = Some(pass);
                if self.rng.random::<f64>() < self.model.miss_probability {
                    return Ok(Some(NEUTRAL_V));
                }
                let start = t + self.reaction_ms();
                self.activity = Activity::Script {
                    segments: VecDeque::from([(start, NEUTRAL_V), (start + self.model.short_peak_ms, PUFF_V)]),
                    then: After::AwaitSelection,
                };
                Ok(None)
            }
        }
    }

    fn decide(&mut self, obs: &Observation<'_>) -> Result<(), SimError> {
        let Some(wp) = obs.waypoint else {
            return Ok(());
        };
        let goals = open_goals(wp, obs.arm);
        let Some(&first) = goals.first() else {
            return Ok(());
        };
        match obs.phase {
            Phase::Command => {
                let current = goals.iter().find(|g| Some(g.mode) == obs.active_mode);
                self.activity = match current {
                    Some(&goal) => {
                        let start = obs.t + self.reaction_ms();
                        Activity::Script {
                            segments: VecDeque::from([(start, NEUTRAL_V)]),
                            then: After::Hold(goal),
                        }
                    }
                    None => Activity::WaitIdle,
                };
            }
            Phase::Detection => match self.kind {
                InterfaceKind::Asp => {
                    if obs.sequence_len > 0 {
                        self.activity = Activity::AwaitSelection { since: obs.t };
                        return Ok(());
                    }
                    let uds = self
                        .config
                        .library
                        .sequence_for(first.mode)
                        .ok_or(SimError::UnboundMode(first.mode))?;
                    let mut at = obs.t + self.reaction_ms();
                    let mut segments = VecDeque::from([(at, NEUTRAL_V)]);
                    for (i, &code) in uds.codes.iter().enumerate() {
                        if i > 0 {
                            at += self.model.inter_peak_gap_ms;
                            segments.push_back((at, NEUTRAL_V));
                        }
                        at += self.model.pulse_ms(code);
                        segments.push_back((at, code_volts(code)));
                    }
                    self.activity = Activity::Script {
                        segments,
                        then: After::AwaitSelection,
                    };
                }
                InterfaceKind::Bsp => {
                    self.activity = Activity::AwaitHighlight {
                        target: first.mode.index(),
                        considered: None,
                    };
                }
            },
        }
        Ok(())
    }
}

/// Runs one virtual-user session to task completion.
pub fn simulate_session(
    task: &TaskSpec,
    kind: InterfaceKind,
    model: &VirtualUserModel,
    config: &EngineConfig,
) -> Result<SessionMetrics, SimError> {
    simulate_session_limited(task, kind, model, config, SESSION_LIMIT_MS)
}

pub fn simulate_session_limited(
    task: &TaskSpec,
    kind: InterfaceKind,
    model: &VirtualUserModel,
    config: &EngineConfig,
    limit_ms: u64,
) -> Result<SessionMetrics, SimError> {
    let mut pipeline = Pipeline::new(config, kind, Some(task.clone()), 0);
    let mut user = VirtualUser::new(model.clone(), config, kind)?;
    let period = config.timers.scroll_period_ms;
    let mut t = 0;
    while t <= limit_ms {
        let v = user.voltage(&Observation::of(&pipeline, t, period))?;
        pipeline.step(crate::signal::Sample::new(t, v))?;
        if pipeline.is_done() {
            return Ok(pipeline.metrics());
        }
        t += SAMPLE_PERIOD_MS;
    }
    Err(SimError::Timeout { limit_ms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task1() -> TaskSpec {
        TaskSpec::shipped("task1_jar").unwrap()
    }

    #[test]
    fn same_seed_same_metrics() {
        let cfg = EngineConfig::default();
        let model = VirtualUserModel::default().with_seed(7);
        for kind in [InterfaceKind::Asp, InterfaceKind::Bsp] {
            let a = simulate_session(&task1(), kind, &model, &cfg).unwrap();
            let b = simulate_session(&task1(), kind, &model, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.wasted_ms + a.moving_ms, a.completion_ms);
            assert!(a.mode_selection_count >= 4);
        }
    }

    #[test]
    fn asp_beats_bsp_on_a_single_seed() {
        let cfg = EngineConfig::default();
        let model = VirtualUserModel::default().with_seed(1);
        let asp = simulate_session(&task1(), InterfaceKind::Asp, &model, &cfg).unwrap();
        let bsp = simulate_session(&task1(), InterfaceKind::Bsp, &model, &cfg).unwrap();
        assert!(asp.completion_ms < bsp.completion_ms, "{asp:?} vs {bsp:?}");
    }

    #[test]
    fn session_guard_trips() {
        let cfg = EngineConfig::default();
        let err = simulate_session_limited(&task1(), InterfaceKind::Bsp, &VirtualUserModel::default(), &cfg, 5_000);
        assert_eq!(err, Err(SimError::Timeout { limit_ms: 5_000 }));
    }

    #[test]
    fn model_validation() {
        let det = DetectorConfig::default();
        assert!(VirtualUserModel::default().validate(&det).is_ok());
        let bad = VirtualUserModel {
            short_peak_ms: 450,
            ..VirtualUserModel::default()
        };
        assert!(bad.validate(&det).is_err());
        let bad = VirtualUserModel {
            miss_probability: 1.0,
            ..VirtualUserModel::default()
        };
        assert!(bad.validate(&det).is_err());
    }

    #[test]
    fn goals_follow_axis_order_then_grip() {
        let task = task1();
        let arm = ArmState::home(&crate::arm::ArmConfig::default());
        let goals = open_goals(&task.waypoints[0], &arm);
        let modes: Vec<_> = goals.iter().map(|g| g.mode).collect();
        assert_eq!(modes, [ControlMode::TranslateFb, ControlMode::TranslateLr, ControlMode::TranslateUd]);
        assert!(goals.iter().all(|g| g.direction == 1));

        let mut placed = arm.clone();
        placed.pose = task.waypoints[0].pose();
        let goals = open_goals(&task.waypoints[0], &placed);
        assert_eq!(goals.len(), 1);
        assert_eq!((goals[0].mode, goals[0].direction), (ControlMode::Fingers, -1));
    }
}
