//! Cartesian-mode kinematic arm and pick-and-place task tracking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::DeviceCommand;
use crate::mode::ControlMode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArmError {
    #[error("time step must be positive")]
    ZeroStep,
    #[error("invalid task `{id}`: {reason}")]
    InvalidTask { id: String, reason: String },
    #[error("cannot parse task file: {0}")]
    Parse(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn distance_to(&self, other: &Pose) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmConfig {
    pub linear_mps: f64,
    pub angular_rps: f64,
    pub gripper_per_s: f64,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub z_range: [f64; 2],
    /// Goto snaps onto the saved point once this close.
    pub snap_m: f64,
    pub home: Pose,
    pub home_gripper: f64,
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self {
            linear_mps: 0.08,
            angular_rps: 0.5,
            gripper_per_s: 0.5,
            x_range: [-0.8, 0.8],
            y_range: [-0.8, 0.8],
            z_range: [0.0, 1.2],
            snap_m: 0.001,
            home: Pose {
                x: 0.2,
                y: 0.0,
                z: 0.5,
                ..Pose::default()
            },
            home_gripper: 1.0,
        }
    }
}

impl ArmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.linear_mps > 0.0 && self.angular_rps > 0.0 && self.gripper_per_s > 0.0) {
            return Err("speeds must be positive".into());
        }
        for (name, r) in [("x", self.x_range), ("y", self.y_range), ("z", self.z_range)] {
            if r[0].is_nan() || r[1].is_nan() || r[0] >= r[1] {
                return Err(format!("{name}_range must be increasing"));
            }
        }
        if self.snap_m.is_nan() || self.snap_m <= 0.0 {
            return Err("snap_m must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.home_gripper) {
            return Err("home_gripper must be in [0, 1]".into());
        }
        Ok(())
    }

    fn clamp_position(&self, pose: &mut Pose) {
        pose.x = pose.x.clamp(self.x_range[0], self.x_range[1]);
        pose.y = pose.y.clamp(self.y_range[0], self.y_range[1]);
        pose.z = pose.z.clamp(self.z_range[0], self.z_range[1]);
    }

    pub fn contains(&self, pose: &Pose) -> bool {
        (self.x_range[0]..=self.x_range[1]).contains(&pose.x)
            && (self.y_range[0]..=self.y_range[1]).contains(&pose.y)
            && (self.z_range[0]..=self.z_range[1]).contains(&pose.z)
    }

    pub fn diagonal_m(&self) -> f64 {
        let span = |r: [f64; 2]| r[1] - r[0];
        (span(self.x_range).powi(2) + span(self.y_range).powi(2) + span(self.z_range).powi(2)).sqrt()
    }
}

/// Notable one-off things that happened to the arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArmEvent {
    PointSaved { pose: Pose },
    GotoStarted,
    GotoArrived,
    GotoCancelled,
    GotoIgnoredNoSavedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub pose: Pose,
    pub gripper: f64,
    pub saved_point: Option<Pose>,
    pub goto_active: bool,
    #[serde(skip)]
    pub history: Vec<ArmEvent>,
}

impl ArmState {
    pub fn home(config: &ArmConfig) -> Self {
        Self {
            pose: config.home,
            gripper: config.home_gripper,
            saved_point: None,
            goto_active: false,
            history: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    config: ArmConfig,
    state: ArmState,
}

impl Arm {
    pub fn new(config: ArmConfig) -> Self {
        let state = ArmState::home(&config);
        Self { config, state }
    }

    pub fn with_state(config: ArmConfig, state: ArmState) -> Self {
        Self { config, state }
    }

    pub fn state(&self) -> &ArmState {
        &self.state
    }

    pub fn config(&self) -> &ArmConfig {
        &self.config
    }

    /// Integrates `cmd` over `dt_ms`. Returns whether the arm was in motion.
    pub fn apply(&mut self, cmd: &DeviceCommand, dt_ms: u64) -> Result<bool, ArmError> {
        if dt_ms == 0 {
            return Err(ArmError::ZeroStep);
        }
        let dt = dt_ms as f64 / 1000.0;
        let state = &mut self.state;

        if cmd.momentary_fire {
            match cmd.mode {
                Some(ControlMode::SavePoint) => {
                    state.saved_point = Some(state.pose);
                    state.history.push(ArmEvent::PointSaved { pose: state.pose });
                }
                Some(ControlMode::GotoPoint) => {
                    if state.saved_point.is_some() {
                        state.goto_active = true;
                        state.history.push(ArmEvent::GotoStarted);
                    } else {
                        state.history.push(ArmEvent::GotoIgnoredNoSavedPoint);
                    }
                }
                _ => {}
            }
        }

        if cmd.direction != 0 && state.goto_active {
            state.goto_active = false;
            state.history.push(ArmEvent::GotoCancelled);
        }

        if state.goto_active {
            let target = state.saved_point.expect("goto_active implies a saved point");
            let dist = state.pose.distance_to(&target);
            let step = self.config.linear_mps * dt;
            if dist - step <= self.config.snap_m {
                state.pose = target;
                state.goto_active = false;
                state.history.push(ArmEvent::GotoArrived);
            } else {
                let f = step / dist;
                let p = &mut state.pose;
                p.x += (target.x - p.x) * f;
                p.y += (target.y - p.y) * f;
                p.z += (target.z - p.z) * f;
                p.roll += (target.roll - p.roll) * f;
                p.pitch += (target.pitch - p.pitch) * f;
                p.yaw += (target.yaw - p.yaw) * f;
                self.config.clamp_position(p);
            }
            return Ok(true);
        }

        let Some(mode) = cmd.mode else {
            return Ok(false);
        };
        if cmd.direction == 0 {
            return Ok(false);
        }
        let sign = f64::from(cmd.direction.signum());
        let linear = sign * self.config.linear_mps * dt;
        let angular = sign * self.config.angular_rps * dt;
        let p = &mut state.pose;
        match mode {
            ControlMode::TranslateFb => p.x += linear,
            ControlMode::TranslateLr => p.y += linear,
            ControlMode::TranslateUd => p.z += linear,
            ControlMode::RotateX => p.roll += angular,
            ControlMode::RotateY => p.pitch += angular,
            ControlMode::RotateZ => p.yaw += angular,
            ControlMode::Fingers => {
                state.gripper = (state.gripper + sign * self.config.gripper_per_s * dt).clamp(0.0, 1.0)
            }
            ControlMode::SavePoint | ControlMode::GotoPoint => {}
        }
        self.config.clamp_position(&mut state.pose);
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripAction {
    Open,
    Close,
    None,
}

/// Aperture at or below which the gripper counts as closed.
pub const GRIP_CLOSED_MAX: f64 = 0.1;
/// Aperture at or above which the gripper counts as open.
pub const GRIP_OPEN_MIN: f64 = 0.9;

fn default_tol_rad() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    #[serde(default)]
    pub roll: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub yaw: f64,
    pub grip: GripAction,
    pub tol_m: f64,
    #[serde(default = "default_tol_rad")]
    pub tol_rad: f64,
}

impl Waypoint {
    pub fn pose(&self) -> Pose {
        Pose {
            x: self.x,
            y: self.y,
            z: self.z,
            roll: self.roll,
            pitch: self.pitch,
            yaw: self.yaw,
        }
    }

    pub fn satisfied_by(&self, arm: &ArmState) -> bool {
        let p = &arm.pose;
        let target = self.pose();
        let placed = p.distance_to(&target) <= self.tol_m
            && (p.roll - target.roll).abs() <= self.tol_rad
            && (p.pitch - target.pitch).abs() <= self.tol_rad
            && (p.yaw - target.yaw).abs() <= self.tol_rad;
        let gripped = match self.grip {
            GripAction::Open => arm.gripper >= GRIP_OPEN_MIN,
            GripAction::Close => arm.gripper <= GRIP_CLOSED_MAX,
            GripAction::None => true,
        };
        placed && gripped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: String,
    pub description: String,
    pub waypoints: Vec<Waypoint>,
}

const SHIPPED_TASKS: [(&str, &str); 3] = [
    ("task1_jar", include_str!("../data/tasks/task1_jar.toml")),
    ("task2_spoon", include_str!("../data/tasks/task2_spoon.toml")),
    ("task3_bottle", include_str!("../data/tasks/task3_bottle.toml")),
];

impl TaskSpec {
    pub fn from_toml(text: &str) -> Result<Self, ArmError> {
        let task: TaskSpec = toml::from_str(text).map_err(|e| ArmError::Parse(e.to_string()))?;
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), ArmError> {
        let invalid = |reason: &str| ArmError::InvalidTask {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.waypoints.is_empty() {
            return Err(invalid("no waypoints"));
        }
        if self.waypoints.iter().any(|w| !(w.tol_m > 0.0 && w.tol_rad > 0.0)) {
            return Err(invalid("tolerances must be positive"));
        }
        Ok(())
    }

    /// One of the three shipped tasks by id.
    pub fn shipped(id: &str) -> Result<Self, ArmError> {
        SHIPPED_TASKS
            .iter()
            .find(|(name, _)| *name == id)
            .ok_or_else(|| ArmError::UnknownTask(id.to_string()))
            .and_then(|(_, text)| Self::from_toml(text))
    }

    pub fn shipped_ids() -> [&'static str; 3] {
        SHIPPED_TASKS.map(|(id, _)| id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskProgress {
    pub completed: usize,
    pub total: usize,
    pub fraction: f64,
    pub done: bool,
}

/// Walks the waypoints in order as arm states are observed.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTracker {
    task: TaskSpec,
    next: usize,
}

impl TaskTracker {
    pub fn new(task: TaskSpec) -> Self {
        Self { task, next: 0 }
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    /// The first waypoint not yet satisfied.
    pub fn current_waypoint(&self) -> Option<&Waypoint> {
        self.task.waypoints.get(self.next)
    }

    pub fn observe(&mut self, arm: &ArmState) -> TaskProgress {
        while let Some(wp) = self.task.waypoints.get(self.next) {
            if !wp.satisfied_by(arm) {
                break;
            }
            self.next += 1;
        }
        self.progress()
    }

    pub fn progress(&self) -> TaskProgress {
        let total = self.task.waypoints.len();
        TaskProgress {
            completed: self.next,
            total,
            fraction: self.next as f64 / total as f64,
            done: self.next == total,
        }
    }
}

/// Progress of `task` given the sequence of arm states seen so far.
pub fn task_progress(task: &TaskSpec, history: &[ArmState]) -> TaskProgress {
    let mut tracker = TaskTracker::new(task.clone());
    for state in history {
        tracker.observe(state);
    }
    tracker.progress()
}
