//! Sequence-matching control interface for sip-and-puff input.
//!
//! A single analog pressure channel is turned into short/long sip and puff
//! peaks ([`signal`]), which are matched online against a library of
//! user-defined sequences ([`matcher`]). A matched sequence selects one of
//! nine device modes; held pressure then drives the selected mode
//! ([`controller`]) on a kinematic arm ([`arm`]). The auto-scroll baseline,
//! a seeded virtual user ([`sim`]), replay of recordings ([`replay`]),
//! benchmarks ([`bench`]) and an exact Wilcoxon signed-rank test
//! ([`stats`]) round it out.

pub mod arm;
pub mod bench;
pub mod config;
pub mod controller;
pub mod matcher;
pub mod mode;
pub mod pipeline;
pub mod replay;
pub mod signal;
pub mod sim;
pub mod stats;

pub use arm::{Arm, ArmConfig, ArmState, Pose, TaskSpec, TaskTracker};
pub use config::{library_load, ConfigError, EngineConfig, Timers};
pub use controller::{binding_table, AspController, BspController, Controller, DeviceCommand, InterfaceKind, Phase};
pub use matcher::{MatchOutcome, Matcher, ResetReason, SequenceLibrary, UserDefinedSequence};
pub use mode::ControlMode;
pub use pipeline::{Pipeline, SessionMetrics};
pub use signal::{Code, DetectorConfig, Level, PeakDetector, PeakEvent, Sample};
pub use sim::{simulate_session, VirtualUserModel};
pub use stats::{wilcoxon_signed_rank, Alternative};
