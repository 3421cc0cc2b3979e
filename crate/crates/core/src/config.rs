//! The shared configuration document.
//!
//! A TOML file with a `[[sequences]]` array (`id`, `codes`, `mode`), an
//! optional `[timers]` table and optional `[detector]`, `[arm]` and
//! `[virtual_user]` tables. Anything omitted falls back to the defaults.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::ArmConfig;
use crate::matcher::{LibraryError, SequenceLibrary, UserDefinedSequence, DEFAULT_T_MATCH_MS};
use crate::mode::ControlMode;
use crate::signal::{Code, DetectorConfig, SignalError};
use crate::sim::VirtualUserModel;

pub const DEFAULT_CONFIG_TOML: &str = include_str!("../data/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Detector(#[from] SignalError),
    #[error("invalid timers: {0}")]
    Timers(String),
    #[error("invalid arm settings: {0}")]
    Arm(String),
    #[error("invalid virtual user: {0}")]
    VirtualUser(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timers {
    pub t_match_ms: u64,
    pub t_idle_ms: u64,
    pub scroll_period_ms: u64,
}

impl Default for Timers {
    fn default() -> Self {
        Self {
            t_match_ms: DEFAULT_T_MATCH_MS,
            t_idle_ms: 3000,
            scroll_period_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSequence {
    id: String,
    codes: Vec<i64>,
    mode: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    sequences: Vec<RawSequence>,
    #[serde(default)]
    timers: Timers,
    #[serde(default)]
    detector: DetectorConfig,
    #[serde(default)]
    arm: ArmConfig,
    #[serde(default)]
    virtual_user: VirtualUserModel,
}

/// Fully validated engine configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub library: Arc<SequenceLibrary>,
    pub timers: Timers,
    pub detector: DetectorConfig,
    pub arm: ArmConfig,
    pub virtual_user: VirtualUserModel,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_CONFIG_TOML).expect("shipped default config is valid")
    }
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        let raw = RawConfig {
            sequences: self
                .library
                .sequences()
                .iter()
                .map(|s| RawSequence {
                    id: s.id.clone(),
                    codes: s.codes.iter().map(|c| c.value()).collect(),
                    mode: s.mode.as_str().to_string(),
                })
                .collect(),
            timers: self.timers,
            detector: self.detector.clone(),
            arm: self.arm.clone(),
            virtual_user: self.virtual_user.clone(),
        };
        toml::to_string(&raw).expect("config serializes")
    }

    fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let mut sequences = Vec::with_capacity(raw.sequences.len());
        for seq in raw.sequences {
            let codes = seq
                .codes
                .iter()
                .map(|&c| {
                    Code::try_from(c).map_err(|_| LibraryError::UnknownCode {
                        id: seq.id.clone(),
                        code: c,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mode: ControlMode = seq.mode.parse().map_err(|_| LibraryError::UnknownMode {
                id: seq.id.clone(),
                mode: seq.mode.clone(),
            })?;
            sequences.push(UserDefinedSequence::new(seq.id, codes, mode));
        }
        let library = SequenceLibrary::new(sequences, raw.timers.t_match_ms)?;
        raw.detector.validate()?;
        if raw.timers.t_idle_ms == 0 || raw.timers.scroll_period_ms == 0 {
            return Err(ConfigError::Timers(
                "t_idle_ms and scroll_period_ms must be positive".into(),
            ));
        }
        raw.arm.validate().map_err(ConfigError::Arm)?;
        raw.virtual_user
            .validate(&raw.detector)
            .map_err(ConfigError::VirtualUser)?;
        Ok(Self {
            library: Arc::new(library),
            timers: raw.timers,
            detector: raw.detector,
            arm: raw.arm,
            virtual_user: raw.virtual_user,
        })
    }
}

/// Parses and validates a configuration document, returning its library.
pub fn library_load(text: &str) -> Result<SequenceLibrary, ConfigError> {
    EngineConfig::from_toml(text).map(|c| c.library.as_ref().clone())
}
