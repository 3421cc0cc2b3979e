//! Peak detection on the single analog pressure channel.
//!
//! The detector runs a small hysteresis state machine per sample. A peak
//! opens when the voltage crosses an activation threshold (`puff_on_v`
//! upward or `sip_on_v` downward) and closes when it crosses back over the
//! matching release threshold. The onset-to-offset duration decides the
//! short/long class; excursions shorter than `debounce_ms` are dropped.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Full-scale voltage of the sensor channel.
pub const V_MAX: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("non-monotonic timestamp: {t} ms is not after {last} ms")]
    NonMonotonic { t: u64, last: u64 },
    #[error("voltage is not a number at t={t} ms")]
    NotANumber { t: u64 },
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
}

/// A timestamped voltage reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: u64,
    pub v: f64,
}

impl Sample {
    pub fn new(t: u64, v: f64) -> Self {
        Self { t, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Sip,
    Puff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationClass {
    Short,
    Long,
}

/// One symbol of the four-letter input alphabet.
///
/// Sips code positive, puffs negative; magnitude 1 is short, 2 is long.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Code {
    ShortSip,
    LongSip,
    ShortPuff,
    LongPuff,
}

impl Code {
    pub const ALL: [Code; 4] = [Code::ShortSip, Code::LongSip, Code::ShortPuff, Code::LongPuff];

    pub fn new(direction: Direction, class: DurationClass) -> Self {
        match (direction, class) {
            (Direction::Sip, DurationClass::Short) => Code::ShortSip,
            (Direction::Sip, DurationClass::Long) => Code::LongSip,
            (Direction::Puff, DurationClass::Short) => Code::ShortPuff,
            (Direction::Puff, DurationClass::Long) => Code::LongPuff,
        }
    }

    pub fn value(self) -> i64 {
        match self {
            Code::ShortSip => 1,
            Code::LongSip => 2,
            Code::ShortPuff => -1,
            Code::LongPuff => -2,
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Code::ShortSip | Code::LongSip => Direction::Sip,
            Code::ShortPuff | Code::LongPuff => Direction::Puff,
        }
    }

    pub fn class(self) -> DurationClass {
        match self {
            Code::ShortSip | Code::ShortPuff => DurationClass::Short,
            Code::LongSip | Code::LongPuff => DurationClass::Long,
        }
    }

    /// Dense index used by the trie's child table.
    pub fn index(self) -> usize {
        match self {
            Code::ShortSip => 0,
            Code::LongSip => 1,
            Code::ShortPuff => 2,
            Code::LongPuff => 3,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("unknown code symbol {0} (expected one of 1, 2, -1, -2)")]
pub struct UnknownCode(pub i64);

impl TryFrom<i64> for Code {
    type Error = UnknownCode;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(Code::ShortSip),
            2 => Ok(Code::LongSip),
            -1 => Ok(Code::ShortPuff),
            -2 => Ok(Code::LongPuff),
            other => Err(UnknownCode(other)),
        }
    }
}

impl From<Code> for i64 {
    fn from(code: Code) -> i64 {
        code.value()
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// A classified, debounced peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakEvent {
    pub code: Code,
    pub onset_t: u64,
    pub offset_t: u64,
}

impl PeakEvent {
    pub fn direction(&self) -> Direction {
        self.code.direction()
    }

    pub fn duration_class(&self) -> DurationClass {
        self.code.class()
    }

    pub fn duration_ms(&self) -> u64 {
        self.offset_t - self.onset_t
    }

    /// `onset_t,offset_t,code` trace line, without the newline.
    pub fn trace_line(&self) -> String {
        format!("{},{},{}", self.onset_t, self.offset_t, self.code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub neutral_v: f64,
    pub puff_on_v: f64,
    pub puff_off_v: f64,
    pub sip_on_v: f64,
    pub sip_off_v: f64,
    pub debounce_ms: u64,
    pub long_threshold_ms: u64,
    pub max_peak_ms: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            neutral_v: 2.5,
            puff_on_v: 3.2,
            puff_off_v: 2.8,
            sip_on_v: 1.8,
            sip_off_v: 2.2,
            debounce_ms: 50,
            long_threshold_ms: 400,
            max_peak_ms: 5000,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        let volts = [
            self.sip_on_v,
            self.sip_off_v,
            self.neutral_v,
            self.puff_off_v,
            self.puff_on_v,
        ];
        if volts.iter().any(|v| !v.is_finite()) || !volts.windows(2).all(|w| w[0] < w[1]) {
            return Err(SignalError::InvalidConfig(format!(
                "thresholds must satisfy sip_on_v < sip_off_v < neutral_v < puff_off_v < puff_on_v, got {volts:?}"
            )));
        }
        if !(0 < self.debounce_ms
            && self.debounce_ms < self.long_threshold_ms
            && self.long_threshold_ms < self.max_peak_ms)
        {
            return Err(SignalError::InvalidConfig(format!(
                "timings must satisfy 0 < debounce_ms ({}) < long_threshold_ms ({}) < max_peak_ms ({})",
                self.debounce_ms, self.long_threshold_ms, self.max_peak_ms
            )));
        }
        Ok(())
    }

    pub fn classify(&self, duration_ms: u64) -> DurationClass {
        if duration_ms >= self.long_threshold_ms {
            DurationClass::Long
        } else {
            DurationClass::Short
        }
    }
}

/// What the channel is doing right now, as seen after debounce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Neutral,
    SipActive,
    PuffActive,
}

impl Level {
    pub fn from_direction(direction: Direction) -> Self {
        match direction {
            Direction::Sip => Level::SipActive,
            Direction::Puff => Level::PuffActive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Neutral,
    Open { direction: Direction, onset: u64 },
    /// Force-closed after `max_peak_ms`; waiting for the release crossing.
    Latched { direction: Direction },
}

/// Hysteresis peak detector. All time comes from the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakDetector {
    config: DetectorConfig,
    phase: Phase,
    last_t: Option<u64>,
}

impl PeakDetector {
    pub fn new(config: DetectorConfig) -> Result<Self, SignalError> {
        config.validate()?;
        Ok(Self {
            config,
            phase: Phase::Neutral,
            last_t: None,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn last_t(&self) -> Option<u64> {
        self.last_t
    }

    /// Ingests one sample. Returns the peak closed by this sample, if any.
    ///
    /// A rejected sample leaves the detector untouched.
    pub fn feed(&mut self, sample: Sample) -> Result<Option<PeakEvent>, SignalError> {
        if let Some(last) = self.last_t {
            if sample.t <= last {
                return Err(SignalError::NonMonotonic { t: sample.t, last });
            }
        }
        if sample.v.is_nan() {
            return Err(SignalError::NotANumber { t: sample.t });
        }
        let v = sample.v.clamp(0.0, V_MAX);
        let t = sample.t;
        self.last_t = Some(t);

        match self.phase {
            Phase::Neutral => {
                if v >= self.config.puff_on_v {
                    self.phase = Phase::Open {
                        direction: Direction::Puff,
                        onset: t,
                    };
                } else if v <= self.config.sip_on_v {
                    self.phase = Phase::Open {
                        direction: Direction::Sip,
                        onset: t,
                    };
                }
                Ok(None)
            }
            Phase::Open { direction, onset } => {
                if self.released(direction, v) {
                    self.phase = Phase::Neutral;
                    return Ok(self.close(direction, onset, t));
                }
                if t - onset >= self.config.max_peak_ms {
                    self.phase = Phase::Latched { direction };
                    return Ok(Some(PeakEvent {
                        code: Code::new(direction, DurationClass::Long),
                        onset_t: onset,
                        offset_t: t,
                    }));
                }
                Ok(None)
            }
            Phase::Latched { direction } => {
                if self.released(direction, v) {
                    self.phase = Phase::Neutral;
                }
                Ok(None)
            }
        }
    }

    /// Closes any open peak at `now` and returns to neutral.
    pub fn flush(&mut self, now: u64) -> Option<PeakEvent> {
        let phase = std::mem::replace(&mut self.phase, Phase::Neutral);
        self.last_t = Some(self.last_t.map_or(now, |last| last.max(now)));
        match phase {
            Phase::Open { direction, onset } if now > onset => self.close(direction, onset, now),
            _ => None,
        }
    }

    pub fn level(&self) -> Level {
        match self.phase {
            Phase::Neutral => Level::Neutral,
            Phase::Open { direction, onset } => {
                let held = self.last_t.unwrap_or(onset) - onset;
                if held >= self.config.debounce_ms {
                    Level::from_direction(direction)
                } else {
                    Level::Neutral
                }
            }
            Phase::Latched { direction } => Level::from_direction(direction),
        }
    }

    fn released(&self, direction: Direction, v: f64) -> bool {
        match direction {
            Direction::Puff => v <= self.config.puff_off_v,
            Direction::Sip => v >= self.config.sip_off_v,
        }
    }

    fn close(&self, direction: Direction, onset: u64, offset: u64) -> Option<PeakEvent> {
        let duration = offset - onset;
        if duration < self.config.debounce_ms {
            return None;
        }
        Some(PeakEvent {
            code: Code::new(direction, self.config.classify(duration)),
            onset_t: onset,
            offset_t: offset,
        })
    }
}

/// Runs a whole sample stream through a fresh detector and flushes at the end.
pub fn detect_all(config: &DetectorConfig, samples: &[Sample]) -> Result<Vec<PeakEvent>, SignalError> {
    let mut detector = PeakDetector::new(config.clone())?;
    let mut events = Vec::new();
    for &s in samples {
        events.extend(detector.feed(s)?);
    }
    if let Some(last) = detector.last_t() {
        events.extend(detector.flush(last));
    }
    Ok(events)
}
