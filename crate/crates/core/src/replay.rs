//! Offline replay of recorded signal files.
//!
//! Recordings are CSV text with a `t_ms,v` header and one sample per line.
//! A replay produces three traces, one record per line:
//!
//! * events: `onset_t,offset_t,code`
//! * matches: `t,kind,detail` (`detail` is the matched id, the reset reason
//!   or `|`-joined candidates)
//! * steps: `t,phase,active_mode,direction,momentary`

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::config::EngineConfig;
use crate::controller::{step_trace_line, DeviceCommand, InterfaceKind, Phase};
use crate::matcher::MatchOutcome;
use crate::pipeline::{Pipeline, PipelineError, PipelineStep, SessionMetrics};
use crate::signal::{PeakEvent, Sample};

pub const RECORDING_HEADER: &str = "t_ms,v";

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: {source}")]
    Pipeline {
        line: u64,
        #[source]
        source: PipelineError,
    },
}

/// Parses a recording. Line numbers in errors are 1-based file lines.
pub fn read_recording<R: Read>(reader: R) -> Result<Vec<Sample>, ReplayError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers().map_err(|e| ReplayError::Malformed {
        line: 1,
        reason: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["t_ms", "v"] {
        return Err(ReplayError::Malformed {
            line: 1,
            reason: format!("expected header `{RECORDING_HEADER}`"),
        });
    }
    let mut samples = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| ReplayError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |reason: String| ReplayError::Malformed { line, reason };
        if record.len() != 2 {
            return Err(malformed(format!("expected 2 fields, found {}", record.len())));
        }
        let t: u64 = record[0]
            .parse()
            .map_err(|_| malformed(format!("bad timestamp `{}`", &record[0])))?;
        let v: f64 = record[1]
            .parse()
            .map_err(|_| malformed(format!("bad voltage `{}`", &record[1])))?;
        if v.is_nan() {
            return Err(malformed("voltage is NaN".into()));
        }
        samples.push(Sample::new(t, v));
    }
    Ok(samples)
}

pub fn load_recording(path: impl AsRef<Path>) -> Result<Vec<Sample>, ReplayError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| ReplayError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_recording(std::io::BufReader::new(file))
}

pub fn write_recording(samples: &[Sample]) -> String {
    let mut out = String::from(RECORDING_HEADER);
    out.push('\n');
    for s in samples {
        let _ = writeln!(out, "{},{}", s.t, s.v);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub phase: Phase,
    pub command: DeviceCommand,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayOutput {
    pub events: Vec<PeakEvent>,
    pub matches: Vec<(u64, MatchOutcome)>,
    pub steps: Vec<StepRecord>,
    pub metrics: SessionMetrics,
}

impl ReplayOutput {
    pub fn event_trace(&self) -> String {
        self.events.iter().map(|e| e.trace_line() + "\n").collect()
    }

    pub fn match_trace(&self) -> String {
        self.matches
            .iter()
            .map(|(t, o)| format!("{t},{}\n", o.trace_fields()))
            .collect()
    }

    pub fn step_trace(&self) -> String {
        self.steps
            .iter()
            .map(|s| step_trace_line(s.t, s.phase, &s.command) + "\n")
            .collect()
    }

    fn record(&mut self, step: PipelineStep) {
        self.events.extend(step.event);
        self.matches.extend(step.report.outcomes);
        self.steps.push(StepRecord {
            t: step.t,
            phase: step.phase,
            command: step.report.command,
        });
    }
}

/// Runs samples through the full pipeline without a task.
pub fn replay(samples: &[Sample], config: &EngineConfig, kind: InterfaceKind) -> Result<ReplayOutput, ReplayError> {
    let mut out = ReplayOutput::default();
    let Some(first) = samples.first() else {
        return Ok(out);
    };
    let mut pipeline = Pipeline::new(config, kind, None, first.t);
    for (i, &sample) in samples.iter().enumerate() {
        // header is line 1
        let line = i as u64 + 2;
        let step = pipeline
            .step(sample)
            .map_err(|source| ReplayError::Pipeline { line, source })?;
        out.record(step);
    }
    let end = pipeline.finish().map_err(|source| ReplayError::Pipeline {
        line: samples.len() as u64 + 1,
        source,
    })?;
    if let Some(step) = end {
        out.record(step);
    }
    out.metrics = pipeline.metrics();
    Ok(out)
}

/// Builds a 100 Hz recording from `(volts, duration_ms)` segments.
pub fn synthesize(segments: &[(f64, u64)]) -> Vec<Sample> {
    let mut samples = Vec::new();
    let mut t = 0;
    for &(v, duration) in segments {
        let end = t + duration;
        while t < end {
            samples.push(Sample::new(t, v));
            t += 10;
        }
    }
    samples
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_recording() {
        let samples = read_recording("t_ms,v\n".as_bytes()).unwrap();
        let out = replay(&samples, &EngineConfig::default(), InterfaceKind::Asp).unwrap();
        assert_eq!(out, ReplayOutput::default());
        assert_eq!(out.event_trace(), "");
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = read_recording("t_ms,v\n0,2.5\n10,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, ReplayError::Malformed { line: 3, .. }), "{err}");
        let err = read_recording("time,volts\n0,2.5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, ReplayError::Malformed { line: 1, .. }));
        let err = read_recording("t_ms,v\n0,2.5\n10\n".as_bytes()).unwrap_err();
        assert!(matches!(err, ReplayError::Malformed { line: 3, .. }), "{err}");
    }

    #[test]
    fn non_monotonic_recording_fails_with_line() {
        let samples = read_recording("t_ms,v\n0,2.5\n10,2.5\n10,2.5\n".as_bytes()).unwrap();
        let err = replay(&samples, &EngineConfig::default(), InterfaceKind::Asp).unwrap_err();
        assert!(matches!(err, ReplayError::Pipeline { line: 4, .. }), "{err}");
    }

    #[test]
    fn recording_round_trips_through_text() {
        let samples = synthesize(&[(2.5, 50), (4.0, 30), (1.25, 20)]);
        assert_eq!(read_recording(write_recording(&samples).as_bytes()).unwrap(), samples);
    }

    #[test]
    fn open_peak_is_flushed_at_end() {
        let samples = synthesize(&[(2.5, 100), (4.0, 300)]);
        let out = replay(&samples, &EngineConfig::default(), InterfaceKind::Asp).unwrap();
        assert_eq!(out.event_trace(), "100,390,-1\n");
    }
}
