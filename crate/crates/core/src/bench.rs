//! Paired virtual-user benchmark of interfaces across tasks.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::TaskSpec;
use crate::config::EngineConfig;
use crate::controller::InterfaceKind;
use crate::pipeline::SessionMetrics;
use crate::sim::{simulate_session, SimError, VirtualUserModel};
use crate::stats::{mean_sd, wilcoxon_signed_rank, Alternative, StatsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("need at least 2 seeds, got {0}")]
    TooFewSeeds(u64),
    #[error("need at least one task and one interface")]
    NothingToRun,
    #[error("task {task}, {interface}, seed {seed}: {source}")]
    Session {
        task: String,
        interface: &'static str,
        seed: u64,
        #[source]
        source: SimError,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub tasks: Vec<TaskSpec>,
    pub interfaces: Vec<InterfaceKind>,
    pub model: VirtualUserModel,
    pub seeds: u64,
    pub base_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let (mean, sd) = mean_sd(values);
        Self {
            mean,
            sd,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub task: String,
    pub interface: InterfaceKind,
    pub seed: u64,
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub task: String,
    pub interface: InterfaceKind,
    pub sessions: usize,
    pub completion_ms: Summary,
    pub moving_ms: Summary,
    pub wasted_ms: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub alternative: Alternative,
    /// Non-zero differences; 0 when every pair was tied.
    pub n: usize,
    pub w_plus: f64,
    pub p_value: f64,
}

impl PairedTest {
    /// All-zero differences are reported as no difference (p = 1).
    fn run(pairs: &[(f64, f64)], alternative: Alternative) -> Result<Self, StatsError> {
        match wilcoxon_signed_rank(pairs, alternative) {
            Ok(r) => Ok(Self {
                alternative,
                n: r.n,
                w_plus: r.w_plus,
                p_value: r.p_value,
            }),
            Err(StatsError::AllZero) => Ok(Self {
                alternative,
                n: 0,
                w_plus: 0.0,
                p_value: 1.0,
            }),
            Err(e) => Err(e),
        }
    }
}

/// First interface against the second, paired by seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub task: String,
    pub a: InterfaceKind,
    pub b: InterfaceKind,
    /// One-tailed: `a` completes faster than `b`.
    pub completion: PairedTest,
    /// Two-sided test on moving time.
    pub moving: PairedTest,
    /// Relative completion-time reduction of `a` against `b`, in [0, 1] when `a` is faster.
    pub completion_reduction: f64,
    pub mean_moving_diff_ms: f64,
    pub sd_moving_diff_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub sessions: Vec<SessionRecord>,
    pub rows: Vec<BenchRow>,
    pub comparisons: Vec<Comparison>,
}

pub fn bench_report(spec: &BenchSpec, config: &EngineConfig) -> Result<BenchReport, BenchError> {
    if spec.seeds < 2 {
        return Err(BenchError::TooFewSeeds(spec.seeds));
    }
    if spec.tasks.is_empty() || spec.interfaces.is_empty() {
        return Err(BenchError::NothingToRun);
    }
    let jobs: Vec<(usize, usize, u64)> = (0..spec.tasks.len())
        .flat_map(|t| {
            (0..spec.interfaces.len()).flat_map(move |i| (0..spec.seeds).map(move |s| (t, i, s)))
        })
        .collect();
    let mut results = jobs
        .par_iter()
        .map(|&(t, i, s)| {
            let seed = spec.base_seed + s;
            let task = &spec.tasks[t];
            let kind = spec.interfaces[i];
            simulate_session(task, kind, &spec.model.with_seed(seed), config)
                .map(|metrics| ((t, i, seed), metrics))
                .map_err(|source| BenchError::Session {
                    task: task.id.clone(),
                    interface: kind.as_str(),
                    seed,
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    results.sort_by_key(|(key, _)| *key);

    let metrics_of = |t: usize, i: usize| -> Vec<SessionMetrics> {
        results
            .iter()
            .filter(|((rt, ri, _), _)| *rt == t && *ri == i)
            .map(|(_, m)| *m)
            .collect()
    };

    let mut rows = Vec::new();
    let mut comparisons = Vec::new();
    for (t, task) in spec.tasks.iter().enumerate() {
        for (i, &interface) in spec.interfaces.iter().enumerate() {
            let m = metrics_of(t, i);
            let col = |f: fn(&SessionMetrics) -> u64| m.iter().map(|x| f(x) as f64).collect::<Vec<_>>();
            rows.push(BenchRow {
                task: task.id.clone(),
                interface,
                sessions: m.len(),
                completion_ms: Summary::of(&col(|x| x.completion_ms)),
                moving_ms: Summary::of(&col(|x| x.moving_ms)),
                wasted_ms: Summary::of(&col(|x| x.wasted_ms)),
            });
        }
        if spec.interfaces.len() >= 2 {
            let a = metrics_of(t, 0);
            let b = metrics_of(t, 1);
            let completion: Vec<(f64, f64)> = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x.completion_ms as f64, y.completion_ms as f64))
                .collect();
            let moving: Vec<(f64, f64)> = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x.moving_ms as f64, y.moving_ms as f64))
                .collect();
            let moving_diffs: Vec<f64> = moving.iter().map(|(x, y)| x - y).collect();
            let (mean_moving_diff_ms, sd_moving_diff_ms) = mean_sd(&moving_diffs);
            let mean_a = completion.iter().map(|p| p.0).sum::<f64>() / completion.len() as f64;
            let mean_b = completion.iter().map(|p| p.1).sum::<f64>() / completion.len() as f64;
            comparisons.push(Comparison {
                task: task.id.clone(),
                a: spec.interfaces[0],
                b: spec.interfaces[1],
                completion: PairedTest::run(&completion, Alternative::Less)?,
                moving: PairedTest::run(&moving, Alternative::TwoSided)?,
                completion_reduction: if mean_b > 0.0 { 1.0 - mean_a / mean_b } else { 0.0 },
                mean_moving_diff_ms,
                sd_moving_diff_ms,
            });
        }
    }

    let sessions = results
        .into_iter()
        .map(|((t, i, seed), metrics)| SessionRecord {
            task: spec.tasks[t].id.clone(),
            interface: spec.interfaces[i],
            seed,
            metrics,
        })
        .collect();
    Ok(BenchReport {
        sessions,
        rows,
        comparisons,
    })
}

impl BenchReport {
    /// Human-readable table, times in seconds.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:<4} {:>4}  {:>22}  {:>22}  {:>22}",
            "task", "if", "n", "completion s (mean±sd)", "moving s (mean±sd)", "wasted s (mean±sd)"
        );
        let cell = |s: &Summary| format!("{:.1}±{:.1} [{:.1},{:.1}]", s.mean / 1e3, s.sd / 1e3, s.min / 1e3, s.max / 1e3);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<14} {:<4} {:>4}  {:>22}  {:>22}  {:>22}",
                r.task,
                r.interface.as_str(),
                r.sessions,
                cell(&r.completion_ms),
                cell(&r.moving_ms),
                cell(&r.wasted_ms)
            );
        }
        for c in &self.comparisons {
            let _ = writeln!(
                out,
                "{}: {} vs {}  completion -{:.0}%  p(less)={:.3e}  moving diff {:.0}±{:.0} ms  p(two-sided)={:.3}",
                c.task,
                c.a.as_str(),
                c.b.as_str(),
                c.completion_reduction * 100.0,
                c.completion.p_value,
                c.mean_moving_diff_ms,
                c.sd_moving_diff_ms,
                c.moving.p_value
            );
        }
        out
    }

    /// One JSON object per line, tagged by `record`: session, row, comparison.
    pub fn to_json_lines(&self) -> String {
        #[derive(Serialize)]
        #[serde(tag = "record", rename_all = "snake_case")]
        enum Line<'a> {
            Session(&'a SessionRecord),
            Row(&'a BenchRow),
            Comparison(&'a Comparison),
        }
        let lines = self
            .sessions
            .iter()
            .map(Line::Session)
            .chain(self.rows.iter().map(Line::Row))
            .chain(self.comparisons.iter().map(Line::Comparison));
        lines
            .map(|l| serde_json::to_string(&l).expect("report serializes") + "\n")
            .collect()
    }
}
