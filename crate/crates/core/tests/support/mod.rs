//! Reference implementations used as test oracles. They recompute every
//! answer from scratch and share no code with the library.

#![allow(dead_code)]

use sipmatch::matcher::{MatchOutcome, ResetReason};
use sipmatch::signal::Code;

/// Brute-force matcher: each step rescans the whole library.
pub struct RefMatcher {
    pub library: Vec<(String, Vec<i64>)>,
    pub t_match_ms: u64,
    cs: Vec<i64>,
    last_event_t: u64,
}

impl RefMatcher {
    pub fn new(library: Vec<(String, Vec<i64>)>, t_match_ms: u64) -> Self {
        Self {
            library,
            t_match_ms,
            cs: Vec::new(),
            last_event_t: 0,
        }
    }

    fn candidates(&self, cs: &[i64]) -> Vec<String> {
        let mut ids: Vec<String> = self
            .library
            .iter()
            .filter(|(_, codes)| codes.len() >= cs.len() && codes[..cs.len()] == *cs)
            .map(|(id, _)| id.clone())
            .collect();
        ids.sort();
        ids
    }

    fn exact(&self, cs: &[i64]) -> Option<String> {
        self.library.iter().find(|(_, c)| c == cs).map(|(id, _)| id.clone())
    }

    fn longer_exists(&self, cs: &[i64]) -> bool {
        self.library
            .iter()
            .any(|(_, c)| c.len() > cs.len() && c[..cs.len()] == *cs)
    }

    pub fn push(&mut self, code: i64, t: u64) -> Outcome {
        let mut next = self.cs.clone();
        next.push(code);
        let exact = self.exact(&next);
        let longer = self.longer_exists(&next);
        match (exact, longer) {
            (None, false) => {
                self.cs.clear();
                Outcome::Reset(ResetReason::NoCandidate)
            }
            (Some(id), false) => {
                self.cs.clear();
                Outcome::Matched(id)
            }
            _ => {
                self.cs = next;
                self.last_event_t = t;
                Outcome::Pending(self.candidates(&self.cs))
            }
        }
    }

    pub fn tick(&mut self, now: u64) -> Outcome {
        if self.cs.is_empty() {
            return Outcome::Idle;
        }
        if now < self.last_event_t + self.t_match_ms {
            return Outcome::Pending(self.candidates(&self.cs));
        }
        let exact = self.exact(&self.cs);
        self.cs.clear();
        match exact {
            Some(id) => Outcome::Matched(id),
            None => Outcome::Reset(ResetReason::Timeout),
        }
    }

    pub fn current(&self) -> &[i64] {
        &self.cs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Idle,
    Pending(Vec<String>),
    Matched(String),
    Reset(ResetReason),
}

impl From<&MatchOutcome> for Outcome {
    fn from(o: &MatchOutcome) -> Self {
        match o {
            MatchOutcome::Idle => Outcome::Idle,
            MatchOutcome::Pending { candidates } => Outcome::Pending(candidates.clone()),
            MatchOutcome::Matched { id, .. } => Outcome::Matched(id.clone()),
            MatchOutcome::Reset { reason } => Outcome::Reset(*reason),
        }
    }
}

pub const ALPHABET: [i64; 4] = [1, 2, -1, -2];

pub fn code(v: i64) -> Code {
    Code::try_from(v).unwrap()
}

/// Every code list of length 1..=max_len.
pub fn all_words(max_len: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|w| {
                ALPHABET.iter().map(move |&c| {
                    let mut w = w.clone();
                    w.push(c);
                    w
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Exact p-value by listing every sign pattern. Ranks are computed
/// pairwise, ties sharing the mean of the positions they span.
pub fn wilcoxon_by_enumeration(pairs: &[(f64, f64)], alternative: &str) -> f64 {
    let d: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    // doubled rank: 2 * (below + (equal + 1) / 2) = 2*below + equal + 1
    let rank2: Vec<u64> = abs
        .iter()
        .map(|&x| {
            let below = abs.iter().filter(|&&y| y < x).count() as u64;
            let equal = abs.iter().filter(|&&y| y == x).count() as u64;
            2 * below + equal + 1
        })
        .collect();
    let observed: u64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| rank2[i]).sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| rank2[i]).sum();
        if w <= observed {
            le += 1;
        }
        if w >= observed {
            ge += 1;
        }
    }
    let total = (1u64 << n) as f64;
    let (pl, pg) = (le as f64 / total, ge as f64 / total);
    match alternative {
        "less" => pl,
        "greater" => pg,
        _ => (2.0 * pl.min(pg)).min(1.0),
    }
}
