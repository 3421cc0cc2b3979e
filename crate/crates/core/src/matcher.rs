//! Online matching of peak codes against the user-defined sequence library.
//!
//! The library is compiled into a trie over the four-letter alphabet. Each
//! pushed code walks one edge; the node reached decides the outcome:
//!
//! * terminal, no children: matched right away
//! * terminal with children: pending until the next code or the timeout
//! * inner node: pending, waiting for more codes
//! * no edge: the current sequence is dropped
//!
//! Timeouts are driven by [`Matcher::tick`] with caller-supplied time.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mode::ControlMode;
use crate::signal::Code;

pub const DEFAULT_T_MATCH_MS: u64 = 1500;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LibraryError {
    #[error("sequences `{first}` and `{second}` have identical codes")]
    DuplicateCodes { first: String, second: String },
    #[error("sequence id `{0}` is used more than once")]
    DuplicateId(String),
    #[error("sequence `{0}` has no codes")]
    EmptyCodes(String),
    #[error("sequence `{id}`: unknown code symbol {code}")]
    UnknownCode { id: String, code: i64 },
    #[error("sequence `{id}`: unknown mode `{mode}`")]
    UnknownMode { id: String, mode: String },
    #[error("t_match_ms must be positive")]
    ZeroTimeout,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchError {
    #[error("time went backwards: {t} ms < {last} ms")]
    NonMonotonic { t: u64, last: u64 },
    #[error("invalid code {0}")]
    InvalidCode(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserDefinedSequence {
    pub id: String,
    pub codes: Vec<Code>,
    pub mode: ControlMode,
}

impl UserDefinedSequence {
    pub fn new(id: impl Into<String>, codes: Vec<Code>, mode: ControlMode) -> Self {
        Self {
            id: id.into(),
            codes,
            mode,
        }
    }
}

/// A validated set of sequences plus the completion timeout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SequenceLibrary {
    sequences: Vec<UserDefinedSequence>,
    t_match_ms: u64,
}

impl SequenceLibrary {
    pub fn new(sequences: Vec<UserDefinedSequence>, t_match_ms: u64) -> Result<Self, LibraryError> {
        if t_match_ms == 0 {
            return Err(LibraryError::ZeroTimeout);
        }
        let mut ids = HashSet::new();
        for (i, uds) in sequences.iter().enumerate() {
            if uds.codes.is_empty() {
                return Err(LibraryError::EmptyCodes(uds.id.clone()));
            }
            if !ids.insert(uds.id.as_str()) {
                return Err(LibraryError::DuplicateId(uds.id.clone()));
            }
            if let Some(prev) = sequences[..i].iter().find(|p| p.codes == uds.codes) {
                return Err(LibraryError::DuplicateCodes {
                    first: prev.id.clone(),
                    second: uds.id.clone(),
                });
            }
        }
        Ok(Self {
            sequences,
            t_match_ms,
        })
    }

    pub fn empty(t_match_ms: u64) -> Self {
        Self {
            sequences: Vec::new(),
            t_match_ms: t_match_ms.max(1),
        }
    }

    pub fn sequences(&self) -> &[UserDefinedSequence] {
        &self.sequences
    }

    pub fn t_match_ms(&self) -> u64 {
        self.t_match_ms
    }

    pub fn get(&self, id: &str) -> Option<&UserDefinedSequence> {
        self.sequences.iter().find(|s| s.id == id)
    }

    /// First sequence bound to `mode`, in library order.
    pub fn sequence_for(&self, mode: ControlMode) -> Option<&UserDefinedSequence> {
        self.sequences.iter().find(|s| s.mode == mode)
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetReason {
    Timeout,
    NoCandidate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatchOutcome {
    Idle,
    Pending { candidates: Vec<String> },
    Matched { id: String, mode: ControlMode },
    Reset { reason: ResetReason },
}

impl MatchOutcome {
    pub fn is_pending(&self) -> bool {
        matches!(self, MatchOutcome::Pending { .. })
    }

    pub fn matched_id(&self) -> Option<&str> {
        match self {
            MatchOutcome::Matched { id, .. } => Some(id),
            _ => None,
        }
    }

    /// `kind,detail` trace fields; candidates joined with `|`.
    pub fn trace_fields(&self) -> String {
        match self {
            MatchOutcome::Idle => "idle,".to_string(),
            MatchOutcome::Pending { candidates } => format!("pending,{}", candidates.join("|")),
            MatchOutcome::Matched { id, .. } => format!("matched,{id}"),
            MatchOutcome::Reset { reason } => match reason {
                ResetReason::Timeout => "reset,timeout".to_string(),
                ResetReason::NoCandidate => "reset,no_candidate".to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Node {
    children: [Option<usize>; 4],
    /// Index of the sequence ending exactly here.
    terminal: Option<usize>,
    /// Sequences reachable from this node (self included), sorted by id.
    candidates: Vec<usize>,
}

impl Node {
    fn has_descendants(&self) -> bool {
        self.children.iter().any(Option::is_some)
    }
}

#[derive(Debug, Clone)]
struct Trie {
    nodes: Vec<Node>,
}

impl Trie {
    const ROOT: usize = 0;

    fn build(library: &SequenceLibrary) -> Self {
        let mut nodes = vec![Node::default()];
        let mut order: Vec<usize> = (0..library.len()).collect();
        order.sort_by(|&a, &b| library.sequences[a].id.cmp(&library.sequences[b].id));
        for idx in order {
            let mut at = Self::ROOT;
            nodes[at].candidates.push(idx);
            for code in &library.sequences[idx].codes {
                let slot = code.index();
                at = match nodes[at].children[slot] {
                    Some(next) => next,
                    None => {
                        nodes.push(Node::default());
                        let next = nodes.len() - 1;
                        nodes[at].children[slot] = Some(next);
                        next
                    }
                };
                nodes[at].candidates.push(idx);
            }
            nodes[at].terminal = Some(idx);
        }
        Self { nodes }
    }
}

/// Current-sequence buffer plus the compiled library.
#[derive(Debug, Clone)]
pub struct Matcher {
    library: Arc<SequenceLibrary>,
    trie: Arc<Trie>,
    node: usize,
    current: Vec<Code>,
    last_event_t: u64,
    last_t: Option<u64>,
}

impl Matcher {
    pub fn new(library: Arc<SequenceLibrary>) -> Self {
        let trie = Arc::new(Trie::build(&library));
        Self {
            library,
            trie,
            node: Trie::ROOT,
            current: Vec::new(),
            last_event_t: 0,
            last_t: None,
        }
    }

    pub fn library(&self) -> &Arc<SequenceLibrary> {
        &self.library
    }

    /// The codes accumulated since the last match or reset.
    pub fn current(&self) -> &[Code] {
        &self.current
    }

    pub fn last_event_t(&self) -> Option<u64> {
        (!self.current.is_empty()).then_some(self.last_event_t)
    }

    /// Time left before a tick would resolve the current sequence.
    pub fn remaining_ms(&self, now: u64) -> Option<u64> {
        self.last_event_t()
            .map(|t| (t + self.library.t_match_ms).saturating_sub(now))
    }

    pub fn outcome(&self) -> MatchOutcome {
        if self.current.is_empty() {
            MatchOutcome::Idle
        } else {
            self.pending()
        }
    }

    pub fn push_raw(&mut self, code: i64, t: u64) -> Result<MatchOutcome, MatchError> {
        let code = Code::try_from(code).map_err(|_| MatchError::InvalidCode(code))?;
        self.push(code, t)
    }

    /// Appends one code, `t` being the offset time of its peak.
    pub fn push(&mut self, code: Code, t: u64) -> Result<MatchOutcome, MatchError> {
        self.check_time(t)?;
        self.last_t = Some(t);
        let Some(next) = self.trie.nodes[self.node].children[code.index()] else {
            self.clear();
            return Ok(MatchOutcome::Reset {
                reason: ResetReason::NoCandidate,
            });
        };
        self.node = next;
        self.current.push(code);
        self.last_event_t = t;
        let node = &self.trie.nodes[next];
        match node.terminal {
            Some(idx) if !node.has_descendants() => Ok(self.matched(idx)),
            _ => Ok(self.pending()),
        }
    }

    /// Applies the completion timeout at time `now`.
    pub fn tick(&mut self, now: u64) -> Result<MatchOutcome, MatchError> {
        self.check_time(now)?;
        self.last_t = Some(now);
        if self.current.is_empty() {
            return Ok(MatchOutcome::Idle);
        }
        if now - self.last_event_t < self.library.t_match_ms {
            return Ok(self.pending());
        }
        match self.trie.nodes[self.node].terminal {
            Some(idx) => Ok(self.matched(idx)),
            None => {
                self.clear();
                Ok(MatchOutcome::Reset {
                    reason: ResetReason::Timeout,
                })
            }
        }
    }

    /// Clears the current sequence. Time monotonicity is kept.
    pub fn reset(&mut self) {
        self.clear();
    }

    fn check_time(&self, t: u64) -> Result<(), MatchError> {
        match self.last_t {
            Some(last) if t < last => Err(MatchError::NonMonotonic { t, last }),
            _ => Ok(()),
        }
    }

    fn clear(&mut self) {
        self.node = Trie::ROOT;
        self.current.clear();
    }

    fn matched(&mut self, idx: usize) -> MatchOutcome {
        self.clear();
        let uds = &self.library.sequences[idx];
        MatchOutcome::Matched {
            id: uds.id.clone(),
            mode: uds.mode,
        }
    }

    fn pending(&self) -> MatchOutcome {
        MatchOutcome::Pending {
            candidates: self.trie.nodes[self.node]
                .candidates
                .iter()
                .map(|&i| self.library.sequences[i].id.clone())
                .collect(),
        }
    }
}
