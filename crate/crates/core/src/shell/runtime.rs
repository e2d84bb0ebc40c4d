//! The shell loop: activate, then per tick inject inputs as facts, solve,
//! select one answer set, elicit outputs and query results, and retract
//! inputs; finally stop.
//!
//! Shell operations are pure: they take a [`ShellState`] by value and hand
//! back the successor state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::descriptor::{Retention, ServiceDescriptor};
use crate::asp::{solve, AnswerSet, AspError, Atom, Substitution};
use crate::query::{query, QueryMode, QueryResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    NoOperation,
    Active,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Requester {
    /// Sensor pushes expect no answer.
    Sensor,
    Component(String),
}

impl fmt::Display for Requester {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Requester::Sensor => f.write_str("SENSOR"),
            Requester::Component(name) => f.write_str(name),
        }
    }
}

/// What a requester is waiting for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expectation {
    /// Output atoms matching any of these patterns.
    Outputs(Vec<Atom>),
    /// The truth value of a query on the entry's atom. Such entries are
    /// never injected as facts.
    Query(QueryMode),
}

/// One row of the input/output table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IoEntry {
    pub input: Atom,
    pub requester: Requester,
    pub expected_output: Option<Expectation>,
    pub retain: bool,
    pub message_id: Option<u64>,
}

impl IoEntry {
    fn is_fact(&self) -> bool {
        !matches!(self.expected_output, Some(Expectation::Query(_)))
    }
}

/// An input arriving during a tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arrival {
    pub atom: Atom,
    pub requester: Requester,
    pub message_id: Option<u64>,
    /// `None` means "whatever the requester kind implies": nothing for
    /// sensors, every output for components.
    pub expected: Option<Expectation>,
}

impl Arrival {
    pub fn sensor(atom: Atom) -> Self {
        Arrival {
            atom,
            requester: Requester::Sensor,
            message_id: None,
            expected: None,
        }
    }

    pub fn request(atom: Atom, requester: impl Into<String>, message_id: u64) -> Self {
        Arrival {
            atom,
            requester: Requester::Component(requester.into()),
            message_id: Some(message_id),
            expected: None,
        }
    }

    pub fn query(mode: QueryMode, atom: Atom, requester: impl Into<String>, message_id: u64) -> Self {
        Arrival {
            atom,
            requester: Requester::Component(requester.into()),
            message_id: Some(message_id),
            expected: Some(Expectation::Query(mode)),
        }
    }

    pub fn expecting(mut self, patterns: Vec<Atom>) -> Self {
        self.expected = Some(Expectation::Outputs(patterns));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShellState {
    pub phase: Phase,
    /// Facts injected on top of the inner program: signals plus the inputs
    /// of the current io table.
    pub current_facts: BTreeSet<Atom>,
    pub io_table: Vec<IoEntry>,
    pub tick_count: u64,
    /// Tick period in abstract time units; the caller drives the clock.
    pub frequency: u64,
    signals: BTreeSet<Atom>,
}

impl Default for ShellState {
    fn default() -> Self {
        ShellState::new(1)
    }
}

impl ShellState {
    pub fn new(frequency: u64) -> Self {
        ShellState {
            phase: Phase::NoOperation,
            current_facts: BTreeSet::new(),
            io_table: Vec::new(),
            tick_count: 0,
            frequency,
            signals: BTreeSet::new(),
        }
    }

    fn refresh_facts(&mut self) {
        self.current_facts = self
            .signals
            .iter()
            .cloned()
            .chain(
                self.io_table
                    .iter()
                    .filter(|e| e.is_fact())
                    .map(|e| e.input.clone()),
            )
            .collect();
    }
}

pub type SelectFn = Arc<dyn Fn(&[AnswerSet]) -> usize + Send + Sync>;

/// Picks one answer set out of several.
#[derive(Clone, Default)]
pub enum SelectionPolicy {
    #[default]
    First,
    /// Highest total weight of contained atoms; ties go to the earlier set.
    Maximize(BTreeMap<Atom, i64>),
    Custom(SelectFn),
}

impl fmt::Debug for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionPolicy::First => f.write_str("First"),
            SelectionPolicy::Maximize(w) => f.debug_tuple("Maximize").field(w).finish(),
            SelectionPolicy::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Index of the selected set. `sets` must be nonempty.
pub fn select_index(sets: &[AnswerSet], policy: &SelectionPolicy) -> usize {
    assert!(!sets.is_empty(), "selection needs at least one answer set");
    match policy {
        SelectionPolicy::First => 0,
        SelectionPolicy::Maximize(weights) => {
            let score = |s: &AnswerSet| -> i64 { s.iter().filter_map(|a| weights.get(a)).sum() };
            let mut best = 0;
            for (i, s) in sets.iter().enumerate().skip(1) {
                if score(s) > score(&sets[best]) {
                    best = i;
                }
            }
            best
        }
        SelectionPolicy::Custom(pick) => pick(sets).min(sets.len() - 1),
    }
}

pub fn select_answer_set<'a>(sets: &'a [AnswerSet], policy: &SelectionPolicy) -> &'a AnswerSet {
    &sets[select_index(sets, policy)]
}

/// Entries that the retention mode retracts.
pub fn retention_filter(entries: &[IoEntry], mode: &Retention) -> Vec<IoEntry> {
    entries
        .iter()
        .filter(|e| match mode {
            Retention::Stateless => true,
            Retention::Stateful(keep) => !keep.contains(&e.input.predicate),
        })
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShellError {
    #[error("the service is stopped")]
    Stopped,
    #[error("the service is not active")]
    NotActive,
    #[error("`{0}` matches no input schema")]
    UnexpectedInput(Atom),
    #[error("input `{0}` is not ground")]
    NonGround(Atom),
    #[error(transparent)]
    Asp(#[from] AspError),
}

pub fn activate(mut state: ShellState, d: &ServiceDescriptor) -> Result<ShellState, ShellError> {
    match state.phase {
        Phase::Stopped => Err(ShellError::Stopped),
        Phase::Active => Ok(state),
        Phase::NoOperation => {
            if let Some(a) = &d.activation {
                state.signals.insert(a.clone());
            }
            state.phase = Phase::Active;
            state.refresh_facts();
            Ok(state)
        }
    }
}

/// Moves the shell to its terminal phase. The stop atom, when declared, is
/// added as a fact; the activation fact stays.
pub fn stop(mut state: ShellState, d: &ServiceDescriptor) -> ShellState {
    if state.phase != Phase::Stopped {
        if let Some(s) = &d.stop {
            state.signals.insert(s.clone());
        }
        state.phase = Phase::Stopped;
        state.refresh_facts();
    }
    state
}

/// Reply owed to one io-table entry after a tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplyBody {
    Outputs(Vec<Atom>),
    Query(QueryResult),
    Failure(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reply {
    pub entry: IoEntry,
    pub body: ReplyBody,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TickOutcome {
    /// Output atoms of the selected answer set paired with the entry that
    /// asked for them.
    pub outputs: Vec<(IoEntry, Atom)>,
    /// The descriptor's queries over all answer sets (empty when
    /// inconsistent).
    pub query_results: Vec<QueryResult>,
    /// One reply per entry of this tick that expects an answer.
    pub replies: Vec<Reply>,
    pub answer_set_count: usize,
    pub selected: Option<AnswerSet>,
    pub state: ShellState,
}

impl TickOutcome {
    pub fn is_failure(&self) -> bool {
        self.selected.is_none()
    }
}

pub const INCONSISTENT: &str = "inconsistent: no answer set";

fn matches_any(patterns: &[Atom], atom: &Atom) -> bool {
    patterns
        .iter()
        .any(|p| p.match_ground(atom, &Substitution::new()).is_some())
}

/// Answer sets of the inner program plus the injected facts and `extra`.
pub fn answer_sets(
    state: &ShellState,
    d: &ServiceDescriptor,
    extra: &BTreeSet<Atom>,
) -> Result<Vec<AnswerSet>, AspError> {
    solve(&d.program.with_facts(state.current_facts.iter().chain(extra)))
}

/// One pass of the shell loop.
pub fn tick(
    mut state: ShellState,
    d: &ServiceDescriptor,
    arrivals: Vec<Arrival>,
    policy: &SelectionPolicy,
) -> Result<TickOutcome, ShellError> {
    match state.phase {
        Phase::Stopped => return Err(ShellError::Stopped),
        Phase::NoOperation => return Err(ShellError::NotActive),
        Phase::Active => {}
    }
    for a in &arrivals {
        if !a.atom.is_ground() {
            return Err(ShellError::NonGround(a.atom.clone()));
        }
        let is_query = matches!(a.expected, Some(Expectation::Query(_)));
        if !is_query && !matches_any(&d.inputs, &a.atom) {
            return Err(ShellError::UnexpectedInput(a.atom.clone()));
        }
    }

    // (i) annotate and inject
    let first_new = state.io_table.len();
    let retained = |atom: &Atom| match &d.retention {
        Retention::Stateless => false,
        Retention::Stateful(keep) => keep.contains(&atom.predicate),
    };
    for a in arrivals {
        let expected_output = match (a.expected, &a.requester) {
            (Some(e), _) => Some(e),
            (None, Requester::Sensor) => None,
            (None, Requester::Component(_)) => Some(Expectation::Outputs(d.outputs.clone())),
        };
        let is_query = matches!(expected_output, Some(Expectation::Query(_)));
        state.io_table.push(IoEntry {
            retain: !is_query && retained(&a.atom),
            input: a.atom,
            requester: a.requester,
            expected_output,
            message_id: a.message_id,
        });
    }
    state.refresh_facts();

    // (ii) solve, (iii) select
    let sets = answer_sets(&state, d, &BTreeSet::new())?;
    let selected = (!sets.is_empty()).then(|| select_answer_set(&sets, policy).clone());

    // (iv) outputs and (v) queries
    let mut outputs = Vec::new();
    let mut replies = Vec::new();
    let query_results: Vec<QueryResult> = if sets.is_empty() {
        Vec::new()
    } else {
        d.queries
            .iter()
            .map(|(mode, atom)| query(*mode, atom, &sets))
            .collect::<Result<_, _>>()
            .map_err(|_| ShellError::NonGround(Atom::prop("query")))?
    };
    for entry in &state.io_table[first_new..] {
        let Some(expected) = &entry.expected_output else {
            continue;
        };
        let body = match (&selected, expected) {
            (None, _) => ReplyBody::Failure(INCONSISTENT.to_string()),
            (Some(chosen), Expectation::Outputs(patterns)) => {
                let atoms: Vec<Atom> = chosen
                    .iter()
                    .filter(|a| matches_any(&d.outputs, a) && matches_any(patterns, a))
                    .cloned()
                    .collect();
                outputs.extend(atoms.iter().map(|a| (entry.clone(), a.clone())));
                ReplyBody::Outputs(atoms)
            }
            (Some(_), Expectation::Query(mode)) => match query(*mode, &entry.input, &sets) {
                Ok(result) => ReplyBody::Query(result),
                Err(e) => ReplyBody::Failure(e.to_string()),
            },
        };
        replies.push(Reply {
            entry: entry.clone(),
            body,
        });
    }

    // (vi) retract; query entries are always answered and dropped
    let remove = retention_filter(&state.io_table, &d.retention);
    state
        .io_table
        .retain(|e| e.is_fact() && e.retain && !remove.contains(e));
    state.refresh_facts();
    state.tick_count += 1;

    Ok(TickOutcome {
        outputs,
        query_results,
        replies,
        answer_set_count: sets.len(),
        selected,
        state,
    })
}

/// Consequences of the service as seen from outside: the selected answer
/// set plus an atom for every true query result. `None` when inconsistent.
pub fn consequences(
    state: &ShellState,
    d: &ServiceDescriptor,
    extra: &BTreeSet<Atom>,
    policy: &SelectionPolicy,
) -> Result<Option<(AnswerSet, Vec<QueryResult>)>, AspError> {
    let sets = answer_sets(state, d, extra)?;
    if sets.is_empty() {
        return Ok(None);
    }
    let chosen = select_answer_set(&sets, policy).clone();
    let results = d
        .queries
        .iter()
        .filter_map(|(mode, atom)| query(*mode, atom, &sets).ok())
        .collect();
    Ok(Some((chosen, results)))
}
