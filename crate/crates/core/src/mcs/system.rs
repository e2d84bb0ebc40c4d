use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bridge::{app, resolve_designators, BridgeRule, Management, UnknownContext};
use crate::asp::{AnswerSet, AspError, Atom};
use crate::messaging::{Registry, RegistryEntry, RegistryError};
use crate::query::{eval_query, QueryMode};
use crate::shell::{
    activate, answer_sets, consequences, stop, Phase, SelectionPolicy, ServiceDescriptor,
    ShellError, ShellState,
};

pub const DEFAULT_MAX_ITER: usize = 1000;

/// Decides whether an applicable rule is actually applied at a time point.
/// Caller-supplied trigger: (time, rule, destination knowledge) -> fires.
pub type TriggerFn = Arc<dyn Fn(u64, &BridgeRule, &BTreeSet<Atom>) -> bool + Send + Sync>;

#[derive(Clone, Default)]
pub enum Trigger {
    #[default]
    Always,
    /// Rules fire only for `from <= T <= to`.
    Window { from: u64, to: u64 },
    /// Rules fire only while the query holds on the destination's own
    /// knowledge (its answer sets, or its facts for a fact store).
    Query(QueryMode, Atom),
    Custom(TriggerFn),
}

impl fmt::Debug for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::Always => f.write_str("Always"),
            Trigger::Window { from, to } => write!(f, "Window({from}..={to})"),
            Trigger::Query(m, a) => write!(f, "Query({m} {a})"),
            Trigger::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ContextKind {
    /// A scripted context whose consequences are exactly its facts.
    FactStore,
    Service {
        descriptor: ServiceDescriptor,
        shell: ShellState,
        policy: SelectionPolicy,
    },
}

#[derive(Debug, Clone)]
pub struct Context {
    pub name: String,
    pub roles: BTreeSet<String>,
    pub kind: ContextKind,
    /// Facts: the whole store, or the facts injected into a service on top
    /// of its program.
    pub kb: BTreeSet<Atom>,
    pub trigger: Trigger,
}

impl Context {
    pub fn fact_store<I: IntoIterator<Item = Atom>>(name: impl Into<String>, facts: I) -> Self {
        Context {
            name: name.into(),
            roles: BTreeSet::new(),
            kind: ContextKind::FactStore,
            kb: facts.into_iter().collect(),
            trigger: Trigger::Always,
        }
    }

    pub fn service(name: impl Into<String>, descriptor: ServiceDescriptor, policy: SelectionPolicy) -> Self {
        Context {
            name: name.into(),
            roles: BTreeSet::new(),
            kind: ContextKind::Service {
                descriptor,
                shell: ShellState::new(1),
                policy,
            },
            kb: BTreeSet::new(),
            trigger: Trigger::Always,
        }
    }

    pub fn with_roles<I, S>(mut self, roles: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.roles = roles.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_trigger(mut self, trigger: Trigger) -> Self {
        self.trigger = trigger;
        self
    }

    pub fn is_service(&self) -> bool {
        matches!(self.kind, ContextKind::Service { .. })
    }

    /// The context's consequences; `None` when a service has no answer set.
    pub fn acc(&self) -> Result<Option<BTreeSet<Atom>>, AspError> {
        match &self.kind {
            ContextKind::FactStore => Ok(Some(self.kb.clone())),
            ContextKind::Service {
                descriptor,
                shell,
                policy,
            } => Ok(consequences(shell, descriptor, &self.kb, policy)?.map(|(chosen, results)| {
                let mut out = chosen.atoms;
                out.extend(results.iter().filter_map(|r| r.as_atom()));
                out
            })),
        }
    }

    fn own_answer_sets(&self) -> Result<Vec<AnswerSet>, AspError> {
        match &self.kind {
            ContextKind::FactStore => Ok(vec![AnswerSet::new(self.kb.iter().cloned())]),
            ContextKind::Service { descriptor, shell, .. } => answer_sets(shell, descriptor, &self.kb),
        }
    }

    pub fn triggered(&self, time: u64, rule: &BridgeRule) -> Result<bool, AspError> {
        Ok(match &self.trigger {
            Trigger::Always => true,
            Trigger::Window { from, to } => (*from..=*to).contains(&time),
            Trigger::Query(mode, atom) => {
                let sets = self.own_answer_sets()?;
                !sets.is_empty() && eval_query(*mode, atom, &sets).unwrap_or(false)
            }
            Trigger::Custom(f) => f(time, rule, &self.kb),
        })
    }

    pub fn phase(&self) -> Option<Phase> {
        match &self.kind {
            ContextKind::Service { shell, .. } => Some(shell.phase),
            ContextKind::FactStore => None,
        }
    }
}

/// Per-context consequence sets plus the contexts whose consequences failed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataState {
    pub sets: BTreeMap<String, BTreeSet<Atom>>,
    pub failures: BTreeSet<String>,
}

impl DataState {
    pub fn get(&self, context: &str) -> Option<&BTreeSet<Atom>> {
        self.sets.get(context)
    }

    pub fn failed(&self, context: &str) -> bool {
        self.failures.contains(context)
    }
}

impl fmt::Display for DataState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, set) in &self.sets {
            let atoms: Vec<String> = set.iter().map(Atom::to_string).collect();
            let flag = if self.failed(name) { " FAILED" } else { "" };
            writeln!(f, "{name}{flag}: {{{}}}", atoms.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Update {
    Add(Vec<Atom>),
    Remove(Vec<Atom>),
    Activate,
    Stop,
}

impl fmt::Display for Update {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |atoms: &[Atom]| atoms.iter().map(Atom::to_string).collect::<Vec<_>>().join(", ");
        match self {
            Update::Add(a) => write!(f, "add {}", list(a)),
            Update::Remove(a) => write!(f, "remove {}", list(a)),
            Update::Activate => f.write_str("activate"),
            Update::Stop => f.write_str("stop"),
        }
    }
}

/// Updates per time point, applied in list order.
pub type Schedule = BTreeMap<u64, Vec<(String, Update)>>;

#[derive(Debug, Error)]
pub enum McsError {
    #[error("duplicate context `{0}`")]
    DuplicateContext(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    UnknownContext(#[from] UnknownContext),
    #[error("context `{context}`: {source}")]
    Asp {
        context: String,
        #[source]
        source: AspError,
    },
    #[error("context `{context}`: {source}")]
    Shell {
        context: String,
        #[source]
        source: ShellError,
    },
    #[error("`{0}` is not a service")]
    NotAService(String),
    #[error("no equilibrium after {iterations} steps{}", at.map(|t| format!(" at time {t}")).unwrap_or_default())]
    NoConvergence {
        iterations: usize,
        at: Option<u64>,
        previous: Box<DataState>,
        last: Box<DataState>,
    },
    #[error("transport: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub state: DataState,
    /// Steps taken, including the one confirming the fixpoint.
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedEntry {
    pub time: u64,
    pub state: DataState,
    pub steps: usize,
}

/// A multi-context system: contexts in declaration order and bridge rules.
#[derive(Debug, Clone)]
pub struct System {
    pub contexts: Vec<Context>,
    pub rules: Vec<BridgeRule>,
    pub max_iter: usize,
    concrete: Vec<BridgeRule>,
}

impl System {
    pub fn new(contexts: Vec<Context>, rules: Vec<BridgeRule>) -> Result<Self, McsError> {
        let registry = Registry::new();
        for c in &contexts {
            registry
                .register(RegistryEntry::new(c.name.clone(), c.roles.iter().cloned()))
                .map_err(|e| match e {
                    RegistryError::Duplicate(n) => McsError::DuplicateContext(n),
                })?;
        }
        let concrete: Vec<BridgeRule> = rules.iter().flat_map(|r| resolve_designators(r, &registry)).collect();
        for r in &concrete {
            for name in std::iter::once(&r.dest).chain(r.body.iter().map(|(c, _)| c)).filter_map(|c| c.name()) {
                if !registry.contains(name) {
                    return Err(UnknownContext(name.to_string()).into());
                }
            }
        }
        Ok(System {
            contexts,
            rules,
            max_iter: DEFAULT_MAX_ITER,
            concrete,
        })
    }

    pub fn registry(&self) -> Registry {
        let registry = Registry::new();
        for c in &self.contexts {
            registry
                .register(RegistryEntry::new(c.name.clone(), c.roles.iter().cloned()))
                .expect("names were checked at construction");
        }
        registry
    }

    /// Bridge rules with every designator replaced by a context name.
    pub fn concrete_rules(&self) -> &[BridgeRule] {
        &self.concrete
    }

    pub fn context(&self, name: &str) -> Option<&Context> {
        self.contexts.iter().find(|c| c.name == name)
    }

    pub fn context_mut(&mut self, name: &str) -> Result<&mut Context, McsError> {
        self.contexts
            .iter_mut()
            .find(|c| c.name == name)
            .ok_or_else(|| UnknownContext(name.to_string()).into())
    }

    pub fn all_monotone(&self) -> bool {
        self.rules.iter().all(|r| r.op.is_monotone())
    }

    /// Consequences of every context under its current knowledge base.
    pub fn observe(&self) -> Result<DataState, McsError> {
        let mut s = DataState::default();
        for c in &self.contexts {
            observe_into(c, &mut s)?;
        }
        Ok(s)
    }

    /// Concrete rules whose destination triggers them at `time`.
    pub fn triggered_rules(&self, time: Option<u64>) -> Result<Vec<BridgeRule>, McsError> {
        self.filter_triggered(&self.concrete, time)
    }

    pub fn filter_triggered(&self, rules: &[BridgeRule], time: Option<u64>) -> Result<Vec<BridgeRule>, McsError> {
        let mut out = Vec::new();
        for r in rules {
            let dest = r.dest.name().unwrap();
            let ctx = self.context(dest).ok_or_else(|| UnknownContext(dest.to_string()))?;
            let fires = match time {
                None => true,
                Some(t) => ctx.triggered(t, r).map_err(|source| McsError::Asp {
                    context: dest.to_string(),
                    source,
                })?,
            };
            if fires {
                out.push(r.clone());
            }
        }
        Ok(out)
    }

    /// One synchronous step: every context incorporates the heads of the
    /// rules applicable in `s` and recomputes its consequences.
    pub fn step(&mut self, s: &DataState) -> Result<DataState, McsError> {
        self.step_at(s, None)
    }

    pub fn step_at(&mut self, s: &DataState, time: Option<u64>) -> Result<DataState, McsError> {
        let rules = self.triggered_rules(time)?;
        let heads = app(&rules, &s.sets)?;
        let mut next = DataState::default();
        for c in &mut self.contexts {
            if let Some(hs) = heads.get(&c.name) {
                incorporate(&mut c.kb, hs);
            }
            observe_into(c, &mut next)?;
        }
        Ok(next)
    }

    pub fn compute_equilibrium(&mut self, initial: DataState, max_iter: usize) -> Result<Equilibrium, McsError> {
        self.equilibrium_at(initial, max_iter, None)
    }

    pub fn equilibrium_at(
        &mut self,
        initial: DataState,
        max_iter: usize,
        time: Option<u64>,
    ) -> Result<Equilibrium, McsError> {
        let mut s = initial;
        for steps in 1..=max_iter {
            let next = self.step_at(&s, time)?;
            if next == s {
                return Ok(Equilibrium { state: next, steps });
            }
            if steps == max_iter {
                return Err(McsError::NoConvergence {
                    iterations: steps,
                    at: time,
                    previous: Box::new(s),
                    last: Box::new(next),
                });
            }
            s = next;
        }
        Err(McsError::NoConvergence {
            iterations: 0,
            at: time,
            previous: Box::new(s.clone()),
            last: Box::new(s),
        })
    }

    pub fn apply_update(&mut self, context: &str, update: &Update) -> Result<(), McsError> {
        let c = self.context_mut(context)?;
        apply_update(c, update)
    }

    /// For each time point: apply scheduled updates, then settle into an
    /// equilibrium using only the rules triggered at that time.
    pub fn timed_run(&mut self, schedule: &Schedule, horizon: u64) -> Result<Vec<TimedEntry>, McsError> {
        let mut trace = Vec::new();
        for time in 0..=horizon {
            for (ctx, update) in schedule.get(&time).into_iter().flatten() {
                self.apply_update(ctx, update)?;
            }
            let start = self.observe()?;
            let eq = self.equilibrium_at(start, self.max_iter, Some(time))?;
            trace.push(TimedEntry {
                time,
                state: eq.state,
                steps: eq.steps,
            });
        }
        Ok(trace)
    }
}

pub(crate) fn observe_into(c: &Context, s: &mut DataState) -> Result<(), McsError> {
    let acc = c.acc().map_err(|source| McsError::Asp {
        context: c.name.clone(),
        source,
    })?;
    match acc {
        Some(set) => {
            s.sets.insert(c.name.clone(), set);
        }
        None => {
            s.sets.insert(c.name.clone(), BTreeSet::new());
            s.failures.insert(c.name.clone());
        }
    }
    Ok(())
}

/// Runs the management operators over a batch of heads, grouped by operator
/// in first-seen order.
pub(crate) fn incorporate(kb: &mut BTreeSet<Atom>, heads: &[(Management, Atom)]) {
    let mut ops: Vec<Management> = Vec::new();
    for (op, _) in heads {
        if !ops.contains(op) {
            ops.push(*op);
        }
    }
    for op in ops {
        let batch: Vec<Atom> = heads.iter().filter(|(o, _)| *o == op).map(|(_, a)| a.clone()).collect();
        op.apply(kb, &batch);
    }
}

pub(crate) fn apply_update(c: &mut Context, update: &Update) -> Result<(), McsError> {
    match update {
        Update::Add(atoms) => c.kb.extend(atoms.iter().cloned()),
        Update::Remove(atoms) => {
            for a in atoms {
                c.kb.remove(a);
            }
        }
        Update::Activate | Update::Stop => {
            let name = c.name.clone();
            let ContextKind::Service { descriptor, shell, .. } = &mut c.kind else {
                return Err(McsError::NotAService(name));
            };
            *shell = if matches!(update, Update::Activate) {
                activate(shell.clone(), descriptor).map_err(|source| McsError::Shell { context: name, source })?
            } else {
                stop(shell.clone(), descriptor)
            };
        }
    }
    Ok(())
}
