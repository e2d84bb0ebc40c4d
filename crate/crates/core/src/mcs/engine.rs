//! Equilibria computed by message exchange. Each round has three phases,
//! each closed by a quiescence barrier:
//!
//! 1. every source sends each destination the part of its consequences that
//!    the destination's rules read (REQUEST to a service, INFORM otherwise);
//! 2. every destination applies its rules to what arrived, updates its
//!    knowledge base and answers each REQUEST with a CONFIRM carrying its
//!    outputs that mention the requester, or a FAILURE;
//! 3. replies are collected.
//!
//! Rounds stop once no context's consequences changed. With the simulation
//! transport the contexts take turns in declaration order; in threaded mode
//! each context runs on its own thread within a phase.

use std::collections::{BTreeMap, BTreeSet};
use std::thread;
use std::time::Duration;

use super::bridge::{app, resolve_designators_with, BridgeRule};
use super::system::{
    incorporate, observe_into, Context, ContextKind, DataState, Equilibrium, McsError, Schedule,
    System, TimedEntry,
};
use crate::asp::{Atom, Substitution, Term};
use crate::messaging::{Content, Message, Performative, RegistryEntry, Transport};

/// A context, its inbox and the result of phase two.
type Slot = (Context, Vec<Message>, Option<Result<DataState, McsError>>);

pub struct MessageEngine<'t> {
    transport: &'t dyn Transport,
    threaded: bool,
    timeout: Duration,
    /// Every message delivered so far in canonical order: by round and phase,
    /// then receiver in declaration order, then (sender, id).
    pub transcript: Vec<Message>,
    rules: Vec<BridgeRule>,
}

impl<'t> MessageEngine<'t> {
    /// Registers every context of `system` with the transport and resolves
    /// designators against the transport's registry.
    pub fn new(transport: &'t dyn Transport, system: &System, threaded: bool) -> Result<Self, McsError> {
        for c in &system.contexts {
            transport
                .register(RegistryEntry::new(c.name.clone(), c.roles.iter().cloned()))
                .map_err(|e| McsError::Transport(e.to_string()))?;
        }
        let rules = system
            .rules
            .iter()
            .flat_map(|r| resolve_designators_with(r, |role| transport.lookup(role)))
            .collect();
        Ok(MessageEngine {
            transport,
            threaded,
            timeout: Duration::from_secs(30),
            transcript: Vec::new(),
            rules,
        })
    }

    fn barrier(&self) -> Result<(), McsError> {
        if self.transport.wait_quiescent(self.timeout) {
            Ok(())
        } else {
            Err(McsError::Transport("messages still in flight after timeout".into()))
        }
    }

    /// Runs `f` once per context, on scoped threads when threaded.
    fn each<T, F>(&self, contexts: &mut [Context], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut Context) -> T + Sync,
    {
        if self.threaded {
            thread::scope(|scope| {
                let handles: Vec<_> = contexts.iter_mut().map(|c| scope.spawn(|| f(c))).collect();
                handles.into_iter().map(|h| h.join().expect("context thread panicked")).collect()
            })
        } else {
            contexts.iter_mut().map(f).collect()
        }
    }

    fn collect(&mut self, contexts: &[Context]) -> Vec<Vec<Message>> {
        contexts
            .iter()
            .map(|c| {
                let mut got = self.transport.drain(&c.name);
                got.sort_by(|a, b| (&a.sender, a.id).cmp(&(&b.sender, b.id)));
                self.transcript.extend(got.iter().cloned());
                got
            })
            .collect()
    }

    /// One round; returns the new data state.
    pub fn round(&mut self, system: &mut System, s: &DataState, time: Option<u64>) -> Result<DataState, McsError> {
        let rules = system.filter_triggered(&self.rules, time)?;
        let services: BTreeSet<String> = system
            .contexts
            .iter()
            .filter(|c| c.is_service())
            .map(|c| c.name.clone())
            .collect();
        let transport = self.transport;

        // phase 1: ship snapshots
        let sent = self.each(&mut system.contexts, |c| -> Result<(), McsError> {
            let own = s.get(&c.name).cloned().unwrap_or_default();
            for (dest, patterns) in readers(&rules, &c.name) {
                let atoms: Vec<Atom> = own
                    .iter()
                    .filter(|a| patterns.iter().any(|p| p.match_ground(a, &Substitution::new()).is_some()))
                    .cloned()
                    .collect();
                if atoms.is_empty() {
                    continue;
                }
                let performative = if services.contains(&dest) {
                    Performative::Request
                } else {
                    Performative::Inform
                };
                let m = Message::new(performative, &c.name, dest, transport.next_id(&c.name), Content::Atoms(atoms));
                transport.send(m).map_err(|e| McsError::Transport(e.to_string()))?;
            }
            Ok(())
        });
        sent.into_iter().collect::<Result<(), _>>()?;
        self.barrier()?;
        let inboxes = self.collect(&system.contexts);

        // phase 2: apply rules, reply
        let names: Vec<String> = system.contexts.iter().map(|c| c.name.clone()).collect();
        let mut jobs: Vec<(Context, Vec<Message>)> = Vec::new();
        let contexts = std::mem::take(&mut system.contexts);
        for (c, inbox) in contexts.into_iter().zip(inboxes) {
            jobs.push((c, inbox));
        }
        let mut slots: Vec<Slot> = jobs.into_iter().map(|(c, m)| (c, m, None)).collect();
        let work = |slot: &mut Slot| {
            let (c, inbox, out) = slot;
            *out = Some(absorb(c, inbox, &rules, &names, transport));
        };
        if self.threaded {
            thread::scope(|scope| {
                for slot in slots.iter_mut() {
                    scope.spawn(|| work(slot));
                }
            });
        } else {
            slots.iter_mut().for_each(work);
        }
        let mut next = DataState::default();
        let mut failure = None;
        for (c, _, out) in slots {
            match out.expect("every context ran") {
                Ok(part) => {
                    next.sets.extend(part.sets);
                    next.failures.extend(part.failures);
                }
                Err(e) => failure = failure.or(Some(e)),
            }
            system.contexts.push(c);
        }
        if let Some(e) = failure {
            return Err(e);
        }

        // phase 3: collect replies
        self.barrier()?;
        self.collect(&system.contexts);
        Ok(next)
    }

    pub fn equilibrium_at(
        &mut self,
        system: &mut System,
        initial: DataState,
        time: Option<u64>,
    ) -> Result<Equilibrium, McsError> {
        let max_iter = system.max_iter;
        let mut s = initial;
        for steps in 1..=max_iter {
            let next = self.round(system, &s, time)?;
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
        Ok(Equilibrium { state: s, steps: 0 })
    }

    /// Same contract as [`System::timed_run`].
    pub fn timed_run(&mut self, system: &mut System, schedule: &Schedule, horizon: u64) -> Result<Vec<TimedEntry>, McsError> {
        let mut trace = Vec::new();
        for time in 0..=horizon {
            for (ctx, update) in schedule.get(&time).into_iter().flatten() {
                system.apply_update(ctx, update)?;
            }
            let start = system.observe()?;
            let eq = self.equilibrium_at(system, start, Some(time))?;
            trace.push(TimedEntry {
                time,
                state: eq.state,
                steps: eq.steps,
            });
        }
        Ok(trace)
    }
}

/// Destinations reading from `source`, with the body patterns they read.
fn readers(rules: &[BridgeRule], source: &str) -> BTreeMap<String, Vec<Atom>> {
    let mut out: BTreeMap<String, Vec<Atom>> = BTreeMap::new();
    for r in rules {
        for (c, pattern) in &r.body {
            if c.name() == Some(source) {
                let slot = out.entry(r.dest.name().unwrap().to_string()).or_default();
                if !slot.contains(pattern) {
                    slot.push(pattern.clone());
                }
            }
        }
    }
    out
}

/// Phase two for one context.
fn absorb(
    c: &mut Context,
    inbox: &[Message],
    rules: &[BridgeRule],
    names: &[String],
    transport: &dyn Transport,
) -> Result<DataState, McsError> {
    let mut view: BTreeMap<String, BTreeSet<Atom>> = names.iter().map(|n| (n.clone(), BTreeSet::new())).collect();
    let mut requesters = Vec::new();
    for m in inbox {
        if let (Performative::Request | Performative::Inform, Content::Atoms(atoms)) = (m.performative, &m.content) {
            view.entry(m.sender.clone()).or_default().extend(atoms.iter().cloned());
            if m.performative == Performative::Request {
                requesters.push(m);
            }
        }
    }
    let own: Vec<BridgeRule> = rules.iter().filter(|r| r.dest.name() == Some(c.name.as_str())).cloned().collect();
    if let Some(heads) = app(&own, &view)?.get(&c.name) {
        incorporate(&mut c.kb, heads);
    }
    let mut part = DataState::default();
    observe_into(c, &mut part)?;

    for m in requesters {
        let id = transport.next_id(&c.name);
        let reply = if part.failed(&c.name) {
            m.reply(Performative::Failure, id, Content::Text("inconsistent: no answer set".into()))
        } else {
            let ContextKind::Service { descriptor, .. } = &c.kind else {
                unreachable!("only services receive requests")
            };
            let outputs: Vec<Atom> = part.sets[&c.name]
                .iter()
                .filter(|a| descriptor.outputs.iter().any(|p| p.match_ground(a, &Substitution::new()).is_some()))
                .filter(|a| a.args.contains(&Term::Const(m.sender.clone())))
                .cloned()
                .collect();
            m.reply(Performative::Confirm, id, Content::Atoms(outputs))
        };
        transport.send(reply).map_err(|e| McsError::Transport(e.to_string()))?;
    }
    Ok(part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asp::parse_atom;
    use crate::mcs::parse_bridge_rules;
    use crate::messaging::{SimTransport, TcpTransport};

    fn chain() -> System {
        System::new(
            vec![
                Context::fact_store("c1", [parse_atom("q").unwrap()]).with_roles(["node"]),
                Context::fact_store("c2", []).with_roles(["node"]),
                Context::fact_store("c3", []).with_roles(["node"]),
            ],
            parse_bridge_rules("c2: add(q) <- (c1: q).\nc3: add(q) <- (c2: q).").unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn matches_the_synchronous_chase() {
        let mut reference = chain();
        let expected = reference.compute_equilibrium(reference.observe().unwrap(), 100).unwrap();
        for threaded in [false, true] {
            let sim = SimTransport::new();
            let mut m = chain();
            let mut engine = MessageEngine::new(&sim, &m, threaded).unwrap();
            let start = m.observe().unwrap();
            let eq = engine.equilibrium_at(&mut m, start, None).unwrap();
            assert_eq!(eq, expected);
            assert!(engine.transcript.iter().all(|m| m.performative == Performative::Inform));
        }
    }

    #[test]
    fn tcp_transcript_equals_simulation() {
        let run = |transport: &dyn Transport, threaded: bool| {
            let mut m = chain();
            let mut engine = MessageEngine::new(transport, &m, threaded).unwrap();
            let trace = engine.timed_run(&mut m, &Schedule::new(), 2).unwrap();
            (trace, engine.transcript)
        };
        let sim = run(&SimTransport::new(), false);
        let tcp = run(&TcpTransport::new(), true);
        assert_eq!(sim, tcp);
        assert!(!sim.1.is_empty());
    }
}
