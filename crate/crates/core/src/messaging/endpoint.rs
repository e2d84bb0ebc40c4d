//! Puts a service shell on a transport: incoming REQUEST, INFORM and
//! QUERY_IF messages become shell arrivals and every answer goes back as a
//! CONFIRM or FAILURE correlated with the request id.

use std::collections::BTreeMap;

use super::message::{Content, Message, Performative};
use super::transport::{Transport, TransportError};
use crate::asp::{Atom, Substitution};
use crate::shell::{
    activate, stop, tick, Arrival, Phase, ReplyBody, Requester, SelectionPolicy, ServiceDescriptor,
    ShellError, ShellState, TickOutcome,
};

pub struct ServiceEndpoint {
    pub name: String,
    pub descriptor: ServiceDescriptor,
    pub state: ShellState,
    pub policy: SelectionPolicy,
}

/// What one call to [`ServiceEndpoint::handle`] did.
#[derive(Debug, Default)]
pub struct EndpointStep {
    pub received: Vec<Message>,
    pub sent: Vec<Message>,
    pub outcome: Option<TickOutcome>,
}

impl ServiceEndpoint {
    pub fn new(name: impl Into<String>, descriptor: ServiceDescriptor, policy: SelectionPolicy) -> Self {
        ServiceEndpoint {
            name: name.into(),
            descriptor,
            state: ShellState::new(1),
            policy,
        }
    }

    fn accepts(&self, atom: &Atom) -> bool {
        self.descriptor
            .inputs
            .iter()
            .any(|p| p.match_ground(atom, &Substitution::new()).is_some())
    }

    fn reply(
        &self,
        transport: &dyn Transport,
        performative: Performative,
        to: &str,
        in_reply_to: u64,
        content: Content,
    ) -> Message {
        Message {
            performative,
            sender: self.name.clone(),
            receiver: to.to_string(),
            id: transport.next_id(&self.name),
            in_reply_to: Some(in_reply_to),
            content,
        }
    }

    /// Drains the endpoint's queue and handles it.
    pub fn step(&mut self, transport: &dyn Transport, force_tick: bool) -> Result<EndpointStep, TransportError> {
        let messages = transport.drain(&self.name);
        self.handle(transport, messages, force_tick)
    }

    /// Handles a batch of messages as one tick. The shell ticks when it is
    /// active and either something arrived or `force_tick` is set.
    pub fn handle(
        &mut self,
        transport: &dyn Transport,
        messages: Vec<Message>,
        force_tick: bool,
    ) -> Result<EndpointStep, TransportError> {
        let mut arrivals = Vec::new();
        let mut out = Vec::new();
        // requests answered with an empty CONFIRM when nothing else replies
        let mut acknowledged: Vec<(String, u64)> = Vec::new();
        let mut lifecycle_error = None;

        for m in &messages {
            let expects_reply = matches!(m.performative, Performative::Request | Performative::QueryIf);
            match (m.performative, &m.content) {
                (Performative::Confirm | Performative::Failure, _) => {}
                (Performative::Request | Performative::Inform, Content::Atom(_) | Content::Atoms(_)) => {
                    let atoms = match &m.content {
                        Content::Atom(a) => vec![a.clone()],
                        Content::Atoms(atoms) => atoms.clone(),
                        _ => unreachable!(),
                    };
                    let mut took_input = false;
                    let mut rejected = Vec::new();
                    for atom in atoms {
                        if Some(&atom) == self.descriptor.activation.as_ref() {
                            match activate(self.state.clone(), &self.descriptor) {
                                Ok(s) => self.state = s,
                                Err(e) => lifecycle_error = Some(e),
                            }
                        } else if Some(&atom) == self.descriptor.stop.as_ref() {
                            self.state = stop(self.state.clone(), &self.descriptor);
                        } else if self.accepts(&atom) {
                            took_input = true;
                            arrivals.push(if m.performative == Performative::Request {
                                Arrival::request(atom, m.sender.clone(), m.id)
                            } else {
                                Arrival {
                                    atom,
                                    requester: Requester::Sensor,
                                    message_id: Some(m.id),
                                    expected: None,
                                }
                            });
                        } else {
                            rejected.push(atom);
                        }
                    }
                    if expects_reply && !rejected.is_empty() {
                        let names: Vec<String> = rejected.iter().map(Atom::to_string).collect();
                        out.push(self.reply(
                            transport,
                            Performative::Failure,
                            &m.sender,
                            m.id,
                            Content::Text(format!("not an input: {}", names.join(", "))),
                        ));
                    } else if expects_reply && !took_input {
                        acknowledged.push((m.sender.clone(), m.id));
                    }
                }
                (Performative::QueryIf, Content::Query { mode, atom }) => {
                    arrivals.push(Arrival::query(*mode, atom.clone(), m.sender.clone(), m.id));
                }
                _ if expects_reply => out.push(self.reply(
                    transport,
                    Performative::Failure,
                    &m.sender,
                    m.id,
                    Content::Text(format!("cannot handle {} {}", m.performative, m.content)),
                )),
                _ => {}
            }
        }

        let mut outcome = None;
        let ready = self.state.phase == Phase::Active;
        if ready && (force_tick || !arrivals.is_empty()) {
            let result = tick(self.state.clone(), &self.descriptor, arrivals, &self.policy)
                .map_err(|e| match e {
                    ShellError::Asp(e) => e.to_string(),
                    other => other.to_string(),
                });
            match result {
                Ok(o) => {
                    self.state = o.state.clone();
                    out.extend(self.replies_for(transport, &o));
                    outcome = Some(o);
                }
                Err(reason) => {
                    for (to, id) in requesters(&messages) {
                        out.push(self.reply(transport, Performative::Failure, &to, id, Content::Text(reason.clone())));
                    }
                }
            }
        } else if !arrivals.is_empty() {
            let reason = lifecycle_error
                .map(|e| e.to_string())
                .unwrap_or_else(|| match self.state.phase {
                    Phase::Stopped => "service stopped".to_string(),
                    _ => "service not active".to_string(),
                });
            let mut seen = Vec::new();
            for a in &arrivals {
                if let (Requester::Component(to), Some(id)) = (&a.requester, a.message_id) {
                    if !seen.contains(&(to.clone(), id)) {
                        seen.push((to.clone(), id));
                        out.push(self.reply(transport, Performative::Failure, to, id, Content::Text(reason.clone())));
                    }
                }
            }
        }
        for (to, id) in acknowledged {
            out.push(self.reply(transport, Performative::Confirm, &to, id, Content::Atoms(Vec::new())));
        }

        for m in &out {
            transport.send(m.clone())?;
        }
        Ok(EndpointStep {
            received: messages,
            sent: out,
            outcome,
        })
    }

    /// One message per request id: output atoms of a multi-atom request are
    /// merged into a single CONFIRM.
    fn replies_for(&self, transport: &dyn Transport, o: &TickOutcome) -> Vec<Message> {
        let mut order: Vec<(String, u64)> = Vec::new();
        let mut merged: BTreeMap<(String, u64), ReplyBody> = BTreeMap::new();
        for r in &o.replies {
            let (Requester::Component(to), Some(id)) = (&r.entry.requester, r.entry.message_id) else {
                continue;
            };
            let key = (to.clone(), id);
            match (merged.get_mut(&key), &r.body) {
                (None, body) => {
                    order.push(key.clone());
                    merged.insert(key, body.clone());
                }
                (Some(ReplyBody::Outputs(have)), ReplyBody::Outputs(more)) => {
                    for a in more {
                        if !have.contains(a) {
                            have.push(a.clone());
                        }
                    }
                }
                (Some(slot), ReplyBody::Failure(_)) => *slot = r.body.clone(),
                _ => {}
            }
        }
        order
            .into_iter()
            .map(|key| {
                let (performative, content) = match merged.remove(&key).unwrap() {
                    ReplyBody::Outputs(atoms) => (Performative::Confirm, Content::Atoms(atoms)),
                    ReplyBody::Query(result) => (Performative::Confirm, Content::QueryResult(result)),
                    ReplyBody::Failure(reason) => (Performative::Failure, Content::Text(reason)),
                };
                self.reply(transport, performative, &key.0, key.1, content)
            })
            .collect()
    }
}

fn requesters(messages: &[Message]) -> Vec<(String, u64)> {
    messages
        .iter()
        .filter(|m| matches!(m.performative, Performative::Request | Performative::QueryIf))
        .map(|m| (m.sender.clone(), m.id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asp::{parse_atom, parse_program};
    use crate::messaging::{RegistryEntry, SimTransport};
    use crate::query::QueryMode;

    fn atom(s: &str) -> Atom {
        parse_atom(s).unwrap()
    }

    fn setup() -> (SimTransport, ServiceEndpoint) {
        let d = ServiceDescriptor {
            program: parse_program(
                "device_ok :- test_ok.\n\
                 device_fault :- not test_ok.\n\
                 wait :- not wait, not sensor_input.\n\
                 :- not on.",
            )
            .unwrap(),
            activation: Some(atom("on")),
            inputs: vec![atom("test_ok"), atom("sensor_input")],
            outputs: vec![atom("device_ok"), atom("device_fault")],
            ..ServiceDescriptor::default()
        };
        let t = SimTransport::new();
        t.register(RegistryEntry::new("ctl", ["controller"])).unwrap();
        t.register(RegistryEntry::new("mon", ["monitor"])).unwrap();
        (t, ServiceEndpoint::new("ctl", d, SelectionPolicy::First))
    }

    fn send(t: &SimTransport, p: Performative, content: Content) -> u64 {
        let id = t.next_id("mon");
        t.send(Message::new(p, "mon", "ctl", id, content)).unwrap();
        id
    }

    #[test]
    fn request_confirm_correlation() {
        let (t, mut ep) = setup();
        let on = send(&t, Performative::Request, Content::Atom(atom("on")));
        let sensor = send(&t, Performative::Inform, Content::Atom(atom("sensor_input")));
        let req = send(&t, Performative::Request, Content::Atom(atom("test_ok")));
        let q = send(
            &t,
            Performative::QueryIf,
            Content::Query {
                mode: QueryMode::Known,
                atom: atom("device_ok"),
            },
        );
        let step = ep.step(&t, false).unwrap();
        assert!(step.outcome.is_some());
        let replies = t.drain("mon");
        assert_eq!(replies.len(), 3);
        let by_id = |id| replies.iter().find(|m| m.in_reply_to == Some(id)).unwrap();
        assert_eq!(by_id(req).content, Content::Atoms(vec![atom("device_ok")]));
        assert_eq!(by_id(on).content, Content::Atoms(vec![]));
        match &by_id(q).content {
            Content::QueryResult(r) => assert!(r.value),
            other => panic!("{other:?}"),
        }
        assert!(replies.iter().all(|m| m.in_reply_to != Some(sensor)));
        assert!(replies.iter().all(|m| m.performative == Performative::Confirm));
    }

    #[test]
    fn inactive_and_inconsistent_fail() {
        let (t, mut ep) = setup();
        let early = send(&t, Performative::Request, Content::Atom(atom("test_ok")));
        ep.step(&t, false).unwrap();
        let r = t.drain("mon");
        assert_eq!(r[0].performative, Performative::Failure);
        assert_eq!(r[0].in_reply_to, Some(early));

        send(&t, Performative::Inform, Content::Atom(atom("on")));
        let lonely = send(&t, Performative::Request, Content::Atom(atom("test_ok")));
        ep.step(&t, false).unwrap();
        let r = t.drain("mon");
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].performative, Performative::Failure);
        assert_eq!(r[0].in_reply_to, Some(lonely));

        let bogus = send(&t, Performative::Request, Content::Atom(atom("bogus")));
        ep.step(&t, false).unwrap();
        let r = t.drain("mon");
        assert_eq!((r[0].performative, r[0].in_reply_to), (Performative::Failure, Some(bogus)));
    }
}
