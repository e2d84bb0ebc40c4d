use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

use super::message::{CodecError, Content, Message, Performative};
use super::registry::{Registry, RegistryEntry, RegistryError};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("neither `{receiver}` nor the sender `{sender}` is registered")]
    Unroutable { sender: String, receiver: String },
    #[error("network error: {0}")]
    Io(#[from] std::io::Error),
}

/// Asynchronous point-to-point delivery with per-pair FIFO order.
///
/// `send` never waits for the receiver. Sending to an unregistered name
/// bounces a FAILURE into the sender's own queue.
pub trait Transport: Send + Sync {
    fn register(&self, entry: RegistryEntry) -> Result<(), TransportError>;
    fn lookup(&self, role: &str) -> Vec<String>;
    fn is_registered(&self, name: &str) -> bool;
    fn send(&self, m: Message) -> Result<(), TransportError>;
    /// Takes every message already delivered to `receiver`.
    fn drain(&self, receiver: &str) -> Vec<Message>;
    /// Waits until nothing is in flight. Returns false on timeout.
    fn wait_quiescent(&self, timeout: Duration) -> bool;
    /// Fresh message id for `sender`; ids count up from 1 per sender.
    fn next_id(&self, sender: &str) -> u64;
}

#[derive(Debug, Default)]
pub(crate) struct IdCounter(Mutex<HashMap<String, u64>>);

impl IdCounter {
    pub(crate) fn next(&self, sender: &str) -> u64 {
        let mut ids = self.0.lock().unwrap();
        let n = ids.entry(sender.to_string()).or_insert(0);
        *n += 1;
        *n
    }
}

/// The FAILURE returned to the sender of an undeliverable message.
pub(crate) fn bounce(m: &Message, id: u64) -> Message {
    m.reply(
        Performative::Failure,
        id,
        Content::Text(format!("unknown receiver `{}`", m.receiver)),
    )
}

/// In-process queues. Single-threaded use is fully deterministic: each
/// inbox holds messages in global send order.
#[derive(Debug, Default)]
pub struct SimTransport {
    registry: Registry,
    inboxes: Mutex<HashMap<String, Vec<Message>>>,
    ids: IdCounter,
}

impl SimTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn pending(&self, receiver: &str) -> usize {
        self.inboxes.lock().unwrap().get(receiver).map_or(0, Vec::len)
    }
}

impl Transport for SimTransport {
    fn register(&self, entry: RegistryEntry) -> Result<(), TransportError> {
        let name = entry.name.clone();
        self.registry.register(entry)?;
        self.inboxes.lock().unwrap().entry(name).or_default();
        Ok(())
    }

    fn lookup(&self, role: &str) -> Vec<String> {
        self.registry.lookup(role)
    }

    fn is_registered(&self, name: &str) -> bool {
        self.registry.contains(name)
    }

    fn send(&self, m: Message) -> Result<(), TransportError> {
        m.validate()?;
        let mut inboxes = self.inboxes.lock().unwrap();
        if inboxes.contains_key(&m.receiver) {
            inboxes.get_mut(&m.receiver).unwrap().push(m);
            return Ok(());
        }
        match inboxes.get_mut(&m.sender) {
            Some(own) => {
                own.push(bounce(&m, self.ids.next(&m.receiver)));
                Ok(())
            }
            None => Err(TransportError::Unroutable {
                sender: m.sender,
                receiver: m.receiver,
            }),
        }
    }

    fn drain(&self, receiver: &str) -> Vec<Message> {
        self.inboxes
            .lock()
            .unwrap()
            .get_mut(receiver)
            .map(std::mem::take)
            .unwrap_or_default()
    }

    fn wait_quiescent(&self, _timeout: Duration) -> bool {
        // delivery is synchronous
        true
    }

    fn next_id(&self, sender: &str) -> u64 {
        self.ids.next(sender)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(t: &SimTransport, from: &str, to: &str, body: &str) -> Message {
        Message::new(Performative::Inform, from, to, t.next_id(from), Content::Text(body.into()))
    }

    fn setup() -> SimTransport {
        let t = SimTransport::new();
        t.register(RegistryEntry::new("a", ["x"])).unwrap();
        t.register(RegistryEntry::new("b", ["x"])).unwrap();
        t
    }

    #[test]
    fn fifo_per_pair() {
        let t = setup();
        let m1 = text(&t, "a", "b", "m1");
        let m2 = text(&t, "a", "b", "m2");
        t.send(m1.clone()).unwrap();
        t.send(m2.clone()).unwrap();
        assert_eq!(t.drain("b"), vec![m1, m2]);
        assert!(t.drain("b").is_empty());
    }

    #[test]
    fn unknown_receiver_bounces() {
        let t = setup();
        let m = text(&t, "a", "ghost", "hello");
        t.send(m.clone()).unwrap();
        let back = t.drain("a");
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].performative, Performative::Failure);
        assert_eq!(back[0].in_reply_to, Some(m.id));
        assert_eq!(back[0].sender, "ghost");
        let stray = text(&t, "nobody", "ghost", "x");
        assert!(matches!(t.send(stray), Err(TransportError::Unroutable { .. })));
    }

    #[test]
    fn ids_are_unique_per_sender() {
        let t = setup();
        assert_eq!((t.next_id("a"), t.next_id("a"), t.next_id("b")), (1, 2, 1));
    }
}
