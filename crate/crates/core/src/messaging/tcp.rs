//! Live transport over loopback TCP, plus a standalone registry server.
//!
//! Each registered component gets its own listener. A sender keeps one
//! connection per (sender, receiver) pair and each accepted connection has
//! one reader thread, so per-pair FIFO order is inherited from the stream.

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::message::{read_frame, write_frame, CodecError, Content, Message, Performative};
use super::registry::{Registry, RegistryEntry};
use super::transport::{bounce, IdCounter, Transport, TransportError};

#[derive(Default)]
struct Inner {
    registry: Registry,
    inboxes: Mutex<HashMap<String, Vec<Message>>>,
    streams: Mutex<HashMap<(String, String), TcpStream>>,
    accepted: Mutex<Vec<TcpStream>>,
    listeners: Mutex<Vec<SocketAddr>>,
    ids: IdCounter,
    sent: AtomicU64,
    received: AtomicU64,
    closing: AtomicBool,
}

pub struct TcpTransport {
    inner: Arc<Inner>,
}

impl Default for TcpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl TcpTransport {
    pub fn new() -> Self {
        TcpTransport {
            inner: Arc::new(Inner::default()),
        }
    }

    pub fn registry(&self) -> &Registry {
        &self.inner.registry
    }

    /// Frames written and frames read so far.
    pub fn counters(&self) -> (u64, u64) {
        (
            self.inner.sent.load(Ordering::SeqCst),
            self.inner.received.load(Ordering::SeqCst),
        )
    }

    fn listen(&self, name: String) -> io::Result<SocketAddr> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        self.inner.listeners.lock().unwrap().push(addr);
        let inner = Arc::clone(&self.inner);
        thread::Builder::new()
            .name(format!("accept-{name}"))
            .spawn(move || {
                for conn in listener.incoming() {
                    if inner.closing.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    if let Ok(clone) = conn.try_clone() {
                        inner.accepted.lock().unwrap().push(clone);
                    }
                    let inner = Arc::clone(&inner);
                    let owner = name.clone();
                    thread::spawn(move || read_loop(inner, owner, conn));
                }
            })?;
        Ok(addr)
    }
}

fn read_loop(inner: Arc<Inner>, owner: String, conn: TcpStream) {
    let mut reader = BufReader::new(conn);
    while let Ok(Some(m)) = read_frame(&mut reader) {
        inner
            .inboxes
            .lock()
            .unwrap()
            .entry(owner.clone())
            .or_default()
            .push(m);
        inner.received.fetch_add(1, Ordering::SeqCst);
    }
}

impl Transport for TcpTransport {
    fn register(&self, entry: RegistryEntry) -> Result<(), TransportError> {
        if self.inner.registry.contains(&entry.name) {
            return Err(super::registry::RegistryError::Duplicate(entry.name).into());
        }
        let addr = self.listen(entry.name.clone())?;
        let name = entry.name.clone();
        self.inner.registry.register(entry.at(addr.to_string()))?;
        self.inner.inboxes.lock().unwrap().entry(name).or_default();
        Ok(())
    }

    fn lookup(&self, role: &str) -> Vec<String> {
        self.inner.registry.lookup(role)
    }

    fn is_registered(&self, name: &str) -> bool {
        self.inner.registry.contains(name)
    }

    fn send(&self, m: Message) -> Result<(), TransportError> {
        m.validate()?;
        let Some(target) = self.inner.registry.get(&m.receiver) else {
            if !self.is_registered(&m.sender) {
                return Err(TransportError::Unroutable {
                    sender: m.sender,
                    receiver: m.receiver,
                });
            }
            let failure = bounce(&m, self.inner.ids.next(&m.receiver));
            self.inner
                .inboxes
                .lock()
                .unwrap()
                .entry(m.sender)
                .or_default()
                .push(failure);
            return Ok(());
        };
        let key = (m.sender.clone(), m.receiver.clone());
        let mut streams = self.inner.streams.lock().unwrap();
        if !streams.contains_key(&key) {
            let stream = TcpStream::connect(&target.address)?;
            stream.set_nodelay(true)?;
            streams.insert(key.clone(), stream);
        }
        let stream = streams.get_mut(&key).unwrap();
        self.inner.sent.fetch_add(1, Ordering::SeqCst);
        if let Err(e) = write_frame(stream, &m) {
            self.inner.sent.fetch_sub(1, Ordering::SeqCst);
            streams.remove(&key);
            return Err(e.into());
        }
        Ok(())
    }

    fn drain(&self, receiver: &str) -> Vec<Message> {
        self.inner
            .inboxes
            .lock()
            .unwrap()
            .get_mut(receiver)
            .map(std::mem::take)
            .unwrap_or_default()
    }

    fn wait_quiescent(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            let (sent, received) = self.counters();
            if sent == received {
                return true;
            }
            if Instant::now() >= deadline {
                return false;
            }
            thread::sleep(Duration::from_micros(200));
        }
    }

    fn next_id(&self, sender: &str) -> u64 {
        self.inner.ids.next(sender)
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        self.inner.closing.store(true, Ordering::SeqCst);
        for (_, s) in self.inner.streams.lock().unwrap().drain() {
            let _ = s.shutdown(Shutdown::Both);
        }
        for s in self.inner.accepted.lock().unwrap().drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
        // wake the accept loops so they notice the flag
        for addr in self.inner.listeners.lock().unwrap().drain(..) {
            let _ = TcpStream::connect_timeout(&addr, Duration::from_millis(100));
        }
    }
}

/// The registry as a network component: REQUEST(register) is answered
/// with CONFIRM or FAILURE, QUERY_IF(lookup) with CONFIRM(names).
pub struct RegistryServer {
    listener: TcpListener,
    registry: Arc<Registry>,
}

pub const REGISTRY_NAME: &str = "registry";

impl RegistryServer {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        Ok(RegistryServer {
            listener: TcpListener::bind(addr)?,
            registry: Arc::new(Registry::new()),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn registry(&self) -> Arc<Registry> {
        Arc::clone(&self.registry)
    }

    /// Serves connections until the process exits.
    pub fn serve(self) {
        let ids = Arc::new(IdCounter::default());
        for conn in self.listener.incoming().flatten() {
            let registry = Arc::clone(&self.registry);
            let ids = Arc::clone(&ids);
            thread::spawn(move || {
                let _ = serve_connection(&registry, &ids, conn);
            });
        }
    }

    pub fn spawn(self) -> io::Result<SocketAddr> {
        let addr = self.local_addr()?;
        thread::Builder::new()
            .name("registry".into())
            .spawn(move || self.serve())?;
        Ok(addr)
    }
}

/// The answer the registry gives to one message.
pub fn registry_answer(registry: &Registry, m: &Message, id: u64) -> Message {
    match (m.performative, &m.content) {
        (Performative::Request, Content::Register(entry)) => match registry.register(entry.clone()) {
            Ok(()) => m.reply(Performative::Confirm, id, Content::Text("registered".into())),
            Err(e) => m.reply(Performative::Failure, id, Content::Text(e.to_string())),
        },
        (Performative::QueryIf, Content::Lookup(role)) => {
            m.reply(Performative::Confirm, id, Content::Names(registry.lookup(role)))
        }
        _ => m.reply(
            Performative::Failure,
            id,
            Content::Text(format!("registry cannot handle {} {}", m.performative, m.content)),
        ),
    }
}

fn serve_connection(registry: &Registry, ids: &IdCounter, conn: TcpStream) -> Result<(), CodecError> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut writer = BufWriter::new(conn);
    while let Some(m) = read_frame(&mut reader)? {
        write_frame(&mut writer, &registry_answer(registry, &m, ids.next(REGISTRY_NAME)))?;
    }
    Ok(())
}

/// Synchronous client for a [`RegistryServer`].
pub struct RegistryClient {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    name: String,
    next_id: u64,
}

impl RegistryClient {
    pub fn connect(addr: impl ToSocketAddrs, name: impl Into<String>) -> io::Result<Self> {
        let conn = TcpStream::connect(addr)?;
        Ok(RegistryClient {
            reader: BufReader::new(conn.try_clone()?),
            writer: BufWriter::new(conn),
            name: name.into(),
            next_id: 0,
        })
    }

    fn call(&mut self, performative: Performative, content: Content) -> Result<Message, CodecError> {
        self.next_id += 1;
        let m = Message::new(performative, &self.name, REGISTRY_NAME, self.next_id, content);
        write_frame(&mut self.writer, &m)?;
        read_frame(&mut self.reader)?.ok_or_else(|| {
            CodecError::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "registry hung up"))
        })
    }

    /// `Ok(Err(reason))` when the registry refused the entry.
    pub fn register(&mut self, entry: RegistryEntry) -> Result<Result<(), String>, CodecError> {
        let reply = self.call(Performative::Request, Content::Register(entry))?;
        Ok(match (reply.performative, reply.content) {
            (Performative::Confirm, _) => Ok(()),
            (_, Content::Text(reason)) => Err(reason),
            (_, other) => Err(other.to_string()),
        })
    }

    pub fn lookup(&mut self, role: &str) -> Result<Vec<String>, CodecError> {
        let reply = self.call(Performative::QueryIf, Content::Lookup(role.into()))?;
        match reply.content {
            Content::Names(names) => Ok(names),
            other => Err(CodecError::Malformed {
                offset: 0,
                message: format!("unexpected lookup reply {other}"),
            }),
        }
    }
}
