//! Message envelope and its wire codec: a 4-byte big-endian length followed
//! by one UTF-8 JSON object.

use std::fmt;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::registry::RegistryEntry;
use crate::asp::Atom;
use crate::query::{QueryMode, QueryResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Performative {
    Request,
    Confirm,
    QueryIf,
    Failure,
    /// One-way push; no reply expected.
    Inform,
}

impl Performative {
    pub const ALL: [Performative; 5] = [
        Performative::Request,
        Performative::Confirm,
        Performative::QueryIf,
        Performative::Failure,
        Performative::Inform,
    ];

    pub fn is_reply(self) -> bool {
        matches!(self, Performative::Confirm | Performative::Failure)
    }
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Performative::Request => "REQUEST",
            Performative::Confirm => "CONFIRM",
            Performative::QueryIf => "QUERY_IF",
            Performative::Failure => "FAILURE",
            Performative::Inform => "INFORM",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Content {
    Atom(Atom),
    /// A batch of facts, or the outputs carried by a CONFIRM.
    Atoms(Vec<Atom>),
    Query { mode: QueryMode, atom: Atom },
    QueryResult(QueryResult),
    Text(String),
    Register(RegistryEntry),
    Lookup(String),
    Names(Vec<String>),
}

impl Content {
    fn atoms(&self) -> Vec<&Atom> {
        match self {
            Content::Atom(a) | Content::Query { atom: a, .. } => vec![a],
            Content::QueryResult(r) => vec![&r.atom],
            Content::Atoms(atoms) => atoms.iter().collect(),
            Content::Text(_) | Content::Register(_) | Content::Lookup(_) | Content::Names(_) => {
                Vec::new()
            }
        }
    }
}

impl fmt::Display for Content {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Content::Atom(a) => write!(f, "{a}"),
            Content::Atoms(atoms) => {
                let parts: Vec<String> = atoms.iter().map(Atom::to_string).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            Content::Query { mode, atom } => write!(f, "{mode} {atom}"),
            Content::QueryResult(r) => write!(f, "{r}"),
            Content::Text(t) => write!(f, "{t:?}"),
            Content::Register(e) => write!(f, "register {}", e.name),
            Content::Lookup(role) => write!(f, "lookup {role}"),
            Content::Names(names) => write!(f, "[{}]", names.join(", ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub performative: Performative,
    pub sender: String,
    pub receiver: String,
    pub id: u64,
    pub in_reply_to: Option<u64>,
    pub content: Content,
}

impl Message {
    pub fn new(
        performative: Performative,
        sender: impl Into<String>,
        receiver: impl Into<String>,
        id: u64,
        content: Content,
    ) -> Self {
        Message {
            performative,
            sender: sender.into(),
            receiver: receiver.into(),
            id,
            in_reply_to: None,
            content,
        }
    }

    /// A reply to `self`, addressed back to its sender.
    pub fn reply(&self, performative: Performative, id: u64, content: Content) -> Self {
        Message {
            performative,
            sender: self.receiver.clone(),
            receiver: self.sender.clone(),
            id,
            in_reply_to: Some(self.id),
            content,
        }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.performative.is_reply() && self.in_reply_to.is_none() {
            return Err(CodecError::MissingReplyTo(self.performative));
        }
        if let Some(a) = self.content.atoms().into_iter().find(|a| !a.is_ground()) {
            return Err(CodecError::NonGround(a.to_string()));
        }
        Ok(())
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}->{} #{}", self.performative, self.sender, self.receiver, self.id)?;
        if let Some(r) = self.in_reply_to {
            write!(f, " re #{r}")?;
        }
        write!(f, " {}", self.content)
    }
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("{0} requires in_reply_to")]
    MissingReplyTo(Performative),
    #[error("content atom `{0}` is not ground")]
    NonGround(String),
    #[error("truncated frame at byte {offset}: expected {expected} bytes")]
    Truncated { offset: usize, expected: usize },
    #[error("{extra} trailing bytes after frame at byte {offset}")]
    Trailing { offset: usize, extra: usize },
    #[error("malformed message at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Frames above this size are refused on both ends.
pub const MAX_FRAME: usize = 16 << 20;

const HEADER: usize = 4;

pub fn encode(m: &Message) -> Result<Vec<u8>, CodecError> {
    m.validate()?;
    let body = serde_json::to_vec(m).expect("message serialization is infallible");
    if body.len() > MAX_FRAME {
        return Err(CodecError::TooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(HEADER + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Decodes exactly one frame.
pub fn decode(bytes: &[u8]) -> Result<Message, CodecError> {
    let (m, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(CodecError::Trailing {
            offset: used,
            extra: bytes.len() - used,
        });
    }
    Ok(m)
}

/// Decodes the first frame of `bytes`, returning the message and the number
/// of bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(Message, usize), CodecError> {
    if bytes.len() < HEADER {
        return Err(CodecError::Truncated {
            offset: bytes.len(),
            expected: HEADER,
        });
    }
    let len = u32::from_be_bytes(bytes[..HEADER].try_into().unwrap()) as usize;
    if len > MAX_FRAME {
        return Err(CodecError::TooLarge(len));
    }
    let Some(body) = bytes.get(HEADER..HEADER + len) else {
        return Err(CodecError::Truncated {
            offset: bytes.len(),
            expected: HEADER + len,
        });
    };
    Ok((decode_body(body)?, HEADER + len))
}

fn decode_body(body: &[u8]) -> Result<Message, CodecError> {
    let m: Message = serde_json::from_slice(body).map_err(|e| CodecError::Malformed {
        offset: HEADER + byte_offset(body, e.line(), e.column()),
        message: e.to_string(),
    })?;
    m.validate()
        .map_err(|e| CodecError::Malformed {
            offset: HEADER,
            message: e.to_string(),
        })
        .map(|()| m)
}

// serde_json reports 1-based line and column.
fn byte_offset(body: &[u8], line: usize, column: usize) -> usize {
    let line_start: usize = body
        .split(|&b| b == b'\n')
        .take(line.saturating_sub(1))
        .map(|l| l.len() + 1)
        .sum();
    (line_start + column.saturating_sub(1)).min(body.len())
}

pub fn write_frame<W: Write>(w: &mut W, m: &Message) -> Result<(), CodecError> {
    w.write_all(&encode(m)?)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Message>, CodecError> {
    let mut header = [0u8; HEADER];
    let mut got = 0;
    while got < HEADER {
        match r.read(&mut header[got..])? {
            0 if got == 0 => return Ok(None),
            0 => {
                return Err(CodecError::Truncated {
                    offset: got,
                    expected: HEADER,
                })
            }
            n => got += n,
        }
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME {
        return Err(CodecError::TooLarge(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CodecError::Truncated {
            offset: HEADER,
            expected: HEADER + len,
        },
        _ => CodecError::Io(e),
    })?;
    decode_body(&body).map(Some)
}
