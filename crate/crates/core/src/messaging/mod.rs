//! Asynchronous messages between components: a performative-tagged
//! envelope, its framed JSON codec, a role registry and two transports
//! behind one trait.

mod endpoint;
mod message;
mod registry;
mod tcp;
mod transport;

pub use endpoint::{EndpointStep, ServiceEndpoint};
pub use message::{
    decode, decode_prefix, encode, read_frame, write_frame, CodecError, Content, Message,
    Performative, MAX_FRAME,
};
pub use registry::{Registry, RegistryEntry, RegistryError};
pub use tcp::{registry_answer, RegistryClient, RegistryServer, TcpTransport, REGISTRY_NAME};
pub use transport::{SimTransport, Transport, TransportError};
