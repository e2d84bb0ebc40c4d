//! Microservices with an answer set programming core.
//!
//! * [`asp`] parses, grounds and solves normal logic programs.
//! * [`query`] evaluates the brave/cautious query modes over answer sets.
//! * [`shell`] wraps a program in the activation/tick/stop lifecycle of a
//!   service.
//! * [`messaging`] carries FIPA-style messages between components, with a
//!   yellow-pages registry and in-process or TCP transports.
//! * [`mcs`] gives a system of components multi-context-system semantics:
//!   bridge rules, data states and (timed) equilibria.
//! * [`scenario`] is the virtual traffic light case study.

pub mod asp;
pub mod mcs;
pub mod messaging;
pub mod query;
pub mod scenario;
pub mod shell;
