//! The system as a multi-context system: contexts exchange consequences
//! through bridge rules until an equilibrium is reached, optionally over
//! discrete time with updates and triggering.

mod bridge;
mod engine;
mod file;
mod system;

pub use bridge::{
    app, applicable, parse_bridge_rule, parse_bridge_rules, resolve_designators,
    resolve_designators_with, BridgeRule, ContextRef, Management, UnknownContext,
};
pub use engine::MessageEngine;
pub use file::{load_system, parse_system, SystemFileError, SystemSpec};
pub use system::{
    Context, ContextKind, DataState, Equilibrium, McsError, Schedule, System, TimedEntry, Trigger,
    TriggerFn, Update, DEFAULT_MAX_ITER,
};
