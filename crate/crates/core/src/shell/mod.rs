//! Service shells: a descriptor declaring the interface of an ASP program,
//! and the lifecycle that drives it tick by tick.

mod descriptor;
mod runtime;

pub use descriptor::{
    compute_heads, compute_undef, validate_descriptor, DescriptorError, Retention, Role,
    ServiceDescriptor, Violation,
};
pub use runtime::{
    activate, answer_sets, consequences, retention_filter, select_answer_set, select_index, stop,
    tick, Arrival, Expectation, IoEntry, Phase, Reply, ReplyBody, Requester, SelectionPolicy,
    SelectFn, ShellError, ShellState, TickOutcome, INCONSISTENT,
};
