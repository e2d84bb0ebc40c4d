//! A miniature answer set programming engine: normal rules, constraints,
//! ranges in facts, and integer comparison/arithmetic builtins.

mod ground;
pub mod oracle;
pub(crate) mod parser;
mod solve;
mod syntax;

use thiserror::Error;

pub use ground::{check_safety, expand_ranges, ground, ground_relevant, herbrand_universe};
pub use parser::{parse_atom, parse_atom_list, parse_ground_atom, parse_program};
pub use solve::{
    is_answer_set, is_consistent, is_hidden, least_model, reduct, rewrite_constraints, solve,
    solve_ground, AnswerSet,
};
pub use syntax::{Atom, Builtin, CmpOp, Expr, Literal, Program, Rule, Substitution, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AspError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsafe variable `{variable}` in `{rule}`")]
    Unsafe {
        line: usize,
        column: usize,
        variable: String,
        rule: String,
    },
    #[error("range error: {0}")]
    Range(String),
    #[error("grounding error: {0}")]
    Grounding(String),
    #[error("expected a ground atom, found `{0}`")]
    NonGround(String),
}
