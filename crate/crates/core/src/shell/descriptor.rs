//! Service descriptors: the inner program with its signals and interface,
//! the Heads/Undef sets used to validate it, and the descriptor file format.
//!
//! ```text
//! program:
//!     device_ok :- test_ok.
//!     device_fault :- not test_ok.
//! activation: active
//! stop: halt
//! inputs: test_ok, sensor_input
//! outputs: device_ok, device_fault
//! queries:
//!     K device_ok
//! retain: sensor_input
//! ```
//!
//! A section header is a keyword at the start of a line followed by `:`.
//! A `program:` value that is a single word not ending in `.` is a path,
//! resolved against the descriptor's directory.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::asp::{
    expand_ranges, is_hidden, parse_atom, parse_atom_list, parse_program, AspError, Atom, Program,
};
use crate::query::{QueryError, QueryMode};

/// Which injected inputs survive the end of a tick.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Retention {
    /// Every input is retracted.
    #[default]
    Stateless,
    /// Inputs whose predicate is listed are kept.
    Stateful(BTreeSet<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ServiceDescriptor {
    pub program: Program,
    pub activation: Option<Atom>,
    pub stop: Option<Atom>,
    /// Input schemas; variables stand for any term.
    pub inputs: Vec<Atom>,
    pub outputs: Vec<Atom>,
    pub queries: Vec<(QueryMode, Atom)>,
    pub retention: Retention,
}

fn head_atoms(p: &Program) -> Vec<Atom> {
    let expanded = expand_ranges(p).unwrap_or_else(|_| p.clone());
    expanded
        .rules
        .into_iter()
        .filter_map(|r| r.head)
        .filter(|h| !is_hidden(h))
        .collect()
}

/// Atoms occurring as rule heads, as written (constraints contribute none).
pub fn compute_heads(p: &Program) -> BTreeSet<Atom> {
    head_atoms(p).into_iter().collect()
}

/// Body atoms that no rule head can produce.
pub fn compute_undef(p: &Program) -> BTreeSet<Atom> {
    let heads = head_atoms(p);
    p.rules
        .iter()
        .flat_map(|r| r.pos_body.iter().chain(&r.neg_body))
        .filter(|b| !heads.iter().any(|h| h.unifies_with(b)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Activation,
    Stop,
    Input,
    Output,
    Query,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Activation => "activation signal",
            Role::Stop => "stop signal",
            Role::Input => "input",
            Role::Output => "output",
            Role::Query => "query atom",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("{role} `{atom}` is defined by a rule head")]
    Defined { role: Role, atom: Atom },
    #[error("{role} `{atom}` does not occur in any rule body")]
    Unused { role: Role, atom: Atom },
    #[error("{role} `{atom}` is not produced by any rule head")]
    NotAHead { role: Role, atom: Atom },
    #[error("{role} `{atom}` must be ground")]
    NotGround { role: Role, atom: Atom },
}

/// Checks that signals and inputs lie in Undef and outputs and query atoms
/// in Heads, reporting every violation.
pub fn validate_descriptor(d: &ServiceDescriptor) -> Result<(), Vec<Violation>> {
    let heads = head_atoms(&d.program);
    let body: Vec<&Atom> = d
        .program
        .rules
        .iter()
        .flat_map(|r| r.pos_body.iter().chain(&r.neg_body))
        .collect();
    let defined = |a: &Atom| heads.iter().any(|h| h.unifies_with(a));
    let mut violations = Vec::new();

    let signals = [(Role::Activation, &d.activation), (Role::Stop, &d.stop)];
    let undef_side = signals
        .iter()
        .filter_map(|(role, a)| a.as_ref().map(|a| (*role, a)))
        .chain(d.inputs.iter().map(|a| (Role::Input, a)));
    for (role, atom) in undef_side {
        if role != Role::Input && !atom.is_ground() {
            violations.push(Violation::NotGround {
                role,
                atom: atom.clone(),
            });
        }
        if defined(atom) {
            violations.push(Violation::Defined {
                role,
                atom: atom.clone(),
            });
        } else if !body.iter().any(|b| b.unifies_with(atom)) {
            violations.push(Violation::Unused {
                role,
                atom: atom.clone(),
            });
        }
    }
    let head_side = d
        .outputs
        .iter()
        .map(|a| (Role::Output, a))
        .chain(d.queries.iter().map(|(_, a)| (Role::Query, a)));
    for (role, atom) in head_side {
        if role == Role::Query && !atom.is_ground() {
            violations.push(Violation::NotGround {
                role,
                atom: atom.clone(),
            });
        }
        if !defined(atom) {
            violations.push(Violation::NotAHead {
                role,
                atom: atom.clone(),
            });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("in section `{section}`: {source}")]
    Asp {
        section: &'static str,
        #[source]
        source: AspError,
    },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("descriptor has no `program:` section")]
    MissingProgram,
}

const SECTIONS: [&str; 7] = [
    "program",
    "activation",
    "stop",
    "inputs",
    "outputs",
    "queries",
    "retain",
];

fn section_header(line: &str) -> Option<(&'static str, &str)> {
    SECTIONS.iter().find_map(|&name| {
        let rest = line.strip_prefix(name)?.strip_prefix(':')?;
        (!rest.starts_with('-')).then_some((name, rest))
    })
}

fn strip_comment(line: &str) -> &str {
    line.split_once('%').map_or(line, |(code, _)| code)
}

impl ServiceDescriptor {
    pub fn load(path: &Path) -> Result<Self, DescriptorError> {
        let text = fs::read_to_string(path).map_err(|source| DescriptorError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent())
    }

    /// Parses descriptor text; relative program paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, DescriptorError> {
        let mut sections: Vec<(&'static str, usize, String)> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if let Some((name, rest)) = section_header(line) {
                if sections.iter().any(|(n, _, _)| *n == name) {
                    return Err(DescriptorError::Format {
                        line: idx + 1,
                        message: format!("duplicate section `{name}`"),
                    });
                }
                sections.push((name, idx + 1, format!("{rest}\n")));
            } else if let Some((_, _, body)) = sections.last_mut() {
                body.push_str(line);
                body.push('\n');
            } else if !strip_comment(line).trim().is_empty() {
                return Err(DescriptorError::Format {
                    line: idx + 1,
                    message: "content before the first section".into(),
                });
            }
        }

        let mut d = ServiceDescriptor::default();
        let mut have_program = false;
        for (name, line, body) in sections {
            let asp = |source| DescriptorError::Asp {
                section: name,
                source,
            };
            match name {
                "program" => {
                    have_program = true;
                    let value = body.trim();
                    let is_path = !value.is_empty()
                        && !value.contains(char::is_whitespace)
                        && !value.ends_with('.');
                    d.program = if is_path {
                        let path = base.map_or_else(|| PathBuf::from(value), |b| b.join(value));
                        let source = fs::read_to_string(&path)
                            .map_err(|source| DescriptorError::Io { path, source })?;
                        parse_program(&source).map_err(asp)?
                    } else {
                        parse_program(&body).map_err(asp)?
                    };
                }
                "activation" | "stop" => {
                    let value = strip_comment(body.trim()).trim();
                    let atom = if value.is_empty() || value == "none" {
                        None
                    } else {
                        Some(parse_atom(value).map_err(asp)?)
                    };
                    if name == "activation" {
                        d.activation = atom;
                    } else {
                        d.stop = atom;
                    }
                }
                "inputs" | "outputs" => {
                    let cleaned: String = body.lines().map(strip_comment).collect::<Vec<_>>().join("\n");
                    let atoms = parse_atom_list(&cleaned).map_err(asp)?;
                    if name == "inputs" {
                        d.inputs = atoms;
                    } else {
                        d.outputs = atoms;
                    }
                }
                "queries" => {
                    for (offset, raw) in body.lines().enumerate() {
                        let entry = strip_comment(raw).trim();
                        if entry.is_empty() {
                            continue;
                        }
                        let (mode, atom) =
                            entry.split_once(char::is_whitespace).ok_or_else(|| {
                                DescriptorError::Format {
                                    line: line + offset,
                                    message: format!("expected `mode atom`, found `{entry}`"),
                                }
                            })?;
                        d.queries
                            .push((mode.parse()?, parse_atom(atom.trim()).map_err(asp)?));
                    }
                }
                "retain" => {
                    let names: BTreeSet<String> = strip_comment(&body.replace('\n', " "))
                        .split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect();
                    d.retention = Retention::Stateful(names);
                }
                _ => unreachable!("unknown sections are not collected"),
            }
        }
        if !have_program {
            return Err(DescriptorError::MissingProgram);
        }
        Ok(d)
    }
}
