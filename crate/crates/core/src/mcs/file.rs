//! Plain-text system descriptions.
//!
//! ```text
//! % two fact stores and a service
//! context c1 roles anycar facts car(c1).
//! context t1 roles a_traffic_light service light.svc
//! bridge a_traffic_light(TL): add(car(C)) <- (anycar(C): car(C)).
//! trigger t1 window 0 5
//! at 0 t1 activate
//! at 2 c1 add want_go(c1,t1,ns,2).
//! horizon 5
//! ```
//!
//! A line starting with whitespace continues the previous directive.
//! `trigger` accepts `always`, `window FROM TO` or `query MODE ATOM`.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::bridge::parse_bridge_rule;
use super::system::{Context, McsError, Schedule, System, Trigger, Update};
use crate::asp::{parse_atom_list, parse_ground_atom, parse_program, AspError, Atom};
use crate::query::QueryMode;
use crate::shell::{DescriptorError, SelectionPolicy, ServiceDescriptor};

#[derive(Debug, Error)]
pub enum SystemFileError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: {source}")]
    Asp {
        line: usize,
        #[source]
        source: AspError,
    },
    #[error("line {line}: service descriptor: {source}")]
    Descriptor {
        line: usize,
        #[source]
        source: DescriptorError,
    },
    #[error(transparent)]
    System(#[from] McsError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A parsed description: the system, its update schedule and horizon.
#[derive(Debug)]
pub struct SystemSpec {
    pub system: System,
    pub schedule: Schedule,
    pub horizon: u64,
}

pub fn load_system(path: &Path) -> Result<SystemSpec, SystemFileError> {
    let text = fs::read_to_string(path).map_err(|source| SystemFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_system(&text, path.parent())
}

/// Joins continuation lines; yields (first line number, directive).
fn directives(text: &str) -> Vec<(usize, String)> {
    let mut out: Vec<(usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('%').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let continues = line.starts_with([' ', '\t']);
        match out.last_mut() {
            Some((_, d)) if continues => {
                d.push(' ');
                d.push_str(line.trim());
            }
            _ => out.push((i + 1, line.trim().to_string())),
        }
    }
    out
}

fn split_word(s: &str) -> (&str, &str) {
    let s = s.trim_start();
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim_start()),
        None => (s, ""),
    }
}

/// Facts written either as a program (`p(1). p(2).`) or as a comma list.
fn parse_facts(text: &str) -> Result<Vec<Atom>, AspError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    match parse_program(text) {
        Ok(p) if p.rules.iter().all(|r| r.is_fact()) => {
            Ok(p.rules.into_iter().filter_map(|r| r.head).collect())
        }
        _ => parse_atom_list(text),
    }
}

pub fn parse_system(text: &str, base: Option<&Path>) -> Result<SystemSpec, SystemFileError> {
    let mut contexts = Vec::new();
    let mut rules = Vec::new();
    let mut schedule = Schedule::new();
    let mut horizon = 0;
    let mut triggers = Vec::new();

    for (line, d) in directives(text) {
        let fail = |message: String| SystemFileError::Format { line, message };
        let asp = |source: AspError| SystemFileError::Asp { line, source };
        let (keyword, rest) = split_word(&d);
        match keyword {
            "context" => {
                let (name, mut rest) = split_word(rest);
                if name.is_empty() {
                    return Err(fail("context needs a name".into()));
                }
                let mut roles: Vec<String> = Vec::new();
                let (word, after) = split_word(rest);
                if word == "roles" {
                    let (list, after) = split_word(after);
                    roles = list.split(',').filter(|r| !r.is_empty()).map(str::to_string).collect();
                    rest = after;
                }
                let (kind, body) = split_word(rest);
                let ctx = match kind {
                    "facts" => {
                        let facts = parse_facts(body).map_err(asp)?;
                        if let Some(a) = facts.iter().find(|a| !a.is_ground()) {
                            return Err(fail(format!("fact `{a}` is not ground")));
                        }
                        Context::fact_store(name, facts)
                    }
                    "service" => {
                        if body.is_empty() {
                            return Err(fail("service needs a descriptor path".into()));
                        }
                        let path = base.map_or_else(|| PathBuf::from(body), |b| b.join(body));
                        let descriptor = ServiceDescriptor::load(&path)
                            .map_err(|source| SystemFileError::Descriptor { line, source })?;
                        Context::service(name, descriptor, SelectionPolicy::First)
                    }
                    other => return Err(fail(format!("expected `facts` or `service`, found `{other}`"))),
                };
                contexts.push(ctx.with_roles(roles));
            }
            "bridge" => rules.push(parse_bridge_rule(rest).map_err(asp)?),
            "at" => {
                let (time, rest) = split_word(rest);
                let time: u64 = time.parse().map_err(|_| fail(format!("bad time `{time}`")))?;
                let (ctx, rest) = split_word(rest);
                let (verb, body) = split_word(rest);
                let atoms = || -> Result<Vec<_>, SystemFileError> {
                    let atoms = parse_facts(body).map_err(asp)?;
                    match atoms.iter().find(|a| !a.is_ground()) {
                        Some(a) => Err(fail(format!("update atom `{a}` is not ground"))),
                        None => Ok(atoms),
                    }
                };
                let update = match verb {
                    "add" => Update::Add(atoms()?),
                    "remove" => Update::Remove(atoms()?),
                    "activate" => Update::Activate,
                    "stop" => Update::Stop,
                    other => return Err(fail(format!("unknown update `{other}`"))),
                };
                schedule.entry(time).or_default().push((ctx.to_string(), update));
            }
            "trigger" => {
                let (ctx, rest) = split_word(rest);
                let (kind, body) = split_word(rest);
                let trigger = match kind {
                    "always" => Trigger::Always,
                    "window" => {
                        let bounds: Vec<u64> = body
                            .split_whitespace()
                            .map(str::parse)
                            .collect::<Result<_, _>>()
                            .map_err(|_| fail(format!("bad window `{body}`")))?;
                        match bounds[..] {
                            [from, to] => Trigger::Window { from, to },
                            _ => return Err(fail("window needs FROM and TO".into())),
                        }
                    }
                    "query" => {
                        let (mode, atom) = split_word(body);
                        let mode: QueryMode = mode.parse().map_err(|e| fail(format!("{e}")))?;
                        Trigger::Query(mode, parse_ground_atom(atom).map_err(asp)?)
                    }
                    other => return Err(fail(format!("unknown trigger `{other}`"))),
                };
                triggers.push((line, ctx.to_string(), trigger));
            }
            "horizon" => {
                horizon = rest.trim().parse().map_err(|_| fail(format!("bad horizon `{rest}`")))?;
            }
            other => return Err(fail(format!("unknown directive `{other}`"))),
        }
    }

    for (line, ctx, trigger) in triggers {
        let c = contexts
            .iter_mut()
            .find(|c: &&mut Context| c.name == ctx)
            .ok_or_else(|| SystemFileError::Format {
                line,
                message: format!("trigger for unknown context `{ctx}`"),
            })?;
        c.trigger = trigger;
    }
    let system = System::new(contexts, rules)?;
    for (time, updates) in &schedule {
        for (ctx, _) in updates {
            if system.context(ctx).is_none() {
                return Err(SystemFileError::Format {
                    line: 0,
                    message: format!("update at {time} names unknown context `{ctx}`"),
                });
            }
        }
    }
    Ok(SystemSpec {
        system,
        schedule,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asp::Atom;
    use std::collections::BTreeSet;

    const CHAIN: &str = "\
% the chain example
context c1 facts q.
context c2 facts
context c3 facts
bridge c2: add(q) <- (c1: q).
bridge c3: add(q)
    <- (c2: q).
horizon 2
";

    #[test]
    fn chain_file() {
        let mut spec = parse_system(CHAIN, None).unwrap();
        assert_eq!(spec.horizon, 2);
        assert_eq!(spec.system.rules.len(), 2);
        let trace = spec.system.timed_run(&spec.schedule, spec.horizon).unwrap();
        assert_eq!(trace.len(), 3);
        let q: BTreeSet<Atom> = [Atom::prop("q")].into();
        assert!(trace[0].state.sets.values().all(|s| *s == q));
    }

    #[test]
    fn schedule_roles_and_triggers() {
        let text = "context a roles x,y facts p(1). p(2).\n\
                    context b roles x facts\n\
                    bridge b: add(seen(N)) <- (a: p(N)).\n\
                    trigger b window 1 3\n\
                    at 1 a add p(3).\n\
                    at 2 a remove p(1).\n\
                    horizon 3";
        let spec = parse_system(text, None).unwrap();
        assert_eq!(spec.system.registry().lookup("x"), ["a", "b"]);
        assert_eq!(spec.schedule.len(), 2);
        assert!(matches!(spec.system.context("b").unwrap().trigger, Trigger::Window { from: 1, to: 3 }));
    }

    #[test]
    fn errors_carry_lines() {
        let err = parse_system("context a facts p.\nfrobnicate\n", None).unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
        let err = parse_system("context a facts p(X).", None).unwrap_err();
        assert!(err.to_string().contains("not ground"));
        assert!(parse_system("context a facts\nat 1 b add p.", None).is_err());
        assert!(matches!(
            parse_system("context a facts\ncontext a facts", None),
            Err(SystemFileError::System(McsError::DuplicateContext(_)))
        ));
        assert!(parse_system("context a facts\nbridge a: add(q) <- (zz: p).", None).is_err());
    }
}
