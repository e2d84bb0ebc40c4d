//! Bridge rules `dest: op(head) <- (c1: p1), ..., (cj: pj).` and context
//! designators such as `anycar(C)`, which stand for any registered context
//! of a role and bind `C` to that context's name.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::asp::parser::{Parser, Tok};
use crate::asp::{AspError, Atom, CmpOp, Substitution, Term};
use crate::messaging::Registry;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ContextRef {
    Name(String),
    Designator { role: String, var: String },
}

impl ContextRef {
    pub fn name(&self) -> Option<&str> {
        match self {
            ContextRef::Name(n) => Some(n),
            ContextRef::Designator { .. } => None,
        }
    }
}

impl fmt::Display for ContextRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextRef::Name(n) => f.write_str(n),
            ContextRef::Designator { role, var } => write!(f, "{role}({var})"),
        }
    }
}

/// How bridge-rule heads enter the destination knowledge base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Management {
    /// `add`: heads become facts. Monotone.
    AddFacts,
    /// `replace`: heads overwrite every fact of their predicate. Not
    /// monotone, so convergence is not guaranteed.
    ReplaceByPredicate,
}

impl Management {
    pub fn tag(self) -> &'static str {
        match self {
            Management::AddFacts => "add",
            Management::ReplaceByPredicate => "replace",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "add" => Some(Management::AddFacts),
            "replace" => Some(Management::ReplaceByPredicate),
            _ => None,
        }
    }

    pub fn is_monotone(self) -> bool {
        self == Management::AddFacts
    }

    /// Applies heads of this operator to `kb`.
    pub fn apply(self, kb: &mut BTreeSet<Atom>, heads: &[Atom]) {
        if self == Management::ReplaceByPredicate {
            let replaced: BTreeSet<(&str, usize)> =
                heads.iter().map(|h| (h.predicate.as_str(), h.arity())).collect();
            kb.retain(|a| !replaced.contains(&(a.predicate.as_str(), a.arity())));
        }
        kb.extend(heads.iter().cloned());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BridgeRule {
    pub dest: ContextRef,
    pub op: Management,
    pub head: Atom,
    pub body: Vec<(ContextRef, Atom)>,
}

impl BridgeRule {
    pub fn is_concrete(&self) -> bool {
        self.dest.name().is_some() && self.body.iter().all(|(r, _)| r.name().is_some())
    }

    /// Designator variables with the roles they must carry.
    fn designators(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in std::iter::once(&self.dest).chain(self.body.iter().map(|(r, _)| r)) {
            if let ContextRef::Designator { role, var } = r {
                out.entry(var.clone()).or_default().insert(role.clone());
            }
        }
        out
    }

    fn check_safety(&self) -> Result<(), String> {
        if self.body.is_empty() {
            return Err("bridge rule body is empty".into());
        }
        let designated = self.designators();
        let mut bound: BTreeSet<&str> = designated.keys().map(String::as_str).collect();
        for (_, a) in &self.body {
            bound.extend(a.variables());
        }
        match self.head.variables().into_iter().find(|v| !bound.contains(v)) {
            Some(v) => Err(format!("head variable {v} does not occur in the body")),
            None => Ok(()),
        }
    }

    /// Every instance of the head whose body holds in `state`. Schematic body
    /// atoms are matched against the source context's consequences.
    pub fn instances(
        &self,
        state: &BTreeMap<String, BTreeSet<Atom>>,
    ) -> Result<Vec<Atom>, UnknownContext> {
        let mut partial = vec![Substitution::new()];
        for (r, pattern) in &self.body {
            let name = r.name().expect("instances() needs a concrete rule");
            let Some(set) = state.get(name) else {
                return Err(UnknownContext(name.to_string()));
            };
            let mut next = Vec::new();
            for theta in &partial {
                let p = pattern.apply(theta);
                if p.is_ground() {
                    if set.contains(&p) {
                        next.push(theta.clone());
                    }
                    continue;
                }
                next.extend(
                    set.iter()
                        .filter(|a| a.predicate == p.predicate && a.arity() == p.arity())
                        .filter_map(|a| p.match_ground(a, theta)),
                );
            }
            partial = next;
            if partial.is_empty() {
                break;
            }
        }
        let mut heads: Vec<Atom> = Vec::new();
        for theta in partial {
            let h = self.head.apply(&theta);
            if !heads.contains(&h) {
                heads.push(h);
            }
        }
        Ok(heads)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bridge rule refers to unknown context `{0}`")]
pub struct UnknownContext(pub String);

impl fmt::Display for BridgeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}({}) <- ", self.dest, self.op.tag(), self.head)?;
        for (i, (r, a)) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "({r}: {a})")?;
        }
        f.write_str(".")
    }
}

/// Whether some instantiation of `rule` fires in `state`.
pub fn applicable(
    rule: &BridgeRule,
    state: &BTreeMap<String, BTreeSet<Atom>>,
) -> Result<bool, UnknownContext> {
    rule.instances(state).map(|h| !h.is_empty())
}

/// Heads of applicable rules grouped by destination, in rule order.
pub fn app(
    rules: &[BridgeRule],
    state: &BTreeMap<String, BTreeSet<Atom>>,
) -> Result<BTreeMap<String, Vec<(Management, Atom)>>, UnknownContext> {
    let mut out: BTreeMap<String, Vec<(Management, Atom)>> = BTreeMap::new();
    for rule in rules {
        let dest = rule.dest.name().expect("app() needs concrete rules").to_string();
        if !state.contains_key(&dest) {
            return Err(UnknownContext(dest));
        }
        for h in rule.instances(state)? {
            let slot = out.entry(dest.clone()).or_default();
            if !slot.contains(&(rule.op, h.clone())) {
                slot.push((rule.op, h));
            }
        }
    }
    Ok(out)
}

fn substitute(atom: &Atom, var: &str, name: &str) -> Atom {
    let theta = Substitution::from([(var.to_string(), Term::Const(name.to_string()))]);
    atom.apply(&theta)
}

/// One concrete rule per combination of registered contexts for the rule's
/// designators. A role nobody registered yields no rules.
pub fn resolve_designators(rule: &BridgeRule, registry: &Registry) -> Vec<BridgeRule> {
    resolve_designators_with(rule, |role| registry.lookup(role))
}

/// [`resolve_designators`] against any role lookup, such as a transport's.
pub fn resolve_designators_with(rule: &BridgeRule, lookup: impl Fn(&str) -> Vec<String>) -> Vec<BridgeRule> {
    let mut out = vec![rule.clone()];
    for (var, roles) in rule.designators() {
        let mut candidates: Option<Vec<String>> = None;
        for role in &roles {
            let names = lookup(role);
            candidates = Some(match candidates {
                None => names,
                Some(prev) => prev.into_iter().filter(|n| names.contains(n)).collect(),
            });
        }
        let candidates = candidates.unwrap_or_default();
        out = out
            .into_iter()
            .flat_map(|r| {
                let var = var.clone();
                candidates.iter().map(move |name| {
                    let fix = |c: &ContextRef| match c {
                        ContextRef::Designator { var: v, .. } if *v == var => {
                            ContextRef::Name(name.clone())
                        }
                        other => other.clone(),
                    };
                    BridgeRule {
                        dest: fix(&r.dest),
                        op: r.op,
                        head: substitute(&r.head, &var, name),
                        body: r
                            .body
                            .iter()
                            .map(|(c, a)| (fix(c), substitute(a, &var, name)))
                            .collect(),
                    }
                })
            })
            .collect();
    }
    out
}

fn context_ref(p: &mut Parser) -> Result<ContextRef, AspError> {
    let name = p.ident()?;
    if *p.peek() != Tok::LParen {
        return Ok(ContextRef::Name(name));
    }
    p.bump();
    let var = match p.bump() {
        Tok::Var(v) => v,
        _ => return Err(p.error("expected a variable in the context designator")),
    };
    p.expect(Tok::RParen)?;
    Ok(ContextRef::Designator { role: name, var })
}

fn arrow(p: &mut Parser) -> Result<(), AspError> {
    match p.peek() {
        Tok::If => {
            p.bump();
            Ok(())
        }
        Tok::Cmp(CmpOp::Lt) => {
            p.bump();
            p.expect(Tok::Minus)
        }
        _ => Err(p.error("expected `<-`")),
    }
}

fn bridge_rule(p: &mut Parser) -> Result<BridgeRule, AspError> {
    let dest = context_ref(p)?;
    p.expect(Tok::Colon)?;
    let tag = p.ident()?;
    let op = Management::from_tag(&tag)
        .ok_or_else(|| p.error(format!("unknown management operator `{tag}` (expected add or replace)")))?;
    p.expect(Tok::LParen)?;
    let head = p.atom()?;
    p.expect(Tok::RParen)?;
    arrow(p)?;
    let mut body = Vec::new();
    loop {
        p.expect(Tok::LParen)?;
        let r = context_ref(p)?;
        p.expect(Tok::Colon)?;
        let a = p.atom()?;
        p.expect(Tok::RParen)?;
        body.push((r, a));
        match p.bump() {
            Tok::Comma => continue,
            Tok::Dot => break,
            _ => return Err(p.error("expected `,` or `.` after a body element")),
        }
    }
    let rule = BridgeRule { dest, op, head, body };
    rule.check_safety().map_err(|m| p.error(m))?;
    Ok(rule)
}

/// Parses one or more bridge rules.
pub fn parse_bridge_rules(text: &str) -> Result<Vec<BridgeRule>, AspError> {
    let mut p = Parser::new(text)?;
    let mut out = Vec::new();
    while !p.at_eof() {
        out.push(bridge_rule(&mut p)?);
    }
    Ok(out)
}

pub fn parse_bridge_rule(text: &str) -> Result<BridgeRule, AspError> {
    let mut rules = parse_bridge_rules(text)?;
    match rules.len() {
        1 => Ok(rules.pop().unwrap()),
        n => Err(AspError::Syntax {
            line: 1,
            column: 1,
            message: format!("expected one bridge rule, found {n}"),
        }),
    }
}
