//! Abstract syntax of normal logic programs: terms, atoms, builtins, rules.
//!
//! Every type here renders back to the concrete surface syntax through
//! `Display`, and the rendering re-parses to an equal value.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A term of the language.
///
/// The derived ordering puts integers before symbolic constants, which is the
/// atom order the solver enumerates in.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Int(i32),
    Const(String),
    Var(String),
    /// `lo..hi`; only legal inside facts and gone after range expansion.
    Range(i32, i32),
}

impl Term {
    pub fn constant(name: impl Into<String>) -> Self {
        Term::Const(name.into())
    }

    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn is_ground(&self) -> bool {
        matches!(self, Term::Int(_) | Term::Const(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Int(i) => write!(f, "{i}"),
            Term::Const(c) | Term::Var(c) => f.write_str(c),
            Term::Range(lo, hi) => write!(f, "{lo}..{hi}"),
        }
    }
}

/// Variable bindings produced during grounding and unification.
pub type Substitution = BTreeMap<String, Term>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }

    /// A zero-arity atom.
    pub fn prop(predicate: impl Into<String>) -> Self {
        Atom::new(predicate, Vec::new())
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            _ => None,
        })
    }

    /// Applies `subst` to every variable it binds; unbound variables stay.
    pub fn apply(&self, subst: &Substitution) -> Atom {
        Atom {
            predicate: self.predicate.clone(),
            args: self
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(v) => subst.get(v).cloned().unwrap_or_else(|| t.clone()),
                    _ => t.clone(),
                })
                .collect(),
        }
    }

    /// One-way matching: extends `subst` so that `self` instantiated equals
    /// `ground`. Returns `None` when no such extension exists.
    pub fn match_ground(&self, ground: &Atom, subst: &Substitution) -> Option<Substitution> {
        if self.predicate != ground.predicate || self.args.len() != ground.args.len() {
            return None;
        }
        let mut out = subst.clone();
        for (pattern, value) in self.args.iter().zip(&ground.args) {
            match pattern {
                Term::Var(v) => match out.get(v) {
                    Some(bound) if bound != value => return None,
                    Some(_) => {}
                    None => {
                        out.insert(v.clone(), value.clone());
                    }
                },
                other if other == value => {}
                _ => return None,
            }
        }
        Some(out)
    }

    /// Whether some instance of `self` equals some instance of `other`.
    /// Variables of the two atoms live in separate namespaces.
    pub fn unifies_with(&self, other: &Atom) -> bool {
        if self.predicate != other.predicate || self.args.len() != other.args.len() {
            return false;
        }
        // Flat terms: a tiny union-find over tagged variables is enough.
        let mut parent: BTreeMap<(u8, &str), Binding<'_>> = BTreeMap::new();
        fn find<'a>(
            parent: &BTreeMap<(u8, &'a str), Binding<'a>>,
            mut key: (u8, &'a str),
        ) -> Binding<'a> {
            loop {
                match parent.get(&key) {
                    Some(Binding::Var(next)) => key = *next,
                    Some(Binding::Value(t)) => return Binding::Value(t),
                    None => return Binding::Var(key),
                }
            }
        }
        for (l, r) in self.args.iter().zip(&other.args) {
            let lb = match l {
                Term::Var(v) => find(&parent, (0, v)),
                t => Binding::Value(t),
            };
            let rb = match r {
                Term::Var(v) => find(&parent, (1, v)),
                t => Binding::Value(t),
            };
            match (lb, rb) {
                (Binding::Value(a), Binding::Value(b)) => {
                    if a != b {
                        return false;
                    }
                }
                (Binding::Var(k), other) | (other, Binding::Var(k)) => {
                    if other != Binding::Var(k) {
                        parent.insert(k, other);
                    }
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Binding<'a> {
    Var((u8, &'a str)),
    Value(&'a Term),
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, arg) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{arg}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

// Atoms travel over the wire in surface syntax, e.g. "want_go(c1,t1,ns,2)".
impl Serialize for Atom {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Atom {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        super::parser::parse_atom(&text).map_err(serde::de::Error::custom)
    }
}

/// A literal of a rule body: an atom, possibly under default negation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub atom: Atom,
    pub negated: bool,
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("not ")?;
        }
        write!(f, "{}", self.atom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// Integer arithmetic over terms; only `+` and `-` exist.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Term(Term),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn variables(&self, out: &mut Vec<String>) {
        match self {
            Expr::Term(Term::Var(v)) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Expr::Term(_) => {}
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.variables(out);
                b.variables(out);
            }
        }
    }

    pub fn is_arithmetic(&self) -> bool {
        !matches!(self, Expr::Term(_))
    }

    /// The variable this expression consists of, if it is a bare variable.
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Expr::Term(Term::Var(v)) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Term(t) => write!(f, "{t}"),
            Expr::Add(a, b) => write!(f, "{a} + {}", Paren(b)),
            Expr::Sub(a, b) => write!(f, "{a} - {}", Paren(b)),
        }
    }
}

// Right operands that are themselves sums need parentheses to survive a
// round trip through the left-associative parser.
struct Paren<'a>(&'a Expr);

impl fmt::Display for Paren<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_arithmetic() {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// A comparison such as `Y = X + 1` or `L1 != L2`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Builtin {
    pub op: CmpOp,
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Builtin {
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.lhs.variables(&mut out);
        self.rhs.variables(&mut out);
        out
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}

/// `head :- pos_body, not neg_body, builtins.`; a missing head makes a
/// constraint.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rule {
    pub head: Option<Atom>,
    pub pos_body: Vec<Atom>,
    pub neg_body: Vec<Atom>,
    pub builtins: Vec<Builtin>,
}

impl Rule {
    pub fn fact(atom: Atom) -> Self {
        Rule {
            head: Some(atom),
            ..Rule::default()
        }
    }

    pub fn is_fact(&self) -> bool {
        self.head.is_some() && self.body_is_empty()
    }

    pub fn is_constraint(&self) -> bool {
        self.head.is_none()
    }

    pub fn body_is_empty(&self) -> bool {
        self.pos_body.is_empty() && self.neg_body.is_empty() && self.builtins.is_empty()
    }

    pub fn is_ground(&self) -> bool {
        self.head.iter().all(Atom::is_ground)
            && self.pos_body.iter().all(Atom::is_ground)
            && self.neg_body.iter().all(Atom::is_ground)
            && self.builtins.is_empty()
    }

    /// Variables in order of first occurrence (head, positive body, negative
    /// body, builtins).
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |v: &str| {
            if !out.iter().any(|o| o == v) {
                out.push(v.to_string());
            }
        };
        for atom in self.head.iter().chain(&self.pos_body).chain(&self.neg_body) {
            atom.variables().for_each(&mut push);
        }
        for b in &self.builtins {
            b.variables().iter().for_each(|v| push(v));
        }
        out
    }

    pub fn body_literals(&self) -> impl Iterator<Item = Literal> + '_ {
        self.pos_body
            .iter()
            .map(|a| Literal {
                atom: a.clone(),
                negated: false,
            })
            .chain(self.neg_body.iter().map(|a| Literal {
                atom: a.clone(),
                negated: true,
            }))
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(head) = &self.head {
            write!(f, "{head}")?;
        }
        if !self.body_is_empty() {
            if self.head.is_some() {
                f.write_str(" ")?;
            }
            f.write_str(":- ")?;
            let mut parts: Vec<String> = self.body_literals().map(|l| l.to_string()).collect();
            parts.extend(self.builtins.iter().map(|b| b.to_string()));
            f.write_str(&parts.join(", "))?;
        } else if self.head.is_none() {
            // An empty constraint is always violated; still render it.
            f.write_str(":-")?;
        }
        f.write_str(".")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Program {
    pub rules: Vec<Rule>,
}

impl Program {
    pub fn new(rules: Vec<Rule>) -> Self {
        Program { rules }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// The program extended with `facts`, appended after the source rules.
    pub fn with_facts<'a>(&self, facts: impl IntoIterator<Item = &'a Atom>) -> Program {
        let mut rules = self.rules.clone();
        rules.extend(facts.into_iter().cloned().map(Rule::fact));
        Program { rules }
    }

    pub fn is_ground(&self) -> bool {
        self.rules.iter().all(Rule::is_ground)
    }

    /// Every atom occurring anywhere in the program.
    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.rules.iter().flat_map(|r| {
            r.head
                .iter()
                .chain(r.pos_body.iter())
                .chain(r.neg_body.iter())
        })
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rule in &self.rules {
            writeln!(f, "{rule}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> Term {
        Term::constant(s)
    }

    #[test]
    fn display_atom_and_rule() {
        let head = Atom::new("next", vec![Term::var("Y"), Term::var("X")]);
        let rule = Rule {
            head: Some(head),
            pos_body: vec![Atom::new("time", vec![Term::var("X")])],
            neg_body: vec![Atom::prop("blocked")],
            builtins: vec![Builtin {
                op: CmpOp::Eq,
                lhs: Expr::Term(Term::var("Y")),
                rhs: Expr::Add(
                    Box::new(Expr::Term(Term::var("X"))),
                    Box::new(Expr::Term(Term::Int(1))),
                ),
            }],
        };
        assert_eq!(
            rule.to_string(),
            "next(Y,X) :- time(X), not blocked, Y = X + 1."
        );
        assert_eq!(Rule::fact(Atom::prop("p")).to_string(), "p.");
    }

    #[test]
    fn ordering_puts_integers_first() {
        let a = Atom::new("p", vec![Term::Int(7)]);
        let b = Atom::new("p", vec![c("a")]);
        assert!(a < b);
        assert!(Atom::prop("p") < Atom::prop("q"));
    }

    #[test]
    fn matching_binds_consistently() {
        let pattern = Atom::new("edge", vec![Term::var("X"), Term::var("X")]);
        let loop_atom = Atom::new("edge", vec![c("a"), c("a")]);
        let other = Atom::new("edge", vec![c("a"), c("b")]);
        let s = pattern.match_ground(&loop_atom, &Substitution::new()).unwrap();
        assert_eq!(s.get("X"), Some(&c("a")));
        assert!(pattern.match_ground(&other, &Substitution::new()).is_none());
    }

    #[test]
    fn unification_across_namespaces() {
        let schema = Atom::new("want_go", vec![Term::var("C"), c("t1")]);
        let head = Atom::new("want_go", vec![c("c1"), Term::var("C")]);
        assert!(schema.unifies_with(&head));
        let a = Atom::new("p", vec![Term::var("X"), Term::var("X")]);
        let b = Atom::new("p", vec![c("a"), c("b")]);
        assert!(!a.unifies_with(&b));
        let d = Atom::new("p", vec![Term::var("Y"), Term::var("Y")]);
        assert!(a.unifies_with(&d));
        assert!(!Atom::prop("p").unifies_with(&Atom::prop("q")));
    }
}
