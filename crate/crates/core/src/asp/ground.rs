//! Range expansion, safety, and instantiation of non-ground programs.
//!
//! Two instantiation strategies share one binding engine:
//!
//! * [`ground`] substitutes every element of the Herbrand universe for every
//!   variable (builtins prune as soon as they can be evaluated). It is the
//!   textbook instantiation and is exponential in the number of variables.
//! * [`ground_relevant`] only matches positive body atoms against atoms that
//!   are derivable when negation is ignored. The instances it omits all have
//!   an underivable positive body atom, so they can never fire and the answer
//!   sets are the same. The solver grounds this way.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::syntax::{Atom, Builtin, CmpOp, Expr, Program, Rule, Substitution, Term};
use super::AspError;

/// Checks the safety condition and returns the first offending variable.
///
/// A variable is safe when it occurs in a positive body atom, or when it is
/// the bare left side of an `=` whose right side only uses safe variables.
pub fn check_safety(rule: &Rule) -> Result<(), String> {
    let mut bound: HashSet<&str> = rule.pos_body.iter().flat_map(Atom::variables).collect();
    loop {
        let mut changed = false;
        for b in &rule.builtins {
            if b.op != CmpOp::Eq {
                continue;
            }
            if let Some(v) = b.lhs.as_var() {
                if !bound.contains(v) && b.rhs_vars_bound(&bound) {
                    bound.insert(v);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    match rule.variables().into_iter().find(|v| !bound.contains(v.as_str())) {
        Some(v) => Err(v),
        None => Ok(()),
    }
}

impl Builtin {
    fn rhs_vars_bound(&self, bound: &HashSet<&str>) -> bool {
        let mut vars = Vec::new();
        self.rhs.variables(&mut vars);
        vars.iter().all(|v| bound.contains(v.as_str()))
    }
}

/// Replaces every fact containing `lo..hi` terms by one fact per integer
/// (the cartesian product when several ranges occur).
pub fn expand_ranges(program: &Program) -> Result<Program, AspError> {
    let mut rules = Vec::with_capacity(program.rules.len());
    for rule in &program.rules {
        let has_range = |a: &Atom| a.args.iter().any(|t| matches!(t, Term::Range(..)));
        let head_range = rule.head.as_ref().is_some_and(has_range);
        let body_range = rule.pos_body.iter().chain(&rule.neg_body).any(has_range);
        if body_range || (head_range && !rule.is_fact()) {
            return Err(AspError::Range(format!("range outside a fact in `{rule}`")));
        }
        if !head_range {
            rules.push(rule.clone());
            continue;
        }
        let head = rule.head.as_ref().expect("fact has a head");
        let mut partial: Vec<Vec<Term>> = vec![Vec::new()];
        for arg in &head.args {
            let choices: Vec<Term> = match arg {
                Term::Range(lo, hi) if lo > hi => {
                    return Err(AspError::Range(format!(
                        "empty range {lo}..{hi} in `{rule}`"
                    )))
                }
                Term::Range(lo, hi) => (*lo..=*hi).map(Term::Int).collect(),
                other => vec![other.clone()],
            };
            partial = partial
                .into_iter()
                .flat_map(|prefix| {
                    choices.iter().map(move |c| {
                        let mut next = prefix.clone();
                        next.push(c.clone());
                        next
                    })
                })
                .collect();
        }
        rules.extend(
            partial
                .into_iter()
                .map(|args| Rule::fact(Atom::new(head.predicate.clone(), args))),
        );
    }
    Ok(Program { rules })
}

/// The constants and integer literals occurring in the program text.
pub fn herbrand_universe(program: &Program) -> BTreeSet<Term> {
    fn add_term(t: &Term, out: &mut BTreeSet<Term>) {
        match t {
            Term::Int(_) | Term::Const(_) => {
                out.insert(t.clone());
            }
            Term::Range(lo, hi) => out.extend((*lo..=*hi).map(Term::Int)),
            Term::Var(_) => {}
        }
    }
    fn add_expr(e: &Expr, out: &mut BTreeSet<Term>) {
        match e {
            Expr::Term(t) => add_term(t, out),
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                add_expr(a, out);
                add_expr(b, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    for atom in program.atoms() {
        atom.args.iter().for_each(|t| add_term(t, &mut out));
    }
    for b in program.rules.iter().flat_map(|r| &r.builtins) {
        add_expr(&b.lhs, &mut out);
        add_expr(&b.rhs, &mut out);
    }
    out
}

/// Full Herbrand instantiation; see the module docs.
pub fn ground(program: &Program) -> Result<Program, AspError> {
    let program = prepare(program)?;
    let domain = herbrand_universe(&program);
    let universe: Vec<Term> = domain.iter().cloned().collect();
    let mut rules = Vec::new();
    let mut seen = HashSet::new();
    for rule in &program.rules {
        let plan = Plan::new(rule);
        let source = |pattern: &Atom, subst: &Substitution, out: &mut Vec<Substitution>| {
            enumerate_universe(pattern, subst, &universe, out)
        };
        plan.instances(rule, &source, &mut |inst| {
            // Values computed by `=` must still come from the universe.
            let in_domain = inst
                .head
                .iter()
                .chain(&inst.pos_body)
                .chain(&inst.neg_body)
                .flat_map(|a| &a.args)
                .all(|t| domain.contains(t));
            if in_domain && seen.insert(inst.clone()) {
                rules.push(inst);
            }
        })?;
    }
    Ok(Program { rules })
}

/// Instantiation restricted to possibly-derivable atoms; see the module docs.
pub fn ground_relevant(program: &Program) -> Result<Program, AspError> {
    let program = prepare(program)?;
    let plans: Vec<Plan> = program.rules.iter().map(Plan::new).collect();

    let mut possible = AtomIndex::default();
    loop {
        let mut fresh = Vec::new();
        for (rule, plan) in program.rules.iter().zip(&plans) {
            if rule.head.is_none() {
                continue;
            }
            let source = |p: &Atom, s: &Substitution, out: &mut Vec<Substitution>| {
                possible.matches(p, s, out)
            };
            plan.instances(rule, &source, &mut |inst| {
                let head = inst.head.expect("rule has a head");
                if !possible.contains(&head) {
                    fresh.push(head);
                }
            })?;
        }
        if fresh.is_empty() {
            break;
        }
        for atom in fresh {
            possible.insert(atom);
        }
    }

    let mut rules = Vec::new();
    let mut seen = HashSet::new();
    for (rule, plan) in program.rules.iter().zip(&plans) {
        let source =
            |p: &Atom, s: &Substitution, out: &mut Vec<Substitution>| possible.matches(p, s, out);
        plan.instances(rule, &source, &mut |inst| {
            if seen.insert(inst.clone()) {
                rules.push(inst);
            }
        })?;
    }
    Ok(Program { rules })
}

fn prepare(program: &Program) -> Result<Program, AspError> {
    let program = expand_ranges(program)?;
    for rule in &program.rules {
        if let Err(variable) = check_safety(rule) {
            return Err(AspError::Unsafe {
                line: 0,
                column: 0,
                variable,
                rule: rule.to_string(),
            });
        }
        for b in &rule.builtins {
            if has_symbolic_arithmetic(&b.lhs) || has_symbolic_arithmetic(&b.rhs) {
                return Err(AspError::Grounding(format!(
                    "arithmetic on a non-integer in `{rule}`"
                )));
            }
        }
    }
    Ok(program)
}

fn has_symbolic_arithmetic(e: &Expr) -> bool {
    match e {
        Expr::Term(_) => false,
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let symbolic = |x: &Expr| matches!(x, Expr::Term(Term::Const(_)));
            symbolic(a) || symbolic(b) || has_symbolic_arithmetic(a) || has_symbolic_arithmetic(b)
        }
    }
}

fn enumerate_universe(
    pattern: &Atom,
    subst: &Substitution,
    universe: &[Term],
    out: &mut Vec<Substitution>,
) {
    let mut free: Vec<&str> = Vec::new();
    for v in pattern.variables() {
        if !subst.contains_key(v) && !free.contains(&v) {
            free.push(v);
        }
    }
    fn rec(free: &[&str], subst: &mut Substitution, universe: &[Term], out: &mut Vec<Substitution>) {
        match free.split_first() {
            None => out.push(subst.clone()),
            Some((v, rest)) => {
                for value in universe {
                    subst.insert((*v).to_string(), value.clone());
                    rec(rest, subst, universe, out);
                }
                subst.remove(*v);
            }
        }
    }
    rec(&free, &mut subst.clone(), universe, out);
}

#[derive(Default)]
struct AtomIndex {
    all: HashSet<Atom>,
    by_signature: HashMap<(String, usize), Vec<Atom>>,
}

impl AtomIndex {
    fn contains(&self, atom: &Atom) -> bool {
        self.all.contains(atom)
    }

    fn insert(&mut self, atom: Atom) {
        if self.all.insert(atom.clone()) {
            self.by_signature
                .entry((atom.predicate.clone(), atom.arity()))
                .or_default()
                .push(atom);
        }
    }

    fn matches(&self, pattern: &Atom, subst: &Substitution, out: &mut Vec<Substitution>) {
        if let Some(candidates) = self
            .by_signature
            .get(&(pattern.predicate.clone(), pattern.arity()))
        {
            out.extend(candidates.iter().filter_map(|c| pattern.match_ground(c, subst)));
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Match(usize),
    Check(usize),
}

/// Order in which a rule's body is joined: positive atoms in source order,
/// each builtin as soon as its variables are available.
struct Plan {
    steps: Vec<Step>,
}

impl Plan {
    fn new<'r>(rule: &'r Rule) -> Self {
        let mut steps = Vec::new();
        let mut bound: HashSet<&'r str> = HashSet::new();
        let mut pending: Vec<usize> = (0..rule.builtins.len()).collect();
        let mut schedule = |bound: &mut HashSet<&'r str>, steps: &mut Vec<Step>| loop {
            let ready = pending.iter().position(|&j| {
                let b = &rule.builtins[j];
                b.variables().iter().all(|v| bound.contains(v.as_str()))
                    || (b.op == CmpOp::Eq
                        && b.lhs.as_var().is_some_and(|v| !bound.contains(v))
                        && b.rhs_vars_bound(bound))
            });
            match ready {
                Some(pos) => {
                    let j = pending.remove(pos);
                    if let Some(v) = rule.builtins[j].lhs.as_var() {
                        bound.insert(v);
                    }
                    steps.push(Step::Check(j));
                }
                None => break,
            }
        };
        schedule(&mut bound, &mut steps);
        for (i, atom) in rule.pos_body.iter().enumerate() {
            steps.push(Step::Match(i));
            bound.extend(atom.variables());
            schedule(&mut bound, &mut steps);
        }
        Plan { steps }
    }

    fn instances(
        &self,
        rule: &Rule,
        source: &dyn Fn(&Atom, &Substitution, &mut Vec<Substitution>),
        emit: &mut dyn FnMut(Rule),
    ) -> Result<(), AspError> {
        self.walk(0, rule, Substitution::new(), source, emit)
    }

    fn walk(
        &self,
        at: usize,
        rule: &Rule,
        subst: Substitution,
        source: &dyn Fn(&Atom, &Substitution, &mut Vec<Substitution>),
        emit: &mut dyn FnMut(Rule),
    ) -> Result<(), AspError> {
        let Some(step) = self.steps.get(at) else {
            emit(Rule {
                head: rule.head.as_ref().map(|h| h.apply(&subst)),
                pos_body: rule.pos_body.iter().map(|a| a.apply(&subst)).collect(),
                neg_body: rule.neg_body.iter().map(|a| a.apply(&subst)).collect(),
                builtins: Vec::new(),
            });
            return Ok(());
        };
        match *step {
            Step::Match(i) => {
                let mut extensions = Vec::new();
                source(&rule.pos_body[i], &subst, &mut extensions);
                for next in extensions {
                    self.walk(at + 1, rule, next, source, emit)?;
                }
                Ok(())
            }
            Step::Check(j) => match evaluate(&rule.builtins[j], &subst)? {
                Outcome::Holds => self.walk(at + 1, rule, subst, source, emit),
                Outcome::Binds(var, value) => {
                    let mut next = subst;
                    next.insert(var, value);
                    self.walk(at + 1, rule, next, source, emit)
                }
                Outcome::Fails => Ok(()),
            },
        }
    }
}

enum Outcome {
    Holds,
    Fails,
    Binds(String, Term),
}

enum Value {
    Term(Term),
    /// Arithmetic applied to a symbolic constant; the instance is dropped.
    Undefined,
}

fn eval_expr(e: &Expr, subst: &Substitution) -> Result<Value, AspError> {
    match e {
        Expr::Term(Term::Var(v)) => Ok(subst
            .get(v)
            .cloned()
            .map(Value::Term)
            .unwrap_or(Value::Undefined)),
        Expr::Term(t) => Ok(Value::Term(t.clone())),
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let (Value::Term(Term::Int(x)), Value::Term(Term::Int(y))) =
                (eval_expr(a, subst)?, eval_expr(b, subst)?)
            else {
                return Ok(Value::Undefined);
            };
            let result = if matches!(e, Expr::Add(..)) {
                x.checked_add(y)
            } else {
                x.checked_sub(y)
            };
            result
                .map(|v| Value::Term(Term::Int(v)))
                .ok_or_else(|| AspError::Grounding(format!("integer overflow evaluating `{e}`")))
        }
    }
}

fn evaluate(b: &Builtin, subst: &Substitution) -> Result<Outcome, AspError> {
    let rhs = eval_expr(&b.rhs, subst)?;
    if b.op == CmpOp::Eq {
        if let Some(v) = b.lhs.as_var() {
            if !subst.contains_key(v) {
                return Ok(match rhs {
                    Value::Term(t) => Outcome::Binds(v.to_string(), t),
                    Value::Undefined => Outcome::Fails,
                });
            }
        }
    }
    let lhs = eval_expr(&b.lhs, subst)?;
    let (Value::Term(l), Value::Term(r)) = (lhs, rhs) else {
        return Ok(Outcome::Fails);
    };
    let holds = match b.op {
        CmpOp::Eq => l == r,
        CmpOp::Ne => l != r,
        op => match (l, r) {
            (Term::Int(x), Term::Int(y)) => match op {
                CmpOp::Lt => x < y,
                CmpOp::Le => x <= y,
                CmpOp::Gt => x > y,
                _ => x >= y,
            },
            // Orderings are only defined on integers.
            _ => false,
        },
    };
    Ok(if holds { Outcome::Holds } else { Outcome::Fails })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asp::parse_program;

    fn atom(s: &str) -> Atom {
        crate::asp::parse_atom(s).unwrap()
    }

    fn heads(p: &Program) -> Vec<String> {
        p.rules
            .iter()
            .filter_map(|r| r.head.as_ref().map(|h| h.to_string()))
            .collect()
    }

    #[test]
    fn expands_ranges() {
        let p = expand_ranges(&parse_program("time(1..5).").unwrap()).unwrap();
        assert_eq!(
            heads(&p),
            vec!["time(1)", "time(2)", "time(3)", "time(4)", "time(5)"]
        );
        let single = expand_ranges(&parse_program("time(3..3).").unwrap()).unwrap();
        assert_eq!(heads(&single), vec!["time(3)"]);
        let product = expand_ranges(&parse_program("cell(1..2,a,1..2).").unwrap()).unwrap();
        assert_eq!(product.len(), 4);
    }

    #[test]
    fn range_errors() {
        assert!(matches!(
            expand_ranges(&parse_program("time(5..1).").unwrap()),
            Err(AspError::Range(_))
        ));
        assert!(matches!(
            expand_ranges(&parse_program("p(X) :- q(X), r(1..2).").unwrap()),
            Err(AspError::Range(_))
        ));
    }

    #[test]
    fn universe_collects_literals() {
        let p = parse_program("p(a). q(X) :- p(X).").unwrap();
        assert_eq!(
            herbrand_universe(&p),
            BTreeSet::from([Term::constant("a")])
        );
        assert!(herbrand_universe(&Program::default()).is_empty());
        let arith = parse_program("n(1). m(Y) :- n(X), Y = X + 7.").unwrap();
        assert_eq!(
            herbrand_universe(&arith),
            BTreeSet::from([Term::Int(1), Term::Int(7)])
        );
    }

    #[test]
    fn successor_relation_over_time() {
        let p = parse_program("time(1..5). next(Y,X) :- time(X), time(Y), Y = X + 1.").unwrap();
        for g in [ground(&p).unwrap(), ground_relevant(&p).unwrap()] {
            let next: Vec<String> = heads(&g)
                .into_iter()
                .filter(|h| h.starts_with("next"))
                .collect();
            assert_eq!(
                next,
                vec!["next(2,1)", "next(3,2)", "next(4,3)", "next(5,4)"]
            );
            assert!(g.is_ground());
        }
    }

    #[test]
    fn full_instantiation_without_support() {
        let p = parse_program("p(X) :- q(X). r(a).").unwrap();
        let g = ground(&p).unwrap();
        assert!(g.rules.contains(&Rule {
            head: Some(atom("p(a)")),
            pos_body: vec![atom("q(a)")],
            ..Rule::default()
        }));
        // q(a) is underivable, so the relevant grounding leaves the rule out.
        let relevant = ground_relevant(&p).unwrap();
        assert_eq!(heads(&relevant), vec!["r(a)"]);
    }

    #[test]
    fn inequality_filters_pairs() {
        let p = parse_program("lane(ns). lane(ew). cross(L1,L2) :- lane(L1), lane(L2), L1 != L2.")
            .unwrap();
        let g = ground_relevant(&p).unwrap();
        let cross: Vec<String> = heads(&g)
            .into_iter()
            .filter(|h| h.starts_with("cross"))
            .collect();
        assert_eq!(cross, vec!["cross(ns,ew)", "cross(ew,ns)"]);
    }

    #[test]
    fn assignment_binds_left_variable() {
        let p = parse_program("n(1). n(2). s(X,Y) :- n(X), Y = X - 1, Y > 0.").unwrap();
        let g = ground_relevant(&p).unwrap();
        assert!(heads(&g).contains(&"s(2,1)".to_string()));
        assert!(!heads(&g).iter().any(|h| h.starts_with("s(1")));
    }

    #[test]
    fn overflow_is_a_grounding_error() {
        let p = parse_program("n(2147483647). m(Y) :- n(X), Y = X + 1.").unwrap();
        assert!(matches!(ground_relevant(&p), Err(AspError::Grounding(_))));
    }

    #[test]
    fn symbolic_arithmetic_is_rejected() {
        let p = parse_program("n(1). m(Y) :- n(X), Y = a + X.").unwrap();
        assert!(matches!(ground(&p), Err(AspError::Grounding(_))));
    }

    #[test]
    fn negative_bodies_are_instantiated() {
        let p = parse_program("d(a). d(b). p(X) :- d(X), not q(X). q(a).").unwrap();
        let g = ground_relevant(&p).unwrap();
        let p_rules: Vec<String> = g
            .rules
            .iter()
            .filter(|r| r.head.as_ref().is_some_and(|h| h.predicate == "p"))
            .map(|r| r.to_string())
            .collect();
        assert_eq!(p_rules, vec!["p(a) :- d(a), not q(a).", "p(b) :- d(b), not q(b)."]);
    }

    #[test]
    fn constraints_are_grounded() {
        let p = parse_program("t(1). t(2). :- t(X), X > 1.").unwrap();
        let g = ground_relevant(&p).unwrap();
        let constraints: Vec<String> = g
            .rules
            .iter()
            .filter(|r| r.is_constraint())
            .map(|r| r.to_string())
            .collect();
        assert_eq!(constraints, vec![":- t(2)."]);
    }
}
