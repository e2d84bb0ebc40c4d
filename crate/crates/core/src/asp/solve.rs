//! Reduct, least models, the stability check, and answer set enumeration.
//!
//! Constraints `:- B.` are rewritten to `f_k :- not f_k, B.` with a fresh
//! atom per constraint, so the reduct of any ground program is definite.
//! The fresh atoms use a predicate the parser cannot produce and never
//! appear in answer sets.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ground::ground_relevant;
use super::syntax::{Atom, Program, Rule, Term};
use super::AspError;

const HIDDEN_PREFIX: char = '_';

fn constraint_atom(index: usize) -> Atom {
    Atom::new("_false", vec![Term::Int(index as i32)])
}

pub fn is_hidden(atom: &Atom) -> bool {
    atom.predicate.starts_with(HIDDEN_PREFIX)
}

/// Rewrites each constraint of a ground program into its odd-loop form.
pub fn rewrite_constraints(gp: &Program) -> Program {
    let mut next = 0;
    let rules = gp
        .rules
        .iter()
        .map(|r| {
            if r.head.is_some() {
                return r.clone();
            }
            let fresh = constraint_atom(next);
            next += 1;
            let mut neg_body = r.neg_body.clone();
            neg_body.push(fresh.clone());
            Rule {
                head: Some(fresh),
                pos_body: r.pos_body.clone(),
                neg_body,
                builtins: r.builtins.clone(),
            }
        })
        .collect();
    Program { rules }
}

/// Gelfond–Lifschitz reduct of a ground program with respect to `interpretation`.
pub fn reduct(gp: &Program, interpretation: &BTreeSet<Atom>) -> Program {
    let rules = rewrite_constraints(gp)
        .rules
        .into_iter()
        .filter(|r| !r.neg_body.iter().any(|a| interpretation.contains(a)))
        .map(|r| Rule {
            neg_body: Vec::new(),
            ..r
        })
        .collect();
    Program { rules }
}

/// Least model of a definite ground program by immediate-consequence
/// iteration. Negative literals, if any, are ignored.
pub fn least_model(dp: &Program) -> BTreeSet<Atom> {
    let mut model = BTreeSet::new();
    loop {
        let before = model.len();
        for rule in &dp.rules {
            if let Some(head) = &rule.head {
                if !model.contains(head) && rule.pos_body.iter().all(|a| model.contains(a)) {
                    model.insert(head.clone());
                }
            }
        }
        if model.len() == before {
            return model;
        }
    }
}

/// Whether `interpretation` is a stable model of the ground program.
pub fn is_answer_set(gp: &Program, interpretation: &BTreeSet<Atom>) -> bool {
    least_model(&reduct(gp, interpretation)) == *interpretation
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnswerSet {
    pub atoms: BTreeSet<Atom>,
}

impl AnswerSet {
    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> Self {
        AnswerSet {
            atoms: atoms.into_iter().collect(),
        }
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter()
    }

    pub fn with_predicate<'a>(&'a self, predicate: &'a str) -> impl Iterator<Item = &'a Atom> {
        self.atoms.iter().filter(move |a| a.predicate == predicate)
    }
}

impl fmt::Display for AnswerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, atom) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{atom}")?;
        }
        Ok(())
    }
}

/// Grounds and solves `program`, returning every answer set.
pub fn solve(program: &Program) -> Result<Vec<AnswerSet>, AspError> {
    Ok(solve_ground(&ground_relevant(program)?, None))
}

/// First `limit` answer sets (all when `None`) of an already ground program.
pub fn solve_ground(gp: &Program, limit: Option<usize>) -> Vec<AnswerSet> {
    let search = Search::new(&rewrite_constraints(gp));
    let mut found = Vec::new();
    let mut assignment = vec![Value::Unknown; search.atoms.len()];
    search.run(&mut assignment, limit, &mut found);
    found
}

pub fn is_consistent(program: &Program) -> Result<bool, AspError> {
    Ok(!solve_ground(&ground_relevant(program)?, Some(1)).is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value {
    Unknown,
    True,
    False,
}

struct CompiledRule {
    head: usize,
    pos: Vec<usize>,
    neg: Vec<usize>,
}

/// Depth-first search over all ground atoms in sorted order, trying
/// "false" before "true". Every node propagates two bounds: the least model
/// of the rules whose negative atoms are all assigned false (contained in
/// every answer set below the node) and the least model of the rules not
/// blocked by an atom assigned true (containing every such answer set).
/// Propagation only cuts dead branches, so the answer sets come out in
/// lexicographic order of their characteristic vectors.
struct Search {
    atoms: Vec<Atom>,
    rules: Vec<CompiledRule>,
    /// For each atom, the rules with it in the positive body.
    watches: Vec<Vec<usize>>,
}

impl Search {
    fn new(program: &Program) -> Self {
        let atoms: Vec<Atom> = program
            .atoms()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let id = |a: &Atom| atoms.binary_search(a).expect("atom was collected");
        let rules: Vec<CompiledRule> = program
            .rules
            .iter()
            .map(|r| CompiledRule {
                head: id(r.head.as_ref().expect("constraints are rewritten")),
                pos: r.pos_body.iter().map(id).collect(),
                neg: r.neg_body.iter().map(id).collect(),
            })
            .collect();
        let mut watches = vec![Vec::new(); atoms.len()];
        for (ri, r) in rules.iter().enumerate() {
            for &a in &r.pos {
                watches[a].push(ri);
            }
        }
        Search {
            atoms,
            rules,
            watches,
        }
    }

    fn least_model(&self, enabled: impl Fn(&CompiledRule) -> bool) -> Vec<bool> {
        let mut model = vec![false; self.atoms.len()];
        let mut missing: Vec<usize> = self.rules.iter().map(|r| r.pos.len()).collect();
        let mut active = vec![false; self.rules.len()];
        let mut queue = Vec::new();
        for (ri, r) in self.rules.iter().enumerate() {
            active[ri] = enabled(r);
            if active[ri] && missing[ri] == 0 && !model[r.head] {
                model[r.head] = true;
                queue.push(r.head);
            }
        }
        while let Some(a) = queue.pop() {
            for &ri in &self.watches[a] {
                missing[ri] -= 1;
                let head = self.rules[ri].head;
                if active[ri] && missing[ri] == 0 && !model[head] {
                    model[head] = true;
                    queue.push(head);
                }
            }
        }
        model
    }

    /// Returns `false` on conflict.
    fn propagate(&self, assignment: &mut [Value]) -> bool {
        loop {
            let lower = self.least_model(|r| r.neg.iter().all(|&a| assignment[a] == Value::False));
            let upper = self.least_model(|r| r.neg.iter().all(|&a| assignment[a] != Value::True));
            let mut changed = false;
            for (a, value) in assignment.iter_mut().enumerate() {
                match *value {
                    Value::True if !upper[a] => return false,
                    Value::False if lower[a] => return false,
                    Value::Unknown if lower[a] => {
                        *value = Value::True;
                        changed = true;
                    }
                    Value::Unknown if !upper[a] => {
                        *value = Value::False;
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return true;
            }
        }
    }

    fn run(&self, assignment: &mut [Value], limit: Option<usize>, found: &mut Vec<AnswerSet>) {
        if limit.is_some_and(|l| found.len() >= l) || !self.propagate(assignment) {
            return;
        }
        match assignment.iter().position(|v| *v == Value::Unknown) {
            None => found.push(AnswerSet::new(
                assignment
                    .iter()
                    .zip(&self.atoms)
                    .filter(|(v, a)| **v == Value::True && !is_hidden(a))
                    .map(|(_, a)| a.clone()),
            )),
            Some(branch) => {
                for choice in [Value::False, Value::True] {
                    let mut next = assignment.to_vec();
                    next[branch] = choice;
                    self.run(&mut next, limit, found);
                }
            }
        }
    }
}
