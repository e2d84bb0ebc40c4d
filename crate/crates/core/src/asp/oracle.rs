//! Reference enumeration by exhaustive search: every subset of the atoms of
//! a ground program is run through [`is_answer_set`]. Exponential; meant for
//! cross-checking the solver on small programs.

use std::collections::BTreeSet;

use super::solve::{is_answer_set, least_model, reduct};
use super::syntax::{Atom, Program};

/// Upper bound on the atom count accepted by [`brute_force_answer_sets`].
pub const MAX_ATOMS: usize = 20;

/// All answer sets of a ground program, ordered by characteristic vector
/// over the sorted atoms ("false" before "true").
///
/// # Panics
///
/// When the program mentions more than [`MAX_ATOMS`] atoms.
pub fn brute_force_answer_sets(gp: &Program) -> Vec<BTreeSet<Atom>> {
    let atoms: Vec<Atom> = gp.atoms().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    assert!(atoms.len() <= MAX_ATOMS, "too many atoms for exhaustive search");
    let n = atoms.len();
    let mut out = Vec::new();
    // Bit (n-1-i) holds atom i, so counting upwards visits vectors in
    // lexicographic order.
    for mask in 0u64..(1u64 << n) {
        let candidate: BTreeSet<Atom> = atoms
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << (n - 1 - i)) != 0)
            .map(|(_, a)| a.clone())
            .collect();
        if is_answer_set(gp, &candidate) {
            out.push(candidate);
        }
    }
    out
}

/// Upper bound on the negated-atom count accepted by
/// [`guess_negated_answer_sets`].
pub const MAX_NEGATED: usize = 20;

/// All answer sets of a ground program found by guessing only the atoms that
/// occur under negation: a guess G yields the least model M of the reduct by
/// G, kept when M agrees with G on those atoms and passes
/// [`is_answer_set`]. Exponential in the number of negated atoms only, so it
/// also handles large positive programs. Sorted by set order.
///
/// # Panics
///
/// When more than [`MAX_NEGATED`] atoms occur under negation.
pub fn guess_negated_answer_sets(gp: &Program) -> Vec<BTreeSet<Atom>> {
    let negated: Vec<Atom> = gp
        .rules
        .iter()
        .flat_map(|r| r.neg_body.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    assert!(negated.len() <= MAX_NEGATED, "too many negated atoms to guess");
    let mut out = BTreeSet::new();
    for mask in 0u64..(1u64 << negated.len()) {
        let guess: BTreeSet<Atom> = negated
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, a)| a.clone())
            .collect();
        let model = least_model(&reduct(gp, &guess));
        let agrees = negated.iter().all(|a| model.contains(a) == guess.contains(a));
        if agrees && is_answer_set(gp, &model) {
            out.insert(model);
        }
    }
    out.into_iter().collect()
}

/// Size limits for [`random_ground_program`].
#[derive(Debug, Clone, Copy)]
pub struct ProgramShape {
    pub max_rules: usize,
    pub max_atoms: usize,
    pub max_body: usize,
    pub constraint_probability: f64,
}

impl Default for ProgramShape {
    fn default() -> Self {
        ProgramShape {
            max_rules: 6,
            max_atoms: 4,
            max_body: 2,
            constraint_probability: 0.15,
        }
    }
}

/// A random propositional program over atoms `a`, `b`, `c`, ... with
/// random default negation.
pub fn random_ground_program<R: rand::Rng + ?Sized>(rng: &mut R, shape: ProgramShape) -> Program {
    use super::syntax::Rule;
    const NAMES: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];
    let n_atoms = rng.random_range(1..=shape.max_atoms.clamp(1, NAMES.len()));
    let pick = |rng: &mut R| Atom::prop(NAMES[rng.random_range(0..n_atoms)]);
    let n_rules = rng.random_range(1..=shape.max_rules.max(1));
    let rules = (0..n_rules)
        .map(|_| {
            let constraint = rng.random_bool(shape.constraint_probability);
            let n_pos = rng.random_range(0..=shape.max_body);
            let n_neg = rng.random_range(0..=shape.max_body);
            let mut rule = Rule {
                head: (!constraint).then(|| pick(rng)),
                pos_body: (0..n_pos).map(|_| pick(rng)).collect(),
                neg_body: (0..n_neg).map(|_| pick(rng)).collect(),
                builtins: Vec::new(),
            };
            if constraint && rule.body_is_empty() {
                rule.neg_body.push(pick(rng));
            }
            rule
        })
        .collect();
    Program { rules }
}
