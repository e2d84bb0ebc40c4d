use std::collections::BTreeSet;

use muasp::asp::oracle::brute_force_answer_sets;
use muasp::asp::{
    ground, ground_relevant, is_answer_set, least_model, parse_program, reduct, solve,
    solve_ground, Atom, Program, Rule,
};
use muasp::query::{eval_query, QueryMode};
use proptest::prelude::*;

const NAMES: [&str; 4] = ["a", "b", "c", "d"];

fn rule_strategy() -> impl Strategy<Value = Rule> {
    (
        prop::option::weighted(0.85, 0..4usize),
        prop::collection::vec(0..4usize, 0..3),
        prop::collection::vec(0..4usize, 0..3),
    )
        .prop_map(|(head, pos, neg)| {
            let atom = |i: usize| Atom::prop(NAMES[i]);
            let mut rule = Rule {
                head: head.map(atom),
                pos_body: pos.into_iter().map(atom).collect(),
                neg_body: neg.into_iter().map(atom).collect(),
                builtins: Vec::new(),
            };
            if rule.head.is_none() && rule.body_is_empty() {
                rule.neg_body.push(atom(0));
            }
            rule
        })
}

fn program_strategy() -> impl Strategy<Value = Program> {
    prop::collection::vec(rule_strategy(), 0..=6).prop_map(Program::new)
}

fn sets(program: &Program) -> Vec<BTreeSet<Atom>> {
    solve(program)
        .unwrap()
        .into_iter()
        .map(|s| s.atoms)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn solver_matches_exhaustive_enumeration(program in program_strategy()) {
        // The oracle runs on the full instantiation, the solver on the
        // relevance-restricted one.
        let expected = brute_force_answer_sets(&ground(&program).unwrap());
        prop_assert_eq!(sets(&program), expected);
    }

    #[test]
    fn answer_sets_form_an_antichain(program in program_strategy()) {
        let found = sets(&program);
        for (i, x) in found.iter().enumerate() {
            for (j, y) in found.iter().enumerate() {
                if i != j {
                    prop_assert!(!x.is_subset(y), "{:?} within {:?}", x, y);
                }
            }
        }
    }

    #[test]
    fn answer_sets_are_classical_models(program in program_strategy()) {
        let gp = ground_relevant(&program).unwrap();
        for s in sets(&program) {
            for rule in &gp.rules {
                let body = rule.pos_body.iter().all(|a| s.contains(a))
                    && rule.neg_body.iter().all(|a| !s.contains(a));
                match &rule.head {
                    Some(h) => prop_assert!(!body || s.contains(h), "rule {} violated", rule),
                    None => prop_assert!(!body, "constraint {} violated", rule),
                }
            }
            prop_assert!(is_answer_set(&gp, &s));
        }
    }

    #[test]
    fn reduct_leaves_definite_programs_alone(
        program in program_strategy(),
        mask in 0u8..16,
    ) {
        let definite = Program::new(
            program
                .rules
                .into_iter()
                .filter(|r| r.head.is_some())
                .map(|r| Rule { neg_body: Vec::new(), ..r })
                .collect(),
        );
        let interpretation: BTreeSet<Atom> = NAMES
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, n)| Atom::prop(*n))
            .collect();
        prop_assert_eq!(reduct(&definite, &interpretation), definite.clone());
        // and its least model is its unique answer set
        let lm = least_model(&definite);
        prop_assert_eq!(sets(&definite), vec![lm]);
    }

    #[test]
    fn solving_is_deterministic(program in program_strategy()) {
        prop_assert_eq!(solve(&program).unwrap(), solve(&program).unwrap());
    }

    #[test]
    fn rendering_reparses(program in program_strategy()) {
        prop_assert_eq!(parse_program(&program.to_string()).unwrap(), program);
    }

    #[test]
    fn query_dualities(program in program_strategy(), which in 0..4usize) {
        let found = solve(&program).unwrap();
        prop_assume!(!found.is_empty());
        let atom = Atom::prop(NAMES[which]);
        let q = |m| eval_query(m, &atom, &found).unwrap();
        prop_assert_eq!(q(QueryMode::NotAll), !q(QueryMode::Brave));
        prop_assert_eq!(q(QueryMode::NafSome), !q(QueryMode::Known));
        prop_assert_eq!(q(QueryMode::Possible), q(QueryMode::Brave));
        prop_assert!(!q(QueryMode::Known) || q(QueryMode::Brave));
    }
}

#[test]
fn grounding_instances_map_back_to_sources() {
    let program = parse_program(
        "time(1..5).\n\
         lane(ns). lane(ew).\n\
         next(Y,X) :- time(X), time(Y), Y = X + 1.\n\
         swap(L1,L2,T) :- lane(L1), lane(L2), L1 != L2, time(T), T < 3.\n\
         :- swap(L,L,T).",
    )
    .unwrap();
    let expanded = muasp::asp::expand_ranges(&program).unwrap();
    for gp in [ground(&program).unwrap(), ground_relevant(&program).unwrap()] {
        assert!(gp.is_ground());
        for inst in &gp.rules {
            let source_found = expanded.rules.iter().any(|src| {
                let (Some(h), Some(ih)) = (&src.head, &inst.head) else {
                    return src.head.is_none()
                        && inst.head.is_none()
                        && src.pos_body.len() == inst.pos_body.len();
                };
                h.match_ground(ih, &Default::default()).is_some_and(|s| {
                    src.pos_body.len() == inst.pos_body.len()
                        && src
                            .pos_body
                            .iter()
                            .zip(&inst.pos_body)
                            .all(|(a, b)| a.apply(&s).predicate == b.predicate)
                })
            });
            assert!(source_found, "no source rule for {inst}");
        }
        // Builtins are gone and the false ones never survived.
        for inst in gp.rules.iter().filter(|r| {
            r.head.as_ref().is_some_and(|h| h.predicate == "swap")
        }) {
            let h = inst.head.as_ref().unwrap();
            assert_ne!(h.args[0], h.args[1]);
            assert!(matches!(h.args[2], muasp::asp::Term::Int(t) if t < 3));
        }
    }
}

#[test]
fn solve_ground_agrees_with_oracle_on_twelve_atoms() {
    // Three independent even loops plus constraints over 12 atoms.
    let program = parse_program(
        "a1 :- not b1. b1 :- not a1.\n\
         a2 :- not b2. b2 :- not a2.\n\
         a3 :- not b3. b3 :- not a3.\n\
         c1 :- a1, a2. c2 :- b3, not c1.\n\
         d1 :- c1. d2 :- c2. d3 :- d1, d2.\n\
         :- d3.\n\
         e :- not a1.\n",
    )
    .unwrap();
    let gp = ground(&program).unwrap();
    let expected = brute_force_answer_sets(&gp);
    let got: Vec<BTreeSet<Atom>> = solve_ground(&gp, None)
        .into_iter()
        .map(|s| s.atoms)
        .collect();
    assert_eq!(got, expected);
    assert_eq!(got.len(), 8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn guessing_negated_atoms_agrees_with_full_enumeration(program in program_strategy()) {
        use muasp::asp::oracle::guess_negated_answer_sets;
        let gp = ground(&program).unwrap();
        let mut full = brute_force_answer_sets(&gp);
        full.sort();
        prop_assert_eq!(guess_negated_answer_sets(&gp), full);
    }
}
