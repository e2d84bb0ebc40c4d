use std::collections::BTreeSet;

use muasp::asp::Atom;
use muasp::mcs::{BridgeRule, Context, ContextRef, Management, MessageEngine, System, DEFAULT_MAX_ITER};
use muasp::messaging::SimTransport;
use proptest::prelude::*;

const ATOMS: [&str; 4] = ["p", "q", "r", "s"];

/// (destination, head, body of (context, atom))
type RulePlan = (usize, usize, Vec<(usize, usize)>);

#[derive(Debug, Clone)]
struct Shape {
    facts: Vec<Vec<usize>>,
    rules: Vec<RulePlan>,
}

fn shape() -> impl Strategy<Value = Shape> {
    (1..=5usize)
        .prop_flat_map(|n| {
            let facts = prop::collection::vec(prop::collection::vec(0..ATOMS.len(), 0..3), n);
            let rule = (0..n, 0..ATOMS.len(), prop::collection::vec((0..n, 0..ATOMS.len()), 1..3));
            (facts, prop::collection::vec(rule, 0..=10))
        })
        .prop_map(|(facts, rules)| Shape { facts, rules })
}

fn build(s: &Shape) -> (System, usize) {
    let name = |i: usize| format!("c{i}");
    let contexts = s
        .facts
        .iter()
        .enumerate()
        .map(|(i, f)| Context::fact_store(name(i), f.iter().map(|&a| Atom::prop(ATOMS[a]))))
        .collect();
    let heads: BTreeSet<(usize, usize)> = s.rules.iter().map(|(d, h, _)| (*d, *h)).collect();
    let rules = s
        .rules
        .iter()
        .map(|(d, h, body)| BridgeRule {
            dest: ContextRef::Name(name(*d)),
            op: Management::AddFacts,
            head: Atom::prop(ATOMS[*h]),
            body: body
                .iter()
                .map(|(c, a)| (ContextRef::Name(name(*c)), Atom::prop(ATOMS[*a])))
                .collect(),
        })
        .collect();
    (System::new(contexts, rules).unwrap(), heads.len())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn monotone_systems_converge_within_the_head_bound(s in shape()) {
        let (mut m, heads) = build(&s);
        let eq = m.compute_equilibrium(m.observe().unwrap(), DEFAULT_MAX_ITER).unwrap();
        prop_assert!(eq.steps <= heads + 1, "{} steps, {} heads", eq.steps, heads);
        prop_assert_eq!(m.step(&eq.state).unwrap(), eq.state);
    }

    #[test]
    fn monotone_steps_only_grow(s in shape()) {
        let (mut m, _) = build(&s);
        let mut state = m.observe().unwrap();
        for _ in 0..4 {
            let next = m.step(&state).unwrap();
            for (ctx, set) in &state.sets {
                prop_assert!(set.is_subset(next.get(ctx).unwrap()));
            }
            state = next;
        }
    }

    #[test]
    fn message_exchange_matches_the_synchronous_chase(s in shape()) {
        let (mut reference, _) = build(&s);
        let expected = reference.compute_equilibrium(reference.observe().unwrap(), DEFAULT_MAX_ITER).unwrap();
        let (mut m, _) = build(&s);
        let sim = SimTransport::new();
        let mut engine = MessageEngine::new(&sim, &m, false).unwrap();
        let start = m.observe().unwrap();
        let eq = engine.equilibrium_at(&mut m, start, None).unwrap();
        prop_assert_eq!(eq, expected);
    }
}
