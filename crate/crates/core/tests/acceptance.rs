//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line (see them
//! with `cargo test -p muasp --test acceptance -- --nocapture`) and then
//! asserts, so a red criterion also fails the run.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use muasp::asp::oracle::{brute_force_answer_sets, guess_negated_answer_sets, random_ground_program, ProgramShape};
use muasp::asp::{ground_relevant, is_answer_set, parse_atom, parse_program, solve, Atom, Program, Term};
use muasp::mcs::{parse_bridge_rules, BridgeRule, Context, ContextRef, Management, System, DEFAULT_MAX_ITER};
use muasp::messaging::{
    decode, encode, Content, Message, Performative, RegistryEntry, SimTransport, TcpTransport, Transport,
};
use muasp::query::{eval_query, QueryMode};
use muasp::scenario::{
    red_light_violations, run_traffic_light, want_go, ScenarioOptions, Transports, CARS, REQUESTS,
    TRAFFIC_LIGHT_PROGRAM,
};
use muasp::shell::{activate, answer_sets, stop, tick, Arrival, SelectionPolicy, ServiceDescriptor, ShellState};

fn atom(s: &str) -> Atom {
    parse_atom(s).unwrap()
}

fn report(criterion: u8, ok: bool, detail: &str) {
    println!("[{}] criterion {criterion}: {detail}", if ok { "PASS" } else { "FAIL" });
}

// criterion 1

#[test]
fn c1_solver_matches_exhaustive_search() {
    let mut rng = StdRng::seed_from_u64(1);
    let shape = ProgramShape {
        max_rules: 6,
        max_atoms: 4,
        ..ProgramShape::default()
    };
    let start = Instant::now();
    let mut mismatches = Vec::new();
    for i in 0..500 {
        let p = random_ground_program(&mut rng, shape);
        let mut got: Vec<BTreeSet<Atom>> = solve(&p).unwrap().into_iter().map(|s| s.atoms).collect();
        got.sort();
        let mut want = brute_force_answer_sets(&p);
        want.sort();
        if got != want {
            mismatches.push(i);
        }
    }
    let elapsed = start.elapsed();
    let ok = mismatches.is_empty() && elapsed < Duration::from_secs(10);
    report(1, ok, &format!("500 random programs, {} mismatches, {elapsed:.2?} (limit 10s)", mismatches.len()));
    assert!(mismatches.is_empty(), "mismatching programs: {mismatches:?}");
    assert!(elapsed < Duration::from_secs(10));
}

// criterion 2

const CONTROLLER: &str = "device_ok :- test_ok.\n\
                          device_fault :- not test_ok.\n\
                          wait :- not wait, not sensor_input.\n";

#[test]
fn c2_controller_truth_table() {
    let base = parse_program(CONTROLLER).unwrap();
    let rows: [(&[&str], Option<&str>); 3] = [
        (&[], None),
        (&["sensor_input"], Some("device_fault")),
        (&["sensor_input", "test_ok"], Some("device_ok")),
    ];
    let mut ok = true;
    for (facts, expected) in rows {
        let facts: Vec<Atom> = facts.iter().map(|f| atom(f)).collect();
        let sets = solve(&base.with_facts(&facts)).unwrap();
        let row_ok = match expected {
            None => sets.is_empty(),
            Some(a) => {
                let other = if a == "device_ok" { "device_fault" } else { "device_ok" };
                sets.len() == 1 && sets[0].contains(&atom(a)) && !sets[0].contains(&atom(other))
            }
        };
        ok &= row_ok;
    }
    report(2, ok, "controller: {} inconsistent, {sensor_input} fault, {sensor_input,test_ok} ok");
    assert!(ok);
}

// criterion 3

#[test]
fn c3_query_modes_and_dualities() {
    let sets = solve(&parse_program("p :- not q. q :- not p.").unwrap()).unwrap();
    let p = atom("p");
    let q = |m| eval_query(m, &p, &sets).unwrap();
    let table_ok = q(QueryMode::Brave)
        && !q(QueryMode::Known)
        && q(QueryMode::NafSome)
        && !q(QueryMode::NotAll)
        && q(QueryMode::Possible) == q(QueryMode::Brave);

    let mut rng = StdRng::seed_from_u64(3);
    let mut checked = 0;
    let mut violations = 0;
    while checked < 200 {
        let program = random_ground_program(&mut rng, ProgramShape::default());
        let sets = solve(&program).unwrap();
        if sets.is_empty() {
            continue;
        }
        checked += 1;
        for name in ["a", "b", "c", "d"] {
            let a = Atom::prop(name);
            let v = |m| eval_query(m, &a, &sets).unwrap();
            if v(QueryMode::NotAll) != !v(QueryMode::Brave) || v(QueryMode::NafSome) != !v(QueryMode::Known) {
                violations += 1;
            }
        }
    }
    let ok = table_ok && violations == 0;
    report(3, ok, &format!("query table on p/q choice, dualities on {checked} consistent programs, {violations} violations"));
    assert!(table_ok);
    assert_eq!(violations, 0);
}

// criterion 4

#[test]
fn c4_shell_lifecycle() {
    let d = ServiceDescriptor {
        program: parse_program("out :- in.\n:- not a.\n:- s.\n").unwrap(),
        activation: Some(atom("a")),
        stop: Some(atom("s")),
        inputs: vec![atom("in")],
        outputs: vec![atom("out")],
        ..ServiceDescriptor::default()
    };
    let none = BTreeSet::new();
    let idle = ShellState::new(1);
    let gated = answer_sets(&idle, &d, &none).unwrap().is_empty();

    let active = activate(idle, &d).unwrap();
    let opened = !answer_sets(&active, &d, &none).unwrap().is_empty();

    let o = tick(active.clone(), &d, vec![Arrival::request(atom("in"), "client", 1)], &SelectionPolicy::First).unwrap();
    let produced = o.outputs.iter().any(|(_, a)| *a == atom("out"));
    let restored = o.state.current_facts == active.current_facts && o.state.io_table == active.io_table;

    let stopped = stop(o.state, &d);
    let closed = answer_sets(&stopped, &d, &none).unwrap().is_empty();

    let ok = gated && opened && produced && restored && closed;
    report(
        4,
        ok,
        &format!(
            "gate {gated}, activation {opened}, output {produced}, stateless restore {restored}, stop closes {closed}"
        ),
    );
    assert!(gated && opened && produced && restored && closed);
}

// criterion 5

fn scenario_program() -> Program {
    let mut facts = vec![atom("active(t1)")];
    facts.extend(CARS.iter().map(|c| Atom::new("car", vec![Term::Const((*c).into())])));
    facts.extend(REQUESTS.iter().map(|(c, l, t)| want_go(c, l, *t)));
    parse_program(TRAFFIC_LIGHT_PROGRAM).unwrap().with_facts(&facts)
}

fn strings<'a>(atoms: impl IntoIterator<Item = &'a Atom>) -> Vec<String> {
    atoms.into_iter().map(Atom::to_string).collect()
}

#[test]
fn c5_traffic_light_reproduction() {
    let start = Instant::now();
    let report_ = run_traffic_light(&ScenarioOptions::default()).unwrap();
    let elapsed = start.elapsed();

    let go = ["go(c1,t1,ns,3)", "go(c2,t1,ns,3)", "go(c3,t1,ew,2)", "go(c4,t1,ns,5)", "go(c5,t1,ew,4)"];
    let wait = ["wait(c1,t1,ns,2)", "wait(c2,t1,ns,2)", "wait(c4,t1,ns,4)"];
    let schedule_ok = strings(&report_.go) == go && strings(&report_.wait) == wait;
    let unique_per_tick = report_.ticks.iter().all(|t| t.answer_sets == 1);

    // independent check on the ground program
    let gp = ground_relevant(&scenario_program()).unwrap();
    let oracle = guess_negated_answer_sets(&gp);
    let oracle_ok = oracle.len() == 1
        && is_answer_set(&gp, &oracle[0])
        && strings(oracle[0].iter().filter(|a| a.predicate == "go")) == go
        && strings(oracle[0].iter().filter(|a| a.predicate == "wait")) == wait;

    // safety holds even with the safety constraint removed
    let mut unguarded = scenario_program();
    unguarded
        .rules
        .retain(|r| !(r.head.is_none() && r.pos_body.iter().any(|a| a.predicate == "go")));
    let unguarded_sets = solve(&unguarded).unwrap();
    let never_violable = !unguarded_sets.is_empty()
        && unguarded_sets.iter().all(|s| red_light_violations(&s.atoms).is_empty())
        && report_.violations.is_empty();

    let fast = elapsed < Duration::from_secs(5);
    let ok = schedule_ok && unique_per_tick && oracle_ok && never_violable && !report_.failed() && fast;
    report(
        5,
        ok,
        &format!(
            "schedule {schedule_ok}, unique answer set {unique_per_tick}, oracle {oracle_ok}, \
             safety {never_violable}, {elapsed:.2?} (limit 5s)"
        ),
    );
    assert!(schedule_ok, "go {:?} wait {:?}", report_.go, report_.wait);
    assert!(unique_per_tick && oracle_ok && never_violable && !report_.failed());
    assert!(fast);
}

// criterion 6

fn chain() -> System {
    System::new(
        vec![
            Context::fact_store("c1", [atom("q")]),
            Context::fact_store("c2", []),
            Context::fact_store("c3", []),
        ],
        parse_bridge_rules("c2: add(q) <- (c1: q).\nc3: add(q) <- (c2: q).").unwrap(),
    )
    .unwrap()
}

/// Random system over propositional atoms with `add` management only.
/// Returns the system and the number of distinct (destination, head) pairs.
fn random_monotone_system(rng: &mut StdRng) -> (System, usize) {
    const ATOMS: [&str; 4] = ["p", "q", "r", "s"];
    let n = rng.random_range(1..=5);
    let names: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
    let contexts = names
        .iter()
        .map(|name| {
            let facts: Vec<Atom> = ATOMS.iter().filter(|_| rng.random_bool(0.3)).map(|a| Atom::prop(*a)).collect();
            Context::fact_store(name.clone(), facts)
        })
        .collect();
    let n_rules = rng.random_range(0..=10);
    let mut heads = BTreeSet::new();
    let rules = (0..n_rules)
        .map(|_| {
            let dest = names[rng.random_range(0..n)].clone();
            let head = Atom::prop(ATOMS[rng.random_range(0..ATOMS.len())]);
            heads.insert((dest.clone(), head.clone()));
            let body = (0..rng.random_range(1..=2))
                .map(|_| {
                    (
                        ContextRef::Name(names[rng.random_range(0..n)].clone()),
                        Atom::prop(ATOMS[rng.random_range(0..ATOMS.len())]),
                    )
                })
                .collect();
            BridgeRule {
                dest: ContextRef::Name(dest),
                op: Management::AddFacts,
                head,
                body,
            }
        })
        .collect();
    (System::new(contexts, rules).unwrap(), heads.len())
}

#[test]
fn c6_equilibria() {
    let mut m = chain();
    let eq = m.compute_equilibrium(m.observe().unwrap(), DEFAULT_MAX_ITER).unwrap();
    let chain_ok = eq.steps <= 3
        && eq.state.sets.values().all(|s| s.contains(&atom("q")))
        && m.step(&eq.state).unwrap() == eq.state;

    let mut rng = StdRng::seed_from_u64(6);
    let mut failures = Vec::new();
    for i in 0..100 {
        let (mut m, heads) = random_monotone_system(&mut rng);
        assert!(m.all_monotone());
        let start = m.observe().unwrap();
        match m.compute_equilibrium(start, DEFAULT_MAX_ITER) {
            Ok(eq) => {
                if eq.steps > heads + 1 || m.step(&eq.state).unwrap() != eq.state {
                    failures.push(format!("system {i}: {} steps, bound {}", eq.steps, heads + 1));
                }
            }
            Err(e) => failures.push(format!("system {i}: {e}")),
        }
    }
    let ok = chain_ok && failures.is_empty();
    report(
        6,
        ok,
        &format!("chain in {} steps, 100 random monotone systems, {} failures", eq.steps, failures.len()),
    );
    assert!(chain_ok);
    assert!(failures.is_empty(), "{failures:#?}");
}

// criterion 7

fn random_atom(rng: &mut StdRng) -> Atom {
    const PREDS: [&str; 4] = ["p", "want_go", "device_ok", "tl"];
    const CONSTS: [&str; 5] = ["c1", "t1", "ns", "ew", "g"];
    let args = (0..rng.random_range(0..=4))
        .map(|_| {
            if rng.random_bool(0.5) {
                Term::Int(rng.random_range(-50..50))
            } else {
                Term::Const(CONSTS[rng.random_range(0..CONSTS.len())].into())
            }
        })
        .collect();
    Atom::new(PREDS[rng.random_range(0..PREDS.len())], args)
}

fn random_message(rng: &mut StdRng) -> Message {
    let performative = Performative::ALL[rng.random_range(0..Performative::ALL.len())];
    let content = match rng.random_range(0..7) {
        0 => Content::Atom(random_atom(rng)),
        1 => Content::Atoms((0..rng.random_range(0..5)).map(|_| random_atom(rng)).collect()),
        2 => Content::Query {
            mode: QueryMode::ALL[rng.random_range(0..QueryMode::ALL.len())],
            atom: random_atom(rng),
        },
        3 => Content::Text(format!("reason \"{}\" ✓", rng.random::<u32>())),
        4 => Content::Register(RegistryEntry::new(format!("svc{}", rng.random::<u8>()), ["anycar", "light"])),
        5 => Content::Lookup("anycar".into()),
        _ => Content::Names(vec!["c1".into(), "c2".into()]),
    };
    let mut m = Message::new(performative, "a", "b", rng.random(), content);
    if performative.is_reply() || rng.random_bool(0.3) {
        m.in_reply_to = Some(rng.random());
    }
    m
}

/// Interleaves sends from three senders to two receivers and checks each
/// (sender, receiver) stream arrives in send order.
fn fifo_holds(transport: &dyn Transport, rng: &mut StdRng) -> bool {
    let senders = ["s1", "s2", "s3"];
    let receivers = ["r1", "r2"];
    for name in senders.iter().chain(&receivers) {
        transport.register(RegistryEntry::new(*name, ["node"])).unwrap();
    }
    let mut sent: BTreeMap<(String, String), Vec<u64>> = BTreeMap::new();
    for _ in 0..300 {
        let from = senders[rng.random_range(0..senders.len())];
        let to = receivers[rng.random_range(0..receivers.len())];
        let id = transport.next_id(from);
        transport
            .send(Message::new(Performative::Inform, from, to, id, Content::Atom(atom("tick"))))
            .unwrap();
        sent.entry((from.into(), to.into())).or_default().push(id);
    }
    if !transport.wait_quiescent(Duration::from_secs(10)) {
        return false;
    }
    let mut got: BTreeMap<(String, String), Vec<u64>> = BTreeMap::new();
    for to in receivers {
        for m in transport.drain(to) {
            got.entry((m.sender.clone(), m.receiver.clone())).or_default().push(m.id);
        }
    }
    got == sent
}

#[test]
fn c7_messaging_conformance() {
    let mut rng = StdRng::seed_from_u64(7);
    let mut roundtrip_failures = 0;
    for _ in 0..1000 {
        let m = random_message(&mut rng);
        match encode(&m).and_then(|bytes| decode(&bytes)) {
            Ok(back) if back == m => {}
            _ => roundtrip_failures += 1,
        }
    }

    let fifo_sim = fifo_holds(&SimTransport::new(), &mut rng);
    let fifo_tcp = fifo_holds(&TcpTransport::new(), &mut rng);

    let sim = run_traffic_light(&ScenarioOptions::default()).unwrap();
    let live = run_traffic_light(&ScenarioOptions {
        transport: Transports::Live,
        ..ScenarioOptions::default()
    })
    .unwrap();
    let transcripts_equal = sim.transcript == live.transcript && !sim.transcript.is_empty();

    // every reply answers a request that went the other way
    let requests: BTreeSet<(String, String, u64)> = sim
        .transcript
        .iter()
        .filter(|m| m.performative == Performative::Request)
        .map(|m| (m.sender.clone(), m.receiver.clone(), m.id))
        .collect();
    let replies: Vec<&Message> = sim.transcript.iter().filter(|m| m.performative.is_reply()).collect();
    let correlated = !replies.is_empty()
        && replies.iter().all(|m| {
            m.in_reply_to
                .is_some_and(|id| requests.contains(&(m.receiver.clone(), m.sender.clone(), id)))
        })
        && requests.iter().all(|(from, to, id)| {
            replies
                .iter()
                .any(|m| m.receiver == *from && m.sender == *to && m.in_reply_to == Some(*id))
        });

    let ok = roundtrip_failures == 0 && fifo_sim && fifo_tcp && transcripts_equal && correlated;
    report(
        7,
        ok,
        &format!(
            "1000 round-trips ({roundtrip_failures} failures), FIFO sim {fifo_sim} tcp {fifo_tcp}, \
             correlation {correlated}, sim/TCP transcripts equal {transcripts_equal} ({} messages)",
            sim.transcript.len()
        ),
    );
    assert_eq!(roundtrip_failures, 0);
    assert!(fifo_sim && fifo_tcp);
    assert!(correlated);
    assert!(transcripts_equal);
}
