//! The virtual traffic light: one service managing light `t1` over two
//! lanes with a five-instant lookahead, and five cars asking to pass.
//!
//! Cars are fact stores with role `anycar`; the light has role
//! `a_traffic_light`. Requests travel to the light through bridge rules
//! with designators and the go/wait answers travel back the same way.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::asp::{parse_atom, parse_program, Atom, Term};
use crate::mcs::{parse_bridge_rules, Context, ContextKind, McsError, MessageEngine, Schedule, System, Update};
use crate::messaging::{Message, Performative, SimTransport, TcpTransport, Transport};
use crate::query::{query, QueryMode, QueryResult};
use crate::shell::{answer_sets, SelectionPolicy, ServiceDescriptor};

/// The light's program. `active(t1)` is not a fact here: it is the
/// service's activation signal. The fault check carries `time(T)` so the
/// rule is safe.
pub const TRAFFIC_LIGHT_PROGRAM: &str = "\
tln(t1).                       % traffic-light identifier

:- not active(t1).             % sensor check: activation
:- lane(L), fault_tl(t1,L,T), time(T).   % sensor check: possible fault

lane(ns).
lane(ew).
time(1..5).
next(Y,X) :- time(X), time(Y), Y = X + 1.

tl(r,TL,L1,T1) :- time(T), lane(L1), lane(L2), tln(TL), L1 != L2, next(T1,T),
                  tl(g,TL,L1,T), tl(r,TL,L2,T).
tl(g,TL,L1,T1) :- time(T), lane(L1), lane(L2), tln(TL), L1 != L2, next(T1,T),
                  tl(r,TL,L1,T), tl(g,TL,L2,T).
tl(g,TL,ns,1) :- tln(TL).
tl(r,TL,ew,T) :- tln(TL), time(T), tl(g,TL,ns,T).

go(C,TL,L,T) :- time(T), car(C), tln(TL), lane(L), want_go(C,TL,L,T), tl(g,TL,L,T).
wait(C,TL,L,T) :- time(T), car(C), tln(TL), lane(L), want_go(C,TL,L,T), tl(r,TL,L,T).
want_go(C,TL,L,T1) :- car(C), tln(TL), lane(L), wait(C,TL,L,T), next(T1,T).

:- time(T), car(C), tln(TL), lane(L), go(C,TL,L,T), tl(r,TL,L,T).
";

pub const LIGHT: &str = "t1";
pub const CARS: [&str; 5] = ["c1", "c2", "c3", "c4", "c5"];

/// (car, lane, request time)
pub const REQUESTS: [(&str, &str, u64); 5] = [
    ("c1", "ns", 2),
    ("c2", "ns", 2),
    ("c3", "ew", 2),
    ("c4", "ns", 4),
    ("c5", "ew", 4),
];

pub const BRIDGE_RULES: &str = "\
a_traffic_light(TL): add(car(C)) <- (anycar(C): car(C)).
a_traffic_light(TL): add(want_go(C,TL,L,T)) <- (anycar(C): want_go(C,TL,L,T)).
anycar(C): add(go(C,TL,L,T)) <- (a_traffic_light(TL): go(C,TL,L,T)).
anycar(C): add(wait(C,TL,L,T)) <- (a_traffic_light(TL): wait(C,TL,L,T)).
";

fn atom(s: &str) -> Atom {
    parse_atom(s).expect("scenario atoms are well formed")
}

pub fn want_go(car: &str, lane: &str, time: u64) -> Atom {
    Atom::new(
        "want_go",
        vec![
            Term::Const(car.into()),
            Term::Const(LIGHT.into()),
            Term::Const(lane.into()),
            Term::Int(time as i32),
        ],
    )
}

pub fn traffic_light_descriptor() -> ServiceDescriptor {
    ServiceDescriptor {
        program: parse_program(TRAFFIC_LIGHT_PROGRAM).expect("embedded program parses"),
        activation: Some(atom("active(t1)")),
        stop: None,
        inputs: vec![
            atom("car(C)"),
            atom("want_go(C,TL,L,T)"),
            atom("fault_tl(TL,L,T)"),
        ],
        outputs: vec![atom("go(C,TL,L,T)"), atom("wait(C,TL,L,T)")],
        queries: vec![
            (QueryMode::Known, atom("tl(g,t1,ns,1)")),
            (QueryMode::Known, atom("tl(r,t1,ew,1)")),
        ],
        ..ServiceDescriptor::default()
    }
}

pub fn traffic_light_system() -> System {
    let mut contexts = vec![Context::service(LIGHT, traffic_light_descriptor(), SelectionPolicy::First)
        .with_roles(["a_traffic_light"])];
    for car in CARS {
        contexts.push(
            Context::fact_store(car, [Atom::new("car", vec![Term::Const(car.into())])]).with_roles(["anycar"]),
        );
    }
    System::new(contexts, parse_bridge_rules(BRIDGE_RULES).expect("embedded bridge rules parse"))
        .expect("scenario system is well formed")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transports {
    /// Deterministic in-process queues, one context at a time.
    Simulation,
    /// Loopback TCP with one thread per context.
    Live,
}

#[derive(Debug, Clone)]
pub struct ScenarioOptions {
    pub horizon: u64,
    pub transport: Transports,
    /// Send the activation signal at time 0.
    pub activate: bool,
    /// Sensor faults injected into the light: (time, fault_tl atom).
    pub faults: Vec<(u64, Atom)>,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            horizon: 5,
            transport: Transports::Simulation,
            activate: true,
            faults: Vec::new(),
        }
    }
}

/// Requests enter the car contexts at their request times.
pub fn traffic_light_schedule(opts: &ScenarioOptions) -> Schedule {
    let mut schedule = Schedule::new();
    if opts.activate {
        schedule.entry(0).or_default().push((LIGHT.into(), Update::Activate));
    }
    for (car, lane, time) in REQUESTS {
        schedule
            .entry(time)
            .or_default()
            .push((car.into(), Update::Add(vec![want_go(car, lane, time)])));
    }
    for (time, fault) in &opts.faults {
        schedule
            .entry(*time)
            .or_default()
            .push((LIGHT.into(), Update::Add(vec![fault.clone()])));
    }
    schedule
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickRecord {
    pub time: u64,
    /// Updates applied at this time, as `context: update`.
    pub injected: Vec<String>,
    /// Answer sets of the light's program with its current facts.
    pub answer_sets: usize,
    /// Size of the selected answer set, 0 on failure.
    pub selected_size: usize,
    /// go and wait atoms first emitted at this time.
    pub go: Vec<Atom>,
    pub wait: Vec<Atom>,
    pub query_results: Vec<QueryResult>,
    /// Contexts without consequences at this time.
    pub failures: Vec<String>,
    pub steps: usize,
    pub messages: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub ticks: Vec<TickRecord>,
    /// Every go and wait atom emitted over the run.
    pub go: Vec<Atom>,
    pub wait: Vec<Atom>,
    /// go atoms that coexist with a red light on their lane and time.
    pub violations: Vec<Atom>,
    /// Delivered messages in canonical order.
    pub transcript: Vec<Message>,
}

impl ScenarioReport {
    pub fn failed(&self) -> bool {
        !self.violations.is_empty() || self.ticks.iter().any(|t| !t.failures.is_empty())
    }

    /// FAILURE messages in the transcript.
    pub fn failure_signals(&self) -> Vec<Message> {
        self.transcript
            .iter()
            .filter(|m| m.performative == Performative::Failure)
            .cloned()
            .collect()
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let list = |atoms: &[Atom]| {
            if atoms.is_empty() {
                "-".to_string()
            } else {
                atoms.iter().map(Atom::to_string).collect::<Vec<_>>().join(" ")
            }
        };
        let _ = writeln!(out, "{:<4} {:<5} {:<5} {:<6} {:<40} {:<36} status", "T", "sets", "size", "msgs", "go", "wait");
        for t in &self.ticks {
            let status = if t.failures.is_empty() {
                "ok".to_string()
            } else {
                format!("FAILURE {}", t.failures.join(","))
            };
            let _ = writeln!(
                out,
                "{:<4} {:<5} {:<5} {:<6} {:<40} {:<36} {}",
                t.time,
                t.answer_sets,
                t.selected_size,
                t.messages,
                list(&t.go),
                list(&t.wait),
                status
            );
            for update in &t.injected {
                let _ = writeln!(out, "     + {update}");
            }
        }
        let _ = writeln!(out, "go:   {}", list(&self.go));
        let _ = writeln!(out, "wait: {}", list(&self.wait));
        if !self.violations.is_empty() {
            let _ = writeln!(out, "VIOLATIONS: {}", list(&self.violations));
        }
        out
    }
}

fn with_predicate(set: &BTreeSet<Atom>, predicate: &str) -> BTreeSet<Atom> {
    set.iter().filter(|a| a.predicate == predicate).cloned().collect()
}

/// go atoms whose lane is red at their time.
pub fn red_light_violations(set: &BTreeSet<Atom>) -> Vec<Atom> {
    set.iter()
        .filter(|a| a.predicate == "go" && a.arity() == 4)
        .filter(|g| {
            let red = Atom::new(
                "tl",
                vec![Term::Const("r".into()), g.args[1].clone(), g.args[2].clone(), g.args[3].clone()],
            );
            set.contains(&red)
        })
        .cloned()
        .collect()
}

pub fn run_traffic_light(opts: &ScenarioOptions) -> Result<ScenarioReport, McsError> {
    let mut system = traffic_light_system();
    let schedule = traffic_light_schedule(opts);
    match opts.transport {
        Transports::Simulation => {
            let transport = SimTransport::new();
            run_on(&mut system, &schedule, opts.horizon, &transport, false)
        }
        Transports::Live => {
            let transport = TcpTransport::new();
            run_on(&mut system, &schedule, opts.horizon, &transport, true)
        }
    }
}

fn run_on(
    system: &mut System,
    schedule: &Schedule,
    horizon: u64,
    transport: &dyn Transport,
    threaded: bool,
) -> Result<ScenarioReport, McsError> {
    let mut engine = MessageEngine::new(transport, system, threaded)?;
    let mut ticks = Vec::new();
    let mut seen_go = BTreeSet::new();
    let mut seen_wait = BTreeSet::new();
    let mut violations = BTreeSet::new();

    for time in 0..=horizon {
        let mut injected = Vec::new();
        for (ctx, update) in schedule.get(&time).into_iter().flatten() {
            system.apply_update(ctx, update)?;
            injected.push(format!("{ctx}: {update}"));
        }
        let before = engine.transcript.len();
        let start = system.observe()?;
        let eq = engine.equilibrium_at(system, start, Some(time))?;

        let light = system.context(LIGHT).expect("the light is part of the system");
        let ContextKind::Service { descriptor, shell, .. } = &light.kind else {
            unreachable!("the light is a service")
        };
        let sets = answer_sets(shell, descriptor, &light.kb).map_err(|source| McsError::Asp {
            context: LIGHT.into(),
            source,
        })?;
        let mut query_results = Vec::new();
        if !sets.is_empty() {
            for (mode, a) in &descriptor.queries {
                query_results.push(query(*mode, a, &sets).expect("scenario queries are ground"));
            }
        }
        for s in &sets {
            violations.extend(red_light_violations(&s.atoms));
        }
        let consequences = eq.state.get(LIGHT).cloned().unwrap_or_default();
        let go: Vec<Atom> = with_predicate(&consequences, "go").difference(&seen_go).cloned().collect();
        let wait: Vec<Atom> = with_predicate(&consequences, "wait").difference(&seen_wait).cloned().collect();
        seen_go.extend(go.iter().cloned());
        seen_wait.extend(wait.iter().cloned());
        ticks.push(TickRecord {
            time,
            injected,
            answer_sets: sets.len(),
            selected_size: sets.first().map_or(0, |s| s.len()),
            go,
            wait,
            query_results,
            failures: eq.state.failures.iter().cloned().collect(),
            steps: eq.steps,
            messages: engine.transcript.len() - before,
        });
    }
    Ok(ScenarioReport {
        ticks,
        go: seen_go.into_iter().collect(),
        wait: seen_wait.into_iter().collect(),
        violations: violations.into_iter().collect(),
        transcript: std::mem::take(&mut engine.transcript),
    })
}
