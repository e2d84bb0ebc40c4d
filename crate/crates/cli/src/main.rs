use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use rand::rngs::StdRng;
use rand::SeedableRng;

use muasp::asp::oracle::{brute_force_answer_sets, random_ground_program, ProgramShape};
use muasp::asp::{ground_relevant, parse_atom_list, parse_ground_atom, parse_program, solve, solve_ground, Atom, Term};
use muasp::mcs::{load_system, MessageEngine, TimedEntry};
use muasp::messaging::{
    Content, Message, Performative, RegistryEntry, RegistryServer, ServiceEndpoint, SimTransport, TcpTransport,
    Transport,
};
use muasp::query::{query, QueryMode};
use muasp::scenario::{run_traffic_light, ScenarioOptions, Transports};
use muasp::shell::{activate, stop, validate_descriptor, Phase, SelectionPolicy, ServiceDescriptor};

#[derive(Parser)]
#[command(name = "muasp", version, about = "Answer set programs as microservices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a program and print its answer sets.
    Solve(SolveArgs),
    /// Replay a script of timed arrivals through one service.
    RunService(RunServiceArgs),
    /// Run a multi-context system file up to its horizon.
    RunSystem(RunSystemArgs),
    /// Built-in scenarios.
    Scenario {
        #[command(subcommand)]
        which: ScenarioCommand,
    },
    /// Yellow-pages registry.
    Registry {
        #[command(subcommand)]
        action: RegistryCommand,
    },
    /// Cross-check the solver against exhaustive search on random programs.
    Check(CheckArgs),
}

#[derive(Args)]
struct SolveArgs {
    file: PathBuf,
    /// Print every answer set (the default).
    #[arg(long, conflicts_with = "first")]
    all: bool,
    /// Print only the first answer set.
    #[arg(long)]
    first: bool,
    /// Evaluate a query such as "K device_ok"; may be repeated.
    #[arg(long = "query", value_name = "MODE ATOM")]
    queries: Vec<String>,
}

#[derive(Args)]
struct RunServiceArgs {
    descriptor: PathBuf,
    /// Script file; each line is `T request REQ ATOMS`, `T sensor ATOMS`,
    /// `T query REQ MODE ATOM`, `T activate` or `T stop`.
    script: Option<PathBuf>,
    /// Last tick to run (defaults to the last scripted time, or 3).
    #[arg(long)]
    horizon: Option<u64>,
    /// Run even when the descriptor fails validation.
    #[arg(long)]
    allow_violations: bool,
}

#[derive(Args)]
struct RunSystemArgs {
    file: PathBuf,
    /// Override the horizon given in the file.
    #[arg(long)]
    horizon: Option<u64>,
    /// Exchange messages over loopback TCP, one thread per context.
    #[arg(long)]
    live: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// The virtual traffic light with five cars.
    TrafficLight(TrafficLightArgs),
}

#[derive(Args)]
struct TrafficLightArgs {
    #[arg(long, default_value_t = 5)]
    horizon: u64,
    #[arg(long)]
    live: bool,
    #[arg(long)]
    json: bool,
    /// Leave the light without its activation signal.
    #[arg(long)]
    no_activate: bool,
    /// Inject a sensor fault such as `fault_tl(t1,ns,3)` at the time it names.
    #[arg(long = "fault", value_name = "ATOM")]
    faults: Vec<String>,
}

#[derive(Subcommand)]
enum RegistryCommand {
    /// Serve the registry over TCP until killed.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
    },
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    count: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::RunService(args) => cmd_run_service(&args),
        Command::RunSystem(args) => cmd_run_system(&args),
        Command::Scenario {
            which: ScenarioCommand::TrafficLight(args),
        } => cmd_traffic_light(&args),
        Command::Registry {
            action: RegistryCommand::Serve { addr },
        } => cmd_registry(&addr),
        Command::Check(args) => cmd_check(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// `"K device_ok"` or just `"device_ok"` (brave).
fn parse_query(text: &str) -> Result<(QueryMode, Atom)> {
    let text = text.trim();
    let (mode, atom) = match text.split_once(char::is_whitespace) {
        Some((m, rest)) if m.parse::<QueryMode>().is_ok() => (m.parse()?, rest),
        _ => (QueryMode::Brave, text),
    };
    Ok((mode, parse_ground_atom(atom.trim())?))
}

fn cmd_solve(args: &SolveArgs) -> Result<ExitCode> {
    let program = parse_program(&read(&args.file)?)?;
    let queries: Vec<_> = args.queries.iter().map(|q| parse_query(q)).collect::<Result<_>>()?;
    let limit = (args.first && queries.is_empty()).then_some(1);
    let sets = match limit {
        Some(n) => solve_ground(&ground_relevant(&program)?, Some(n)),
        None => solve(&program)?,
    };
    if sets.is_empty() {
        println!("inconsistent");
        return Ok(ExitCode::from(1));
    }
    if queries.is_empty() || args.all || args.first {
        let shown = if args.first { &sets[..1] } else { &sets[..] };
        for set in shown {
            println!("{set}");
        }
    }
    for (mode, atom) in queries {
        println!("{}", query(mode, &atom, &sets)?);
    }
    Ok(ExitCode::SUCCESS)
}

enum Step {
    Request { from: String, atoms: Vec<Atom> },
    Sensor(Vec<Atom>),
    Query { from: String, mode: QueryMode, atom: Atom },
    Activate,
    Stop,
}

fn parse_script(text: &str) -> Result<BTreeMap<u64, Vec<Step>>> {
    let mut script: BTreeMap<u64, Vec<Step>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = || format!("script line {}", i + 1);
        let mut words = line.splitn(3, char::is_whitespace);
        let time: u64 = words
            .next()
            .unwrap_or("")
            .trim_start_matches('t')
            .parse()
            .with_context(|| format!("{}: bad time", at()))?;
        let verb = words.next().unwrap_or("");
        let rest = words.next().unwrap_or("").trim();
        let split = |s: &str| -> (String, String) {
            match s.split_once(char::is_whitespace) {
                Some((a, b)) => (a.to_string(), b.trim().to_string()),
                None => (s.to_string(), String::new()),
            }
        };
        let ground_list = |s: &str| -> Result<Vec<Atom>> {
            let atoms = parse_atom_list(s).with_context(at)?;
            if atoms.is_empty() {
                bail!("{}: no atoms", at());
            }
            if let Some(a) = atoms.iter().find(|a| !a.is_ground()) {
                bail!("{}: `{a}` is not ground", at());
            }
            Ok(atoms)
        };
        let step = match verb {
            "request" => {
                let (from, atoms) = split(rest);
                Step::Request {
                    from,
                    atoms: ground_list(&atoms)?,
                }
            }
            "sensor" => Step::Sensor(ground_list(rest)?),
            "query" => {
                let (from, q) = split(rest);
                let (mode, atom) = parse_query(&q).with_context(at)?;
                Step::Query { from, mode, atom }
            }
            "activate" => Step::Activate,
            "stop" => Step::Stop,
            other => bail!("{}: unknown action `{other}`", at()),
        };
        script.entry(time).or_default().push(step);
    }
    Ok(script)
}

fn cmd_run_service(args: &RunServiceArgs) -> Result<ExitCode> {
    let descriptor = ServiceDescriptor::load(&args.descriptor)?;
    if let Err(violations) = validate_descriptor(&descriptor) {
        for v in &violations {
            eprintln!("descriptor: {v}");
        }
        if !args.allow_violations {
            bail!("invalid descriptor ({} violations)", violations.len());
        }
    }
    let script = match &args.script {
        Some(path) => parse_script(&read(path)?)?,
        None => BTreeMap::new(),
    };
    let horizon = args
        .horizon
        .or_else(|| script.keys().next_back().copied())
        .unwrap_or(3);

    const SERVICE: &str = "service";
    let transport = SimTransport::new();
    transport.register(RegistryEntry::new(SERVICE, ["service"]))?;
    let mut endpoint = ServiceEndpoint::new(SERVICE, descriptor, SelectionPolicy::First);
    // a service without an activation signal starts active
    if endpoint.descriptor.activation.is_none() {
        endpoint.state = activate(endpoint.state.clone(), &endpoint.descriptor)?;
    }

    for time in 0..=horizon {
        let mut messages = Vec::new();
        for step in script.get(&time).into_iter().flatten() {
            let send = |perf: Performative, from: &str, content: Content| -> Result<Message> {
                if !transport.is_registered(from) {
                    transport.register(RegistryEntry::new(from, ["client"]))?;
                }
                Ok(Message::new(perf, from, SERVICE, transport.next_id(from), content))
            };
            match step {
                Step::Request { from, atoms } => messages.push(send(Performative::Request, from, Content::Atoms(atoms.clone()))?),
                Step::Sensor(atoms) => messages.push(send(Performative::Inform, "sensor", Content::Atoms(atoms.clone()))?),
                Step::Query { from, mode, atom } => messages.push(send(
                    Performative::QueryIf,
                    from,
                    Content::Query {
                        mode: *mode,
                        atom: atom.clone(),
                    },
                )?),
                Step::Activate => match &endpoint.descriptor.activation {
                    Some(a) => messages.push(send(Performative::Inform, "script", Content::Atom(a.clone()))?),
                    None => endpoint.state = activate(endpoint.state.clone(), &endpoint.descriptor)?,
                },
                Step::Stop => match &endpoint.descriptor.stop {
                    Some(a) => messages.push(send(Performative::Inform, "script", Content::Atom(a.clone()))?),
                    None => endpoint.state = stop(endpoint.state.clone(), &endpoint.descriptor),
                },
            }
        }
        for m in &messages {
            println!("t={time} {m}");
        }
        let step = endpoint.handle(&transport, messages, true)?;
        for m in &step.sent {
            println!("t={time} {m}");
        }
        match (&step.outcome, endpoint.state.phase) {
            (_, Phase::Stopped) => {
                println!("t={time} STOPPED");
                break;
            }
            (None, _) => println!("t={time} FAILURE no-operation"),
            (Some(o), _) if o.is_failure() => println!("t={time} FAILURE {}", muasp::shell::INCONSISTENT),
            (Some(o), _) => {
                let outputs: std::collections::BTreeSet<String> = o.outputs.iter().map(|(_, a)| a.to_string()).collect();
                let outputs: Vec<String> = outputs.into_iter().collect();
                println!("t={time} OUTPUTS [{}]", outputs.join(", "));
            }
        }
        // replies have been printed; clear the client queues
        for e in transport.registry().entries() {
            transport.drain(&e.name);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn print_trace(trace: &[TimedEntry]) {
    for entry in trace {
        println!("t={} steps={}", entry.time, entry.steps);
        for (ctx, set) in &entry.state.sets {
            let atoms: Vec<String> = set.iter().map(Atom::to_string).collect();
            println!("  {ctx}: {{{}}}", atoms.join(", "));
        }
        for ctx in &entry.state.failures {
            println!("  {ctx}: FAILURE");
        }
    }
}

fn cmd_run_system(args: &RunSystemArgs) -> Result<ExitCode> {
    let spec = load_system(&args.file)?;
    let mut system = spec.system;
    let horizon = args.horizon.unwrap_or(spec.horizon);
    let trace = if args.live {
        let transport = TcpTransport::new();
        let mut engine = MessageEngine::new(&transport, &system, true)?;
        engine.timed_run(&mut system, &spec.schedule, horizon)?
    } else {
        system.timed_run(&spec.schedule, horizon)?
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&trace)?);
    } else {
        print_trace(&trace);
    }
    let failed = trace.iter().any(|e| !e.state.failures.is_empty());
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

/// Time of a fault atom: its last integer argument.
fn fault_time(atom: &Atom) -> u64 {
    atom.args
        .iter()
        .rev()
        .find_map(|t| match t {
            Term::Int(n) => u64::try_from(*n).ok(),
            _ => None,
        })
        .unwrap_or(0)
}

fn cmd_traffic_light(args: &TrafficLightArgs) -> Result<ExitCode> {
    let faults = args
        .faults
        .iter()
        .map(|f| parse_ground_atom(f).map(|a| (fault_time(&a), a)))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = ScenarioOptions {
        horizon: args.horizon,
        transport: if args.live { Transports::Live } else { Transports::Simulation },
        activate: !args.no_activate,
        faults,
    };
    let report = run_traffic_light(&opts)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.render_table());
        for m in report.failure_signals() {
            println!("{m}");
        }
    }
    Ok(if report.failed() { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_registry(addr: &str) -> Result<ExitCode> {
    let server = RegistryServer::bind(addr).with_context(|| format!("cannot bind {addr}"))?;
    println!("registry listening on {}", server.local_addr()?);
    server.serve();
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(args: &CheckArgs) -> Result<ExitCode> {
    let mut rng = StdRng::seed_from_u64(args.seed);
    let mut mismatches = 0;
    for i in 0..args.count {
        let program = random_ground_program(&mut rng, ProgramShape::default());
        let mut got: Vec<_> = solve(&program)?.into_iter().map(|s| s.atoms).collect();
        got.sort();
        let mut want = brute_force_answer_sets(&program);
        want.sort();
        if got != want {
            mismatches += 1;
            eprintln!("mismatch on program {i}:\n{program}");
        }
    }
    println!("checked {} programs (seed {}), {mismatches} mismatches", args.count, args.seed);
    if mismatches > 0 {
        return Err(anyhow!("solver disagrees with exhaustive search"));
    }
    Ok(ExitCode::SUCCESS)
}
