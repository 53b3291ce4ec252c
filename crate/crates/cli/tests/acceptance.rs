//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use iproto_cli::{cmd_simulate, cmd_verify, exit, BoundsArgs, SimulateArgs};
use iproto_core::net::{translate, verify, Bounds, PlaceKind, Verdict, VerificationReport};
use iproto_core::protocol::{
    parse_protocol, serialize_protocol, InteractionProtocol, MessageStep, Operator, RoleKind,
};
use iproto_core::runtime::{
    create_session, trace_conformance, EventKind, ExecutionTrace, SessionOptions, SessionStatus,
};
use iproto_core::services::SelectionPolicy;
use iproto_testkit::{
    bindings_for, corpus, expected_counts, explore, registry_for, scan_operators,
    scan_service_flow, GenConfig,
};
use serde_json::Value;

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn first<T: std::fmt::Debug>(failures: &[T]) -> String {
    failures
        .first()
        .map(|f| format!("; first: {f:?}"))
        .unwrap_or_default()
}

/// Scanner results collected from every simulated trace.
#[derive(Default)]
struct ScanLog {
    traces: usize,
    instances: BTreeMap<&'static str, usize>,
    violations: Vec<String>,
}

impl ScanLog {
    fn record(&mut self, ip: &InteractionProtocol, trace: &ExecutionTrace) {
        self.traces += 1;
        for step in &ip.messages {
            let key = match step.operator() {
                Some(Operator::Xor) => "xor",
                Some(Operator::And) => "and",
                Some(Operator::Or) => "or",
                None => continue,
            };
            *self.instances.entry(key).or_default() += 1;
        }
        let integrator = ip.messages.first().and_then(|m| m.sender()).unwrap_or("I");
        for v in scan_operators(ip, trace, integrator) {
            self.violations.push(format!("{}: {v}", ip.id));
        }
    }
}

struct Suite {
    corpus: Vec<InteractionProtocol>,
    scans: ScanLog,
}

fn round_trip(s: &mut Suite) -> Outcome {
    let started = Instant::now();
    let mut failures = Vec::new();
    for ip in &s.corpus {
        match parse_protocol(&serialize_protocol(ip)) {
            Ok(back) if &back == ip => {}
            Ok(_) => failures.push(format!("{}: differs", ip.id)),
            Err(e) => failures.push(format!("{}: {e}", ip.id)),
        }
    }
    let elapsed = started.elapsed();
    let max_roles = s.corpus.iter().map(|ip| ip.roles.len()).max().unwrap_or(0);
    let max_steps = s
        .corpus
        .iter()
        .map(|ip| ip.messages.len())
        .max()
        .unwrap_or(0);
    let ops: std::collections::BTreeSet<_> = s
        .corpus
        .iter()
        .flat_map(|ip| ip.messages.iter().filter_map(MessageStep::operator))
        .collect();
    check(
        failures.is_empty() && elapsed < Duration::from_secs(10) && max_roles <= 6 && max_steps <= 10 && ops.len() == 3,
        format!(
            "{} protocols (≤{max_roles} roles, ≤{max_steps} steps, {} operators), {} mismatches, {:.2?}{}",
            s.corpus.len(),
            ops.len(),
            failures.len(),
            elapsed,
            first(&failures)
        ),
    )
}

fn structural_equations(s: &mut Suite) -> Outcome {
    let mut failures = Vec::new();
    for ip in &s.corpus {
        let net = translate(ip).map_err(|e| format!("{}: {e}", ip.id))?;
        let c = expected_counts(ip);
        let got = (
            net.transitions.len(),
            net.places.len(),
            net.count_places(PlaceKind::RoleState),
            net.count_places(PlaceKind::MessageBuffer),
            net.count_places(PlaceKind::Control),
        );
        if got != (c.transitions, c.places, c.role_places, c.buffers, c.control) {
            failures.push(format!("{}: {got:?} vs {c:?}", ip.id));
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{} nets, {} mismatches{}",
            s.corpus.len(),
            failures.len(),
            first(&failures)
        ),
    )
}

fn oracle_equivalence(s: &mut Suite) -> Outcome {
    let started = Instant::now();
    let mut set: Vec<InteractionProtocol> = s
        .corpus
        .iter()
        .filter(|ip| ip.messages.len() <= 6)
        .cloned()
        .collect();
    set.extend(corpus(300, 50_000, &GenConfig::small()));
    let mut failures = Vec::new();
    let (mut deadlocks, mut terminating) = (0, 0);
    for ip in &set {
        let net = translate(ip).map_err(|e| format!("{}: {e}", ip.id))?;
        let report = verify(&net, Bounds::default());
        let Some(oracle) = explore(ip, 2_000_000) else {
            failures.push(format!("{}: oracle state limit", ip.id));
            continue;
        };
        deadlocks += usize::from(oracle.deadlock);
        terminating += usize::from(oracle.proper_termination);
        let verifier = (
            report.deadlock_free == Verdict::Fails,
            report.proper_termination == Verdict::Holds,
        );
        if report.inconclusive() || verifier != (oracle.deadlock, oracle.proper_termination) {
            failures.push(format!(
                "{}: verifier {verifier:?}, oracle {oracle:?}",
                ip.id
            ));
        }
    }
    let elapsed = started.elapsed();
    check(
        failures.is_empty() && elapsed < Duration::from_secs(60) && deadlocks > 0 && terminating > 0,
        format!(
            "{} protocols ({deadlocks} deadlocking, {terminating} terminating), {} disagreements, {:.2?}{}",
            set.len(),
            failures.len(),
            elapsed,
            first(&failures)
        ),
    )
}

fn run_session(
    ip: &InteractionProtocol,
    report: &VerificationReport,
    seed: u64,
    failure: f64,
    retries: u32,
) -> (SessionStatus, Option<String>, ExecutionTrace) {
    let net = translate(ip).unwrap();
    let options = SessionOptions {
        verification: Some(report.clone()),
        registry: Some(registry_for(ip, failure)),
        retries,
        ..Default::default()
    };
    let mut session = create_session(ip, &net, &bindings_for(ip), seed, options).unwrap();
    let status = session.run_to_completion(10_000);
    (
        status,
        session.reason().map(str::to_string),
        session.trace().clone(),
    )
}

fn verified_implies_runs(s: &mut Suite) -> Outcome {
    let mut failures = Vec::new();
    let mut protocols = 0;
    let mut runs = 0;
    for ip in &s.corpus {
        let net = translate(ip).unwrap();
        let report = verify(&net, Bounds::default());
        if report.proper_termination != Verdict::Holds {
            continue;
        }
        protocols += 1;
        for seed in 0..50 {
            runs += 1;
            let (status, reason, trace) = run_session(ip, &report, seed, 0.0, 0);
            if status != SessionStatus::Completed {
                failures.push(format!("{} seed {seed}: {status:?} {reason:?}", ip.id));
            }
            let c = trace_conformance(&trace, &net);
            if !c.conformant {
                failures.push(format!("{} seed {seed}: {:?}", ip.id, c.divergence));
            }
            s.scans.record(ip, &trace);
        }
    }
    check(
        failures.is_empty() && protocols > 0,
        format!(
            "{protocols} verified protocols × 50 seeds = {runs} runs, {} failures{}",
            failures.len(),
            first(&failures)
        ),
    )
}

fn service_sweep(s: &mut Suite) -> Outcome {
    let mut failures = Vec::new();
    let (mut runs, mut retried, mut failed_invokes) = (0, 0, 0);
    let candidates = corpus(
        400,
        70_000,
        &GenConfig {
            service: 0.5,
            ..GenConfig::runnable()
        },
    );
    'sweep: for ip in &candidates {
        if !ip.roles.iter().any(|r| r.kind == RoleKind::WebService) {
            continue;
        }
        let net = translate(ip).unwrap();
        let report = verify(&net, Bounds::default());
        if report.proper_termination != Verdict::Holds {
            continue;
        }
        for seed in 0..5 {
            let (_, _, trace) = run_session(ip, &report, seed, 0.35, 1);
            if trace.of_kind(EventKind::Discover).count() == 0 {
                continue;
            }
            runs += 1;
            let replies = trace.of_kind(EventKind::ServiceReply).collect::<Vec<_>>();
            let failed = replies
                .iter()
                .filter(|e| e.get("outcome") != Some("ok"))
                .count();
            failed_invokes += failed;
            let invokes = trace.of_kind(EventKind::Invoke).count();
            let discovers = trace.of_kind(EventKind::Discover).count();
            retried += usize::from(invokes > discovers);
            for v in scan_service_flow(&trace) {
                failures.push(format!("{} seed {seed}: {v}", ip.id));
            }
            if !trace_conformance(&trace, &net).conformant {
                failures.push(format!("{} seed {seed}: non-conformant", ip.id));
            }
            s.scans.record(ip, &trace);
            if runs == 100 {
                break 'sweep;
            }
        }
    }
    check(
        failures.is_empty() && runs == 100 && retried > 0,
        format!(
            "{runs} service runs, {failed_invokes} failed invocations, {retried} runs retried, {} violations{}",
            failures.len(),
            first(&failures)
        ),
    )
}

fn operator_semantics(s: &mut Suite) -> Outcome {
    let log = &s.scans;
    check(
        log.violations.is_empty() && log.traces > 0 && log.instances.len() == 3,
        format!(
            "{} traces, operator instances {:?}, {} violations{}",
            log.traces,
            log.instances,
            log.violations.len(),
            first(&log.violations)
        ),
    )
}

fn simulate_args(protocol: PathBuf, seed: u64, out: &Path) -> SimulateArgs {
    SimulateArgs {
        protocol,
        registry: None,
        seed,
        max_steps: 10_000,
        bounds: BoundsArgs {
            bounds_nodes: Bounds::default().max_nodes,
            bounds_tokens: Bounds::default().max_tokens,
        },
        policy: SelectionPolicy::MinCost,
        retries: 1,
        force: false,
        task: "acceptance".into(),
        out: out.to_path_buf(),
    }
}

fn determinism(_: &mut Suite) -> Outcome {
    let scratch = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut fixtures: Vec<(PathBuf, Option<PathBuf>, bool)> = vec![
        (fixture("linear.ip"), None, false),
        (fixture("linear_sync.ip"), None, false),
        (fixture("contract_net.ip"), None, false),
        (fixture("procurement.ip"), None, false),
        (
            fixture("shipping.ip"),
            Some(fixture("registry.toml")),
            false,
        ),
        (fixture("deadline.ip"), None, false),
        (fixture("cyclic_wait.ip"), None, true),
    ];
    for ip in corpus(
        13,
        80_000,
        &GenConfig {
            service: 0.3,
            ..GenConfig::default()
        },
    ) {
        let path = scratch.path().join(format!("{}.ip", ip.id));
        std::fs::write(&path, serialize_protocol(&ip)).map_err(|e| e.to_string())?;
        let registry = scratch.path().join(format!("{}.toml", ip.id));
        std::fs::write(&registry, registry_for(&ip, 0.3).to_toml()).map_err(|e| e.to_string())?;
        fixtures.push((path, Some(registry), true));
    }
    let mut failures = Vec::new();
    for (i, (protocol, registry, force)) in fixtures.iter().enumerate() {
        let mut traces = Vec::new();
        for rep in 0..3 {
            let out = scratch.path().join(format!("run{i}-{rep}"));
            let mut args = simulate_args(protocol.clone(), 42, &out);
            args.registry = registry.clone();
            args.force = *force;
            cmd_simulate(&args, &mut Vec::new())
                .map_err(|e| format!("{}: {e:#}", protocol.display()))?;
            traces.push(std::fs::read(out.join("trace.ndjson")).map_err(|e| e.to_string())?);
        }
        if traces[0].is_empty() || traces.iter().any(|t| t != &traces[0]) {
            failures.push(protocol.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    check(
        failures.is_empty() && fixtures.len() == 20,
        format!(
            "{} fixtures × 3 runs, {} differing{}",
            fixtures.len(),
            failures.len(),
            first(&failures)
        ),
    )
}

fn performance(_: &mut Suite) -> Outcome {
    let scratch = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    let started = Instant::now();
    let code = cmd_verify(
        &fixture("and_fanout10.ip"),
        Bounds::default(),
        None,
        &mut out,
    )
    .map_err(|e| e.to_string())?;
    let verify_time = started.elapsed();
    let report: Value = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
    let nodes = report["statistics"]["nodes"].as_u64().unwrap_or(0);

    let procurement = fixture("procurement.ip");
    let ip = parse_protocol(&std::fs::read_to_string(&procurement).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let started = Instant::now();
    let sim = cmd_simulate(
        &simulate_args(procurement, 0, scratch.path()),
        &mut Vec::new(),
    )
    .map_err(|e| e.to_string())?;
    let simulate_time = started.elapsed();
    check(
        code == exit::OK
            && nodes <= 100_000
            && nodes > 10_000
            && verify_time < Duration::from_secs(1)
            && sim == exit::OK
            && ip.messages.len() == 10
            && ip.roles.len() == 4
            && simulate_time < Duration::from_millis(100),
        format!(
            "verify {nodes} markings in {verify_time:.2?}; simulate {} steps / {} roles in {simulate_time:.2?}",
            ip.messages.len(),
            ip.roles.len()
        ),
    )
}

fn negative_path(_: &mut Suite) -> Outcome {
    let scratch = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    let code = cmd_verify(
        &fixture("cyclic_wait.ip"),
        Bounds::default(),
        None,
        &mut out,
    )
    .map_err(|e| e.to_string())?;
    let report: Value = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
    let witness = &report["deadlocks"][0];

    let mut args = simulate_args(fixture("cyclic_wait.ip"), 0, scratch.path());
    args.force = true;
    let mut out = Vec::new();
    let sim = cmd_simulate(&args, &mut out).map_err(|e| e.to_string())?;
    let summary: Value = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
    check(
        code == exit::FAIL
            && report["deadlock_free"] == "fails"
            && witness.is_object()
            && sim == exit::FAIL
            && summary["status"] == "stuck"
            && summary["stuck_marking"] == witness["marking"],
        format!(
            "witness {} (via {}), stuck at {}",
            witness["marking"], witness["witness"], summary["stuck_marking"]
        ),
    )
}

type Criterion = (&'static str, fn(&mut Suite) -> Outcome);

const CRITERIA: [Criterion; 9] = [
    ("round-trip law", round_trip),
    ("translation structural equations", structural_equations),
    ("verifier-oracle equivalence", oracle_equivalence),
    ("verified implies runs", verified_implies_runs),
    ("service flow fidelity", service_sweep),
    ("operator semantics", operator_semantics),
    ("determinism", determinism),
    ("desk-scale performance", performance),
    ("negative-path verification", negative_path),
];

/// Display order follows the criterion numbering; operator semantics (5)
/// runs after the service sweep (6) so it can scan those traces too.
const NUMBERS: [usize; 9] = [1, 2, 3, 4, 6, 5, 7, 8, 9];

fn main() {
    let mut suite = Suite {
        corpus: corpus(500, 1, &GenConfig::default()),
        scans: ScanLog::default(),
    };
    let mut results = Vec::new();
    for ((name, run), n) in CRITERIA.iter().zip(NUMBERS) {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&mut suite)))
            .unwrap_or_else(|_| Err("panicked".into()));
        results.push((n, *name, outcome, started.elapsed()));
    }
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, name, outcome, elapsed) in &results {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{n}] {name}: {detail} ({elapsed:.2?})");
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
