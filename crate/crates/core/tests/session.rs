use std::collections::BTreeMap;
use std::path::PathBuf;

use iproto_core::net::{translate, verify, Bounds, Verdict};
use iproto_core::protocol::{
    parse_protocol, CommunicativeAct, InteractionProtocol, RoleKind, Value,
};
use iproto_core::runtime::{
    create_session, trace_conformance, AclMessage, AgentId, Content, EventKind, Session,
    SessionError, SessionOptions, SessionStatus, Skill, Task,
};
use iproto_core::services::Registry;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn load(name: &str) -> InteractionProtocol {
    parse_protocol(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

/// First process role is the Integrator, the rest are enterprises named
/// after their role.
fn bindings(ip: &InteractionProtocol) -> BTreeMap<String, AgentId> {
    let mut out = BTreeMap::new();
    for (i, r) in ip
        .roles
        .iter()
        .filter(|r| r.kind == RoleKind::PrivateProcess)
        .enumerate()
    {
        let agent = if i == 0 {
            AgentId::integrator(format!("{}-agent", r.name))
        } else {
            AgentId::enterprise(format!("{}-agent", r.name))
        };
        out.insert(r.name.clone(), agent);
    }
    out
}

fn session(ip: &InteractionProtocol, seed: u64, mut options: SessionOptions) -> Session {
    let net = translate(ip).unwrap();
    options.verification = Some(verify(&net, Bounds::default()));
    create_session(ip, &net, &bindings(ip), seed, options).unwrap()
}

#[test]
fn linear_completes_in_four_events_and_conforms() {
    let ip = load("linear.ip");
    let mut s = session(&ip, 0, SessionOptions::default());
    let sent = s.announce(Task::new("quote")).unwrap();
    assert_eq!(sent.len(), 1);
    assert_eq!(sent[0].performative, CommunicativeAct::Request);
    assert_eq!(s.run_to_completion(100), SessionStatus::Completed);
    let t = s.trace();
    assert_eq!(t.of_kind(EventKind::Sent).count(), 2);
    assert_eq!(t.of_kind(EventKind::Delivered).count(), 2);
    assert_eq!(t.of_kind(EventKind::Handled).count(), 2);
    t.check_invariants().unwrap();
    let c = trace_conformance(t, s.net());
    assert!(c.conformant, "{:?}", c.divergence);
}

#[test]
fn session_creation_errors() {
    let ip = load("linear.ip");
    let net = translate(&ip).unwrap();
    let report = verify(&net, Bounds::default());
    let opts = || SessionOptions {
        verification: Some(report.clone()),
        ..Default::default()
    };
    let mut partial = bindings(&ip);
    partial.remove("E");
    let err = create_session(&ip, &net, &partial, 1, opts()).unwrap_err();
    assert_eq!(err.code(), "BINDINGS_INCOMPLETE");

    let two: BTreeMap<_, _> = [
        ("I".to_string(), AgentId::integrator("a")),
        ("E".to_string(), AgentId::integrator("b")),
    ]
    .into();
    assert!(matches!(
        create_session(&ip, &net, &two, 1, opts()),
        Err(SessionError::DuplicateIntegrator(..))
    ));

    let unverified =
        create_session(&ip, &net, &bindings(&ip), 1, SessionOptions::default()).unwrap_err();
    assert_eq!(unverified, SessionError::Unverified);

    let forced = create_session(
        &ip,
        &net,
        &bindings(&ip),
        1,
        SessionOptions {
            force: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(forced.trace().of_kind(EventKind::StatusChange).count(), 1);

    let ok = create_session(&ip, &net, &bindings(&ip), 42, opts()).unwrap();
    assert_eq!(ok.status(), SessionStatus::Running);
    assert!(ok.trace().is_empty());
}

#[test]
fn announce_errors() {
    let ip = load("linear.ip");
    let mut s = session(&ip, 0, SessionOptions::default());
    s.announce(Task::default()).unwrap();
    assert_eq!(
        s.announce(Task::default()).unwrap_err(),
        SessionError::AlreadyAnnounced
    );
    s.run_to_completion(100);
    assert!(matches!(
        s.announce(Task::default()),
        Err(SessionError::NotRunning(SessionStatus::Completed))
    ));
}

#[test]
fn first_step_reply_follows_delivery() {
    let ip = load("linear.ip");
    let mut s = session(&ip, 0, SessionOptions::default());
    s.announce(Task::default()).unwrap();
    let events = s.step();
    let kinds: Vec<_> = events.iter().map(|e| e.kind).collect();
    assert_eq!(
        kinds,
        vec![EventKind::Delivered, EventKind::Handled, EventKind::Sent]
    );
    assert_eq!(
        events[2].message.as_ref().unwrap().performative,
        CommunicativeAct::Inform
    );
    assert_eq!(
        events[2].message.as_ref().unwrap().in_reply_to,
        events[0].message.as_ref().unwrap().reply_with
    );
}

#[test]
fn and_first_step_sends_every_branch() {
    let ip = parse_protocol(
        "protocol a roles { I: process A: process B: process C: process }
         messages { cm go AND { pm g1: I -> A cfp pm g2: I -> B cfp pm g3: I -> C cfp } }",
    )
    .unwrap();
    let mut s = session(&ip, 3, SessionOptions::default());
    assert_eq!(s.announce(Task::default()).unwrap().len(), 3);
    assert_eq!(s.manager().ledgers["go"].expectation, (3, 3));
    assert_eq!(s.run_to_completion(100), SessionStatus::Completed);
    assert_eq!(s.manager().ledgers["go"].received, 3);
}

#[test]
fn same_seed_same_bytes() {
    let ip = load("contract_net.ip");
    let run = |seed| {
        let mut s = session(&ip, seed, SessionOptions::default());
        s.run_to_completion(1000);
        s.trace().to_ndjson()
    };
    assert_eq!(run(7), run(7));
}

#[test]
fn contract_net_completes_across_seeds() {
    let ip = load("contract_net.ip");
    for seed in 0..50 {
        let mut s = session(&ip, seed, SessionOptions::default());
        assert_eq!(
            s.run_to_completion(1000),
            SessionStatus::Completed,
            "seed {seed}: {:?}",
            s.reason()
        );
        let c = trace_conformance(s.trace(), s.net());
        assert!(c.conformant, "seed {seed}: {:?}", c.divergence);
    }
}

#[test]
fn enterprises_answer_from_skills() {
    let ip = load("contract_net.ip");
    let skills = BTreeMap::from([
        (
            "E1-agent".to_string(),
            BTreeMap::from([(
                "weld".to_string(),
                Skill {
                    available: true,
                    cost: 40,
                },
            )]),
        ),
        (
            "E2-agent".to_string(),
            BTreeMap::from([(
                "weld".to_string(),
                Skill {
                    available: false,
                    cost: 10,
                },
            )]),
        ),
    ]);
    let mut s = session(
        &ip,
        1,
        SessionOptions {
            skills,
            ..Default::default()
        },
    );
    let mut task = Task::new("weld a frame");
    task.requirements.push("weld".into());
    s.announce(task).unwrap();
    assert_eq!(s.run_to_completion(1000), SessionStatus::Completed);
    let acts: BTreeMap<String, (CommunicativeAct, String)> = s
        .trace()
        .of_kind(EventKind::Sent)
        .filter_map(|e| e.message.as_ref())
        .map(|m| {
            (
                m.sender.name.clone() + "/" + &m.performative.to_string(),
                (m.performative, m.content.body.clone()),
            )
        })
        .collect();
    assert_eq!(acts["E1-agent/propose"].1, "cost=40");
    assert!(acts.contains_key("E2-agent/refuse"));
}

#[test]
fn cyclic_wait_gets_stuck_at_the_verifier_deadlock() {
    let ip = load("cyclic_wait.ip");
    let net = translate(&ip).unwrap();
    let report = verify(&net, Bounds::default());
    assert_eq!(report.deadlock_free, Verdict::Fails);
    let mut s = create_session(
        &ip,
        &net,
        &bindings(&ip),
        0,
        SessionOptions {
            force: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(s.run_to_completion(100), SessionStatus::Stuck);
    let c = trace_conformance(s.trace(), &net);
    assert!(c.conformant);
    assert_eq!(c.end_marking(), report.deadlock_markings.first());
}

#[test]
fn deadline_one_expires_with_a_cancel() {
    let ip = load("deadline.ip");
    let mut s = session(&ip, 0, SessionOptions::default());
    assert_eq!(s.run_to_completion(100), SessionStatus::DeadlineExpired);
    let cancel = s
        .trace()
        .of_kind(EventKind::Sent)
        .last()
        .unwrap()
        .message
        .clone()
        .unwrap();
    assert_eq!(cancel.performative, CommunicativeAct::Cancel);
    assert_eq!(cancel.sender.name, "I-agent");
}

#[test]
fn false_guard_takes_the_other_xor_branch_or_sticks() {
    let src = |g: &str| {
        format!(
            "protocol g roles {{ I: process E: process }} vars {{ budget: int = 50 }}
             messages {{ cm d XOR {{ pm yes: I -> E accept-proposal guard budget >= 100 {g} }} }}"
        )
    };
    let ip = parse_protocol(&src("pm no: I -> E reject-proposal")).unwrap();
    let mut s = session(&ip, 0, SessionOptions::default());
    assert_eq!(s.run_to_completion(100), SessionStatus::Completed);
    let sent: Vec<_> = s
        .trace()
        .of_kind(EventKind::Sent)
        .map(|e| e.get("step").unwrap().to_string())
        .collect();
    assert_eq!(sent, vec!["no"]);

    let ip = parse_protocol(&src("pm no: I -> E reject-proposal guard budget < 10")).unwrap();
    let net = translate(&ip).unwrap();
    let mut s = create_session(
        &ip,
        &net,
        &bindings(&ip),
        0,
        SessionOptions {
            force: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(s.run_to_completion(100), SessionStatus::Stuck);
}

#[test]
fn out_of_order_message_is_refused_and_run_still_completes() {
    let ip = load("linear.ip");
    let mut s = session(&ip, 5, SessionOptions::default());
    s.announce(Task::default()).unwrap();
    s.inject(AclMessage {
        performative: CommunicativeAct::Inform,
        sender: AgentId::integrator("I-agent"),
        receiver: AgentId::enterprise("E-agent"),
        content: Content::default(),
        conversation_id: String::new(),
        reply_with: None,
        in_reply_to: None,
        content_language: "xml",
        timestamp: 0,
        step: Some("req".into()),
        selection: None,
    });
    assert_eq!(s.run_to_completion(100), SessionStatus::Completed);
    assert!(s
        .trace()
        .of_kind(EventKind::Handled)
        .any(|e| e.get("outcome") == Some("rejected")));
    assert!(s
        .trace()
        .of_kind(EventKind::Sent)
        .any(|e| e.message.as_ref().unwrap().performative == CommunicativeAct::NotUnderstood));
    assert!(trace_conformance(s.trace(), s.net()).conformant);
}

#[test]
fn dataspace_access() {
    let ip = load("contract_net.ip");
    let mut s = session(&ip, 0, SessionOptions::default());
    assert_eq!(s.dataspace_read("budget").unwrap(), Some(&Value::Int(500)));
    let v1 = s.dataspace_write("budget", Value::Int(700)).unwrap();
    let v2 = s.dataspace_write("budget", Value::Int(800)).unwrap();
    assert!(v2 > v1);
    assert_eq!(s.dataspace_read("budget").unwrap(), Some(&Value::Int(800)));
    assert_eq!(
        s.dataspace_write("nope", Value::Int(1)).unwrap_err().code(),
        "UNDECLARED_VARIABLE"
    );
    assert_eq!(s.trace().of_kind(EventKind::VarWrite).count(), 2);
}

#[test]
fn service_role_is_discovered_probed_invoked_and_cancelled() {
    let ip = load("shipping.ip");
    let registry = Registry::load(fixture("registry.toml")).unwrap();
    let mut statuses = BTreeMap::new();
    for seed in 0..20 {
        let mut s = session(
            &ip,
            seed,
            SessionOptions {
                registry: Some(registry.clone()),
                retries: 1,
                ..Default::default()
            },
        );
        let st = s.run_to_completion(1000);
        *statuses.entry(st).or_insert(0) += 1;
        let kinds: Vec<EventKind> = s
            .trace()
            .events
            .iter()
            .map(|e| e.kind)
            .filter(|k| {
                matches!(
                    k,
                    EventKind::Discover | EventKind::Probe | EventKind::Invoke | EventKind::Cancel
                )
            })
            .collect();
        assert_eq!(
            kinds[..3],
            [EventKind::Discover, EventKind::Probe, EventKind::Probe]
        );
        if st == SessionStatus::Completed {
            assert!(trace_conformance(s.trace(), s.net()).conformant);
        }
    }
    assert!(
        statuses
            .get(&SessionStatus::Completed)
            .copied()
            .unwrap_or(0)
            > 0,
        "{statuses:?}"
    );
}
