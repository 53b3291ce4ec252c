//! Property tests over generated protocols, nets, sessions and registries.

use std::collections::{BTreeMap, BTreeSet};

use iproto_core::net::{build_reachability_graph, translate, verify, Bounds, Verdict};
use iproto_core::protocol::{
    expected_responses, parse_protocol, serialize_protocol, validate_well_formedness,
    CommunicativeAct, ComplexMessage, InteractionProtocol, MessageStep, Operator, PrimitiveMessage,
};
use iproto_core::runtime::{
    create_session, trace_conformance, AclMessage, Content, SessionOptions, SessionStatus, Task,
};
use iproto_core::services::{
    discover, select_service, AttrValue, Registry, SelectionPolicy, ServiceDescription,
};
use iproto_testkit::{bindings_for, generate, registry_for, GenConfig};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn codes(ip: &InteractionProtocol) -> BTreeSet<String> {
    validate_well_formedness(ip)
        .error_codes()
        .into_iter()
        .map(str::to_string)
        .collect()
}

fn set(codes: &[&str]) -> BTreeSet<String> {
    codes.iter().map(|c| c.to_string()).collect()
}

/// Clears derived structure so a mutation is the only defect.
fn rederive(ip: &mut InteractionProtocol) {
    ip.orders.clear();
    ip.flow = ip.message_pairs();
}

fn complex_steps(ip: &InteractionProtocol) -> Vec<usize> {
    (0..ip.messages.len())
        .filter(|&i| matches!(ip.messages[i], MessageStep::Complex(_)))
        .collect()
}

fn verified(ip: &InteractionProtocol) -> bool {
    verify(&translate(ip).unwrap(), Bounds::default()).proper_termination == Verdict::Holds
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn serialize_parse_round_trip(seed in any::<u64>()) {
        let ip = generate(seed, &GenConfig::default());
        let text = serialize_protocol(&ip);
        let back = parse_protocol(&text).unwrap();
        prop_assert_eq!(&back, &ip);
        prop_assert_eq!(serialize_protocol(&back), text);
    }

    #[test]
    fn dropping_a_role_is_flagged(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let mut ip = generate(seed, &GenConfig::default());
        let used: Vec<String> = ip.roles[1..]
            .iter()
            .filter(|r| ip.primitives().any(|m| m.sender == r.name || m.receiver == r.name))
            .map(|r| r.name.clone())
            .collect();
        prop_assume!(!used.is_empty());
        let gone = pick.get(&used).clone();
        ip.roles.retain(|r| r.name != gone);
        ip.orders.clear();
        let mut expected = set(&["UNKNOWN_ROLE", "FLOW_UNKNOWN_ROLE"]);
        if ip.roles.len() < 2 {
            expected.insert("ROLES_TOO_FEW".into());
        }
        prop_assert_eq!(codes(&ip), expected);
    }

    #[test]
    fn aliasing_a_cm_sender_is_flagged(seed in any::<u64>()) {
        let mut ip = generate(seed, &GenConfig::default());
        let cms = complex_steps(&ip);
        prop_assume!(!cms.is_empty());
        let MessageStep::Complex(cm) = &mut ip.messages[cms[0]] else { unreachable!() };
        let b = &cm.branches[1];
        let alias = ip.roles.iter().map(|r| r.name.clone()).find(|r| *r != b.sender && *r != b.receiver);
        prop_assume!(alias.is_some());
        cm.branches[1].sender = alias.unwrap();
        rederive(&mut ip);
        prop_assert_eq!(codes(&ip), set(&["CM_MIXED_SENDERS"]));
    }

    #[test]
    fn shrinking_a_cm_is_flagged(seed in any::<u64>()) {
        let mut ip = generate(seed, &GenConfig::default());
        let cms = complex_steps(&ip);
        prop_assume!(!cms.is_empty());
        let MessageStep::Complex(cm) = &mut ip.messages[cms[0]] else { unreachable!() };
        cm.branches.truncate(1);
        rederive(&mut ip);
        prop_assert_eq!(codes(&ip), set(&["CM_TOO_FEW_BRANCHES"]));
    }

    #[test]
    fn expected_responses_is_total(op in prop_oneof![Just(Operator::Xor), Just(Operator::Or), Just(Operator::And)], m in 1usize..=16) {
        let branches = (0..m)
            .map(|i| PrimitiveMessage::new(format!("b{i}"), "I", format!("E{i}"), CommunicativeAct::Inform))
            .collect();
        let cm = ComplexMessage { name: "c".into(), operator: op, branches };
        let (min, max) = expected_responses(&cm);
        prop_assert!(1 <= min && min <= max && max <= m);
    }

    #[test]
    fn translation_and_exploration_are_deterministic(seed in any::<u64>()) {
        let ip = generate(seed, &GenConfig::small());
        let a = translate(&ip).unwrap();
        let b = translate(&ip).unwrap();
        prop_assert_eq!(&a, &b);
        let bounds = Bounds { max_nodes: 20_000, ..Bounds::default() };
        let ga = build_reachability_graph(&a, bounds);
        let gb = build_reachability_graph(&b, bounds);
        prop_assert!(ga.nodes().eq(gb.nodes()));
        prop_assert_eq!(&ga.edges, &gb.edges);
    }

    #[test]
    fn witnesses_replay_to_their_marking(seed in any::<u64>()) {
        let ip = generate(seed, &GenConfig::small());
        let net = translate(&ip).unwrap();
        let g = build_reachability_graph(&net, Bounds::default());
        prop_assume!(g.bounded());
        let report = verify(&net, Bounds::default());
        for (entry, marking) in report.deadlocks.iter().zip(&report.deadlock_markings) {
            let path: Vec<_> = entry
                .witness
                .iter()
                .map(|name| net.transitions.iter().find(|t| &t.name == name).unwrap().id)
                .collect();
            prop_assert!(net.replay(&path).contains(marking));
        }
    }

    #[test]
    fn sessions_are_deterministic_and_conform(seed in any::<u64>(), run_seed in 0u64..1000) {
        let ip = generate(seed, &GenConfig::runnable());
        prop_assume!(verified(&ip));
        let net = translate(&ip).unwrap();
        let run = || {
            let options = SessionOptions {
                verification: Some(verify(&net, Bounds::default())),
                registry: Some(registry_for(&ip, 0.2)),
                retries: 1,
                ..Default::default()
            };
            let mut s = create_session(&ip, &net, &bindings_for(&ip), run_seed, options).unwrap();
            s.announce(Task::new("prop")).unwrap();
            s.run_to_completion(10_000);
            s
        };
        let first = run();
        let second = run();
        prop_assert_eq!(first.trace().to_ndjson(), second.trace().to_ndjson());
        prop_assert!(trace_conformance(first.trace(), &net).conformant);
        prop_assert!(first.status() != SessionStatus::Running);
    }

    #[test]
    fn an_injected_out_of_order_message_does_not_derail_a_run(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let ip = generate(seed, &GenConfig::runnable());
        prop_assume!(verified(&ip) && ip.messages.len() >= 2);
        let net = translate(&ip).unwrap();
        let bindings = bindings_for(&ip);
        // A later message between two process roles, sent far too early.
        let late: Vec<&PrimitiveMessage> = ip.messages[1..]
            .iter()
            .flat_map(|m| m.branches())
            .filter(|m| bindings.contains_key(&m.sender) && bindings.contains_key(&m.receiver))
            .collect();
        prop_assume!(!late.is_empty());
        let pm = *pick.get(&late);
        let options = SessionOptions {
            verification: Some(verify(&net, Bounds::default())),
            registry: Some(registry_for(&ip, 0.0)),
            ..Default::default()
        };
        let mut s = create_session(&ip, &net, &bindings, 1, options).unwrap();
        s.announce(Task::default()).unwrap();
        s.inject(AclMessage {
            performative: pm.act,
            sender: bindings[&pm.sender].clone(),
            receiver: bindings[&pm.receiver].clone(),
            content: Content::default(),
            conversation_id: String::new(),
            reply_with: None,
            in_reply_to: None,
            content_language: "xml",
            timestamp: 0,
            step: Some(pm.name.clone()),
            selection: None,
        });
        let status = s.run_to_completion(10_000);
        prop_assert_eq!(status, SessionStatus::Completed, "{:?}", s.reason());
        prop_assert!(trace_conformance(s.trace(), &net).conformant);
    }

    #[test]
    fn discover_is_monotone(extra in prop::collection::btree_set("[a-c]{1,2}", 1..4), wanted in prop::collection::btree_set("[a-c]{1,2}", 0..3)) {
        let mut reg = Registry::new();
        reg.register(ServiceDescription::new("base-1", ["a", "ab"])).unwrap();
        reg.register(ServiceDescription::new("base-2", ["b", "c", "bc"])).unwrap();
        let before: Vec<String> = discover(&reg, &wanted).into_iter().map(|d| d.id.clone()).collect();
        reg.register(ServiceDescription::new("added", extra.iter().cloned())).unwrap();
        let after: BTreeSet<String> = discover(&reg, &wanted).into_iter().map(|d| d.id.clone()).collect();
        prop_assert!(before.iter().all(|id| after.contains(id)));
    }

    #[test]
    fn selection_is_deterministic(costs in prop::collection::vec(0i64..20, 1..6), first in any::<bool>()) {
        let policy = if first { SelectionPolicy::First } else { SelectionPolicy::MinCost };
        let candidates: BTreeMap<String, _> = costs
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("s{i}"), BTreeMap::from([("cost".to_string(), AttrValue::Int(*c))])))
            .collect();
        let a = select_service(&candidates, policy).unwrap();
        prop_assert_eq!(&a, &select_service(&candidates, policy).unwrap());
        prop_assert!(candidates.contains_key(&a));
    }

    #[test]
    fn registry_files_round_trip(seed in any::<u64>(), failure in 0.0f64..1.0) {
        let ip = generate(seed, &GenConfig { service: 0.6, ..GenConfig::default() });
        let reg = registry_for(&ip, (failure * 100.0).round() / 100.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.toml");
        reg.save_as(&path).unwrap();
        let mut back = Registry::load(&path).unwrap();
        back.set_path(reg.path().map(|p| p.to_path_buf()).unwrap_or_default());
        prop_assert_eq!(back.iter().collect::<Vec<_>>(), reg.iter().collect::<Vec<_>>());
    }
}
