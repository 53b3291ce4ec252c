//! Generated-corpus checks: round trip, net sizes, verifier against the
//! reference semantics, and runs of verified protocols.

use iproto_core::net::{translate, verify, Bounds, PlaceKind, Verdict};
use iproto_core::protocol::{parse_protocol, serialize_protocol, validate_well_formedness};
use iproto_core::runtime::{create_session, trace_conformance, SessionOptions, SessionStatus};
use iproto_testkit::{
    bindings_for, corpus, expected_counts, explore, registry_for, scan_operators,
    scan_service_flow, GenConfig,
};

#[test]
fn generated_protocols_are_well_formed_and_round_trip() {
    for ip in corpus(200, 1, &GenConfig::default()) {
        let report = validate_well_formedness(&ip);
        assert!(report.ok, "{}: {:?}", ip.id, report);
        assert_eq!(parse_protocol(&serialize_protocol(&ip)).unwrap(), ip);
    }
}

#[test]
fn net_sizes_follow_the_formulas() {
    for ip in corpus(200, 1000, &GenConfig::default()) {
        let net = translate(&ip).unwrap();
        let c = expected_counts(&ip);
        assert_eq!(net.transitions.len(), c.transitions, "{}", ip.id);
        assert_eq!(
            net.count_places(PlaceKind::MessageBuffer),
            c.buffers,
            "{}",
            ip.id
        );
        assert_eq!(net.count_places(PlaceKind::Control), c.control, "{}", ip.id);
        assert_eq!(
            net.count_places(PlaceKind::RoleState),
            c.role_places,
            "{}",
            ip.id
        );
        assert_eq!(net.places.len(), c.places, "{}", ip.id);
    }
}

#[test]
fn verifier_agrees_with_reference_semantics() {
    let mut mix = [0usize; 4];
    for ip in corpus(200, 5000, &GenConfig::small()) {
        let net = translate(&ip).unwrap();
        let report = verify(&net, Bounds::default());
        let oracle = explore(&ip, 1_000_000).expect("small protocols stay small");
        assert_eq!(
            report.deadlock_free == Verdict::Fails,
            oracle.deadlock,
            "{}",
            ip.id
        );
        assert_eq!(
            report.proper_termination == Verdict::Holds,
            oracle.proper_termination,
            "{}",
            ip.id
        );
        assert_eq!(report.statistics.nodes, oracle.states, "{}", ip.id);
        mix[usize::from(oracle.deadlock) * 2 + usize::from(oracle.proper_termination)] += 1;
    }
    // The corpus exercises both outcomes.
    assert!(mix[1] > 0 && mix[2] > 0, "{mix:?}");
}

#[test]
fn verified_protocols_run_to_completion_and_conform() {
    let mut ran = 0;
    for ip in corpus(60, 9000, &GenConfig::runnable()) {
        let net = translate(&ip).unwrap();
        let report = verify(&net, Bounds::default());
        if report.proper_termination != Verdict::Holds {
            continue;
        }
        ran += 1;
        for seed in 0..10 {
            let options = SessionOptions {
                verification: Some(report.clone()),
                registry: Some(registry_for(&ip, 0.0)),
                ..Default::default()
            };
            let mut s = create_session(&ip, &net, &bindings_for(&ip), seed, options).unwrap();
            let status = s.run_to_completion(10_000);
            assert_eq!(
                status,
                SessionStatus::Completed,
                "{} seed {seed}: {:?}",
                ip.id,
                s.reason()
            );
            let c = trace_conformance(s.trace(), &net);
            assert!(c.conformant, "{} seed {seed}: {:?}", ip.id, c.divergence);
            assert_eq!(
                scan_operators(&ip, s.trace(), "I"),
                Vec::<String>::new(),
                "{}",
                ip.id
            );
            assert_eq!(
                scan_service_flow(s.trace()),
                Vec::<String>::new(),
                "{}",
                ip.id
            );
            s.trace().check_invariants().unwrap();
        }
    }
    assert!(ran > 10, "only {ran} verified protocols");
}
