//! Trace scanners: read an execution trace back against the protocol and
//! report every rule it breaks.

use std::collections::{BTreeMap, BTreeSet};

use iproto_core::protocol::{expected_responses, InteractionProtocol, MessageStep, Operator};
use iproto_core::runtime::{EventKind, ExecutionTrace, SessionStatus, TraceEvent};

fn step_of(e: &TraceEvent) -> Option<&str> {
    e.message.as_ref()?.step.as_deref()
}

fn genuine_sent(trace: &ExecutionTrace) -> impl Iterator<Item = (usize, &TraceEvent)> {
    trace.events.iter().enumerate().filter(|(_, e)| {
        e.kind == EventKind::Sent && e.get("injected").is_none() && step_of(e).is_some()
    })
}

fn accepted(e: &TraceEvent) -> bool {
    e.kind == EventKind::Handled && e.get("outcome") == Some("accepted")
}

/// Operator semantics and response accounting.
///
/// Any trace: no branch goes out twice, at most one XOR branch, OR branches
/// agree on their subset. Completed traces additionally: exactly one XOR
/// branch, every AND branch sent and accepted, 1..=m OR branches matching the
/// subset, every ledger within its bounds. The Integrator (`integrator`
/// role) never sends past a complex message before its minimum number of
/// branches has been delivered.
pub fn scan_operators(
    ip: &InteractionProtocol,
    trace: &ExecutionTrace,
    integrator: &str,
) -> Vec<String> {
    let mut out = Vec::new();
    let completed = trace.final_status() == Some(SessionStatus::Completed);
    let mut sent: BTreeMap<&str, Vec<(usize, Option<u32>)>> = BTreeMap::new();
    for (i, e) in genuine_sent(trace) {
        let m = e.message.as_ref().unwrap();
        sent.entry(step_of(e).unwrap())
            .or_default()
            .push((i, m.selection));
    }
    let handled: BTreeMap<&str, usize> =
        trace
            .events
            .iter()
            .filter(|e| accepted(e))
            .fold(BTreeMap::new(), |mut acc, e| {
                if let Some(s) = step_of(e) {
                    *acc.entry(s).or_insert(0) += 1;
                }
                acc
            });

    for step in &ip.messages {
        let bs = step.branches();
        for b in bs {
            if sent.get(b.name.as_str()).map_or(0, Vec::len) > 1 {
                out.push(format!("branch `{}` sent more than once", b.name));
            }
        }
        let MessageStep::Complex(cm) = step else {
            continue;
        };
        let fired: Vec<usize> = (0..bs.len())
            .filter(|&b| sent.contains_key(bs[b].name.as_str()))
            .collect();
        let m = bs.len();
        match cm.operator {
            Operator::Xor => {
                if fired.len() > 1 || (completed && fired.len() != 1) {
                    out.push(format!("XOR `{}` fired {} branches", cm.name, fired.len()));
                }
            }
            Operator::And => {
                if completed && fired.len() != m {
                    out.push(format!(
                        "AND `{}` fired {} of {m} branches",
                        cm.name,
                        fired.len()
                    ));
                }
                if completed
                    && bs
                        .iter()
                        .any(|b| handled.get(b.name.as_str()).copied().unwrap_or(0) != 1)
                {
                    out.push(format!(
                        "AND `{}` has a branch not handled exactly once",
                        cm.name
                    ));
                }
            }
            Operator::Or => {
                let subsets: BTreeSet<Option<u32>> = fired
                    .iter()
                    .map(|&b| sent[bs[b].name.as_str()][0].1)
                    .collect();
                if subsets.len() > 1 || subsets.contains(&None) {
                    out.push(format!(
                        "OR `{}` branches disagree on their subset",
                        cm.name
                    ));
                }
                if let Some(Some(mask)) = subsets.iter().next() {
                    if fired.iter().any(|&b| mask & (1 << b) == 0) {
                        out.push(format!(
                            "OR `{}` fired a branch outside its subset",
                            cm.name
                        ));
                    }
                    if completed && fired.len() != mask.count_ones() as usize {
                        out.push(format!(
                            "OR `{}` fired {} of its {} chosen branches",
                            cm.name,
                            fired.len(),
                            mask.count_ones()
                        ));
                    }
                }
                if fired.len() > m || (completed && fired.is_empty()) {
                    out.push(format!("OR `{}` fired {} branches", cm.name, fired.len()));
                }
            }
        }
        if completed {
            let (min, max) = expected_responses(cm);
            let got: usize = bs
                .iter()
                .map(|b| handled.get(b.name.as_str()).copied().unwrap_or(0))
                .sum();
            if got < min || got > max {
                out.push(format!(
                    "`{}` collected {got} responses, expected {min}..={max}",
                    cm.name
                ));
            }
        }
    }

    // Integrator gating: each send waits until the minimum number of
    // branches of every earlier complex message has been delivered.
    let order: Vec<usize> = match ip.orders.get(integrator) {
        Some(names) => names
            .iter()
            .filter_map(|n| ip.messages.iter().position(|m| m.name() == n))
            .collect(),
        None => (0..ip.messages.len()).collect(),
    };
    let sends: Vec<usize> = order
        .into_iter()
        .filter(|&s| ip.messages[s].branches()[0].sender == integrator)
        .collect();
    for (k, &s) in sends.iter().enumerate() {
        let names: BTreeSet<&str> = ip.messages[s]
            .branches()
            .iter()
            .map(|b| b.name.as_str())
            .collect();
        let Some((at, _)) = genuine_sent(trace).find(|(_, e)| names.contains(step_of(e).unwrap()))
        else {
            continue;
        };
        for &earlier in &sends[..k] {
            let MessageStep::Complex(cm) = &ip.messages[earlier] else {
                continue;
            };
            let branch_names: BTreeSet<&str> =
                cm.branches.iter().map(|b| b.name.as_str()).collect();
            let before = trace.events[..at]
                .iter()
                .filter(|e| {
                    e.kind == EventKind::Delivered
                        && step_of(e).is_some_and(|n| branch_names.contains(n))
                })
                .count();
            let (min, _) = expected_responses(cm);
            if before < min {
                out.push(format!(
                    "Integrator sent `{}` after {before} of {min} deliveries of `{}`",
                    ip.messages[s].name(),
                    cm.name
                ));
            }
        }
    }
    out
}

/// Service resolution choreography, per service role: one discover, one
/// probe per discovered service in discovery order, then rounds of exactly
/// one invoke (an available, not yet tried candidate) followed at the same
/// tick by cancels to exactly the other available candidates. A new round
/// only follows a failed reply; nothing follows a successful one.
pub fn scan_service_flow(trace: &ExecutionTrace) -> Vec<String> {
    let service_kinds = [
        EventKind::Discover,
        EventKind::Probe,
        EventKind::Invoke,
        EventKind::Cancel,
        EventKind::ServiceReply,
    ];
    let mut by_role: BTreeMap<&str, Vec<&TraceEvent>> = BTreeMap::new();
    for e in trace
        .events
        .iter()
        .filter(|e| service_kinds.contains(&e.kind))
    {
        match e.get("role") {
            Some(role) => by_role.entry(role).or_default().push(e),
            None => return vec![format!("{} event without a role", e.kind.as_str())],
        }
    }
    let mut out = Vec::new();
    for (role, events) in by_role {
        let mut bad = |msg: String| out.push(format!("role {role}: {msg}"));
        let mut it = events.into_iter().peekable();
        let Some(discover) = it.next().filter(|e| e.kind == EventKind::Discover) else {
            bad("does not start with discover".into());
            continue;
        };
        let found: Vec<&str> = discover
            .get("found")
            .unwrap_or("")
            .split(',')
            .filter(|s| !s.is_empty())
            .collect();
        let mut available = BTreeSet::new();
        for id in &found {
            match it.next() {
                Some(p)
                    if p.kind == EventKind::Probe
                        && p.receiver.as_ref().is_some_and(|r| r.name == *id) =>
                {
                    if p.get("available") == Some("true") {
                        available.insert(id.to_string());
                    }
                }
                _ => bad(format!("missing probe of {id}")),
            }
        }
        let mut tried = BTreeSet::new();
        let mut open = false;
        let mut finished = false;
        while let Some(e) = it.next() {
            match e.kind {
                EventKind::Invoke => {
                    if open || finished {
                        bad("invoke while a round is open or after success".into());
                    }
                    let chosen = e
                        .receiver
                        .as_ref()
                        .map(|r| r.name.clone())
                        .unwrap_or_default();
                    if !available.contains(&chosen) || !tried.insert(chosen.clone()) {
                        bad(format!("invoked {chosen}, not a fresh available candidate"));
                    }
                    let mut cancels = BTreeSet::new();
                    while let Some(c) = it.next_if(|c| c.kind == EventKind::Cancel) {
                        if c.tick != e.tick {
                            bad("cancel not at the invoke tick".into());
                        }
                        cancels.insert(
                            c.receiver
                                .as_ref()
                                .map(|r| r.name.clone())
                                .unwrap_or_default(),
                        );
                    }
                    let mut expected = available.clone();
                    expected.remove(&chosen);
                    if cancels != expected {
                        bad(format!("cancels {cancels:?}, expected {expected:?}"));
                    }
                    open = true;
                }
                EventKind::ServiceReply => {
                    if !open {
                        bad("reply without an open round".into());
                    }
                    open = false;
                    finished = e.get("outcome") == Some("ok");
                }
                other => bad(format!("unexpected {} event", other.as_str())),
            }
        }
    }
    out
}
