//! Replays an execution trace on the protocol's net.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{EventKind, ExecutionTrace, SessionStatus};
use crate::net::{ColoredPetriNet, Marking, Phase, TransitionId};

/// Where replay first failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    /// Index into the trace's events.
    pub event: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conformance {
    pub conformant: bool,
    pub divergence: Option<Divergence>,
    /// Transitions fired, in order, including implied forks and joins.
    pub fired: Vec<TransitionId>,
    /// Markings possible after the replay (one per color history).
    pub markings: Vec<Marking>,
}

impl Conformance {
    /// The marking replay ends in; for a stuck session, where it got stuck.
    pub fn end_marking(&self) -> Option<&Marking> {
        self.markings.first()
    }
}

#[derive(Hash, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    message: String,
    emission: bool,
    alternative: Option<u32>,
}

struct Replay<'a> {
    net: &'a ColoredPetriNet,
    current: Vec<Marking>,
    fired: Vec<TransitionId>,
}

impl Replay<'_> {
    fn fire(&mut self, t: TransitionId) -> bool {
        let tr = self.net.transition(t);
        let mut next: Vec<Marking> = Vec::new();
        for m in &self.current {
            for combo in self.net.enabled_bindings(tr, m) {
                let fired = self.net.fire(tr, &combo, m);
                if !next.contains(&fired) {
                    next.push(fired);
                }
            }
        }
        if next.is_empty() {
            return false;
        }
        self.current = next;
        self.fired.push(t);
        true
    }

    fn enabled(&self, t: TransitionId) -> bool {
        let tr = self.net.transition(t);
        self.current
            .iter()
            .any(|m| !self.net.enabled_bindings(tr, m).is_empty())
    }

    fn settle_joins(&mut self, joins: &[TransitionId]) {
        while let Some(&j) = joins.iter().find(|&&j| self.enabled(j)) {
            self.fire(j);
        }
    }
}

/// Maps each accepted protocol message in `trace` to its net transitions and
/// fires them in trace order.
///
/// A send maps to its emission transition (send, choice or rendezvous) at
/// the `sent` event; an asynchronous receive maps to its receive transition
/// at the accepting `handled` event. Forks fire when their first branch
/// goes out and joins as soon as they are enabled. Messages the receiver
/// rejected, and stepless control traffic (not-understood, cancel), map to
/// nothing. A trace whose last status is `completed` must end in a final
/// marking.
pub fn trace_conformance(trace: &ExecutionTrace, net: &ColoredPetriNet) -> Conformance {
    let mut index: BTreeMap<Key, TransitionId> = BTreeMap::new();
    let mut forks: BTreeMap<(String, Option<u32>), TransitionId> = BTreeMap::new();
    let mut joins = Vec::new();
    for t in &net.transitions {
        let l = &t.label;
        match l.phase {
            Phase::Fork => {
                forks.insert((l.message.clone(), l.alternative), t.id);
            }
            Phase::Join => joins.push(t.id),
            phase => {
                let key = Key {
                    message: l.message.clone(),
                    emission: phase.is_emission(),
                    alternative: l.alternative,
                };
                index.entry(key).or_insert(t.id);
            }
        }
    }

    let mut replay = Replay {
        net,
        current: vec![net.initial.clone()],
        fired: Vec::new(),
    };
    let diverge = |replay: Replay<'_>, event: usize, reason: String| Conformance {
        conformant: false,
        divergence: Some(Divergence { event, reason }),
        fired: replay.fired,
        markings: replay.current,
    };

    for (i, e) in trace.events.iter().enumerate() {
        let Some(msg) = &e.message else { continue };
        let Some(step) = &msg.step else { continue };
        match e.kind {
            // Injected messages are outside the protocol; only a copy the
            // receiver accepts in place of the real one shows up below.
            EventKind::Sent if e.get("injected").is_some() => {}
            EventKind::Sent => {
                let key = Key {
                    message: step.clone(),
                    emission: true,
                    alternative: msg.selection,
                };
                let Some(&t) = index.get(&key) else {
                    return diverge(replay, i, format!("no transition emits `{step}`"));
                };
                if !replay.enabled(t) {
                    if let Some(c) = &net.transition(t).label.complex {
                        if let Some(&f) = forks.get(&(c.clone(), msg.selection)) {
                            replay.fire(f);
                        }
                    }
                }
                if !replay.fire(t) {
                    return diverge(
                        replay,
                        i,
                        format!("`{}` is not enabled", net.transition(t).name),
                    );
                }
                replay.settle_joins(&joins);
            }
            EventKind::Handled if e.get("outcome") == Some("accepted") => {
                let key = Key {
                    message: step.clone(),
                    emission: false,
                    alternative: msg.selection,
                };
                // Rendezvous messages have no separate receive.
                let Some(&t) = index.get(&key) else { continue };
                if !replay.fire(t) {
                    return diverge(
                        replay,
                        i,
                        format!("`{}` is not enabled", net.transition(t).name),
                    );
                }
                replay.settle_joins(&joins);
            }
            _ => {}
        }
    }

    if trace.final_status() == Some(SessionStatus::Completed)
        && !replay.current.iter().any(|m| net.is_final(m))
    {
        let at = trace.events.len().saturating_sub(1);
        return diverge(
            replay,
            at,
            "session completed but the net is not in a final marking".into(),
        );
    }
    Conformance {
        conformant: true,
        divergence: None,
        fired: replay.fired,
        markings: replay.current,
    }
}
