//! Deadlock, termination and dead-transition verdicts over a reachability
//! graph, and the combined report.

use std::time::{Duration, Instant};

use serde::Serialize;

use super::{
    build_reachability_graph, Bounds, ColoredPetriNet, Marking, MarkingView, ReachabilityGraph,
    StopReason, TransitionId,
};

/// Returned when a verdict is asked of a graph whose exploration hit a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("reachability graph is incomplete ({0:?}); verdict is inconclusive")]
pub struct Inconclusive(pub StopReason);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl Verdict {
    fn of(r: Result<bool, Inconclusive>) -> Self {
        match r {
            Ok(true) => Verdict::Holds,
            Ok(false) => Verdict::Fails,
            Err(_) => Verdict::Inconclusive,
        }
    }
}

/// A reachable non-final marking with no enabled transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deadlock {
    pub node: usize,
    pub marking: Marking,
    /// A shortest firing sequence from the initial marking.
    pub witness: Vec<TransitionId>,
}

fn check_bounded(graph: &ReachabilityGraph) -> Result<(), Inconclusive> {
    match graph.stopped {
        Some(reason) => Err(Inconclusive(reason)),
        None => Ok(()),
    }
}

pub fn detect_deadlocks(
    graph: &ReachabilityGraph,
    net: &ColoredPetriNet,
) -> Result<Vec<Deadlock>, Inconclusive> {
    check_bounded(graph)?;
    Ok((0..graph.node_count())
        .filter(|&i| graph.successors[i].is_empty() && !net.is_final(graph.node(i)))
        .map(|i| Deadlock {
            node: i,
            marking: graph.node(i).clone(),
            witness: graph.shortest_path(i),
        })
        .collect())
}

/// True iff every reachable marking can still reach a final marking.
pub fn check_termination(graph: &ReachabilityGraph) -> Result<bool, Inconclusive> {
    check_bounded(graph)?;
    let n = graph.node_count();
    let mut predecessors = vec![Vec::new(); n];
    for e in &graph.edges {
        predecessors[e.to].push(e.from);
    }
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = graph.finals.clone();
    for &f in &stack {
        seen[f] = true;
    }
    while let Some(v) = stack.pop() {
        for &u in &predecessors[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    Ok(seen.into_iter().all(|s| s))
}

/// Transitions that label no edge of the graph, in id order.
pub fn find_dead_transitions(
    graph: &ReachabilityGraph,
    net: &ColoredPetriNet,
) -> Result<Vec<TransitionId>, Inconclusive> {
    check_bounded(graph)?;
    let mut fired = vec![false; net.transitions.len()];
    for e in &graph.edges {
        fired[e.transition.0 as usize] = true;
    }
    Ok(net
        .transitions
        .iter()
        .filter(|t| !fired[t.id.0 as usize])
        .map(|t| t.id)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeadlockEntry {
    pub marking: MarkingView,
    pub witness: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Statistics {
    pub places: usize,
    pub transitions: usize,
    pub nodes: usize,
    pub edges: usize,
    /// Wall-clock time; kept out of the serialized report so repeated runs
    /// produce identical documents.
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub net: String,
    pub bounds: Bounds,
    pub bounded: bool,
    pub stop_reason: Option<StopReason>,
    pub deadlock_free: Verdict,
    pub proper_termination: Verdict,
    pub no_dead_transitions: Verdict,
    pub deadlocks: Vec<DeadlockEntry>,
    pub dead_transitions: Vec<String>,
    pub statistics: Statistics,
    #[serde(skip)]
    pub deadlock_markings: Vec<Marking>,
}

impl VerificationReport {
    /// Deadlock-free, properly terminating, no dead transitions, and
    /// exhaustively explored.
    pub fn passed(&self) -> bool {
        self.bounded
            && self.deadlock_free == Verdict::Holds
            && self.proper_termination == Verdict::Holds
            && self.no_dead_transitions == Verdict::Holds
    }

    pub fn inconclusive(&self) -> bool {
        !self.bounded
    }
}

/// Explores `net` within `bounds` and runs every check.
pub fn verify(net: &ColoredPetriNet, bounds: Bounds) -> VerificationReport {
    let started = Instant::now();
    let graph = build_reachability_graph(net, bounds);
    let deadlocks = detect_deadlocks(&graph, net);
    let termination = check_termination(&graph);
    let dead = find_dead_transitions(&graph, net);
    let names = |ids: &[TransitionId]| {
        ids.iter()
            .map(|&t| net.transition(t).name.clone())
            .collect::<Vec<_>>()
    };

    VerificationReport {
        net: net.name.clone(),
        bounds,
        bounded: graph.bounded(),
        stop_reason: graph.stopped,
        deadlock_free: Verdict::of(deadlocks.as_ref().map(|d| d.is_empty()).map_err(|e| *e)),
        proper_termination: Verdict::of(termination),
        no_dead_transitions: Verdict::of(dead.as_ref().map(|d| d.is_empty()).map_err(|e| *e)),
        deadlocks: deadlocks
            .as_deref()
            .unwrap_or_default()
            .iter()
            .map(|d| DeadlockEntry {
                marking: net.view(&d.marking),
                witness: names(&d.witness),
            })
            .collect(),
        dead_transitions: names(dead.as_deref().unwrap_or_default()),
        statistics: Statistics {
            places: net.places.len(),
            transitions: net.transitions.len(),
            nodes: graph.node_count(),
            edges: graph.edges.len(),
            elapsed: started.elapsed(),
        },
        deadlock_markings: deadlocks
            .unwrap_or_default()
            .into_iter()
            .map(|d| d.marking)
            .collect(),
    }
}
