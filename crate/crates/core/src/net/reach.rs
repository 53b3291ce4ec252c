//! Breadth-first reachability over colored markings.

use indexmap::IndexSet;
use rustc_hash::FxBuildHasher;
use serde::{Deserialize, Serialize};

use super::{ColoredPetriNet, Marking, TransitionId};

/// Exploration limits. Tripping either one marks the graph unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub max_nodes: usize,
    pub max_tokens: u32,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            max_nodes: 200_000,
            max_tokens: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    NodeLimit,
    TokenLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub from: usize,
    pub transition: TransitionId,
    pub to: usize,
}

/// Nodes are indexed in BFS discovery order; node 0 is the initial marking.
#[derive(Debug, Clone)]
pub struct ReachabilityGraph {
    nodes: IndexSet<Marking, FxBuildHasher>,
    pub edges: Vec<Edge>,
    /// Per node: indices into `edges` of its outgoing edges.
    pub successors: Vec<Vec<usize>>,
    /// Per node: the BFS tree edge that discovered it.
    parent: Vec<Option<usize>>,
    /// Nodes matching a final marking of the net.
    pub finals: Vec<usize>,
    pub bounds: Bounds,
    pub stopped: Option<StopReason>,
    expanded_upto: usize,
}

impl ReachabilityGraph {
    pub const ROOT: usize = 0;

    pub fn bounded(&self) -> bool {
        self.stopped.is_none()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, index: usize) -> &Marking {
        &self.nodes[index]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Marking> {
        self.nodes.iter()
    }

    pub fn index_of(&self, marking: &Marking) -> Option<usize> {
        self.nodes.get_index_of(marking)
    }

    /// Transitions along the BFS tree from the root: a shortest firing
    /// sequence reaching `node`.
    pub fn shortest_path(&self, node: usize) -> Vec<TransitionId> {
        let mut path = Vec::new();
        let mut cur = node;
        while let Some(e) = self.parent[cur] {
            path.push(self.edges[e].transition);
            cur = self.edges[e].from;
        }
        path.reverse();
        path
    }

    /// Whether a node is explored completely. Nodes left in the queue when a
    /// bound trips have no successors recorded.
    pub fn is_expanded(&self, node: usize) -> bool {
        self.bounded() || node < self.expanded_upto
    }
}

/// Builds the reachability graph of `net` from its initial marking.
pub fn build_reachability_graph(net: &ColoredPetriNet, bounds: Bounds) -> ReachabilityGraph {
    let mut g = ReachabilityGraph {
        nodes: IndexSet::default(),
        edges: Vec::new(),
        successors: Vec::new(),
        parent: Vec::new(),
        finals: Vec::new(),
        bounds,
        stopped: None,
        expanded_upto: 0,
    };
    g.nodes.insert(net.initial.clone());
    g.successors.push(Vec::new());
    g.parent.push(None);
    if net.initial.max_tokens() > bounds.max_tokens {
        g.stopped = Some(StopReason::TokenLimit);
    } else if bounds.max_nodes == 0 {
        g.stopped = Some(StopReason::NodeLimit);
    }

    let mut counts = vec![0u32; net.places.len()];
    let mut next = 0;
    'bfs: while g.stopped.is_none() && next < g.nodes.len() {
        let current = g.nodes[next].clone();
        counts.iter_mut().for_each(|c| *c = 0);
        for &(p, _, n) in current.entries() {
            counts[p.0 as usize] += n;
        }
        for t in &net.transitions {
            let coarse = t.inputs.iter().all(|(p, w)| counts[p.0 as usize] >= *w);
            if !coarse {
                continue;
            }
            for combo in net.enabled_bindings(t, &current) {
                let target = net.fire(t, &combo, &current);
                if target.max_tokens() > bounds.max_tokens {
                    g.stopped = Some(StopReason::TokenLimit);
                    break 'bfs;
                }
                let (to, fresh) = match g.nodes.get_index_of(&target) {
                    Some(i) => (i, false),
                    None => {
                        if g.nodes.len() >= bounds.max_nodes {
                            g.stopped = Some(StopReason::NodeLimit);
                            break 'bfs;
                        }
                        g.nodes.insert(target);
                        g.successors.push(Vec::new());
                        g.parent.push(None);
                        (g.nodes.len() - 1, true)
                    }
                };
                let edge = Edge {
                    from: next,
                    transition: t.id,
                    to,
                };
                if g.successors[next].iter().any(|&e| g.edges[e] == edge) {
                    continue;
                }
                g.edges.push(edge);
                let e = g.edges.len() - 1;
                g.successors[next].push(e);
                if fresh {
                    g.parent[to] = Some(e);
                }
            }
        }
        next += 1;
        g.expanded_upto = next;
    }

    g.finals = (0..g.nodes.len())
        .filter(|&i| net.is_final(&g.nodes[i]))
        .collect();
    g
}

impl ColoredPetriNet {
    /// Every marking a firing sequence can lead to from the initial marking,
    /// trying each enabled color binding. Empty if the sequence is not
    /// fireable.
    pub fn replay(&self, sequence: &[TransitionId]) -> Vec<Marking> {
        let mut current = vec![self.initial.clone()];
        for &t in sequence {
            let t = self.transition(t);
            let mut next: Vec<Marking> = Vec::new();
            for m in &current {
                for combo in self.enabled_bindings(t, m) {
                    let fired = self.fire(t, &combo, m);
                    if !next.contains(&fired) {
                        next.push(fired);
                    }
                }
            }
            if next.is_empty() {
                return next;
            }
            current = next;
        }
        current
    }
}
