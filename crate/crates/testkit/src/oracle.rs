//! Reference semantics: exhaustive enumeration of a protocol's interleavings,
//! computed on the protocol itself rather than on its net.
//!
//! Each role walks its own list of local actions. Asynchronous messages sit
//! in a multiset of in-flight messages; synchronous ones move sender and
//! receiver together. AND and OR sends open explicitly (an OR commits to a
//! non-empty branch subset when it opens), send their branches in any order
//! and close once all are out. Guards are read from the declared defaults;
//! an unset variable fails the guard.

use std::collections::{BTreeMap, HashMap, VecDeque};

use iproto_core::protocol::{
    Bindings, InteractionProtocol, MessageStep, Operator, PrimitiveMessage,
};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Action {
    Send(usize),
    Take(usize, usize),
    TakeOne(usize, Vec<usize>),
    TakeSome(usize, Vec<usize>),
}

/// In-flight message: (step, branch, OR subset or 0).
type Wire = (usize, usize, u32);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct State {
    pc: Vec<usize>,
    /// Open AND/OR send: (branch subset, branches already out).
    open: Vec<Option<(u32, u32)>>,
    /// Partly received OR subset: (subset, branches already in).
    taking: Vec<Option<(u32, u32)>>,
    wires: BTreeMap<Wire, u32>,
}

/// What the enumeration found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleVerdict {
    pub states: usize,
    pub transitions: usize,
    pub deadlock: bool,
    pub proper_termination: bool,
    /// Distinct reachable final states (at most one for a loop-free protocol).
    pub finals: usize,
}

struct Model<'a> {
    ip: &'a InteractionProtocol,
    actions: Vec<Vec<Action>>,
    role_of: HashMap<&'a str, usize>,
    env: Bindings,
}

/// Local action lists, written out from the message list and `order`.
fn local_actions(ip: &InteractionProtocol) -> Vec<Vec<Action>> {
    ip.roles
        .iter()
        .map(|role| {
            let steps: Vec<usize> = match ip.orders.get(&role.name) {
                Some(names) => names
                    .iter()
                    .map(|n| ip.messages.iter().position(|m| m.name() == n).unwrap())
                    .collect(),
                None => (0..ip.messages.len()).collect(),
            };
            let mut out = Vec::new();
            for s in steps {
                let step = &ip.messages[s];
                let branches = step.branches();
                if branches[0].sender == role.name {
                    out.push(Action::Send(s));
                }
                let mine: Vec<usize> = (0..branches.len())
                    .filter(|&b| branches[b].receiver == role.name)
                    .collect();
                if mine.is_empty() {
                    continue;
                }
                match step.operator() {
                    None | Some(Operator::And) => {
                        out.extend(mine.into_iter().map(|b| Action::Take(s, b)))
                    }
                    Some(Operator::Xor) => out.push(Action::TakeOne(s, mine)),
                    Some(Operator::Or) => out.push(Action::TakeSome(s, mine)),
                }
            }
            out
        })
        .collect()
}

impl<'a> Model<'a> {
    fn new(ip: &'a InteractionProtocol) -> Self {
        let role_of = ip
            .roles
            .iter()
            .enumerate()
            .map(|(i, r)| (r.name.as_str(), i))
            .collect();
        Model {
            ip,
            actions: local_actions(ip),
            role_of,
            env: ip.initial_bindings(),
        }
    }

    fn pm(&self, step: usize, branch: usize) -> &PrimitiveMessage {
        &self.ip.messages[step].branches()[branch]
    }

    fn allowed(&self, pm: &PrimitiveMessage) -> bool {
        pm.option.guard.as_ref().map_or(true, |g| g.eval(&self.env))
    }

    fn initial(&self) -> State {
        let n = self.actions.len();
        State {
            pc: vec![0; n],
            open: vec![None; n],
            taking: vec![None; n],
            wires: BTreeMap::new(),
        }
    }

    fn is_final(&self, s: &State) -> bool {
        s.pc.iter().zip(&self.actions).all(|(pc, a)| *pc == a.len()) && s.wires.is_empty()
    }

    /// Lets role `r` take wire (step, branch, subset); returns the new state
    /// or `None` if its current action does not accept it.
    fn take(&self, s: &State, r: usize, (step, branch, subset): Wire) -> Option<State> {
        let action = self.actions[r].get(s.pc[r])?;
        let mut next = s.clone();
        match action {
            Action::Take(st, b) if *st == step && *b == branch => next.pc[r] += 1,
            Action::TakeOne(st, bs) if *st == step && bs.contains(&branch) => next.pc[r] += 1,
            Action::TakeSome(st, bs) if *st == step => {
                let (have_subset, got) = s.taking[r].unwrap_or((subset, 0));
                if have_subset != subset {
                    return None;
                }
                let wanted: Vec<usize> = bs
                    .iter()
                    .copied()
                    .filter(|b| subset & (1 << b) != 0)
                    .collect();
                let first_missing = wanted.iter().copied().find(|b| got & (1 << b) == 0)?;
                if first_missing != branch {
                    return None;
                }
                let got = got | (1 << branch);
                if wanted.iter().all(|b| got & (1 << b) != 0) {
                    next.pc[r] += 1;
                    next.taking[r] = None;
                } else {
                    next.taking[r] = Some((subset, got));
                }
            }
            _ => return None,
        }
        Some(next)
    }

    /// Emits one branch from `r`: onto the wire, or straight into the
    /// receiver for a synchronous message.
    fn emit(&self, s: &State, step: usize, branch: usize, subset: u32) -> Option<State> {
        let pm = self.pm(step, branch);
        if !self.allowed(pm) {
            return None;
        }
        if pm.is_sync() {
            self.take(
                s,
                self.role_of[pm.receiver.as_str()],
                (step, branch, subset),
            )
        } else {
            let mut next = s.clone();
            *next.wires.entry((step, branch, subset)).or_insert(0) += 1;
            Some(next)
        }
    }

    fn successors(&self, s: &State) -> Vec<State> {
        let mut out = Vec::new();
        for r in 0..self.actions.len() {
            let Some(action) = self.actions[r].get(s.pc[r]) else {
                continue;
            };
            match action {
                Action::Send(step) => {
                    let step = *step;
                    match &self.ip.messages[step] {
                        MessageStep::Primitive(_) => {
                            if let Some(mut n) = self.emit(s, step, 0, 0) {
                                n.pc[r] += 1;
                                out.push(n);
                            }
                        }
                        MessageStep::Complex(cm) => {
                            let m = cm.branches.len();
                            match (cm.operator, s.open[r]) {
                                (Operator::Xor, _) => {
                                    for b in 0..m {
                                        if let Some(mut n) = self.emit(s, step, b, 0) {
                                            n.pc[r] += 1;
                                            out.push(n);
                                        }
                                    }
                                }
                                (Operator::And, None) => {
                                    let mut n = s.clone();
                                    n.open[r] = Some(((1u32 << m) - 1, 0));
                                    out.push(n);
                                }
                                (Operator::Or, None) => {
                                    for subset in 1..(1u32 << m) {
                                        let mut n = s.clone();
                                        n.open[r] = Some((subset, 0));
                                        out.push(n);
                                    }
                                }
                                (op, Some((subset, sent))) => {
                                    if sent == subset {
                                        let mut n = s.clone();
                                        n.open[r] = None;
                                        n.pc[r] += 1;
                                        out.push(n);
                                        continue;
                                    }
                                    let tag = if op == Operator::Or { subset } else { 0 };
                                    for b in 0..m {
                                        let bit = 1u32 << b;
                                        if subset & bit == 0 || sent & bit != 0 {
                                            continue;
                                        }
                                        if let Some(mut n) = self.emit(s, step, b, tag) {
                                            n.open[r] = Some((subset, sent | bit));
                                            out.push(n);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                _ => {
                    for (&wire, _) in s.wires.iter() {
                        if let Some(mut n) = self.take(s, r, wire) {
                            let c = n.wires.get_mut(&wire).unwrap();
                            *c -= 1;
                            if *c == 0 {
                                n.wires.remove(&wire);
                            }
                            out.push(n);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Enumerates every reachable state, up to `limit` of them. `None` if the
/// limit was hit.
pub fn explore(ip: &InteractionProtocol, limit: usize) -> Option<OracleVerdict> {
    let model = Model::new(ip);
    let mut index: HashMap<State, usize> = HashMap::new();
    let mut states: Vec<State> = Vec::new();
    let mut preds: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    let mut transitions = 0;
    let mut deadlock = false;

    let init = model.initial();
    index.insert(init.clone(), 0);
    states.push(init);
    preds.push(Vec::new());
    queue.push_back(0);
    while let Some(i) = queue.pop_front() {
        let succ = model.successors(&states[i]);
        if succ.is_empty() && !model.is_final(&states[i]) {
            deadlock = true;
        }
        for n in succ {
            transitions += 1;
            let j = match index.get(&n) {
                Some(&j) => j,
                None => {
                    if states.len() >= limit {
                        return None;
                    }
                    let j = states.len();
                    index.insert(n.clone(), j);
                    states.push(n);
                    preds.push(Vec::new());
                    queue.push_back(j);
                    j
                }
            };
            preds[j].push(i);
        }
    }

    let finals: Vec<usize> = (0..states.len())
        .filter(|&i| model.is_final(&states[i]))
        .collect();
    let mut reaches = vec![false; states.len()];
    let mut work: Vec<usize> = finals.clone();
    for &f in &finals {
        reaches[f] = true;
    }
    while let Some(j) = work.pop() {
        for &p in &preds[j] {
            if !reaches[p] {
                reaches[p] = true;
                work.push(p);
            }
        }
    }
    Some(OracleVerdict {
        states: states.len(),
        transitions,
        deadlock,
        proper_termination: reaches.iter().all(|&r| r),
        finals: finals.len(),
    })
}
