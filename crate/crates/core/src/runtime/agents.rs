//! Per-role agent state and the receive-side protocol state machine.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AclMessage, AgentId};
use crate::protocol::{
    CommunicativeAct, Hop, InteractionProtocol, MessageStep, PrimitiveMessage, Value,
};

/// What the Integrator announces.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub description: String,
    #[serde(default)]
    pub requirements: Vec<String>,
    #[serde(default)]
    pub constraints: Vec<String>,
}

impl Task {
    pub fn new(description: impl Into<String>) -> Self {
        Task {
            description: description.into(),
            ..Task::default()
        }
    }

    /// Body text of the initiator message.
    pub fn render(&self) -> String {
        let mut s = self.description.clone();
        if !self.requirements.is_empty() {
            s.push_str(&format!("; requires {}", self.requirements.join(", ")));
        }
        if !self.constraints.is_empty() {
            s.push_str(&format!("; constraints {}", self.constraints.join(", ")));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skill {
    pub available: bool,
    pub cost: u64,
}

pub type SkillTable = BTreeMap<String, Skill>;

/// One role's execution state. For Enterprise agents this is the whole
/// agent; the Integrator additionally owns the [`InteractionManagerState`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentState {
    pub role: String,
    /// `None` while a service role is still being resolved.
    pub agent: Option<AgentId>,
    pub hops: Vec<Hop>,
    pub cursor: usize,
    /// Messages that arrived ahead of the cursor, in arrival order.
    pub inbox: Vec<AclMessage>,
    /// Branches already sent (send hop) or received (receive hop) at the
    /// current hop of an AND/OR step.
    pub partial: BTreeSet<usize>,
    /// OR alternative in progress at the current hop.
    pub selection: Option<u32>,
    /// `reply-with` of the last accepted message, used as `in-reply-to`.
    pub last_received: Option<String>,
    pub task: Option<Task>,
    pub skills: SkillTable,
}

impl AgentState {
    pub fn new(role: impl Into<String>, agent: Option<AgentId>, hops: Vec<Hop>) -> Self {
        AgentState {
            role: role.into(),
            agent,
            hops,
            cursor: 0,
            inbox: Vec::new(),
            partial: BTreeSet::new(),
            selection: None,
            last_received: None,
            task: None,
            skills: SkillTable::new(),
        }
    }

    pub fn current(&self) -> Option<&Hop> {
        self.hops.get(self.cursor)
    }

    pub fn finished(&self) -> bool {
        self.cursor == self.hops.len()
    }

    pub(crate) fn advance(&mut self) {
        self.cursor += 1;
        self.partial.clear();
        self.selection = None;
    }

    /// Whether the agent holds an available skill the task asks for. A task
    /// without requirements counts as covered.
    pub fn can_serve(&self) -> bool {
        match &self.task {
            None => true,
            Some(t) if t.requirements.is_empty() => true,
            Some(t) => t
                .requirements
                .iter()
                .any(|r| self.skills.get(r).is_some_and(|s| s.available)),
        }
    }

    /// Cheapest available required skill.
    pub fn quote(&self) -> Option<u64> {
        let reqs = self
            .task
            .as_ref()
            .map(|t| t.requirements.clone())
            .unwrap_or_default();
        reqs.iter()
            .filter_map(|r| self.skills.get(r))
            .filter(|s| s.available)
            .map(|s| s.cost)
            .min()
    }

    /// Whether this role, right now, would accept `branch` of `step` on a
    /// rendezvous.
    pub fn ready_for(&self, step: usize, branch: usize, selection: Option<u32>) -> bool {
        if self.agent.is_none() {
            return false;
        }
        match self.current() {
            Some(Hop::Receive { step: s, branch: b }) => *s == step && *b == branch,
            Some(Hop::ReceiveOne { step: s, branches }) => *s == step && branches.contains(&branch),
            Some(Hop::ReceiveSome { step: s, branches }) => {
                let Some(mask) = selection else { return false };
                *s == step
                    && (self.selection.is_none() || self.selection == selection)
                    && next_in_alternative(branches, mask, &self.partial) == Some(branch)
            }
            _ => false,
        }
    }
}

/// Responses counted against one complex message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ResponseLedger {
    /// Branches that reached their recipient.
    pub delivered: usize,
    /// Branches their recipient accepted.
    pub received: usize,
    pub expectation: (usize, usize),
}

impl ResponseLedger {
    pub fn satisfied(&self) -> bool {
        self.expectation.0 <= self.received && self.received <= self.expectation.1
    }
}

/// A message whose deadline is running.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingDeadline {
    pub message: String,
    pub step: String,
    pub remaining: u64,
    /// The party the Integrator cancels with on expiry.
    pub counterpart: AgentId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionManagerState {
    /// Keyed by complex-message name.
    pub ledgers: BTreeMap<String, ResponseLedger>,
    pub deadlines: Vec<PendingDeadline>,
}

/// Read-only protocol context for [`handle_message`].
#[derive(Debug, Clone, Copy)]
pub struct ProtocolView<'a> {
    pub protocol: &'a InteractionProtocol,
    /// Current role → agent resolution.
    pub agents: &'a BTreeMap<String, AgentId>,
}

impl ProtocolView<'_> {
    /// Step index, branch index and definition of a primitive message name.
    pub fn locate(&self, name: &str) -> Option<(usize, usize, &PrimitiveMessage)> {
        self.protocol
            .messages
            .iter()
            .enumerate()
            .find_map(|(s, step)| {
                step.branches()
                    .iter()
                    .enumerate()
                    .find(|(_, b)| b.name == name)
                    .map(|(b, pm)| (s, b, pm))
            })
    }

    pub fn step(&self, index: usize) -> &MessageStep {
        &self.protocol.messages[index]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// Consumed; the cursor may have moved.
    Accepted,
    /// Valid but early: parked in the inbox until the cursor gets there.
    Deferred,
    /// Not acceptable now or ever; answered with not-understood.
    Rejected(String),
    /// Control traffic (not-understood, cancel) that needs no answer.
    Noted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Handling {
    pub state: AgentState,
    pub outcome: Outcome,
    /// Replies produced by the handling itself. Protocol replies are emitted
    /// by the session's send pass once the cursor reaches a send hop.
    pub outgoing: Vec<AclMessage>,
    pub writes: Vec<(String, Value)>,
}

/// Branches of one alternative are taken in branch order.
fn next_in_alternative(branches: &[usize], mask: u32, taken: &BTreeSet<usize>) -> Option<usize> {
    branches
        .iter()
        .copied()
        .find(|b| mask & (1 << b) != 0 && !taken.contains(b))
}

fn hop_position(hops: &[Hop], step: usize, branch: usize) -> Option<usize> {
    hops.iter().position(|h| match h {
        Hop::Receive { step: s, branch: b } => *s == step && *b == branch,
        Hop::ReceiveOne { step: s, branches } | Hop::ReceiveSome { step: s, branches } => {
            *s == step && branches.contains(&branch)
        }
        Hop::Send { .. } => false,
    })
}

pub(crate) fn not_understood(msg: &AclMessage, reason: &str) -> AclMessage {
    AclMessage {
        performative: CommunicativeAct::NotUnderstood,
        sender: msg.receiver.clone(),
        receiver: msg.sender.clone(),
        content: super::Content {
            bindings: Default::default(),
            body: reason.to_string(),
        },
        conversation_id: msg.conversation_id.clone(),
        reply_with: None,
        in_reply_to: msg.reply_with.clone(),
        content_language: super::acl::CONTENT_LANGUAGE,
        timestamp: msg.timestamp,
        step: None,
        selection: None,
    }
}

/// Decides what `state` does with `msg`: accept it at the cursor, park it
/// until the cursor gets there, or reject it with a not-understood reply.
/// A rejected or parked message never moves the cursor.
pub fn handle_message(state: &AgentState, msg: &AclMessage, view: &ProtocolView<'_>) -> Handling {
    let mut next = state.clone();
    let outcome = classify(&mut next, msg, view);
    let outgoing = match &outcome {
        Outcome::Rejected(reason) => vec![not_understood(msg, reason)],
        _ => Vec::new(),
    };
    if outcome == Outcome::Accepted {
        next.last_received = msg.reply_with.clone();
    }
    Handling {
        state: next,
        outcome,
        outgoing,
        writes: Vec::new(),
    }
}

fn classify(state: &mut AgentState, msg: &AclMessage, view: &ProtocolView<'_>) -> Outcome {
    if matches!(
        msg.performative,
        CommunicativeAct::NotUnderstood | CommunicativeAct::Cancel
    ) && msg.step.is_none()
    {
        return Outcome::Noted;
    }
    let Some(name) = &msg.step else {
        return Outcome::Rejected("message names no protocol step".into());
    };
    let Some((step, branch, pm)) = view.locate(name) else {
        return Outcome::Rejected(format!("unknown step `{name}`"));
    };
    if pm.receiver != state.role {
        return Outcome::Rejected(format!("`{name}` is not addressed to role {}", state.role));
    }
    if msg.performative != pm.act {
        return Outcome::Rejected(format!(
            "`{name}` carries {}, not {}",
            pm.act, msg.performative
        ));
    }
    if view.agents.get(&pm.sender) != Some(&msg.sender) {
        return Outcome::Rejected(format!("`{name}` must come from role {}", pm.sender));
    }
    let Some(pos) = hop_position(&state.hops, step, branch) else {
        return Outcome::Rejected(format!("role {} never receives `{name}`", state.role));
    };
    if pos < state.cursor {
        return Outcome::Rejected(format!("`{name}` already handled"));
    }
    // A rendezvous only happens when the receiver is ready, so a
    // synchronous message is never parked for later.
    let early = || {
        if pm.is_sync() {
            Outcome::Rejected(format!(
                "synchronous `{name}` arrived before role {} was ready",
                state.role
            ))
        } else {
            Outcome::Deferred
        }
    };
    if pos > state.cursor {
        if state
            .inbox
            .iter()
            .any(|m| m.step.as_deref() == Some(name.as_str()))
        {
            return Outcome::Rejected(format!("`{name}` already pending"));
        }
        return early();
    }
    match state.hops[pos].clone() {
        Hop::ReceiveSome { branches, .. } => {
            let Some(mask) = msg.selection.filter(|m| m & (1 << branch) != 0) else {
                return Outcome::Rejected(format!("`{name}` lacks a selection including it"));
            };
            if state.selection.is_some_and(|s| s != mask) {
                return Outcome::Rejected(format!("`{name}` belongs to another alternative"));
            }
            if state.partial.contains(&branch) {
                return Outcome::Rejected(format!("`{name}` already handled"));
            }
            if next_in_alternative(&branches, mask, &state.partial) != Some(branch) {
                if state
                    .inbox
                    .iter()
                    .any(|m| m.step.as_deref() == Some(name.as_str()))
                {
                    return Outcome::Rejected(format!("`{name}` already pending"));
                }
                return early();
            }
            state.partial.insert(branch);
            state.selection = Some(mask);
            let expected = branches.iter().filter(|&&b| mask & (1 << b) != 0).count();
            if state.partial.len() == expected {
                state.advance();
            }
        }
        _ => state.advance(),
    }
    Outcome::Accepted
}
