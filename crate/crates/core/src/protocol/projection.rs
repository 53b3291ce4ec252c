//! Projection of a protocol onto each role's local sequence of actions.
//!
//! A role takes part in the top-level steps where it sends or receives, in
//! document order unless the protocol's `order` section overrides it. Each
//! step expands to one or more hops:
//!
//! * the sender of any step has a single [`Hop::Send`];
//! * the receiver of a primitive message, or of each AND branch addressed to
//!   it, has one [`Hop::Receive`] per branch in branch order;
//! * the receivers of XOR branches have one [`Hop::ReceiveOne`];
//! * the receivers of OR branches have one [`Hop::ReceiveSome`], which
//!   covers the branches of the chosen alternative addressed to them.

use super::{InteractionProtocol, MessageStep, Operator};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Hop {
    Send { step: usize },
    Receive { step: usize, branch: usize },
    ReceiveOne { step: usize, branches: Vec<usize> },
    ReceiveSome { step: usize, branches: Vec<usize> },
}

impl Hop {
    pub fn step(&self) -> usize {
        match self {
            Hop::Send { step }
            | Hop::Receive { step, .. }
            | Hop::ReceiveOne { step, .. }
            | Hop::ReceiveSome { step, .. } => *step,
        }
    }

    pub fn is_send(&self) -> bool {
        matches!(self, Hop::Send { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleChain {
    pub role: String,
    pub hops: Vec<Hop>,
}

impl RoleChain {
    /// Position of the hop that receives `branch` of `step`, if any.
    pub fn receive_position(&self, step: usize, branch: usize) -> Option<usize> {
        self.hops.iter().position(|h| match h {
            Hop::Receive { step: s, branch: b } => *s == step && *b == branch,
            Hop::ReceiveOne { step: s, branches } | Hop::ReceiveSome { step: s, branches } => {
                *s == step && branches.contains(&branch)
            }
            Hop::Send { .. } => false,
        })
    }

    pub fn send_position(&self, step: usize) -> Option<usize> {
        self.hops
            .iter()
            .position(|h| matches!(h, Hop::Send { step: s } if *s == step))
    }
}

/// Projects a well-formed protocol; chains come in role declaration order.
pub fn project(ip: &InteractionProtocol) -> Vec<RoleChain> {
    ip.roles
        .iter()
        .map(|role| {
            let order: Vec<usize> = match ip.orders.get(&role.name) {
                Some(names) => names
                    .iter()
                    .filter_map(|n| ip.step(n).map(|(i, _)| i))
                    .collect(),
                None => (0..ip.messages.len()).collect(),
            };
            let mut hops = Vec::new();
            for step in order {
                hops.extend(hops_for(&ip.messages[step], step, &role.name));
            }
            RoleChain {
                role: role.name.clone(),
                hops,
            }
        })
        .collect()
}

fn hops_for(step: &MessageStep, index: usize, role: &str) -> Vec<Hop> {
    if step.sender() == Some(role) {
        return vec![Hop::Send { step: index }];
    }
    let addressed: Vec<usize> = step
        .branches()
        .iter()
        .enumerate()
        .filter(|(_, b)| b.receiver == role)
        .map(|(i, _)| i)
        .collect();
    if addressed.is_empty() {
        return Vec::new();
    }
    match step.operator() {
        None | Some(Operator::And) => addressed
            .into_iter()
            .map(|branch| Hop::Receive {
                step: index,
                branch,
            })
            .collect(),
        Some(Operator::Xor) => vec![Hop::ReceiveOne {
            step: index,
            branches: addressed,
        }],
        Some(Operator::Or) => vec![Hop::ReceiveSome {
            step: index,
            branches: addressed,
        }],
    }
}
