//! Seeded generator of well-formed protocols.

use std::collections::{BTreeMap, BTreeSet};

use iproto_core::protocol::{
    CmpOp, CommunicativeAct, ComplexMessage, GuardExpr, InteractionProtocol, MessageStep, Operator,
    PrimitiveMessage, Role, RoleKind, Value, VarDecl, VarType,
};
use iproto_core::runtime::AgentId;
use iproto_core::services::{AttrValue, Behavior, Registry, ServiceDescription};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shape knobs. Probabilities are per message or per role.
#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_roles: usize,
    pub max_steps: usize,
    pub max_branches: usize,
    pub sync: f64,
    pub guard: f64,
    pub deadline: f64,
    /// Chance a non-initial role is a service role.
    pub service: f64,
    /// Chance that one role gets a permuted step order.
    pub reorder: f64,
    /// Chance that all branches of an XOR/OR go to one receiver.
    pub focused: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_roles: 6,
            max_steps: 10,
            max_branches: 3,
            sync: 0.25,
            guard: 0.15,
            deadline: 0.1,
            service: 0.15,
            reorder: 0.1,
            focused: 0.75,
        }
    }
}

impl GenConfig {
    /// Protocols that run as written: document order only, no tiny
    /// deadlines.
    pub fn runnable() -> Self {
        GenConfig {
            reorder: 0.0,
            ..GenConfig::default()
        }
    }

    /// Small protocols for exhaustive cross-checking.
    pub fn small() -> Self {
        GenConfig {
            max_steps: 6,
            ..GenConfig::default()
        }
    }
}

const CAPABILITIES: [&str; 3] = ["shipping", "billing", "storage"];

const ACTS: [CommunicativeAct; 10] = [
    CommunicativeAct::Cfp,
    CommunicativeAct::Inform,
    CommunicativeAct::Propose,
    CommunicativeAct::AcceptProposal,
    CommunicativeAct::RejectProposal,
    CommunicativeAct::Request,
    CommunicativeAct::Refuse,
    CommunicativeAct::Agree,
    CommunicativeAct::Failure,
    CommunicativeAct::Cancel,
];

/// The protocol for `seed`. The first role, `I`, sends the first step.
pub fn generate(seed: u64, cfg: &GenConfig) -> InteractionProtocol {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=cfg.max_roles.max(2));
    let mut roles = vec![Role::process("I")];
    for i in 1..n {
        if rng.gen_bool(cfg.service) {
            let k = rng.gen_range(1..=2);
            let caps: Vec<&str> = CAPABILITIES.choose_multiple(&mut rng, k).copied().collect();
            roles.push(Role::service(format!("S{i}"), caps));
        } else {
            roles.push(Role::process(format!("P{i}")));
        }
    }

    let vars = vec![
        VarDecl {
            name: "budget".into(),
            ty: VarType::Int,
            default: Some(Value::Int(rng.gen_range(0..200))),
        },
        VarDecl {
            name: "ok".into(),
            ty: VarType::Bool,
            default: Some(Value::Bool(rng.gen_bool(0.7))),
        },
        VarDecl {
            name: "limit".into(),
            ty: VarType::Int,
            default: None,
        },
    ];
    let use_vars = rng.gen_bool(0.5);

    let steps = rng.gen_range(1..=cfg.max_steps.max(1));
    let mut messages = Vec::new();
    for s in 0..steps {
        let sender = if s == 0 { 0 } else { rng.gen_range(0..n) };
        let kind = rng.gen_range(0..100);
        let op = match kind {
            0..=49 => None,
            50..=66 => Some(Operator::Xor),
            67..=83 => Some(Operator::And),
            _ => Some(Operator::Or),
        };
        let pm = |rng: &mut ChaCha8Rng, name: String, receiver: usize| {
            let mut pm = PrimitiveMessage::new(
                name,
                roles[sender].name.clone(),
                roles[receiver].name.clone(),
                *ACTS.choose(rng).unwrap(),
            );
            if rng.gen_bool(cfg.sync) {
                pm = pm.sync();
            }
            if use_vars && rng.gen_bool(cfg.guard) {
                pm = pm.guard(guard(rng));
            }
            if rng.gen_bool(cfg.deadline) {
                pm = pm.deadline(rng.gen_range(1_000..10_000));
            }
            pm
        };
        let other = |rng: &mut ChaCha8Rng| loop {
            let r = rng.gen_range(0..n);
            if r != sender {
                break r;
            }
        };
        match op {
            None => {
                let r = other(&mut rng);
                messages.push(MessageStep::Primitive(pm(&mut rng, format!("m{s}"), r)));
            }
            Some(op) => {
                let m = rng.gen_range(2..=cfg.max_branches.max(2));
                let single = op != Operator::And && rng.gen_bool(cfg.focused);
                let target = other(&mut rng);
                let branches = (0..m)
                    .map(|b| {
                        let r = if single { target } else { other(&mut rng) };
                        pm(&mut rng, format!("m{s}b{b}"), r)
                    })
                    .collect();
                messages.push(MessageStep::Complex(ComplexMessage {
                    name: format!("m{s}"),
                    operator: op,
                    branches,
                }));
            }
        }
    }

    let mut ip = InteractionProtocol {
        id: format!("gen{seed}"),
        roles,
        vars: if use_vars { vars } else { Vec::new() },
        messages,
        flow: BTreeSet::new(),
        orders: BTreeMap::new(),
    };
    ip.flow = ip.message_pairs();

    if rng.gen_bool(cfg.reorder) {
        let role = ip.roles[rng.gen_range(0..n)].name.clone();
        let mut mine: Vec<String> = ip
            .messages
            .iter()
            .filter(|m| {
                m.branches()
                    .iter()
                    .any(|b| b.sender == role || b.receiver == role)
            })
            .map(|m| m.name().to_string())
            .collect();
        if mine.len() >= 2 {
            mine.shuffle(&mut rng);
            ip.orders.insert(role, mine);
        }
    }
    ip
}

fn guard(rng: &mut ChaCha8Rng) -> GuardExpr {
    let cmp = |var: &str, op, value| GuardExpr::Cmp {
        var: var.into(),
        op,
        value,
    };
    match rng.gen_range(0..7) {
        0 => cmp("budget", CmpOp::Ge, Value::Int(100)),
        1 => cmp("ok", CmpOp::Eq, Value::Bool(true)),
        2 => GuardExpr::Not(Box::new(cmp("ok", CmpOp::Eq, Value::Bool(true)))),
        3 => GuardExpr::Or(
            Box::new(cmp("budget", CmpOp::Lt, Value::Int(50))),
            Box::new(cmp("ok", CmpOp::Eq, Value::Bool(true))),
        ),
        4 => GuardExpr::Const(true),
        5 => GuardExpr::And(
            Box::new(cmp("budget", CmpOp::Ne, Value::Int(7))),
            Box::new(GuardExpr::Const(true)),
        ),
        _ => cmp("limit", CmpOp::Gt, Value::Int(0)),
    }
}

/// `count` protocols from consecutive seeds.
pub fn corpus(count: usize, first_seed: u64, cfg: &GenConfig) -> Vec<InteractionProtocol> {
    (0..count as u64)
        .map(|i| generate(first_seed + i, cfg))
        .collect()
}

/// `I` as the Integrator, every other process role as an enterprise agent
/// named `<role>-agent`.
pub fn bindings_for(ip: &InteractionProtocol) -> BTreeMap<String, AgentId> {
    ip.roles
        .iter()
        .filter(|r| r.kind == RoleKind::PrivateProcess)
        .enumerate()
        .map(|(i, r)| {
            let name = format!("{}-agent", r.name);
            let agent = if i == 0 {
                AgentId::integrator(name)
            } else {
                AgentId::enterprise(name)
            };
            (r.name.clone(), agent)
        })
        .collect()
}

/// Two reliable services per service role, matching its capabilities.
pub fn registry_for(ip: &InteractionProtocol, failure: f64) -> Registry {
    let mut reg = Registry::new();
    for role in ip.roles.iter().filter(|r| r.kind == RoleKind::WebService) {
        for (k, cost) in [("a", 7), ("b", 4)] {
            let id = format!("{}-{k}", role.name.to_lowercase());
            let desc = ServiceDescription::new(&id, role.capabilities.iter().cloned())
                .attribute("cost", AttrValue::Int(cost))
                .behavior(
                    "*",
                    Behavior {
                        response: format!("{id} done"),
                        latency: 2,
                        failure,
                    },
                );
            reg.register(desc).expect("generated ids are unique");
        }
    }
    reg
}
