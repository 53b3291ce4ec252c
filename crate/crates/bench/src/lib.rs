//! Workloads shared by the benchmarks.

use iproto_core::protocol::{
    CommunicativeAct, ComplexMessage, InteractionProtocol, MessageStep, Operator, PrimitiveMessage,
    Role,
};
use iproto_testkit::{corpus, GenConfig};

/// `I` sends one AND with `width` branches, one per enterprise.
pub fn and_fanout(width: usize) -> InteractionProtocol {
    let mut roles = vec![Role::process("I")];
    roles.extend((0..width).map(|i| Role::process(format!("E{i}"))));
    let branches = (0..width)
        .map(|i| {
            PrimitiveMessage::new(format!("c{i}"), "I", format!("E{i}"), CommunicativeAct::Cfp)
        })
        .collect();
    finish(
        "fanout",
        roles,
        vec![MessageStep::Complex(ComplexMessage {
            name: "call".into(),
            operator: Operator::And,
            branches,
        })],
    )
}

/// Request/inform ping-pong between two roles, `rounds` times.
pub fn ping_pong(rounds: usize) -> InteractionProtocol {
    let roles = vec![Role::process("I"), Role::process("E")];
    let messages = (0..rounds)
        .flat_map(|r| {
            [
                MessageStep::Primitive(PrimitiveMessage::new(
                    format!("q{r}"),
                    "I",
                    "E",
                    CommunicativeAct::Request,
                )),
                MessageStep::Primitive(PrimitiveMessage::new(
                    format!("a{r}"),
                    "E",
                    "I",
                    CommunicativeAct::Inform,
                )),
            ]
        })
        .collect();
    finish("ping_pong", roles, messages)
}

fn finish(id: &str, roles: Vec<Role>, messages: Vec<MessageStep>) -> InteractionProtocol {
    let mut ip = InteractionProtocol {
        id: id.into(),
        roles,
        vars: Vec::new(),
        messages,
        flow: Default::default(),
        orders: Default::default(),
    };
    ip.flow = ip.message_pairs();
    ip
}

/// The generated corpus the acceptance suite uses.
pub fn acceptance_corpus() -> Vec<InteractionProtocol> {
    corpus(500, 1, &GenConfig::default())
}
