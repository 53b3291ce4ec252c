//! Protocol → colored Petri net.
//!
//! Each role owns a chain of state places `R.0 ..= R.h`, one per hop of its
//! projection plus the end place. Steps then add:
//!
//! * async PM: `m.send` (sender pre → sender post + `m.buf`) and `m.recv`
//!   (`m.buf` + receiver pre → receiver post);
//! * sync PM: `m.rv` over both parties' pre and post places;
//! * AND: `c.fork` hands one control token to each branch, each branch is a
//!   PM between its control and done places, and `c.join` collects all done
//!   tokens;
//! * XOR: every branch emission consumes the sender's pre place directly, so
//!   firing one disables the rest;
//! * OR: one AND-shaped alternative per non-empty branch subset, named
//!   `c{mask}`, all competing for the sender's pre place. A receiver that gets
//!   several branches of one alternative walks through intermediate places
//!   `R.k~c{mask}.i`.
//!
//! Role and control places carry the binding record; buffers carry plain
//! tokens.

use crate::protocol::{
    project, validate_well_formedness, Bindings, GuardExpr, InteractionProtocol, MessageStep,
    Operator, PrimitiveMessage, RoleChain, ValidationReport, MAX_BRANCHES,
};

use super::{
    Color, ColorDomain, ColoredPetriNet, Marking, Phase, PlaceId, PlaceKind, TransitionLabel,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TranslateError {
    #[error("OR message `{name}` has {branches} branches; at most {max} can be expanded", max = MAX_BRANCHES)]
    OrTooWide { name: String, branches: usize },
    #[error("protocol is not well-formed: {}", .0.error_codes().into_iter().collect::<Vec<_>>().join(", "))]
    Malformed(ValidationReport),
}

/// Translates with the protocol's declared variable defaults as the token
/// color.
pub fn translate(ip: &InteractionProtocol) -> Result<ColoredPetriNet, TranslateError> {
    translate_with_bindings(ip, &ip.initial_bindings())
}

/// Translates with an explicit binding record on every initial token.
pub fn translate_with_bindings(
    ip: &InteractionProtocol,
    bindings: &Bindings,
) -> Result<ColoredPetriNet, TranslateError> {
    for step in &ip.messages {
        if let MessageStep::Complex(cm) = step {
            if cm.operator == Operator::Or && cm.branches.len() > MAX_BRANCHES {
                return Err(TranslateError::OrTooWide {
                    name: cm.name.clone(),
                    branches: cm.branches.len(),
                });
            }
        }
    }
    let report = validate_well_formedness(ip);
    if !report.ok {
        return Err(TranslateError::Malformed(report));
    }

    let chains = project(ip);
    let mut b = Builder {
        net: ColoredPetriNet::empty(&ip.id),
        chains: &chains,
        state: Vec::new(),
    };
    let color = b.net.intern_binding(bindings.clone());

    for chain in &chains {
        let places = (0..=chain.hops.len())
            .map(|i| {
                b.net.add_place(
                    format!("{}.{i}", chain.role),
                    PlaceKind::RoleState,
                    Some(chain.role.clone()),
                    ColorDomain::Binding,
                )
            })
            .collect();
        b.state.push(places);
    }

    for (index, step) in ip.messages.iter().enumerate() {
        match step {
            MessageStep::Primitive(pm) => b.primitive(index, pm),
            MessageStep::Complex(cm) => match cm.operator {
                Operator::And => b.and(index, &cm.name, &cm.branches),
                Operator::Xor => b.xor(index, &cm.name, &cm.branches),
                Operator::Or => b.or(index, &cm.name, &cm.branches),
            },
        }
    }

    let mut net = b.net;
    let state = b.state;
    net.initial = Marking::from_tokens(state.iter().map(|places| (places[0], color, 1)));
    net.finals = vec![Marking::from_tokens(
        state
            .iter()
            .map(|places| (*places.last().unwrap(), color, 1)),
    )];
    Ok(net)
}

struct Builder<'a> {
    net: ColoredPetriNet,
    chains: &'a [RoleChain],
    /// Per role, in declaration order: its state places.
    state: Vec<Vec<PlaceId>>,
}

/// Where a branch emission starts and ends on the sender side.
struct SendSide {
    pre: PlaceId,
    post: PlaceId,
    phase: Phase,
}

impl Builder<'_> {
    fn role_index(&self, role: &str) -> usize {
        self.chains
            .iter()
            .position(|c| c.role == role)
            .expect("validated role")
    }

    fn send_places(&self, role: &str, step: usize) -> (PlaceId, PlaceId) {
        let r = self.role_index(role);
        let pos = self.chains[r]
            .send_position(step)
            .expect("sender takes part in its step");
        (self.state[r][pos], self.state[r][pos + 1])
    }

    fn receive_places(&self, role: &str, step: usize, branch: usize) -> (PlaceId, PlaceId) {
        let r = self.role_index(role);
        let pos = self.chains[r]
            .receive_position(step, branch)
            .expect("receiver takes part in its step");
        (self.state[r][pos], self.state[r][pos + 1])
    }

    fn label(
        pm: &PrimitiveMessage,
        phase: Phase,
        complex: Option<&str>,
        alternative: Option<u32>,
    ) -> TransitionLabel {
        TransitionLabel {
            message: pm.name.clone(),
            phase,
            complex: complex.map(str::to_string),
            alternative,
        }
    }

    /// Emits one message between a sender-side place pair and a
    /// receiver-side place pair.
    #[allow(clippy::too_many_arguments)]
    fn message(
        &mut self,
        prefix: &str,
        pm: &PrimitiveMessage,
        send: SendSide,
        recv_pre: PlaceId,
        recv_post: PlaceId,
        complex: Option<&str>,
        alternative: Option<u32>,
    ) {
        let guard: Option<GuardExpr> = pm.option.guard.clone();
        if pm.is_sync() {
            self.net.add_transition(
                format!("{prefix}{}.rv", pm.name),
                Self::label(pm, Phase::Rendezvous, complex, alternative),
                guard,
                vec![(send.pre, 1), (recv_pre, 1)],
                vec![(send.post, 1), (recv_post, 1)],
            );
        } else {
            let buf = self.net.add_place(
                format!("{prefix}{}.buf", pm.name),
                PlaceKind::MessageBuffer,
                None,
                ColorDomain::Unit,
            );
            self.net.add_transition(
                format!("{prefix}{}.send", pm.name),
                Self::label(pm, send.phase, complex, alternative),
                guard,
                vec![(send.pre, 1)],
                vec![(send.post, 1), (buf, 1)],
            );
            self.net.add_transition(
                format!("{prefix}{}.recv", pm.name),
                Self::label(pm, Phase::Receive, complex, alternative),
                None,
                vec![(buf, 1), (recv_pre, 1)],
                vec![(recv_post, 1)],
            );
        }
    }

    fn primitive(&mut self, step: usize, pm: &PrimitiveMessage) {
        let (pre, post) = self.send_places(&pm.sender, step);
        let (rpre, rpost) = self.receive_places(&pm.receiver, step, 0);
        self.message(
            "",
            pm,
            SendSide {
                pre,
                post,
                phase: Phase::Send,
            },
            rpre,
            rpost,
            None,
            None,
        );
    }

    fn xor(&mut self, step: usize, name: &str, branches: &[PrimitiveMessage]) {
        let (pre, post) = self.send_places(&branches[0].sender, step);
        for (i, pm) in branches.iter().enumerate() {
            let (rpre, rpost) = self.receive_places(&pm.receiver, step, i);
            self.message(
                "",
                pm,
                SendSide {
                    pre,
                    post,
                    phase: Phase::Choice,
                },
                rpre,
                rpost,
                Some(name),
                None,
            );
        }
    }

    fn and(&mut self, step: usize, name: &str, branches: &[PrimitiveMessage]) {
        let (pre, post) = self.send_places(&branches[0].sender, step);
        let receivers: Vec<(PlaceId, PlaceId)> = branches
            .iter()
            .enumerate()
            .map(|(i, pm)| self.receive_places(&pm.receiver, step, i))
            .collect();
        self.parallel(name, name, "", branches, pre, post, &receivers, None);
    }

    fn or(&mut self, step: usize, name: &str, branches: &[PrimitiveMessage]) {
        let (pre, post) = self.send_places(&branches[0].sender, step);
        let m = branches.len() as u32;
        for mask in 1u32..(1u32 << m) {
            let alt = format!("{name}{{{mask}}}");
            let chosen: Vec<PrimitiveMessage> = (0..m)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| branches[i as usize].clone())
                .collect();
            let receivers = self.or_receivers(step, &alt, branches, mask);
            let prefix = format!("{alt}.");
            self.parallel(
                &alt,
                name,
                &prefix,
                &chosen,
                pre,
                post,
                &receivers,
                Some(mask),
            );
        }
    }

    /// Receiver place pairs for the branches of one OR alternative: the
    /// receiver's ReceiveSome hop, split through intermediate places when
    /// several chosen branches go to the same role.
    fn or_receivers(
        &mut self,
        step: usize,
        alt: &str,
        branches: &[PrimitiveMessage],
        mask: u32,
    ) -> Vec<(PlaceId, PlaceId)> {
        let chosen: Vec<usize> = (0..branches.len())
            .filter(|i| mask & (1 << i) != 0)
            .collect();
        let mut out = vec![(PlaceId(0), PlaceId(0)); chosen.len()];
        let mut done = vec![false; chosen.len()];
        for (slot, &i) in chosen.iter().enumerate() {
            if done[slot] {
                continue;
            }
            let role = branches[i].receiver.clone();
            let (pre, post) = self.receive_places(&role, step, i);
            let slots: Vec<usize> = (slot..chosen.len())
                .filter(|&s| branches[chosen[s]].receiver == role)
                .collect();
            let r = self.role_index(&role);
            let pos = self.chains[r].receive_position(step, i).unwrap();
            let mut cur = pre;
            for (k, &s) in slots.iter().enumerate() {
                let next = if k + 1 == slots.len() {
                    post
                } else {
                    self.net.add_place(
                        format!("{role}.{pos}~{alt}.{}", k + 1),
                        PlaceKind::RoleState,
                        Some(role.clone()),
                        ColorDomain::Binding,
                    )
                };
                out[s] = (cur, next);
                done[s] = true;
                cur = next;
            }
        }
        out
    }

    /// The AND shape: fork, one PM per branch between control places, join.
    #[allow(clippy::too_many_arguments)]
    fn parallel(
        &mut self,
        unit: &str,
        complex: &str,
        prefix: &str,
        branches: &[PrimitiveMessage],
        pre: PlaceId,
        post: PlaceId,
        receivers: &[(PlaceId, PlaceId)],
        alternative: Option<u32>,
    ) {
        let mut ctl = Vec::new();
        let mut done = Vec::new();
        for pm in branches {
            ctl.push(self.net.add_place(
                format!("{prefix}{}.ctl", pm.name),
                PlaceKind::Control,
                None,
                ColorDomain::Binding,
            ));
            done.push(self.net.add_place(
                format!("{prefix}{}.done", pm.name),
                PlaceKind::Control,
                None,
                ColorDomain::Binding,
            ));
        }
        let label = |phase| TransitionLabel {
            message: complex.to_string(),
            phase,
            complex: Some(complex.to_string()),
            alternative,
        };
        self.net.add_transition(
            format!("{unit}.fork"),
            label(Phase::Fork),
            None,
            vec![(pre, 1)],
            ctl.iter().map(|&p| (p, 1)).collect(),
        );
        for (i, pm) in branches.iter().enumerate() {
            let (rpre, rpost) = receivers[i];
            let send = SendSide {
                pre: ctl[i],
                post: done[i],
                phase: Phase::Send,
            };
            self.message(prefix, pm, send, rpre, rpost, Some(complex), alternative);
        }
        self.net.add_transition(
            format!("{unit}.join"),
            label(Phase::Join),
            None,
            done.iter().map(|&p| (p, 1)).collect(),
            vec![(post, 1)],
        );
    }
}

impl ColoredPetriNet {
    /// The color every initial token carries in a translated net.
    pub fn initial_color(&self) -> Color {
        self.initial
            .entries()
            .first()
            .map(|e| e.1)
            .unwrap_or(Color::UNIT)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::parse_protocol;

    #[test]
    fn linear_async_counts() {
        let ip = parse_protocol(
            "protocol p roles { I: process E: process }
             messages { pm m1: I -> E request  pm m2: E -> I inform }",
        )
        .unwrap();
        let net = translate(&ip).unwrap();
        net.check().unwrap();
        assert_eq!(net.transitions.len(), 4);
        assert_eq!(net.places.len(), 8);
        assert_eq!(net.count_places(PlaceKind::MessageBuffer), 2);
        let names: Vec<&str> = net.transitions.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["m1.send", "m1.recv", "m2.send", "m2.recv"]);
        assert_eq!(net.initial.entries().len(), 2);
    }

    #[test]
    fn xor_branches_share_the_sender_place() {
        let ip = parse_protocol(
            "protocol p roles { I: process E: process }
             messages { cm c XOR { pm a: I -> E accept-proposal  pm r: I -> E reject-proposal } }",
        )
        .unwrap();
        let net = translate(&ip).unwrap();
        let choices: Vec<_> = net
            .transitions
            .iter()
            .filter(|t| t.label.phase == Phase::Choice)
            .collect();
        assert_eq!(choices.len(), 2);
        assert_eq!(choices[0].inputs, choices[1].inputs);
        assert_eq!(net.count_places(PlaceKind::MessageBuffer), 2);
        assert_eq!(net.count_transitions(Phase::Receive), 2);
    }

    #[test]
    fn or_expands_every_subset() {
        let ip = parse_protocol(
            "protocol p roles { I: process E: process }
             messages { cm o OR { pm a: I -> E inform  pm b: I -> E inform sync } }",
        )
        .unwrap();
        let net = translate(&ip).unwrap();
        // {a}: fork, send, recv, join; {b}: fork, rv, join; {a,b}: fork, send, recv, rv, join
        assert_eq!(net.transitions.len(), 4 + 3 + 5);
        assert_eq!(net.count_places(PlaceKind::MessageBuffer), 2);
        assert!(net.place_by_name("E.0~o{3}.1").is_some());
    }

    #[test]
    fn malformed_and_oversized_inputs_are_refused() {
        let mut ip = parse_protocol(
            "protocol p roles { I: process E: process } messages { pm m: I -> E inform }",
        )
        .unwrap();
        if let MessageStep::Primitive(pm) = &mut ip.messages[0] {
            pm.receiver = "Ghost".into();
        }
        assert!(
            matches!(translate(&ip), Err(TranslateError::Malformed(r)) if r.has_code("UNKNOWN_ROLE"))
        );

        let branches: String = (0..17)
            .map(|i| format!("pm b{i}: I -> E inform "))
            .collect();
        let src = format!(
            "protocol p roles {{ I: process E: process }} messages {{ cm o OR {{ {branches} }} }}"
        );
        let ip = crate::protocol::parse_document(&src).unwrap().protocol;
        assert!(matches!(
            translate(&ip),
            Err(TranslateError::OrTooWide { branches: 17, .. })
        ));
    }
}
