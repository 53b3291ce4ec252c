use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::agents::{
    handle_message, not_understood, AgentState, InteractionManagerState, Outcome, PendingDeadline,
    ProtocolView, ResponseLedger, SkillTable, Task,
};
use super::{
    AclMessage, AgentId, AgentKind, Content, Dataspace, DataspaceError, EventKind, ExecutionTrace,
    Pending, Scheduler, SessionStatus, TraceEvent,
};
use crate::net::{ColoredPetriNet, Verdict, VerificationReport};
use crate::protocol::{
    expected_responses, project, CommunicativeAct, Hop, InteractionProtocol, MessageStep, Operator,
    PrimitiveMessage, RoleKind, Value,
};
use crate::services::{self, InvocationOutcome, Registry, SelectionPolicy};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("BINDINGS_INCOMPLETE: no agent bound to role(s) {}", .0.join(", "))]
    BindingsIncomplete(Vec<String>),
    #[error("UNKNOWN_ROLE: binding names undeclared role `{0}`")]
    UnknownRole(String),
    #[error(
        "SERVICE_ROLE_BOUND: role `{0}` is a service role and is resolved through the registry"
    )]
    ServiceRoleBound(String),
    #[error("DUPLICATE_INTEGRATOR: roles {0} and {1} are both bound to Integrator agents")]
    DuplicateIntegrator(String, String),
    #[error("NO_INTEGRATOR: no role is bound to an Integrator agent")]
    NoIntegrator,
    #[error("AGENT_REUSED: agent `{0}` is bound to more than one role")]
    AgentReused(String),
    #[error("UNVERIFIED: protocol is not verified to terminate properly and force was not given")]
    Unverified,
    #[error("ALREADY_ANNOUNCED: the task was already announced")]
    AlreadyAnnounced,
    #[error("NOT_RUNNING: session is {}", .0.as_str())]
    NotRunning(SessionStatus),
    #[error(
        "NOT_INITIATOR: first step `{step}` is sent by role {role}, which is not the Integrator's"
    )]
    NotInitiator { step: String, role: String },
    #[error("NO_STEPS: protocol has no messages to announce")]
    NoSteps,
    #[error(transparent)]
    Dataspace(#[from] DataspaceError),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::BindingsIncomplete(_) => "BINDINGS_INCOMPLETE",
            SessionError::UnknownRole(_) => "UNKNOWN_ROLE",
            SessionError::ServiceRoleBound(_) => "SERVICE_ROLE_BOUND",
            SessionError::DuplicateIntegrator(..) => "DUPLICATE_INTEGRATOR",
            SessionError::NoIntegrator => "NO_INTEGRATOR",
            SessionError::AgentReused(_) => "AGENT_REUSED",
            SessionError::Unverified => "UNVERIFIED",
            SessionError::AlreadyAnnounced => "ALREADY_ANNOUNCED",
            SessionError::NotRunning(_) => "NOT_RUNNING",
            SessionError::NotInitiator { .. } => "NOT_INITIATOR",
            SessionError::NoSteps => "NO_STEPS",
            SessionError::Dataspace(DataspaceError::Undeclared(_)) => "UNDECLARED_VARIABLE",
            SessionError::Dataspace(DataspaceError::TypeMismatch { .. }) => "TYPE_MISMATCH",
        }
    }
}

/// Everything beyond the protocol, net, bindings and seed.
#[derive(Debug, Clone, Default)]
pub struct SessionOptions {
    pub verification: Option<VerificationReport>,
    /// Run even without a passing termination verdict; recorded in the trace.
    pub force: bool,
    pub registry: Option<Registry>,
    pub policy: SelectionPolicy,
    /// Further candidates to try after a failed service invocation.
    pub retries: u32,
    /// Skill tables by agent name.
    pub skills: BTreeMap<String, SkillTable>,
}

#[derive(Debug, Clone, PartialEq)]
enum ServiceSlot {
    Unresolved,
    Invoking {
        order: Vec<String>,
        candidates: Vec<String>,
        attempt: usize,
        retries_left: u32,
    },
    Ready {
        response: String,
    },
    Failed(String),
}

/// One run of a protocol.
#[derive(Debug, Clone)]
pub struct Session {
    protocol: InteractionProtocol,
    net: ColoredPetriNet,
    agents: BTreeMap<String, AgentId>,
    integrator: usize,
    states: Vec<AgentState>,
    manager: InteractionManagerState,
    dataspace: Dataspace,
    scheduler: Scheduler,
    trace: ExecutionTrace,
    status: SessionStatus,
    reason: Option<String>,
    announced: bool,
    task: Task,
    slots: BTreeMap<usize, ServiceSlot>,
    registry: Option<Registry>,
    policy: SelectionPolicy,
    retries: u32,
    messages_sent: u64,
    /// Branches genuinely sent so far.
    emitted: BTreeSet<String>,
}

pub fn create_session(
    ip: &InteractionProtocol,
    net: &ColoredPetriNet,
    bindings: &BTreeMap<String, AgentId>,
    seed: u64,
    options: SessionOptions,
) -> Result<Session, SessionError> {
    for role in bindings.keys() {
        match ip.role(role) {
            None => return Err(SessionError::UnknownRole(role.clone())),
            Some(r) if r.kind == RoleKind::WebService => {
                return Err(SessionError::ServiceRoleBound(role.clone()))
            }
            _ => {}
        }
    }
    let missing: Vec<String> = ip
        .roles
        .iter()
        .filter(|r| r.kind == RoleKind::PrivateProcess && !bindings.contains_key(&r.name))
        .map(|r| r.name.clone())
        .collect();
    if !missing.is_empty() {
        return Err(SessionError::BindingsIncomplete(missing));
    }
    let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
    let mut integrator: Option<&str> = None;
    for (role, agent) in bindings {
        if seen.insert(&agent.name, role).is_some() {
            return Err(SessionError::AgentReused(agent.name.clone()));
        }
        if agent.kind == AgentKind::Integrator {
            if let Some(first) = integrator {
                return Err(SessionError::DuplicateIntegrator(
                    first.to_string(),
                    role.clone(),
                ));
            }
            integrator = Some(role);
        }
    }
    let integrator_role = integrator.ok_or(SessionError::NoIntegrator)?.to_string();
    let verified = options
        .verification
        .as_ref()
        .is_some_and(|r| r.proper_termination == Verdict::Holds);
    if !verified && !options.force {
        return Err(SessionError::Unverified);
    }

    let chains = project(ip);
    let mut states = Vec::new();
    let mut slots = BTreeMap::new();
    for (i, chain) in chains.into_iter().enumerate() {
        let agent = bindings.get(&chain.role).cloned();
        if agent.is_none() {
            slots.insert(i, ServiceSlot::Unresolved);
        }
        let mut state = AgentState::new(chain.role, agent.clone(), chain.hops);
        if let Some(a) = &agent {
            state.skills = options.skills.get(&a.name).cloned().unwrap_or_default();
        }
        states.push(state);
    }
    let integrator = states
        .iter()
        .position(|s| s.role == integrator_role)
        .expect("bound role exists");

    let mut manager = InteractionManagerState::default();
    for step in &ip.messages {
        if let MessageStep::Complex(cm) = step {
            manager.ledgers.insert(
                cm.name.clone(),
                ResponseLedger {
                    delivered: 0,
                    received: 0,
                    expectation: expected_responses(cm),
                },
            );
        }
    }

    let conversation = format!("{}-{seed}", ip.id);
    let mut session = Session {
        protocol: ip.clone(),
        net: net.clone(),
        agents: bindings.clone(),
        integrator,
        states,
        manager,
        dataspace: Dataspace::new(&ip.vars),
        scheduler: Scheduler::new(seed),
        trace: ExecutionTrace::new(conversation),
        status: SessionStatus::Running,
        reason: None,
        announced: false,
        task: Task::default(),
        slots,
        registry: options.registry,
        policy: options.policy,
        retries: options.retries,
        messages_sent: 0,
        emitted: BTreeSet::new(),
    };
    if !verified {
        session.record(
            TraceEvent::new(0, EventKind::StatusChange)
                .detail("status", SessionStatus::Running.as_str())
                .detail("reason", "forced without a passing termination verdict"),
        );
    }
    Ok(session)
}

impl Session {
    pub fn protocol(&self) -> &InteractionProtocol {
        &self.protocol
    }

    pub fn net(&self) -> &ColoredPetriNet {
        &self.net
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    /// Why the session left Running, if it did.
    pub fn reason(&self) -> Option<&str> {
        self.reason.as_deref()
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn state(&self, role: &str) -> Option<&AgentState> {
        self.states.iter().find(|s| s.role == role)
    }

    pub fn manager(&self) -> &InteractionManagerState {
        &self.manager
    }

    pub fn now(&self) -> u64 {
        self.scheduler.now()
    }

    pub fn agents(&self) -> &BTreeMap<String, AgentId> {
        &self.agents
    }

    pub fn dataspace(&self) -> &Dataspace {
        &self.dataspace
    }

    pub fn dataspace_read(&self, key: &str) -> Result<Option<&Value>, SessionError> {
        Ok(self.dataspace.read(key)?)
    }

    pub fn dataspace_write(&mut self, key: &str, value: Value) -> Result<u64, SessionError> {
        let version = self.dataspace.write(key, value.clone())?;
        self.record(
            TraceEvent::new(self.now(), EventKind::VarWrite)
                .detail("var", key)
                .detail("value", &value)
                .detail("version", version),
        );
        Ok(version)
    }

    fn record(&mut self, event: TraceEvent) {
        self.trace.events.push(event);
    }

    fn set_status(&mut self, status: SessionStatus, reason: impl Into<String>) {
        let reason = reason.into();
        self.status = status;
        self.record(
            TraceEvent::new(self.now(), EventKind::StatusChange)
                .detail("status", status.as_str())
                .detail("reason", &reason),
        );
        self.reason = Some(reason);
    }

    fn integrator_id(&self) -> AgentId {
        self.states[self.integrator]
            .agent
            .clone()
            .expect("integrator is bound")
    }

    /// Starts the session: instantiates the first message step with the task
    /// in its content. An XOR first step is left for the next [`Self::step`]
    /// to choose.
    pub fn announce(&mut self, task: Task) -> Result<Vec<AclMessage>, SessionError> {
        if self.status != SessionStatus::Running {
            return Err(SessionError::NotRunning(self.status));
        }
        if self.announced {
            return Err(SessionError::AlreadyAnnounced);
        }
        let first = self
            .protocol
            .messages
            .first()
            .ok_or(SessionError::NoSteps)?;
        let sender = first.sender().unwrap_or_default().to_string();
        if sender != self.states[self.integrator].role {
            return Err(SessionError::NotInitiator {
                step: first.name().to_string(),
                role: sender,
            });
        }
        let xor_first = first.operator() == Some(Operator::Xor);
        for s in &mut self.states {
            s.task = Some(task.clone());
        }
        self.task = task;
        self.announced = true;
        let start = self.trace.len();
        if !xor_first {
            self.try_send(self.integrator);
        }
        Ok(self.trace.events[start..]
            .iter()
            .filter(|e| e.kind == EventKind::Sent)
            .filter_map(|e| e.message.clone())
            .collect())
    }

    /// Puts an arbitrary message on the bus, as if a faulty or malicious
    /// peer had sent it. It is delivered on the next tick.
    pub fn inject(&mut self, mut msg: AclMessage) {
        msg.conversation_id = self.trace.conversation_id.clone();
        self.emit_with(msg, &[("injected", "true")]);
    }

    /// Advances one tick: expires deadlines, delivers at most one due item,
    /// lets every agent send what it can, then settles the status.
    pub fn step(&mut self) -> Vec<TraceEvent> {
        if self.status != SessionStatus::Running || !self.announced {
            return Vec::new();
        }
        let start = self.trace.len();
        self.scheduler.advance();

        for d in &mut self.manager.deadlines {
            d.remaining = d.remaining.saturating_sub(1);
        }
        if let Some(expired) = self
            .manager
            .deadlines
            .iter()
            .find(|d| d.remaining == 0)
            .cloned()
        {
            let cancel = AclMessage {
                performative: CommunicativeAct::Cancel,
                sender: self.integrator_id(),
                receiver: expired.counterpart.clone(),
                content: Content {
                    bindings: Default::default(),
                    body: format!("deadline of {} passed", expired.step),
                },
                conversation_id: self.trace.conversation_id.clone(),
                reply_with: None,
                in_reply_to: Some(expired.message.clone()),
                content_language: super::acl::CONTENT_LANGUAGE,
                timestamp: self.now(),
                step: None,
                selection: None,
            };
            self.emit_with(cancel, &[]);
            self.set_status(
                SessionStatus::DeadlineExpired,
                format!("deadline of `{}` passed", expired.step),
            );
            return self.trace.events[start..].to_vec();
        }

        match self.scheduler.pop_ready() {
            Some(Pending::Message(m)) => self.deliver(m),
            Some(Pending::ServiceReply(o)) => self.service_reply(o),
            None => {}
        }
        self.drive();
        self.settle();
        self.trace.events[start..].to_vec()
    }

    /// Steps until the session leaves Running or `max_steps` steps have been
    /// taken, in which case it is Stuck with reason `budget-exhausted`.
    /// Announces an empty task first if nothing was announced yet.
    pub fn run_to_completion(&mut self, max_steps: u64) -> SessionStatus {
        if !self.announced && self.status == SessionStatus::Running {
            if let Err(e) = self.announce(Task::default()) {
                self.set_status(SessionStatus::Stuck, e.to_string());
            }
        }
        let mut taken = 0;
        while self.status == SessionStatus::Running {
            if taken >= max_steps {
                self.set_status(SessionStatus::Stuck, "budget-exhausted");
                break;
            }
            self.step();
            taken += 1;
        }
        self.status
    }

    fn settle(&mut self) {
        if self.status != SessionStatus::Running {
            return;
        }
        let messages_in_flight = self
            .scheduler
            .pending()
            .any(|p| matches!(p, Pending::Message(_)));
        let done = self
            .states
            .iter()
            .all(|s| s.finished() && s.inbox.is_empty())
            && !messages_in_flight
            && self.manager.ledgers.values().all(ResponseLedger::satisfied);
        if done {
            self.set_status(SessionStatus::Completed, "every role reached its end");
        } else if self.scheduler.is_empty() {
            let reason = self
                .slots
                .iter()
                .find_map(|(i, s)| match s {
                    ServiceSlot::Failed(why) => Some(format!(
                        "service role {} unavailable: {why}",
                        self.states[*i].role
                    )),
                    _ => None,
                })
                .unwrap_or_else(|| "no deliverable message and no enabled step".to_string());
            self.set_status(SessionStatus::Stuck, reason);
        }
    }

    fn emit_with(&mut self, mut msg: AclMessage, extra: &[(&str, &str)]) {
        self.messages_sent += 1;
        msg.reply_with = Some(format!(
            "{}#{}",
            self.trace.conversation_id, self.messages_sent
        ));
        msg.timestamp = self.now();
        let mut event = TraceEvent::new(self.now(), EventKind::Sent).with_message(&msg);
        if let Some(step) = &msg.step {
            event = event.detail("step", step);
        }
        if let Some(sel) = msg.selection {
            event = event.detail("selection", sel);
        }
        for (k, v) in extra {
            event = event.detail(k, v);
        }
        self.record(event);

        let deadline = msg
            .step
            .as_deref()
            .and_then(|s| self.protocol.primitives().find(|pm| pm.name == s))
            .and_then(|pm| pm.option.deadline);
        if let (Some(ticks), None) = (deadline, extra.iter().find(|(k, _)| *k == "injected")) {
            let integrator = self.integrator_id();
            let counterpart = if msg.sender == integrator {
                msg.receiver.clone()
            } else {
                msg.sender.clone()
            };
            self.manager.deadlines.push(PendingDeadline {
                message: msg.id().to_string(),
                step: msg.step.clone().unwrap_or_default(),
                remaining: ticks,
                counterpart,
            });
        }
        let at = self.now() + 1;
        self.scheduler.schedule(at, Pending::Message(msg));
    }

    fn role_of(&self, agent: &AgentId) -> Option<usize> {
        self.states
            .iter()
            .position(|s| s.agent.as_ref() == Some(agent))
    }

    fn deliver(&mut self, msg: AclMessage) {
        self.record(TraceEvent::new(self.now(), EventKind::Delivered).with_message(&msg));
        if let Some(l) = msg.step.as_deref().and_then(|s| self.ledger_of(s)) {
            l.delivered += 1;
        }
        match self.role_of(&msg.receiver) {
            Some(idx) => {
                self.handle(idx, msg);
                self.drain_inbox(idx);
            }
            None => self.record(
                TraceEvent::new(self.now(), EventKind::Handled)
                    .with_message(&msg)
                    .detail("outcome", "noted"),
            ),
        }
    }

    /// Runs the receiver's state machine on one message. Returns whether the
    /// message was accepted.
    fn handle(&mut self, idx: usize, msg: AclMessage) -> bool {
        let view = ProtocolView {
            protocol: &self.protocol,
            agents: &self.agents,
        };
        let mut handling = handle_message(&self.states[idx], &msg, &view);
        let handled = TraceEvent::new(self.now(), EventKind::Handled).with_message(&msg);
        // The transport knows which branches were really sent; anything else
        // naming a protocol step is out of order and must not be parked.
        if let Some(step) = msg.step.as_deref() {
            let known = self.protocol.primitives().any(|pm| pm.name == step);
            if known && !self.emitted.contains(step) && handling.outcome != Outcome::Noted {
                let reason = format!("`{step}` is out of order: its sender has not reached it");
                handling.outgoing = vec![not_understood(&msg, &reason)];
                handling.outcome = Outcome::Rejected(reason);
            }
        }
        match handling.outcome {
            Outcome::Accepted => {
                self.states[idx] = handling.state;
                let mut event = handled.detail("outcome", "accepted");
                if let Some(step) = &msg.step {
                    event = event.detail("step", step);
                }
                self.record(event);
                self.on_accepted(&msg);
                true
            }
            Outcome::Deferred => {
                self.states[idx] = handling.state;
                self.states[idx].inbox.push(msg);
                false
            }
            Outcome::Rejected(reason) => {
                self.record(
                    handled
                        .detail("outcome", "rejected")
                        .detail("reason", &reason),
                );
                for out in handling.outgoing {
                    self.emit_with(out, &[]);
                }
                false
            }
            Outcome::Noted => {
                self.record(handled.detail("outcome", "noted"));
                false
            }
        }
    }

    fn drain_inbox(&mut self, idx: usize) {
        'again: loop {
            for i in 0..self.states[idx].inbox.len() {
                let msg = self.states[idx].inbox.remove(i);
                let before = self.states[idx].inbox.len();
                let accepted = self.handle(idx, msg.clone());
                let parked_again = self.states[idx].inbox.len() > before;
                if accepted {
                    continue 'again;
                }
                if parked_again {
                    // Put it back where it was.
                    let m = self.states[idx].inbox.pop().expect("just parked");
                    self.states[idx].inbox.insert(i, m);
                } else {
                    continue 'again;
                }
            }
            break;
        }
    }

    fn on_accepted(&mut self, msg: &AclMessage) {
        let id = msg.id().to_string();
        self.manager.deadlines.retain(|d| d.message != id);
        if let Some(l) = msg.step.as_deref().and_then(|s| self.ledger_of(s)) {
            l.received += 1;
        }
    }

    /// Ledger of the complex message owning branch `name`.
    fn ledger_of(&mut self, name: &str) -> Option<&mut ResponseLedger> {
        let cm = self.protocol.messages.iter().find_map(|step| match step {
            MessageStep::Complex(cm) if cm.branches.iter().any(|b| b.name == name) => {
                Some(cm.name.as_str())
            }
            _ => None,
        })?;
        self.manager.ledgers.get_mut(cm)
    }

    /// Lets every role send whatever it can until nothing changes.
    fn drive(&mut self) {
        loop {
            let mut progress = false;
            for idx in 0..self.states.len() {
                let mut sent = false;
                while self.status == SessionStatus::Running && self.try_send(idx) {
                    sent = true;
                }
                if sent {
                    // A send can move the cursor onto a parked message.
                    self.drain_inbox(idx);
                    progress = true;
                }
            }
            if !progress {
                break;
            }
        }
    }

    /// The Integrator holds its next send until every complex message it has
    /// already sent has collected its minimum number of responses.
    fn integrator_may_send(&self) -> bool {
        let s = &self.states[self.integrator];
        s.hops[..s.cursor].iter().all(|h| match h {
            Hop::Send { step } => match &self.protocol.messages[*step] {
                MessageStep::Complex(cm) => {
                    self.manager.ledgers[&cm.name].delivered >= expected_responses(cm).0
                }
                MessageStep::Primitive(_) => true,
            },
            _ => true,
        })
    }

    fn guard_holds(&self, pm: &PrimitiveMessage) -> bool {
        pm.option
            .guard
            .as_ref()
            .map_or(true, |g| g.eval(self.dataspace.bindings()))
    }

    fn role_index(&self, role: &str) -> usize {
        self.states
            .iter()
            .position(|s| s.role == role)
            .expect("declared role")
    }

    /// Whether branch `branch` of `step` can go out now. Kicks off service
    /// resolution for an unresolved receiver.
    fn sendable(
        &mut self,
        pm: &PrimitiveMessage,
        step: usize,
        branch: usize,
        selection: Option<u32>,
    ) -> bool {
        if !self.guard_holds(pm) {
            return false;
        }
        let r = self.role_index(&pm.receiver);
        if self.states[r].agent.is_none() {
            self.ensure_service(r);
            return false;
        }
        !pm.is_sync() || self.states[r].ready_for(step, branch, selection)
    }

    fn try_send(&mut self, idx: usize) -> bool {
        if !self.announced {
            return false;
        }
        let Some(Hop::Send { step }) = self.states[idx].current().cloned() else {
            return false;
        };
        if self.states[idx].agent.is_none() {
            self.ensure_service(idx);
            return false;
        }
        if idx == self.integrator && !self.integrator_may_send() {
            return false;
        }
        match self.protocol.messages[step].clone() {
            MessageStep::Primitive(pm) => {
                if !self.sendable(&pm, step, 0, None) {
                    return false;
                }
                self.send_branch(idx, &pm, None);
                self.states[idx].advance();
                true
            }
            MessageStep::Complex(cm) => match cm.operator {
                Operator::Xor => {
                    let mut open = Vec::new();
                    for (b, pm) in cm.branches.iter().enumerate() {
                        if self.sendable(pm, step, b, None) {
                            open.push(b);
                        }
                    }
                    if open.is_empty() {
                        return false;
                    }
                    let b = self.choose_branch(idx, &cm.branches, &open);
                    self.send_branch(idx, &cm.branches[b], None);
                    self.states[idx].advance();
                    true
                }
                Operator::And => self.send_parallel(idx, step, &cm.branches, None),
                Operator::Or => {
                    let mut progress = false;
                    let mask = match self.states[idx].selection {
                        Some(mask) => mask,
                        None => {
                            let pool: Vec<usize> = (0..cm.branches.len())
                                .filter(|&b| self.guard_holds(&cm.branches[b]))
                                .collect();
                            if pool.is_empty() {
                                return false;
                            }
                            let pick = self.scheduler.rng().gen_range(1u64..(1u64 << pool.len()));
                            let mask = pool
                                .iter()
                                .enumerate()
                                .filter(|(k, _)| pick & (1 << k) != 0)
                                .fold(0u32, |m, (_, &b)| m | (1 << b));
                            self.states[idx].selection = Some(mask);
                            progress = true;
                            mask
                        }
                    };
                    self.send_parallel(idx, step, &cm.branches, Some(mask)) || progress
                }
            },
        }
    }

    /// AND and OR sends: every selected branch once, each as soon as it can
    /// go; the hop completes when all have gone.
    fn send_parallel(
        &mut self,
        idx: usize,
        step: usize,
        branches: &[PrimitiveMessage],
        mask: Option<u32>,
    ) -> bool {
        let selected: Vec<usize> = (0..branches.len())
            .filter(|b| mask.map_or(true, |m| m & (1 << b) != 0))
            .collect();
        let mut progress = false;
        for &b in &selected {
            if self.states[idx].partial.contains(&b) || !self.sendable(&branches[b], step, b, mask)
            {
                continue;
            }
            self.send_branch(idx, &branches[b], mask);
            self.states[idx].partial.insert(b);
            progress = true;
        }
        if self.states[idx].partial.len() == selected.len() {
            self.states[idx].advance();
            progress = true;
        }
        progress
    }

    /// XOR choice. The Integrator picks at random among the open branches;
    /// other agents prefer affirmative acts exactly when they can serve the
    /// task, taking the first such branch.
    fn choose_branch(
        &mut self,
        idx: usize,
        branches: &[PrimitiveMessage],
        open: &[usize],
    ) -> usize {
        if idx == self.integrator {
            let k = self.scheduler.rng().gen_range(0..open.len());
            return open[k];
        }
        let serve = self.states[idx].can_serve();
        open.iter()
            .copied()
            .find(|&b| branches[b].act.is_affirmative() == serve)
            .unwrap_or(open[0])
    }

    fn body_for(&self, idx: usize) -> String {
        let state = &self.states[idx];
        if idx == self.integrator {
            return self.task.render();
        }
        if let Some(ServiceSlot::Ready { response }) = self.slots.get(&idx) {
            return response.clone();
        }
        match state.quote() {
            Some(cost) => format!("cost={cost}"),
            None if state.can_serve() => String::new(),
            None => "unavailable".to_string(),
        }
    }

    fn send_branch(&mut self, idx: usize, pm: &PrimitiveMessage, selection: Option<u32>) {
        let msg = AclMessage {
            performative: pm.act,
            sender: self.states[idx].agent.clone().expect("resolved sender"),
            receiver: self.agents[&pm.receiver].clone(),
            content: Content {
                bindings: self.dataspace.bindings().clone(),
                body: self.body_for(idx),
            },
            conversation_id: self.trace.conversation_id.clone(),
            reply_with: None,
            in_reply_to: self.states[idx].last_received.clone(),
            content_language: super::acl::CONTENT_LANGUAGE,
            timestamp: self.now(),
            step: Some(pm.name.clone()),
            selection,
        };
        self.emitted.insert(pm.name.clone());
        self.emit_with(msg, &[]);
    }

    /// Request kind a service role is first engaged with: the act of the
    /// first message it sends or receives.
    fn request_kind(&self, idx: usize) -> String {
        let state = &self.states[idx];
        let act = match state.hops.first() {
            Some(Hop::Send { step }) => self.protocol.messages[*step].branches()[0].act,
            Some(Hop::Receive { step, branch }) => {
                self.protocol.messages[*step].branches()[*branch].act
            }
            Some(Hop::ReceiveOne { step, branches })
            | Some(Hop::ReceiveSome { step, branches }) => {
                self.protocol.messages[*step].branches()[branches[0]].act
            }
            None => CommunicativeAct::Request,
        };
        act.as_str().to_string()
    }

    /// Discovery, attribute probes, selection and the first invocation for a
    /// service role, run once on first contact.
    fn ensure_service(&mut self, idx: usize) {
        if self.slots.get(&idx) != Some(&ServiceSlot::Unresolved) {
            return;
        }
        let role = self.states[idx].role.clone();
        let criteria = self
            .protocol
            .role(&role)
            .map(|r| r.capabilities.clone())
            .unwrap_or_default();
        let integrator = self.integrator_id();
        let Some(registry) = self.registry.take() else {
            self.record(
                TraceEvent::new(self.now(), EventKind::Discover)
                    .detail("role", &role)
                    .detail(
                        "criteria",
                        criteria.iter().cloned().collect::<Vec<_>>().join(","),
                    )
                    .detail("found", ""),
            );
            self.slots
                .insert(idx, ServiceSlot::Failed("no registry".into()));
            return;
        };
        // A service instance plays at most one role per session.
        let claimed = self.claimed_services();
        let found: Vec<String> = services::discover(&registry, &criteria)
            .into_iter()
            .map(|d| d.id.clone())
            .filter(|id| !claimed.contains(id))
            .collect();
        let mut discover = TraceEvent::new(self.now(), EventKind::Discover)
            .detail("role", &role)
            .detail(
                "criteria",
                criteria.iter().cloned().collect::<Vec<_>>().join(","),
            )
            .detail("found", found.join(","));
        discover.sender = Some(integrator.clone());
        self.record(discover);

        let ids: Vec<&str> = found.iter().map(String::as_str).collect();
        let probes = services::fetch_attributes(&registry, &ids, self.scheduler.rng())
            .expect("discovered ids exist");
        let mut available = BTreeMap::new();
        for id in &found {
            let probe = &probes[id];
            let attrs: Vec<String> = probe
                .attributes
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            self.record(
                TraceEvent::new(self.now(), EventKind::Probe)
                    .between(integrator.clone(), AgentId::service(id))
                    .detail("role", &role)
                    .detail("available", probe.available)
                    .detail("attributes", attrs.join(",")),
            );
            if probe.available {
                available.insert(id.clone(), probe.attributes.clone());
            }
        }
        let order = services::preference_order(&available, self.policy);
        self.registry = Some(registry);
        if order.is_empty() {
            let why = if found.is_empty() {
                "no service matches"
            } else {
                "no usable candidate"
            };
            self.slots.insert(idx, ServiceSlot::Failed(why.into()));
            return;
        }
        self.slots.insert(
            idx,
            ServiceSlot::Invoking {
                order,
                candidates: available.keys().cloned().collect(),
                attempt: 0,
                retries_left: self.retries,
            },
        );
        self.invoke_round(idx);
    }

    /// Services bound to a role or currently being invoked for one.
    fn claimed_services(&self) -> BTreeSet<String> {
        self.slots
            .iter()
            .filter_map(|(&i, slot)| match slot {
                ServiceSlot::Ready { .. } => self.states[i].agent.as_ref().map(|a| a.name.clone()),
                ServiceSlot::Invoking { order, attempt, .. } => Some(order[*attempt].clone()),
                _ => None,
            })
            .collect()
    }

    fn invoke_round(&mut self, idx: usize) {
        let Some(ServiceSlot::Invoking {
            order,
            candidates,
            attempt,
            ..
        }) = self.slots.get(&idx).cloned()
        else {
            return;
        };
        let chosen = order[attempt].clone();
        let others: Vec<String> = candidates
            .iter()
            .filter(|c| **c != chosen)
            .cloned()
            .collect();
        let kind = self.request_kind(idx);
        let payload = self.task.render();
        let registry = self
            .registry
            .as_ref()
            .expect("resolution runs with a registry");
        let outcome = services::invoke_parallel(
            registry,
            &chosen,
            &others,
            &kind,
            &payload,
            &mut self.scheduler,
        )
        .expect("candidates come from the registry");
        let integrator = self.integrator_id();
        let role = self.states[idx].role.clone();
        self.record(
            TraceEvent::new(self.now(), EventKind::Invoke)
                .between(integrator.clone(), AgentId::service(&chosen))
                .detail("role", &role)
                .detail("request", &kind)
                .detail("policy", self.policy.as_str())
                .detail("attempt", attempt + 1),
        );
        for c in &outcome.cancels {
            self.record(
                TraceEvent::new(self.now(), EventKind::Cancel)
                    .between(integrator.clone(), AgentId::service(c))
                    .detail("role", &role)
                    .detail("chosen", &chosen),
            );
        }
    }

    fn service_reply(&mut self, outcome: InvocationOutcome) {
        let Some(idx) = self.slots.iter().find_map(|(i, s)| match s {
            ServiceSlot::Invoking { order, attempt, .. } if order[*attempt] == outcome.chosen => {
                Some(*i)
            }
            _ => None,
        }) else {
            return;
        };
        let integrator = self.integrator_id();
        let role = self.states[idx].role.clone();
        let mut event = TraceEvent::new(self.now(), EventKind::ServiceReply)
            .between(AgentId::service(&outcome.chosen), integrator)
            .detail("role", &role);
        match outcome.response {
            Ok(response) => {
                self.record(event.detail("outcome", "ok").detail("response", &response));
                let agent = AgentId::service(&outcome.chosen);
                self.agents.insert(role, agent.clone());
                self.states[idx].agent = Some(agent);
                self.slots.insert(idx, ServiceSlot::Ready { response });
                self.drain_inbox(idx);
            }
            Err(why) => {
                event = event.detail("outcome", "failed").detail("response", &why);
                self.record(event);
                let Some(ServiceSlot::Invoking {
                    order,
                    candidates,
                    attempt,
                    retries_left,
                }) = self.slots.get(&idx).cloned()
                else {
                    return;
                };
                let claimed = self.claimed_services();
                let next = (attempt + 1..order.len()).find(|&k| !claimed.contains(&order[k]));
                if let (true, Some(next)) = (retries_left > 0, next) {
                    self.slots.insert(
                        idx,
                        ServiceSlot::Invoking {
                            order,
                            candidates,
                            attempt: next,
                            retries_left: retries_left - 1,
                        },
                    );
                    self.invoke_round(idx);
                } else {
                    self.slots.insert(idx, ServiceSlot::Failed(why));
                }
            }
        }
    }
}
