//! The ordered event log of a session and its newline-delimited export.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{AclMessage, AgentId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Sent,
    Delivered,
    Handled,
    VarWrite,
    StatusChange,
    /// Registry lookup for a service role.
    Discover,
    /// Attribute fetch from one discovered service.
    Probe,
    Invoke,
    /// Stand-down notice to a candidate service that was not chosen.
    Cancel,
    ServiceReply,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Sent => "sent",
            EventKind::Delivered => "delivered",
            EventKind::Handled => "handled",
            EventKind::VarWrite => "var-write",
            EventKind::StatusChange => "status-change",
            EventKind::Discover => "discover",
            EventKind::Probe => "probe",
            EventKind::Invoke => "invoke",
            EventKind::Cancel => "cancel",
            EventKind::ServiceReply => "service-reply",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    Running,
    Completed,
    Stuck,
    DeadlineExpired,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Running => "running",
            SessionStatus::Completed => "completed",
            SessionStatus::Stuck => "stuck",
            SessionStatus::DeadlineExpired => "deadline-expired",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            SessionStatus::Running,
            SessionStatus::Completed,
            SessionStatus::Stuck,
            SessionStatus::DeadlineExpired,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub tick: u64,
    pub kind: EventKind,
    pub message: Option<AclMessage>,
    /// Parties of events that carry no ACL message (service traffic).
    pub sender: Option<AgentId>,
    pub receiver: Option<AgentId>,
    pub detail: BTreeMap<String, String>,
}

impl TraceEvent {
    pub fn new(tick: u64, kind: EventKind) -> Self {
        TraceEvent {
            tick,
            kind,
            message: None,
            sender: None,
            receiver: None,
            detail: BTreeMap::new(),
        }
    }

    pub fn with_message(mut self, msg: &AclMessage) -> Self {
        self.sender = Some(msg.sender.clone());
        self.receiver = Some(msg.receiver.clone());
        self.message = Some(msg.clone());
        self
    }

    pub fn between(mut self, sender: AgentId, receiver: AgentId) -> Self {
        self.sender = Some(sender);
        self.receiver = Some(receiver);
        self
    }

    pub fn detail(mut self, key: &str, value: impl ToString) -> Self {
        self.detail.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.detail.get(key).map(String::as_str)
    }
}

#[derive(Serialize)]
struct Correlation<'a> {
    #[serde(rename = "reply-with", skip_serializing_if = "Option::is_none")]
    reply_with: Option<&'a str>,
    #[serde(rename = "in-reply-to", skip_serializing_if = "Option::is_none")]
    in_reply_to: Option<&'a str>,
}

/// One NDJSON line; field order is part of the format.
#[derive(Serialize)]
struct Record<'a> {
    tick: u64,
    kind: &'static str,
    performative: Option<&'static str>,
    sender: Option<&'a str>,
    receiver: Option<&'a str>,
    #[serde(rename = "conversation-id")]
    conversation_id: &'a str,
    correlation: Option<Correlation<'a>>,
    #[serde(rename = "payload-digest")]
    payload_digest: Option<String>,
    detail: &'a BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub conversation_id: String,
    pub events: Vec<TraceEvent>,
}

impl ExecutionTrace {
    pub fn new(conversation_id: impl Into<String>) -> Self {
        ExecutionTrace {
            conversation_id: conversation_id.into(),
            events: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// The last recorded status, if any status change was logged.
    pub fn final_status(&self) -> Option<SessionStatus> {
        self.of_kind(EventKind::StatusChange)
            .filter_map(|e| e.get("status").and_then(SessionStatus::parse))
            .last()
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let msg = e.message.as_ref();
            let record = Record {
                tick: e.tick,
                kind: e.kind.as_str(),
                performative: msg.map(|m| m.performative.as_str()),
                sender: e.sender.as_ref().map(|a| a.name.as_str()),
                receiver: e.receiver.as_ref().map(|a| a.name.as_str()),
                conversation_id: &self.conversation_id,
                correlation: msg.map(|m| Correlation {
                    reply_with: m.reply_with.as_deref(),
                    in_reply_to: m.in_reply_to.as_deref(),
                }),
                payload_digest: msg.map(|m| m.content.digest()),
                detail: &e.detail,
            };
            out.push_str(&serde_json::to_string(&record).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    /// Checks the log's ordering invariants: ticks never decrease, every
    /// delivery follows its send, and every handling follows its delivery.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut last = 0;
        let mut sent = HashSet::new();
        let mut delivered = HashSet::new();
        for (i, e) in self.events.iter().enumerate() {
            if e.tick < last {
                return Err(format!("event {i}: tick {} after tick {last}", e.tick));
            }
            last = e.tick;
            let Some(m) = &e.message else { continue };
            let id = m.id().to_string();
            match e.kind {
                EventKind::Sent => {
                    if m.sender == m.receiver {
                        return Err(format!("event {i}: message {id} sent to its own sender"));
                    }
                    if let Some(r) = &m.in_reply_to {
                        if !sent.contains(r) {
                            return Err(format!(
                                "event {i}: in-reply-to {r} names no earlier message"
                            ));
                        }
                    }
                    sent.insert(id);
                }
                EventKind::Delivered => {
                    if !sent.contains(&id) {
                        return Err(format!("event {i}: {id} delivered before it was sent"));
                    }
                    delivered.insert(id);
                }
                EventKind::Handled => {
                    if !delivered.contains(&id) {
                        return Err(format!("event {i}: {id} handled before it was delivered"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}
