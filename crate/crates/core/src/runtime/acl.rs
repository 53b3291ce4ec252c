//! FIPA-ACL style message envelope.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::net::export::xml_escape;
use crate::protocol::{Bindings, CommunicativeAct};

pub const CONTENT_LANGUAGE: &str = "xml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Integrator,
    Enterprise,
    /// Proxy for a discovered service playing a service role.
    Service,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentId {
    pub name: String,
    pub kind: AgentKind,
}

impl AgentId {
    pub fn integrator(name: impl Into<String>) -> Self {
        AgentId {
            name: name.into(),
            kind: AgentKind::Integrator,
        }
    }

    pub fn enterprise(name: impl Into<String>) -> Self {
        AgentId {
            name: name.into(),
            kind: AgentKind::Enterprise,
        }
    }

    pub fn service(name: impl Into<String>) -> Self {
        AgentId {
            name: name.into(),
            kind: AgentKind::Service,
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Message payload: variable bindings plus a free-text body.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Content {
    pub bindings: Bindings,
    pub body: String,
}

impl Content {
    /// Wire form: `<content>` with one element per binding and a `body`
    /// element when the body is non-empty.
    pub fn to_xml(&self) -> String {
        let mut out = String::from("<content>");
        for (name, value) in &self.bindings {
            let text = match value {
                crate::protocol::Value::Str(s) => s.clone(),
                other => other.to_string(),
            };
            out.push_str(&format!(
                "<binding name=\"{}\" type=\"{}\">{}</binding>",
                xml_escape(name),
                value.ty().keyword(),
                xml_escape(&text)
            ));
        }
        if !self.body.is_empty() {
            out.push_str(&format!("<body>{}</body>", xml_escape(&self.body)));
        }
        out.push_str("</content>");
        out
    }

    /// Hex SHA-256 of the wire form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_xml().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AclMessage {
    pub performative: CommunicativeAct,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub content: Content,
    pub conversation_id: String,
    pub reply_with: Option<String>,
    pub in_reply_to: Option<String>,
    pub content_language: &'static str,
    /// Tick the message was sent at.
    pub timestamp: u64,
    /// Protocol message this envelope instantiates; `None` for control
    /// traffic such as not-understood and cancel.
    pub step: Option<String>,
    /// For OR branches: the bitmask of branches the sender chose.
    pub selection: Option<u32>,
}

impl AclMessage {
    pub fn id(&self) -> &str {
        self.reply_with.as_deref().unwrap_or("")
    }
}
