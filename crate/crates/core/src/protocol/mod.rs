//! Interaction protocols: the `<id, roles, messages, flow>` model, its text
//! format, and well-formedness checking.
//!
//! A protocol is a plain value. Parse it with [`parse_protocol`], check it
//! with [`validate_well_formedness`] and write it back with
//! [`serialize_protocol`]; the round trip is structurally lossless.

mod guard;
mod lexer;
mod parser;
mod projection;
mod serialize;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use guard::{CmpOp, GuardExpr};
pub use parser::{parse_document, parse_protocol, ParsedDocument, SourcePos};
pub use projection::{project, Hop, RoleChain};
pub use serialize::serialize_protocol;
pub use validate::{
    expected_responses, validate_well_formedness, Finding, Severity, ValidationReport,
    MAX_BRANCHES, MAX_ROLES, OR_BRANCH_WARNING,
};

/// A complete interaction protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionProtocol {
    pub id: String,
    pub roles: Vec<Role>,
    pub vars: Vec<VarDecl>,
    pub messages: Vec<MessageStep>,
    pub flow: BTreeSet<(String, String)>,
    /// Per-role step orderings that replace the document order for that role.
    /// Entries name top-level steps (primitive or complex message names).
    pub orders: BTreeMap<String, Vec<String>>,
}

impl InteractionProtocol {
    pub fn role(&self, name: &str) -> Option<&Role> {
        self.roles.iter().find(|r| r.name == name)
    }

    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn step(&self, name: &str) -> Option<(usize, &MessageStep)> {
        self.messages
            .iter()
            .enumerate()
            .find(|(_, s)| s.name() == name)
    }

    /// Every primitive message, including complex-message branches, in
    /// document order.
    pub fn primitives(&self) -> impl Iterator<Item = &PrimitiveMessage> {
        self.messages.iter().flat_map(|s| match s {
            MessageStep::Primitive(pm) => std::slice::from_ref(pm).iter(),
            MessageStep::Complex(cm) => cm.branches.iter(),
        })
    }

    /// Role pairs that carry at least one message, in the shape of `flow`.
    pub fn message_pairs(&self) -> BTreeSet<(String, String)> {
        self.primitives()
            .map(|pm| (pm.sender.clone(), pm.receiver.clone()))
            .collect()
    }

    /// Declared defaults for the dataspace; variables without a default are
    /// left unbound.
    pub fn initial_bindings(&self) -> Bindings {
        self.vars
            .iter()
            .filter_map(|v| v.default.clone().map(|d| (v.name.clone(), d)))
            .collect()
    }
}

/// Variable name to value.
pub type Bindings = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Role {
    pub name: String,
    pub kind: RoleKind,
    /// Capability keywords used to discover a service playing this role.
    /// Always empty for private processes.
    pub capabilities: BTreeSet<String>,
}

impl Role {
    pub fn process(name: impl Into<String>) -> Self {
        Role {
            name: name.into(),
            kind: RoleKind::PrivateProcess,
            capabilities: BTreeSet::new(),
        }
    }

    pub fn service<I, S>(name: impl Into<String>, capabilities: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Role {
            name: name.into(),
            kind: RoleKind::WebService,
            capabilities: capabilities.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoleKind {
    PrivateProcess,
    WebService,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub ty: VarType,
    pub default: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarType {
    Int,
    Bool,
    Str,
}

impl VarType {
    pub fn keyword(self) -> &'static str {
        match self {
            VarType::Int => "int",
            VarType::Bool => "bool",
            VarType::Str => "str",
        }
    }
}

/// A dataspace value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl Value {
    pub fn ty(&self) -> VarType {
        match self {
            Value::Int(_) => VarType::Int,
            Value::Bool(_) => VarType::Bool,
            Value::Str(_) => VarType::Str,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

/// One entry of the message list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageStep {
    Primitive(PrimitiveMessage),
    Complex(ComplexMessage),
}

impl MessageStep {
    pub fn name(&self) -> &str {
        match self {
            MessageStep::Primitive(pm) => &pm.name,
            MessageStep::Complex(cm) => &cm.name,
        }
    }

    /// The role that emits this step. For a complex message this is the first
    /// branch's sender, which well-formed protocols share across branches.
    pub fn sender(&self) -> Option<&str> {
        match self {
            MessageStep::Primitive(pm) => Some(&pm.sender),
            MessageStep::Complex(cm) => cm.sender(),
        }
    }

    pub fn branches(&self) -> &[PrimitiveMessage] {
        match self {
            MessageStep::Primitive(pm) => std::slice::from_ref(pm),
            MessageStep::Complex(cm) => &cm.branches,
        }
    }

    pub fn operator(&self) -> Option<Operator> {
        match self {
            MessageStep::Primitive(_) => None,
            MessageStep::Complex(cm) => Some(cm.operator),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimitiveMessage {
    pub name: String,
    pub sender: String,
    pub receiver: String,
    pub act: CommunicativeAct,
    pub option: MessageOption,
}

impl PrimitiveMessage {
    pub fn new(
        name: impl Into<String>,
        sender: impl Into<String>,
        receiver: impl Into<String>,
        act: CommunicativeAct,
    ) -> Self {
        PrimitiveMessage {
            name: name.into(),
            sender: sender.into(),
            receiver: receiver.into(),
            act,
            option: MessageOption::default(),
        }
    }

    pub fn sync(mut self) -> Self {
        self.option.mode = Mode::Synchronous;
        self
    }

    pub fn guard(mut self, guard: GuardExpr) -> Self {
        self.option.guard = Some(guard);
        self
    }

    pub fn deadline(mut self, ticks: u64) -> Self {
        self.option.deadline = Some(ticks);
        self
    }

    pub fn is_sync(&self) -> bool {
        self.option.mode == Mode::Synchronous
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MessageOption {
    pub mode: Mode,
    pub guard: Option<GuardExpr>,
    /// Scheduler ticks allowed between sending and handling.
    pub deadline: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Mode {
    Synchronous,
    #[default]
    Asynchronous,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexMessage {
    pub name: String,
    pub operator: Operator,
    pub branches: Vec<PrimitiveMessage>,
}

impl ComplexMessage {
    pub fn sender(&self) -> Option<&str> {
        self.branches.first().map(|b| b.sender.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "XOR")]
    Xor,
    #[serde(rename = "OR")]
    Or,
    #[serde(rename = "AND")]
    And,
}

impl Operator {
    pub fn keyword(self) -> &'static str {
        match self {
            Operator::Xor => "XOR",
            Operator::Or => "OR",
            Operator::And => "AND",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// The closed set of FIPA communicative acts a message may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommunicativeAct {
    Cfp,
    Inform,
    Propose,
    AcceptProposal,
    RejectProposal,
    Request,
    Refuse,
    Agree,
    Failure,
    Cancel,
    NotUnderstood,
}

impl CommunicativeAct {
    pub const ALL: [CommunicativeAct; 11] = [
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
        CommunicativeAct::NotUnderstood,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CommunicativeAct::Cfp => "cfp",
            CommunicativeAct::Inform => "inform",
            CommunicativeAct::Propose => "propose",
            CommunicativeAct::AcceptProposal => "accept-proposal",
            CommunicativeAct::RejectProposal => "reject-proposal",
            CommunicativeAct::Request => "request",
            CommunicativeAct::Refuse => "refuse",
            CommunicativeAct::Agree => "agree",
            CommunicativeAct::Failure => "failure",
            CommunicativeAct::Cancel => "cancel",
            CommunicativeAct::NotUnderstood => "not-understood",
        }
    }

    /// Acts that commit the sender to the task.
    pub fn is_affirmative(self) -> bool {
        matches!(
            self,
            CommunicativeAct::Propose
                | CommunicativeAct::AcceptProposal
                | CommunicativeAct::Agree
                | CommunicativeAct::Inform
        )
    }
}

impl fmt::Display for CommunicativeAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown communicative act `{0}`")]
pub struct UnknownAct(pub String);

impl FromStr for CommunicativeAct {
    type Err = UnknownAct;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CommunicativeAct::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| UnknownAct(s.to_string()))
    }
}

/// Errors from [`parse_protocol`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("{line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    /// The document parsed but violates a well-formedness rule; the first
    /// error finding is reported with the position of the offending item.
    #[error("{line}:{column}: {message}")]
    Invalid {
        line: usize,
        column: usize,
        code: String,
        message: String,
        report: ValidationReport,
    },
}

impl ProtocolError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            ProtocolError::Syntax { line, column, .. }
            | ProtocolError::Invalid { line, column, .. } => (*line, *column),
        }
    }
}
