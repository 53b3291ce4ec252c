//! Agent execution of a protocol: ACL messages, per-role state machines, the
//! seeded scheduler, the shared dataspace, sessions and their traces, and
//! replay of traces on the protocol's net.

pub(crate) mod acl;
mod agents;
mod conformance;
mod dataspace;
mod scheduler;
mod session;
mod trace;

pub use acl::{AclMessage, AgentId, AgentKind, Content, CONTENT_LANGUAGE};
pub use agents::{
    handle_message, AgentState, Handling, InteractionManagerState, Outcome, PendingDeadline,
    ProtocolView, ResponseLedger, Skill, SkillTable, Task,
};
pub use conformance::{trace_conformance, Conformance, Divergence};
pub use dataspace::{Dataspace, DataspaceError};
pub use scheduler::{Pending, Scheduler};
pub use session::{create_session, Session, SessionError, SessionOptions};
pub use trace::{EventKind, ExecutionTrace, SessionStatus, TraceEvent};
