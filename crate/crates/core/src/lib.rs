//! Interaction-protocol engine.
//!
//! Protocols are parsed and validated by [`protocol`], translated to colored
//! Petri nets and model-checked by [`net`], executed by Integrator and
//! Enterprise agents in [`runtime`], and bound to discovered services through
//! [`services`].

pub mod net;
pub mod protocol;
pub mod runtime;
pub mod services;

pub use net::{translate, verify, Bounds, ColoredPetriNet, Verdict, VerificationReport};
pub use protocol::{
    parse_protocol, serialize_protocol, validate_well_formedness, CommunicativeAct,
    InteractionProtocol, MessageStep, Operator, ProtocolError, ValidationReport,
};
pub use runtime::{
    create_session, trace_conformance, AclMessage, AgentId, ExecutionTrace, Session,
    SessionOptions, SessionStatus, Task,
};
pub use services::{Registry, SelectionPolicy, ServiceDescription};
