//! Test support: a seeded protocol generator, an independent reference
//! semantics, closed-form net sizes and trace scanners.

pub mod counts;
pub mod gen;
pub mod oracle;
pub mod scan;

pub use counts::{expected_counts, NetCounts};
pub use gen::{bindings_for, corpus, generate, registry_for, GenConfig};
pub use oracle::{explore, OracleVerdict};
pub use scan::{scan_operators, scan_service_flow};
