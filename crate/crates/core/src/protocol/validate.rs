use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ComplexMessage, InteractionProtocol, MessageStep, Operator, RoleKind};

/// Largest number of branches a complex message may have.
pub const MAX_BRANCHES: usize = 16;
/// Largest number of roles a protocol may declare.
pub const MAX_ROLES: usize = 32;
/// OR messages wider than this expand to many alternatives; warn about them.
pub const OR_BRANCH_WARNING: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: String,
    /// Name of the role, message, variable or flow pair at fault.
    pub location: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    pub fn has_code(&self, code: &str) -> bool {
        self.findings.iter().any(|f| f.code == code)
    }

    pub fn error_codes(&self) -> BTreeSet<&str> {
        self.errors().map(|f| f.code.as_str()).collect()
    }
}

/// `(min, max)` number of branch responses a complex message produces.
pub fn expected_responses(cm: &ComplexMessage) -> (usize, usize) {
    let m = cm.branches.len();
    match cm.operator {
        Operator::And => (m, m),
        Operator::Xor => (1, 1),
        Operator::Or => (1, m),
    }
}

struct Findings(Vec<Finding>);

impl Findings {
    fn error(&mut self, code: &str, location: impl Into<String>, detail: impl Into<String>) {
        self.push(Severity::Error, code, location, detail)
    }

    fn warn(&mut self, code: &str, location: impl Into<String>, detail: impl Into<String>) {
        self.push(Severity::Warning, code, location, detail)
    }

    fn push(
        &mut self,
        severity: Severity,
        code: &str,
        location: impl Into<String>,
        detail: impl Into<String>,
    ) {
        self.0.push(Finding {
            severity,
            code: code.to_string(),
            location: location.into(),
            detail: detail.into(),
        })
    }
}

/// Checks every structural rule of the protocol model. Violations are
/// findings, never failures; `ok` is true iff there is no error finding.
pub fn validate_well_formedness(ip: &InteractionProtocol) -> ValidationReport {
    let mut f = Findings(Vec::new());

    if ip.id.trim().is_empty() {
        f.error("EMPTY_ID", "", "protocol identifier must be non-empty");
    }

    // Roles
    let n = ip.roles.len();
    if n < 2 {
        f.error(
            "ROLES_TOO_FEW",
            &ip.id,
            format!("roles.size ≥ 2 violated: {n} role(s) declared"),
        );
    }
    if n > MAX_ROLES {
        f.error(
            "ROLES_TOO_MANY",
            &ip.id,
            format!("{n} roles exceed the limit of {MAX_ROLES}"),
        );
    }
    let mut role_names = BTreeSet::new();
    for role in &ip.roles {
        if !role_names.insert(role.name.as_str()) {
            f.error(
                "DUPLICATE_ROLE",
                &role.name,
                format!("role `{}` declared more than once", role.name),
            );
        }
        if role.kind == RoleKind::PrivateProcess && !role.capabilities.is_empty() {
            f.error(
                "PROCESS_CAPABILITIES",
                &role.name,
                "only service roles carry capability keywords",
            );
        }
    }

    // Variables
    let mut var_names = BTreeSet::new();
    for v in &ip.vars {
        if !var_names.insert(v.name.as_str()) {
            f.error(
                "DUPLICATE_VAR",
                &v.name,
                format!("variable `{}` declared more than once", v.name),
            );
        }
        if let Some(d) = &v.default {
            if d.ty() != v.ty {
                f.error(
                    "VAR_DEFAULT_TYPE",
                    &v.name,
                    format!("default for `{}` is not {}", v.name, v.ty.keyword()),
                );
            }
        }
    }

    // Messages
    if ip.messages.is_empty() {
        f.warn("NO_MESSAGES", &ip.id, "protocol declares no messages");
    }
    let mut message_names = BTreeSet::new();
    let mut check_name = |f: &mut Findings, name: &str| {
        if name.trim().is_empty() {
            f.error("EMPTY_NAME", name, "message names must be non-empty");
        } else if !message_names.insert(name.to_string()) {
            f.error(
                "DUPLICATE_MESSAGE",
                name,
                format!("message name `{name}` is used more than once"),
            );
        }
    };
    for step in &ip.messages {
        check_name(&mut f, step.name());
        if let MessageStep::Complex(cm) = step {
            let m = cm.branches.len();
            if m < 2 {
                f.error(
                    "CM_TOO_FEW_BRANCHES",
                    &cm.name,
                    format!("complex message needs m ≥ 2 branches, has {m}"),
                );
            }
            if m > MAX_BRANCHES {
                f.error(
                    "CM_TOO_MANY_BRANCHES",
                    &cm.name,
                    format!("{m} branches exceed the limit of {MAX_BRANCHES}"),
                );
            } else if cm.operator == Operator::Or && m > OR_BRANCH_WARNING {
                f.warn(
                    "CM_OR_WIDE",
                    &cm.name,
                    format!(
                        "OR over {m} branches expands to {} alternatives",
                        (1u64 << m) - 1
                    ),
                );
            }
            if let Some(first) = cm.branches.first() {
                if cm.branches.iter().any(|b| b.sender != first.sender) {
                    f.error(
                        "CM_MIXED_SENDERS",
                        &cm.name,
                        "all branches of a complex message must share one sender",
                    );
                }
            }
            if matches!(cm.operator, Operator::Xor | Operator::Or) && m >= 2 {
                let receivers: BTreeSet<&str> =
                    cm.branches.iter().map(|b| b.receiver.as_str()).collect();
                if receivers.len() > 1 {
                    f.warn(
                        "CM_RECEIVER_MAY_STARVE",
                        &cm.name,
                        format!(
                            "{} alternatives address different receivers; a receiver whose branch is not taken never advances",
                            cm.operator
                        ),
                    );
                }
            }
            for b in &cm.branches {
                check_name(&mut f, &b.name);
            }
        }
        for pm in step.branches() {
            for who in [&pm.sender, &pm.receiver] {
                if !role_names.contains(who.as_str()) {
                    f.error(
                        "UNKNOWN_ROLE",
                        &pm.name,
                        format!("`{who}` is not a declared role"),
                    );
                }
            }
            if pm.sender == pm.receiver {
                f.error(
                    "SELF_MESSAGE",
                    &pm.name,
                    format!("sender and receiver are both `{}`", pm.sender),
                );
            }
            if pm.option.deadline == Some(0) {
                f.error(
                    "DEADLINE_ZERO",
                    &pm.name,
                    "deadline must be at least one tick",
                );
            }
            if let Some(g) = &pm.option.guard {
                for e in g.type_errors(&ip.vars) {
                    f.error("GUARD_INVALID", &pm.name, e);
                }
            }
        }
    }

    // Flow relation: must be exactly the role pairs that carry messages.
    let used = ip.message_pairs();
    for (a, b) in &ip.flow {
        let loc = format!("({a}, {b})");
        if a == b {
            f.error(
                "FLOW_SELF_PAIR",
                &loc,
                format!("flow pair relates `{a}` to itself"),
            );
        }
        for r in [a, b] {
            if !role_names.contains(r.as_str()) {
                f.error(
                    "FLOW_UNKNOWN_ROLE",
                    &loc,
                    format!("`{r}` is not a declared role"),
                );
            }
        }
        if a != b && !used.contains(&(a.clone(), b.clone())) {
            f.warn(
                "FLOW_UNUSED_PAIR",
                &loc,
                "no message travels along this pair",
            );
        }
    }
    for (a, b) in &used {
        if a != b && !ip.flow.contains(&(a.clone(), b.clone())) {
            let carrier = ip
                .primitives()
                .find(|pm| &pm.sender == a && &pm.receiver == b)
                .map(|pm| pm.name.clone())
                .unwrap_or_default();
            f.error(
                "FLOW_MISSING_PAIR",
                carrier,
                format!("messages travel {a} → {b} but ({a}, {b}) is not in the flow"),
            );
        }
    }

    // Per-role order overrides must permute the steps the role takes part in.
    let participation = participation(ip);
    for (role, steps) in &ip.orders {
        let loc = format!("order {role}");
        if !role_names.contains(role.as_str()) {
            f.error(
                "ORDER_UNKNOWN_ROLE",
                &loc,
                format!("`{role}` is not a declared role"),
            );
            continue;
        }
        let expected = participation
            .get(role.as_str())
            .cloned()
            .unwrap_or_default();
        let mut given: Vec<&str> = steps.iter().map(String::as_str).collect();
        given.sort_unstable();
        let mut want: Vec<&str> = expected.clone();
        want.sort_unstable();
        if given != want {
            f.error(
                "ORDER_MISMATCH",
                &loc,
                format!(
                    "order for `{role}` must list each of [{}] exactly once",
                    expected.join(", ")
                ),
            );
        }
    }

    let findings = f.0;
    let ok = findings.iter().all(|x| x.severity != Severity::Error);
    ValidationReport { ok, findings }
}

/// Top-level steps each role sends or receives in, in document order.
fn participation(ip: &InteractionProtocol) -> BTreeMap<&str, Vec<&str>> {
    let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for step in &ip.messages {
        let mut involved = BTreeSet::new();
        for pm in step.branches() {
            involved.insert(pm.sender.as_str());
            involved.insert(pm.receiver.as_str());
        }
        for r in involved {
            out.entry(r).or_default().push(step.name());
        }
    }
    out
}
