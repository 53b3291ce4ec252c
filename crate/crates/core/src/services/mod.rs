//! Mock service fabric: a file-backed registry of service descriptions with
//! stub endpoints, and the discover → probe → select → invoke-plus-cancel
//! choreography the Integrator runs for service roles.
//!
//! Registry file format (TOML):
//!
//! ```toml
//! [[service]]
//! id = "s1"
//! name = "Ground shipping"
//! keywords = ["shipping"]
//!
//! [service.attributes]
//! cost = 5
//!
//! [service.behavior."*"]          # fallback for any request kind
//! response = "shipped"
//! latency = 3
//! failure = 0.0
//!
//! [service.behavior.probe]        # used when attributes are fetched
//! failure = 0.25
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::runtime::{Pending, Scheduler};

pub type Attributes = BTreeMap<String, AttrValue>;

/// A registry attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl AttrValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Int(i) => Some(*i as f64),
            AttrValue::Float(f) => Some(*f),
            _ => None,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Bool(b) => write!(f, "{b}"),
            AttrValue::Int(i) => write!(f, "{i}"),
            AttrValue::Float(x) => write!(f, "{x}"),
            AttrValue::Str(s) => f.write_str(s),
        }
    }
}

/// How a stub answers one kind of request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Behavior {
    pub response: String,
    pub latency: u64,
    /// Probability in `[0, 1]` that a call fails, drawn from the session RNG.
    pub failure: f64,
}

impl Default for Behavior {
    fn default() -> Self {
        Behavior {
            response: String::new(),
            latency: 1,
            failure: 0.0,
        }
    }
}

/// In-process stand-in for a service endpoint: request kind → behavior.
/// The `*` entry answers kinds without their own entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServiceStub {
    pub behavior: BTreeMap<String, Behavior>,
}

impl ServiceStub {
    pub fn behavior(&self, kind: &str) -> Behavior {
        self.behavior
            .get(kind)
            .or_else(|| self.behavior.get("*"))
            .cloned()
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceDescription {
    pub id: String,
    pub name: String,
    pub keywords: BTreeSet<String>,
    #[serde(default)]
    pub attributes: Attributes,
    #[serde(default, rename = "behavior")]
    pub stub: ServiceStub,
}

impl ServiceDescription {
    pub fn new<I, S>(id: impl Into<String>, keywords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let id = id.into();
        ServiceDescription {
            name: id.clone(),
            id,
            keywords: keywords.into_iter().map(Into::into).collect(),
            attributes: Attributes::new(),
            stub: ServiceStub::default(),
        }
    }

    pub fn attribute(mut self, key: impl Into<String>, value: AttrValue) -> Self {
        self.attributes.insert(key.into(), value);
        self
    }

    pub fn behavior(mut self, kind: impl Into<String>, behavior: Behavior) -> Self {
        self.stub.behavior.insert(kind.into(), behavior);
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("service `{0}` is already registered")]
    DuplicateId(String),
    #[error("service `{0}` has no capability keywords")]
    NoKeywords(String),
    #[error("service `{id}` behavior `{kind}` has failure probability {p} outside [0, 1]")]
    BadFailure { id: String, kind: String, p: f64 },
    #[error("unknown service `{0}`")]
    UnknownId(String),
    #[error("NO_CANDIDATES: no service to select from")]
    NoCandidates,
    #[error("no candidate has a numeric `cost` attribute")]
    NoCost,
    #[error("chosen service `{0}` also appears among the services to cancel")]
    ChosenInOthers(String),
    #[error("registry has no backing file")]
    NoBackingFile,
    #[error("registry file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("registry file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    #[serde(default)]
    service: Vec<ServiceDescription>,
}

/// Service descriptions keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    services: BTreeMap<String, ServiceDescription>,
    path: Option<PathBuf>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn with_services(
        services: impl IntoIterator<Item = ServiceDescription>,
    ) -> Result<Self, ServiceError> {
        let mut r = Registry::new();
        for s in services {
            r.register(s)?;
        }
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ServiceError::Io {
            path: path.into(),
            source,
        })?;
        let file: RegistryFile = toml::from_str(&text).map_err(|e| ServiceError::Format {
            path: path.into(),
            message: e.to_string(),
        })?;
        let mut r = Registry::with_services(file.service)?;
        r.path = Some(path.to_path_buf());
        Ok(r)
    }

    pub fn to_toml(&self) -> String {
        let file = RegistryFile {
            service: self.services.values().cloned().collect(),
        };
        toml::to_string(&file).expect("registry values are always representable")
    }

    /// Writes to the backing file.
    pub fn save(&self) -> Result<(), ServiceError> {
        let path = self.path.as_ref().ok_or(ServiceError::NoBackingFile)?;
        self.save_as(path.clone())
    }

    pub fn save_as(&self, path: impl AsRef<Path>) -> Result<(), ServiceError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|source| ServiceError::Io {
            path: path.into(),
            source,
        })
    }

    pub fn set_path(&mut self, path: impl Into<PathBuf>) {
        self.path = Some(path.into());
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn register(&mut self, desc: ServiceDescription) -> Result<String, ServiceError> {
        if self.services.contains_key(&desc.id) {
            return Err(ServiceError::DuplicateId(desc.id));
        }
        if desc.keywords.is_empty() {
            return Err(ServiceError::NoKeywords(desc.id));
        }
        for (kind, b) in &desc.stub.behavior {
            if !(0.0..=1.0).contains(&b.failure) {
                return Err(ServiceError::BadFailure {
                    id: desc.id.clone(),
                    kind: kind.clone(),
                    p: b.failure,
                });
            }
        }
        let id = desc.id.clone();
        self.services.insert(id.clone(), desc);
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Option<&ServiceDescription> {
        self.services.get(id)
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ServiceDescription> {
        self.services.values()
    }
}

/// Descriptions whose keywords include every criterion, ordered by id.
pub fn discover<'r>(
    registry: &'r Registry,
    criteria: &BTreeSet<String>,
) -> Vec<&'r ServiceDescription> {
    registry
        .iter()
        .filter(|d| criteria.is_subset(&d.keywords))
        .collect()
}

/// Result of probing one service for its attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub attributes: Attributes,
    pub available: bool,
}

/// Probes each service in order. A probe fails with the stub's `probe`
/// failure probability, drawn from `rng`; failed services are marked
/// unavailable but keep their registered attributes.
pub fn fetch_attributes<R: Rng>(
    registry: &Registry,
    ids: &[&str],
    rng: &mut R,
) -> Result<BTreeMap<String, Probe>, ServiceError> {
    let mut out = BTreeMap::new();
    for &id in ids {
        let desc = registry
            .get(id)
            .ok_or_else(|| ServiceError::UnknownId(id.to_string()))?;
        let failed = draw_failure(rng, desc.stub.behavior("probe").failure);
        out.insert(
            id.to_string(),
            Probe {
                attributes: desc.attributes.clone(),
                available: !failed,
            },
        );
    }
    Ok(out)
}

fn draw_failure<R: Rng>(rng: &mut R, p: f64) -> bool {
    rng.gen::<f64>() < p
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPolicy {
    #[default]
    MinCost,
    First,
}

impl SelectionPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionPolicy::MinCost => "min-cost",
            SelectionPolicy::First => "first",
        }
    }
}

impl FromStr for SelectionPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min-cost" => Ok(SelectionPolicy::MinCost),
            "first" => Ok(SelectionPolicy::First),
            other => Err(format!("unknown selection policy `{other}`")),
        }
    }
}

/// Candidates in the order the policy prefers them. Under MinCost,
/// candidates without a numeric `cost` are left out.
pub fn preference_order(
    candidates: &BTreeMap<String, Attributes>,
    policy: SelectionPolicy,
) -> Vec<String> {
    match policy {
        SelectionPolicy::First => candidates.keys().cloned().collect(),
        SelectionPolicy::MinCost => {
            let mut costed: Vec<(f64, &String)> = candidates
                .iter()
                .filter_map(|(id, attrs)| {
                    attrs
                        .get("cost")
                        .and_then(AttrValue::as_f64)
                        .map(|c| (c, id))
                })
                .collect();
            costed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
            costed.into_iter().map(|(_, id)| id.clone()).collect()
        }
    }
}

pub fn select_service(
    candidates: &BTreeMap<String, Attributes>,
    policy: SelectionPolicy,
) -> Result<String, ServiceError> {
    if candidates.is_empty() {
        return Err(ServiceError::NoCandidates);
    }
    preference_order(candidates, policy)
        .into_iter()
        .next()
        .ok_or(ServiceError::NoCost)
}

/// What came of invoking one service.
#[derive(Debug, Clone, PartialEq)]
pub struct InvocationOutcome {
    pub chosen: String,
    /// The stub's response payload, or the failure description.
    pub response: Result<String, String>,
    /// Services told to stand down: exactly the other candidates.
    pub cancels: Vec<String>,
    pub invoked_at: u64,
    pub ready_at: u64,
    pub request_kind: String,
}

/// Invokes `chosen` and cancels `others` at the scheduler's current tick.
/// The outcome is decided now (seeded) and enqueued for delivery once the
/// stub's latency has passed, never earlier than the next tick.
pub fn invoke_parallel(
    registry: &Registry,
    chosen: &str,
    others: &[String],
    request_kind: &str,
    payload: &str,
    scheduler: &mut Scheduler,
) -> Result<InvocationOutcome, ServiceError> {
    if others.iter().any(|o| o == chosen) {
        return Err(ServiceError::ChosenInOthers(chosen.to_string()));
    }
    let desc = registry
        .get(chosen)
        .ok_or_else(|| ServiceError::UnknownId(chosen.to_string()))?;
    if let Some(missing) = others.iter().find(|o| registry.get(o).is_none()) {
        return Err(ServiceError::UnknownId(missing.clone()));
    }
    let behavior = desc.stub.behavior(request_kind);
    let failed = draw_failure(scheduler.rng(), behavior.failure);
    let now = scheduler.now();
    let response = if failed {
        Err(format!("{chosen} failed to serve {request_kind}"))
    } else if behavior.response.is_empty() {
        Ok(payload.to_string())
    } else {
        Ok(behavior.response.clone())
    };
    let mut cancels = others.to_vec();
    cancels.sort();
    let outcome = InvocationOutcome {
        chosen: chosen.to_string(),
        response,
        cancels,
        invoked_at: now,
        ready_at: (now + behavior.latency).max(now + 1),
        request_kind: request_kind.to_string(),
    };
    scheduler.schedule(outcome.ready_at, Pending::ServiceReply(outcome.clone()));
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reg() -> Registry {
        Registry::with_services([
            ServiceDescription::new("s1", ["shipping"]).attribute("cost", AttrValue::Int(5)),
            ServiceDescription::new("s2", ["billing"]).attribute("cost", AttrValue::Int(3)),
        ])
        .unwrap()
    }

    #[test]
    fn register_and_duplicates() {
        let mut r = reg();
        assert!(r.get("s1").is_some());
        assert!(matches!(
            r.register(ServiceDescription::new("s1", ["x"])),
            Err(ServiceError::DuplicateId(_))
        ));
        assert!(matches!(
            r.register(ServiceDescription::new("s9", Vec::<String>::new())),
            Err(ServiceError::NoKeywords(_))
        ));
    }

    #[test]
    fn discovery_is_superset_match() {
        let r = reg();
        let ids = |c: &[&str]| -> Vec<String> {
            let c: BTreeSet<String> = c.iter().map(|s| s.to_string()).collect();
            discover(&r, &c).into_iter().map(|d| d.id.clone()).collect()
        };
        assert_eq!(ids(&["shipping"]), ["s1"]);
        assert_eq!(ids(&[]), ["s1", "s2"]);
        assert!(ids(&["shipping", "express"]).is_empty());
    }

    #[test]
    fn selection_rules() {
        let cost = |c: i64| -> Attributes {
            [("cost".to_string(), AttrValue::Int(c))]
                .into_iter()
                .collect()
        };
        let c: BTreeMap<String, Attributes> = [("s1".into(), cost(5)), ("s2".into(), cost(3))]
            .into_iter()
            .collect();
        assert_eq!(select_service(&c, SelectionPolicy::MinCost).unwrap(), "s2");
        assert_eq!(select_service(&c, SelectionPolicy::First).unwrap(), "s1");
        let tie: BTreeMap<String, Attributes> = [("s1".into(), cost(3)), ("s2".into(), cost(3))]
            .into_iter()
            .collect();
        assert_eq!(
            select_service(&tie, SelectionPolicy::MinCost).unwrap(),
            "s1"
        );
        assert!(matches!(
            select_service(&BTreeMap::new(), SelectionPolicy::First),
            Err(ServiceError::NoCandidates)
        ));
        let bare: BTreeMap<String, Attributes> =
            [("s1".into(), Attributes::new()), ("s2".into(), cost(7))]
                .into_iter()
                .collect();
        assert_eq!(
            select_service(&bare, SelectionPolicy::MinCost).unwrap(),
            "s2"
        );
        let none: BTreeMap<String, Attributes> =
            [("s1".into(), Attributes::new())].into_iter().collect();
        assert!(matches!(
            select_service(&none, SelectionPolicy::MinCost),
            Err(ServiceError::NoCost)
        ));
    }

    #[test]
    fn probes() {
        let mut r = reg();
        r.register(ServiceDescription::new("s3", ["shipping"]).behavior(
            "probe",
            Behavior {
                failure: 1.0,
                ..Behavior::default()
            },
        ))
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = fetch_attributes(&r, &["s1", "s3"], &mut rng).unwrap();
        assert_eq!(p["s1"].attributes["cost"], AttrValue::Int(5));
        assert!(p["s1"].available);
        assert!(!p["s3"].available);
        assert!(fetch_attributes(&r, &[], &mut rng).unwrap().is_empty());
        assert!(matches!(
            fetch_attributes(&r, &["zz"], &mut rng),
            Err(ServiceError::UnknownId(_))
        ));
    }

    #[test]
    fn toml_round_trip() {
        let r = Registry::with_services([ServiceDescription::new("s1", ["shipping", "express"])
            .attribute("cost", AttrValue::Float(2.5))
            .attribute("tier", AttrValue::Str("gold".into()))
            .behavior(
                "*",
                Behavior {
                    response: "ok".into(),
                    latency: 3,
                    failure: 0.1,
                },
            )])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.toml");
        r.save_as(&path).unwrap();
        let back = Registry::load(&path).unwrap();
        assert_eq!(
            back.iter().collect::<Vec<_>>(),
            r.iter().collect::<Vec<_>>()
        );
    }

    #[test]
    fn invocation_latency_and_cancels() {
        let r = Registry::with_services([
            ServiceDescription::new("s1", ["x"]),
            ServiceDescription::new("s2", ["x"]).behavior(
                "*",
                Behavior {
                    response: "done".into(),
                    latency: 3,
                    failure: 0.0,
                },
            ),
            ServiceDescription::new("s3", ["x"]),
        ])
        .unwrap();
        let mut sched = Scheduler::new(7);
        sched.advance();
        let out = invoke_parallel(
            &r,
            "s2",
            &["s3".into(), "s1".into()],
            "request",
            "p",
            &mut sched,
        )
        .unwrap();
        assert_eq!(out.cancels, ["s1", "s3"]);
        assert_eq!(out.response, Ok("done".to_string()));
        assert_eq!(out.ready_at, out.invoked_at + 3);
        assert!(matches!(
            invoke_parallel(&r, "s2", &["s2".into()], "request", "p", &mut sched),
            Err(ServiceError::ChosenInOthers(_))
        ));
    }
}
