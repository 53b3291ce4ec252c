//! Colored Petri nets: the verification model of an interaction protocol.
//!
//! Tokens are colored with variable-binding records. Every transition passes
//! on the binding of its first binding-carrying input token, and guards are
//! evaluated against that binding.

mod analysis;
pub(crate) mod export;
mod reach;
mod translate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::protocol::{Bindings, GuardExpr};

pub use analysis::{
    check_termination, detect_deadlocks, find_dead_transitions, verify, Deadlock, DeadlockEntry,
    Inconclusive, Statistics, Verdict, VerificationReport,
};
pub use export::{export_net, ExportFormat, UnknownFormat};
pub use reach::{build_reachability_graph, Bounds, Edge, ReachabilityGraph, StopReason};
pub use translate::{translate, translate_with_bindings, TranslateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlaceId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransitionId(pub u32);

/// Token color: `0` is the plain unit token, every other value indexes the
/// net's binding table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Color(pub u32);

impl Color {
    pub const UNIT: Color = Color(0);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlaceKind {
    RoleState,
    MessageBuffer,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorDomain {
    Unit,
    Binding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Place {
    pub id: PlaceId,
    pub name: String,
    pub kind: PlaceKind,
    pub owner: Option<String>,
    pub domain: ColorDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Send,
    Receive,
    Rendezvous,
    Fork,
    Join,
    Choice,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Send => "send",
            Phase::Receive => "receive",
            Phase::Rendezvous => "rendezvous",
            Phase::Fork => "fork",
            Phase::Join => "join",
            Phase::Choice => "choice",
        }
    }

    /// Phases that correspond to a message leaving its sender.
    pub fn is_emission(self) -> bool {
        matches!(self, Phase::Send | Phase::Choice | Phase::Rendezvous)
    }
}

/// What a transition stands for in the source protocol.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransitionLabel {
    /// Primitive message name; for fork/join, the complex message name.
    pub message: String,
    pub phase: Phase,
    /// Enclosing complex message, if any.
    pub complex: Option<String>,
    /// For OR expansions: bitmask of the branches in this alternative.
    pub alternative: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub id: TransitionId,
    pub name: String,
    pub label: TransitionLabel,
    pub guard: Option<GuardExpr>,
    pub inputs: Vec<(PlaceId, u32)>,
    pub outputs: Vec<(PlaceId, u32)>,
}

/// A place→transition or transition→place arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arc {
    Input {
        place: PlaceId,
        transition: TransitionId,
        weight: u32,
    },
    Output {
        transition: TransitionId,
        place: PlaceId,
        weight: u32,
    },
}

/// A canonical multiset of colored tokens: entries sorted by place, then
/// color, with zero counts removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Marking {
    entries: Vec<(PlaceId, Color, u32)>,
}

impl Marking {
    pub fn new() -> Self {
        Marking::default()
    }

    pub fn from_tokens(tokens: impl IntoIterator<Item = (PlaceId, Color, u32)>) -> Self {
        let mut m = Marking::new();
        for (p, c, n) in tokens {
            m.add(p, c, n);
        }
        m
    }

    pub fn entries(&self) -> &[(PlaceId, Color, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, place: PlaceId) -> u32 {
        self.entries
            .iter()
            .filter(|(p, _, _)| *p == place)
            .map(|(_, _, n)| n)
            .sum()
    }

    pub fn count_color(&self, place: PlaceId, color: Color) -> u32 {
        match self
            .entries
            .binary_search_by(|(p, c, _)| (*p, *c).cmp(&(place, color)))
        {
            Ok(i) => self.entries[i].2,
            Err(_) => 0,
        }
    }

    /// Colors present on `place` in ascending order.
    pub fn colors_at(&self, place: PlaceId) -> impl Iterator<Item = (Color, u32)> + '_ {
        let start = self.entries.partition_point(|(p, _, _)| *p < place);
        self.entries[start..]
            .iter()
            .take_while(move |(p, _, _)| *p == place)
            .map(|(_, c, n)| (*c, *n))
    }

    pub fn add(&mut self, place: PlaceId, color: Color, n: u32) {
        if n == 0 {
            return;
        }
        match self
            .entries
            .binary_search_by(|(p, c, _)| (*p, *c).cmp(&(place, color)))
        {
            Ok(i) => self.entries[i].2 += n,
            Err(i) => self.entries.insert(i, (place, color, n)),
        }
    }

    /// Removes `n` tokens of `color`; returns false and leaves the marking
    /// unchanged if there are fewer.
    pub fn remove(&mut self, place: PlaceId, color: Color, n: u32) -> bool {
        match self
            .entries
            .binary_search_by(|(p, c, _)| (*p, *c).cmp(&(place, color)))
        {
            Ok(i) if self.entries[i].2 >= n => {
                self.entries[i].2 -= n;
                if self.entries[i].2 == 0 {
                    self.entries.remove(i);
                }
                true
            }
            _ => false,
        }
    }

    /// Token count per place, ignoring colors.
    pub fn place_counts(&self) -> BTreeMap<PlaceId, u32> {
        let mut out = BTreeMap::new();
        for (p, _, n) in &self.entries {
            *out.entry(*p).or_insert(0) += n;
        }
        out
    }

    pub fn max_tokens(&self) -> u32 {
        self.place_totals().map(|(_, n)| n).max().unwrap_or(0)
    }

    /// `(place, tokens)` per marked place in place order, ignoring colors.
    fn place_totals(&self) -> impl Iterator<Item = (PlaceId, u32)> + '_ {
        let mut i = 0;
        std::iter::from_fn(move || {
            let &(p, _, mut n) = self.entries.get(i)?;
            i += 1;
            while let Some(&(_, _, k)) = self.entries.get(i).filter(|e| e.0 == p) {
                n += k;
                i += 1;
            }
            Some((p, n))
        })
    }
}

/// Place-name → token-count rendering of a marking, stable across runs.
pub type MarkingView = BTreeMap<String, u32>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColoredPetriNet {
    pub name: String,
    pub places: Vec<Place>,
    pub transitions: Vec<Transition>,
    pub initial: Marking,
    pub finals: Vec<Marking>,
    /// Binding records referenced by non-unit colors; `Color(k)` is
    /// `bindings[k - 1]`.
    pub bindings: Vec<Bindings>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("arc of transition `{transition}` references missing place {place}")]
    DanglingArc { transition: String, place: u32 },
    #[error("transition `{0}` needs at least one input and one output arc")]
    Isolated(String),
    #[error("arc weights must be at least 1 (transition `{0}`)")]
    ZeroWeight(String),
    #[error("place and transition ids must equal their index")]
    BadIds,
    #[error("marking references a missing place or an unknown color")]
    BadMarking,
}

impl ColoredPetriNet {
    /// An empty net with no places or transitions.
    pub fn empty(name: impl Into<String>) -> Self {
        ColoredPetriNet {
            name: name.into(),
            places: Vec::new(),
            transitions: Vec::new(),
            initial: Marking::new(),
            finals: vec![Marking::new()],
            bindings: Vec::new(),
        }
    }

    pub fn add_place(
        &mut self,
        name: impl Into<String>,
        kind: PlaceKind,
        owner: Option<String>,
        domain: ColorDomain,
    ) -> PlaceId {
        let id = PlaceId(self.places.len() as u32);
        self.places.push(Place {
            id,
            name: name.into(),
            kind,
            owner,
            domain,
        });
        id
    }

    pub fn add_transition(
        &mut self,
        name: impl Into<String>,
        label: TransitionLabel,
        guard: Option<GuardExpr>,
        inputs: Vec<(PlaceId, u32)>,
        outputs: Vec<(PlaceId, u32)>,
    ) -> TransitionId {
        let id = TransitionId(self.transitions.len() as u32);
        self.transitions.push(Transition {
            id,
            name: name.into(),
            label,
            guard,
            inputs,
            outputs,
        });
        id
    }

    /// Registers a binding record and returns its color.
    pub fn intern_binding(&mut self, bindings: Bindings) -> Color {
        if let Some(i) = self.bindings.iter().position(|b| *b == bindings) {
            return Color(i as u32 + 1);
        }
        self.bindings.push(bindings);
        Color(self.bindings.len() as u32)
    }

    pub fn binding(&self, color: Color) -> Option<&Bindings> {
        if color == Color::UNIT {
            None
        } else {
            self.bindings.get(color.0 as usize - 1)
        }
    }

    pub fn place(&self, id: PlaceId) -> &Place {
        &self.places[id.0 as usize]
    }

    pub fn transition(&self, id: TransitionId) -> &Transition {
        &self.transitions[id.0 as usize]
    }

    pub fn place_by_name(&self, name: &str) -> Option<&Place> {
        self.places.iter().find(|p| p.name == name)
    }

    pub fn transition_by_name(&self, name: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.name == name)
    }

    pub fn arcs(&self) -> impl Iterator<Item = Arc> + '_ {
        self.transitions.iter().flat_map(|t| {
            t.inputs
                .iter()
                .map(move |&(place, weight)| Arc::Input {
                    place,
                    transition: t.id,
                    weight,
                })
                .chain(t.outputs.iter().map(move |&(place, weight)| Arc::Output {
                    transition: t.id,
                    place,
                    weight,
                }))
        })
    }

    pub fn count_places(&self, kind: PlaceKind) -> usize {
        self.places.iter().filter(|p| p.kind == kind).count()
    }

    pub fn count_transitions(&self, phase: Phase) -> usize {
        self.transitions
            .iter()
            .filter(|t| t.label.phase == phase)
            .count()
    }

    /// Checks the structural invariants: ids are indices, every arc endpoint
    /// exists, weights are positive, every transition has inputs and outputs,
    /// and markings reference existing places and colors.
    pub fn check(&self) -> Result<(), NetError> {
        if self
            .places
            .iter()
            .enumerate()
            .any(|(i, p)| p.id.0 as usize != i)
            || self
                .transitions
                .iter()
                .enumerate()
                .any(|(i, t)| t.id.0 as usize != i)
        {
            return Err(NetError::BadIds);
        }
        for t in &self.transitions {
            if t.inputs.is_empty() || t.outputs.is_empty() {
                return Err(NetError::Isolated(t.name.clone()));
            }
            for &(p, w) in t.inputs.iter().chain(&t.outputs) {
                if p.0 as usize >= self.places.len() {
                    return Err(NetError::DanglingArc {
                        transition: t.name.clone(),
                        place: p.0,
                    });
                }
                if w == 0 {
                    return Err(NetError::ZeroWeight(t.name.clone()));
                }
            }
        }
        for m in std::iter::once(&self.initial).chain(&self.finals) {
            for (p, c, _) in m.entries() {
                if p.0 as usize >= self.places.len() || c.0 as usize > self.bindings.len() {
                    return Err(NetError::BadMarking);
                }
            }
        }
        Ok(())
    }

    /// Color-blind comparison against the final markings.
    pub fn is_final(&self, marking: &Marking) -> bool {
        self.finals
            .iter()
            .any(|f| f.place_totals().eq(marking.place_totals()))
    }

    /// Every way `t` can fire in `marking`, as `(consumed color per input arc)`
    /// in ascending color order. Guards are evaluated here.
    pub fn enabled_bindings(&self, t: &Transition, marking: &Marking) -> Vec<Vec<Color>> {
        let mut options: Vec<Vec<Color>> = Vec::with_capacity(t.inputs.len());
        for &(place, weight) in &t.inputs {
            let colors: Vec<Color> = marking
                .colors_at(place)
                .filter(|(_, n)| *n >= weight)
                .map(|(c, _)| c)
                .collect();
            if colors.is_empty() {
                return Vec::new();
            }
            options.push(colors);
        }
        // Cartesian product, first input most significant.
        let total: usize = options.iter().map(Vec::len).product();
        let mut combos: Vec<Vec<Color>> = (0..total)
            .map(|mut k| {
                let mut combo = vec![Color::UNIT; options.len()];
                for (slot, colors) in combo.iter_mut().zip(&options).rev() {
                    *slot = colors[k % colors.len()];
                    k /= colors.len();
                }
                combo
            })
            .collect();
        // Combined weight on a repeated input place must fit too.
        let repeated = t
            .inputs
            .iter()
            .enumerate()
            .any(|(i, (p, _))| t.inputs[..i].iter().any(|(q, _)| q == p));
        combos.retain(|combo| {
            if !repeated {
                return true;
            }
            let mut need: BTreeMap<(PlaceId, Color), u32> = BTreeMap::new();
            for (&(p, w), &c) in t.inputs.iter().zip(combo) {
                *need.entry((p, c)).or_insert(0) += w;
            }
            need.iter()
                .all(|(&(p, c), &n)| marking.count_color(p, c) >= n)
        });
        if let Some(guard) = &t.guard {
            let empty = Bindings::new();
            combos.retain(|combo| {
                let env = self
                    .carried_color(t, combo)
                    .and_then(|c| self.binding(c))
                    .unwrap_or(&empty);
                guard.eval(env)
            });
        }
        combos
    }

    /// Color handed on by a firing: the first consumed binding color.
    fn carried_color(&self, t: &Transition, combo: &[Color]) -> Option<Color> {
        t.inputs
            .iter()
            .zip(combo)
            .find(|((p, _), c)| self.place(*p).domain == ColorDomain::Binding && **c != Color::UNIT)
            .map(|(_, c)| *c)
    }

    /// Fires `t` with the given input colors. The caller must pass a combo
    /// from [`Self::enabled_bindings`].
    pub fn fire(&self, t: &Transition, combo: &[Color], marking: &Marking) -> Marking {
        let mut next = marking.clone();
        for (&(p, w), &c) in t.inputs.iter().zip(combo) {
            let ok = next.remove(p, c, w);
            debug_assert!(ok, "fired a disabled binding of {}", t.name);
        }
        let carried = self.carried_color(t, combo).unwrap_or(Color::UNIT);
        for &(p, w) in &t.outputs {
            let color = match self.place(p).domain {
                ColorDomain::Unit => Color::UNIT,
                ColorDomain::Binding => carried,
            };
            next.add(p, color, w);
        }
        next
    }

    /// Fires the first enabled binding of `t`, if any.
    pub fn try_fire(&self, t: TransitionId, marking: &Marking) -> Option<Marking> {
        let t = self.transition(t);
        let combo = self.enabled_bindings(t, marking).into_iter().next()?;
        Some(self.fire(t, &combo, marking))
    }

    pub fn view(&self, marking: &Marking) -> MarkingView {
        marking
            .place_counts()
            .into_iter()
            .map(|(p, n)| (self.place(p).name.clone(), n))
            .collect()
    }
}

impl fmt::Display for TransitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

impl fmt::Display for PlaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}
