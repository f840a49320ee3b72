//! GSPN definition and token-game semantics.
//!
//! A [`NetDef`] is an unchecked, name-based description that can be built
//! incrementally (by the model builders or the model-file parser). Once it
//! passes [`validate_net`] it is frozen into an immutable [`Net`], whose
//! places, transitions and arcs are addressed by dense ids.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::metric::{parse_metric, BoundMetric, MetricExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlaceId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransitionId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub id: PlaceId,
    pub name: String,
    pub initial_tokens: u32,
}

/// Firing-delay distribution of a timed transition, in hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Exponential {
        mean: f64,
    },
    /// Fixed delay; only the simulator executes these.
    Deterministic {
        delay: f64,
    },
}

impl Distribution {
    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Exponential { mean } => mean,
            Distribution::Deterministic { delay } => delay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitionKind {
    Immediate { priority: u32, weight: f64 },
    Timed(Distribution),
}

impl TransitionKind {
    pub fn is_immediate(&self) -> bool {
        matches!(self, TransitionKind::Immediate { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub id: TransitionId,
    pub name: String,
    pub kind: TransitionKind,
    pub guard: Option<MetricExpr>,
    /// Name of the parameter the delay was taken from, if any. Only used to
    /// keep serialized models editable.
    pub param: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArcKind {
    Input,
    Output,
    Inhibitor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub kind: ArcKind,
    pub place: PlaceId,
    pub transition: TransitionId,
    pub multiplicity: u32,
}

/// Token counts indexed by place id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Marking(Vec<u32>);

impl Marking {
    pub fn new(tokens: Vec<u32>) -> Self {
        Marking(tokens)
    }

    pub fn tokens(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, p: PlaceId) -> u32 {
        self.0[p.0]
    }

    pub fn set(&mut self, p: PlaceId, v: u32) {
        self.0[p.0] = v;
    }
}

impl From<Vec<u32>> for Marking {
    fn from(v: Vec<u32>) -> Self {
        Marking(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("invalid net:\n{0}")]
    Invalid(ValidationReport),
    #[error("marking has {got} entries, net has {expected} places")]
    MarkingLength { expected: usize, got: usize },
    #[error("transition {0} is not enabled")]
    NotEnabled(String),
    #[error("unknown transition {0}")]
    UnknownTransition(String),
}

// ---------------------------------------------------------------------------
// Unchecked definition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceDef {
    pub name: String,
    pub initial_tokens: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDef {
    pub name: String,
    pub kind: TransitionKind,
    /// Guard source text in metric syntax.
    pub guard: Option<String>,
    pub param: Option<String>,
}

impl TransitionDef {
    pub fn guard(&mut self, text: impl Into<String>) -> &mut Self {
        self.guard = Some(text.into());
        self
    }

    pub fn param(&mut self, name: impl Into<String>) -> &mut Self {
        self.param = Some(name.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArcDef {
    pub kind: ArcKind,
    pub place: String,
    pub transition: String,
    pub multiplicity: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetDef {
    pub places: Vec<PlaceDef>,
    pub transitions: Vec<TransitionDef>,
    pub arcs: Vec<ArcDef>,
}

impl NetDef {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn place(&mut self, name: impl Into<String>, initial_tokens: u32) -> &mut Self {
        self.places.push(PlaceDef {
            name: name.into(),
            initial_tokens,
        });
        self
    }

    pub fn transition(&mut self, name: impl Into<String>, kind: TransitionKind) -> &mut TransitionDef {
        self.transitions.push(TransitionDef {
            name: name.into(),
            kind,
            guard: None,
            param: None,
        });
        self.transitions.last_mut().unwrap()
    }

    pub fn exponential(&mut self, name: impl Into<String>, mean: f64) -> &mut TransitionDef {
        self.transition(name, TransitionKind::Timed(Distribution::Exponential { mean }))
    }

    pub fn deterministic(&mut self, name: impl Into<String>, delay: f64) -> &mut TransitionDef {
        self.transition(name, TransitionKind::Timed(Distribution::Deterministic { delay }))
    }

    pub fn immediate(&mut self, name: impl Into<String>, priority: u32, weight: f64) -> &mut TransitionDef {
        self.transition(name, TransitionKind::Immediate { priority, weight })
    }

    pub fn arc(
        &mut self,
        kind: ArcKind,
        place: impl Into<String>,
        transition: impl Into<String>,
        multiplicity: u32,
    ) -> &mut Self {
        self.arcs.push(ArcDef {
            kind,
            place: place.into(),
            transition: transition.into(),
            multiplicity,
        });
        self
    }

    /// Place → transition arc of multiplicity 1.
    pub fn input(&mut self, place: impl Into<String>, transition: impl Into<String>) -> &mut Self {
        self.arc(ArcKind::Input, place, transition, 1)
    }

    /// Transition → place arc of multiplicity 1.
    pub fn output(&mut self, transition: impl Into<String>, place: impl Into<String>) -> &mut Self {
        self.arc(ArcKind::Output, place, transition, 1)
    }

    pub fn inhibitor(&mut self, place: impl Into<String>, transition: impl Into<String>) -> &mut Self {
        self.arc(ArcKind::Inhibitor, place, transition, 1)
    }

    pub fn build(self) -> Result<Net, NetError> {
        Net::from_def(self)
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }

    fn push(&mut self, message: String) {
        self.diagnostics.push(Diagnostic { message });
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.diagnostics.iter().any(|d| d.message.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {}", d.message)?;
        }
        Ok(())
    }
}

/// Collects every structural problem in `def`; an empty report means the
/// definition can be built.
pub fn validate_net(def: &NetDef) -> ValidationReport {
    let mut report = ValidationReport::default();
    if def.places.is_empty() {
        report.push("net has no places".into());
    }
    if def.transitions.is_empty() {
        report.push("net has no transitions".into());
    }

    let mut place_names: HashMap<&str, usize> = HashMap::new();
    for p in &def.places {
        if !is_identifier(&p.name) {
            report.push(format!("invalid place name '{}'", p.name));
        }
        *place_names.entry(p.name.as_str()).or_default() += 1;
    }
    let mut transition_names: HashMap<&str, usize> = HashMap::new();
    for t in &def.transitions {
        if !is_identifier(&t.name) {
            report.push(format!("invalid transition name '{}'", t.name));
        }
        *transition_names.entry(t.name.as_str()).or_default() += 1;
    }
    for p in &def.places {
        if place_names[p.name.as_str()] > 1 {
            report.push(format!("duplicate place name {}", p.name));
            place_names.insert(p.name.as_str(), 0);
        }
        if transition_names.contains_key(p.name.as_str()) {
            report.push(format!("name {} used for both a place and a transition", p.name));
        }
    }
    for t in &def.transitions {
        if transition_names[t.name.as_str()] > 1 {
            report.push(format!("duplicate transition name {}", t.name));
            transition_names.insert(t.name.as_str(), 0);
        }
    }

    let names: Vec<&str> = def.places.iter().map(|p| p.name.as_str()).collect();
    for t in &def.transitions {
        match t.kind {
            TransitionKind::Immediate { priority, weight } => {
                if priority == 0 {
                    report.push(format!("transition {}: priority must be >= 1", t.name));
                }
                if !(weight > 0.0 && weight.is_finite()) {
                    report.push(format!("transition {}: nonpositive weight {weight}", t.name));
                }
            }
            TransitionKind::Timed(Distribution::Exponential { mean }) => {
                if !(mean > 0.0 && mean.is_finite()) {
                    report.push(format!("transition {}: nonpositive mean {mean}", t.name));
                }
            }
            TransitionKind::Timed(Distribution::Deterministic { delay }) => {
                if !(delay > 0.0 && delay.is_finite()) {
                    report.push(format!("transition {}: nonpositive delay {delay}", t.name));
                }
            }
        }
        if let Some(text) = &t.guard {
            match parse_metric(text) {
                Err(e) => report.push(format!("transition {}: invalid guard: {e}", t.name)),
                Ok(expr) => {
                    if let Err(e) = expr.bind_names(&names) {
                        report.push(format!("transition {}: guard references {e}", t.name));
                    }
                }
            }
        }
    }

    for a in &def.arcs {
        if !place_names.contains_key(a.place.as_str()) {
            report.push(format!("arc references unknown place {}", a.place));
        }
        if !transition_names.contains_key(a.transition.as_str()) {
            report.push(format!("arc references unknown transition {}", a.transition));
        }
        if a.multiplicity == 0 {
            report.push(format!(
                "arc {} / {}: multiplicity must be positive",
                a.place, a.transition
            ));
        }
    }
    report
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

// ---------------------------------------------------------------------------
// Frozen net
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
struct Connectivity {
    inputs: Vec<(usize, u32)>,
    outputs: Vec<(usize, u32)>,
    inhibitors: Vec<(usize, u32)>,
}

type Merge = fn(u32, u32) -> u32;

/// Immutable, validated GSPN.
#[derive(Debug, Clone)]
pub struct Net {
    places: Vec<Place>,
    transitions: Vec<Transition>,
    arcs: Vec<Arc>,
    conn: Vec<Connectivity>,
    guards: Vec<Option<BoundMetric>>,
    place_index: HashMap<String, PlaceId>,
    transition_index: HashMap<String, TransitionId>,
}

impl Net {
    pub fn from_def(def: NetDef) -> Result<Net, NetError> {
        let report = validate_net(&def);
        if !report.is_ok() {
            return Err(NetError::Invalid(report));
        }
        let places: Vec<Place> = def
            .places
            .into_iter()
            .enumerate()
            .map(|(i, p)| Place {
                id: PlaceId(i),
                name: p.name,
                initial_tokens: p.initial_tokens,
            })
            .collect();
        let place_index: HashMap<String, PlaceId> = places.iter().map(|p| (p.name.clone(), p.id)).collect();
        let names: Vec<&str> = places.iter().map(|p| p.name.as_str()).collect();

        let mut transitions = Vec::with_capacity(def.transitions.len());
        let mut guards = Vec::with_capacity(def.transitions.len());
        for (i, t) in def.transitions.into_iter().enumerate() {
            // Validation already checked these parse and bind.
            let guard = t.guard.as_deref().map(|g| parse_metric(g).expect("validated guard"));
            guards.push(guard.as_ref().map(|g| g.bind_names(&names).expect("validated guard")));
            transitions.push(Transition {
                id: TransitionId(i),
                name: t.name,
                kind: t.kind,
                guard,
                param: t.param,
            });
        }
        let transition_index: HashMap<String, TransitionId> =
            transitions.iter().map(|t| (t.name.clone(), t.id)).collect();

        let mut conn = vec![Connectivity::default(); transitions.len()];
        let arcs: Vec<Arc> = def
            .arcs
            .into_iter()
            .map(|a| {
                let place = place_index[&a.place];
                let transition = transition_index[&a.transition];
                // Parallel arcs add up; parallel inhibitors keep the tightest bound.
                let c = &mut conn[transition.0];
                let (list, merge): (&mut Vec<(usize, u32)>, Merge) = match a.kind {
                    ArcKind::Input => (&mut c.inputs, |x, y| x + y),
                    ArcKind::Output => (&mut c.outputs, |x, y| x + y),
                    ArcKind::Inhibitor => (&mut c.inhibitors, u32::min),
                };
                match list.iter_mut().find(|(p, _)| *p == place.0) {
                    Some(entry) => entry.1 = merge(entry.1, a.multiplicity),
                    None => list.push((place.0, a.multiplicity)),
                }
                Arc {
                    kind: a.kind,
                    place,
                    transition,
                    multiplicity: a.multiplicity,
                }
            })
            .collect();

        Ok(Net {
            places,
            transitions,
            arcs,
            conn,
            guards,
            place_index,
            transition_index,
        })
    }

    /// Name-based definition equivalent to this net.
    pub fn to_def(&self) -> NetDef {
        NetDef {
            places: self
                .places
                .iter()
                .map(|p| PlaceDef {
                    name: p.name.clone(),
                    initial_tokens: p.initial_tokens,
                })
                .collect(),
            transitions: self
                .transitions
                .iter()
                .map(|t| TransitionDef {
                    name: t.name.clone(),
                    kind: t.kind,
                    guard: t.guard.as_ref().map(ToString::to_string),
                    param: t.param.clone(),
                })
                .collect(),
            arcs: self
                .arcs
                .iter()
                .map(|a| ArcDef {
                    kind: a.kind,
                    place: self.places[a.place.0].name.clone(),
                    transition: self.transitions[a.transition.0].name.clone(),
                    multiplicity: a.multiplicity,
                })
                .collect(),
        }
    }

    /// Copy of this net with the delay of timed transition `name` replaced.
    pub fn with_mean(&self, name: &str, mean: f64) -> Result<Net, NetError> {
        let mut def = self.to_def();
        let t = def
            .transitions
            .iter_mut()
            .find(|t| t.name == name)
            .ok_or_else(|| NetError::UnknownTransition(name.to_string()))?;
        t.param = None;
        t.kind = match t.kind {
            TransitionKind::Timed(Distribution::Deterministic { .. }) => {
                TransitionKind::Timed(Distribution::Deterministic { delay: mean })
            }
            TransitionKind::Timed(Distribution::Exponential { .. }) => {
                TransitionKind::Timed(Distribution::Exponential { mean })
            }
            TransitionKind::Immediate { .. } => return Err(NetError::UnknownTransition(format!("{name} (immediate)"))),
        };
        Net::from_def(def)
    }

    pub fn places(&self) -> &[Place] {
        &self.places
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn place_names(&self) -> Vec<&str> {
        self.places.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn place_id(&self, name: &str) -> Option<PlaceId> {
        self.place_index.get(name).copied()
    }

    pub fn transition_id(&self, name: &str) -> Option<TransitionId> {
        self.transition_index.get(name).copied()
    }

    pub fn place(&self, id: PlaceId) -> &Place {
        &self.places[id.0]
    }

    pub fn transition(&self, id: TransitionId) -> &Transition {
        &self.transitions[id.0]
    }

    pub fn initial_marking(&self) -> Marking {
        Marking(self.places.iter().map(|p| p.initial_tokens).collect())
    }

    /// True when any transition uses a deterministic delay.
    pub fn has_deterministic(&self) -> bool {
        self.transitions
            .iter()
            .any(|t| matches!(t.kind, TransitionKind::Timed(Distribution::Deterministic { .. })))
    }

    fn check_len(&self, m: &Marking) -> Result<(), NetError> {
        if m.len() != self.places.len() {
            return Err(NetError::MarkingLength {
                expected: self.places.len(),
                got: m.len(),
            });
        }
        Ok(())
    }

    /// Input, inhibitor and guard conditions only; ignores priorities.
    pub(crate) fn structurally_enabled(&self, tokens: &[u32], t: usize) -> bool {
        let c = &self.conn[t];
        c.inputs.iter().all(|&(p, k)| tokens[p] >= k)
            && c.inhibitors.iter().all(|&(p, k)| tokens[p] < k)
            && self.guards[t].as_ref().is_none_or(|g| g.eval_tokens(tokens))
    }

    pub(crate) fn enabled_unchecked(&self, tokens: &[u32]) -> Vec<TransitionId> {
        let mut best: Option<u32> = None;
        let mut immediates = Vec::new();
        let mut timed = Vec::new();
        for (i, t) in self.transitions.iter().enumerate() {
            if !self.structurally_enabled(tokens, i) {
                continue;
            }
            match t.kind {
                TransitionKind::Immediate { priority, .. } => {
                    match best {
                        Some(b) if priority < b => continue,
                        Some(b) if priority > b => immediates.clear(),
                        _ => {}
                    }
                    best = Some(priority);
                    immediates.push(TransitionId(i));
                }
                TransitionKind::Timed(_) => timed.push(TransitionId(i)),
            }
        }
        if best.is_some() {
            immediates
        } else {
            timed
        }
    }

    /// Transitions that may fire in `m`, in ascending id order. If any
    /// immediate transition is enabled, only the immediates of the highest
    /// enabled priority are returned.
    pub fn enabled_transitions(&self, m: &Marking) -> Result<Vec<TransitionId>, NetError> {
        self.check_len(m)?;
        Ok(self.enabled_unchecked(m.tokens()))
    }

    /// A marking is vanishing when some immediate transition is enabled.
    pub fn is_vanishing(&self, m: &Marking) -> bool {
        self.transitions
            .iter()
            .enumerate()
            .any(|(i, t)| t.kind.is_immediate() && self.structurally_enabled(m.tokens(), i))
    }

    pub(crate) fn fire_unchecked(&self, tokens: &[u32], t: usize) -> Vec<u32> {
        let mut next = tokens.to_vec();
        let c = &self.conn[t];
        for &(p, k) in &c.inputs {
            next[p] -= k;
        }
        for &(p, k) in &c.outputs {
            next[p] += k;
        }
        next
    }

    /// Fires `t` in `m`, returning the successor marking.
    pub fn fire(&self, m: &Marking, t: TransitionId) -> Result<Marking, NetError> {
        let enabled = self.enabled_transitions(m)?;
        if !enabled.contains(&t) {
            let name = self
                .transitions
                .get(t.0)
                .map_or_else(|| format!("#{}", t.0), |tr| tr.name.clone());
            return Err(NetError::NotEnabled(name));
        }
        Ok(Marking(self.fire_unchecked(m.tokens(), t.0)))
    }

    /// Human-readable marking listing the non-empty places.
    pub fn describe_marking(&self, m: &Marking) -> String {
        let parts: Vec<String> = m
            .tokens()
            .iter()
            .enumerate()
            .filter(|(_, &k)| k > 0)
            .map(|(i, &k)| {
                if k == 1 {
                    self.places[i].name.clone()
                } else {
                    format!("{}*{k}", self.places[i].name)
                }
            })
            .collect();
        if parts.is_empty() {
            "(empty)".into()
        } else {
            parts.join(", ")
        }
    }
}

/// Free-function form of [`Net::enabled_transitions`].
pub fn enabled_transitions(net: &Net, m: &Marking) -> Result<Vec<TransitionId>, NetError> {
    net.enabled_transitions(m)
}

/// Free-function form of [`Net::fire`].
pub fn fire(net: &Net, m: &Marking, t: TransitionId) -> Result<Marking, NetError> {
    net.fire(m, t)
}
