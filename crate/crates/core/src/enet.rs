//! Evaluation-net engine.
//!
//! Safe nets carrying attributed tokens, with simple transitions (one input,
//! one output branch) and output-switched transitions (one input, two output
//! branches selected through a resolving position). Firing is deterministic;
//! a net in which two firings are enabled at once is rejected by [`Net::run`].
//!
//! Nets are described by a [`NetDefinition`], which can be written as TOML:
//!
//! ```toml
//! positions = ["p0", "p1"]
//! peripheral = ["p0"]
//! resolving = ["r1"]
//! initial = ["p0"]
//!
//! [[transitions]]
//! id = "t1"
//! inputs = ["p0"]
//! resolver = "r1"
//! procedure = "Check"
//! outputs = [{ tag = 1, to = "p1" }, { tag = 0 }]   # no `to`: token is absorbed
//! ```

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Branch selector of a transition. Simple transitions use a single tag.
pub type Tag = u8;

/// Default cap on the number of markings explored by [`Net::reachable_markings`].
pub const DEFAULT_STATE_CAP: usize = 100_000;

/// Scalar token attribute.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Id(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Id(s) => f.write_str(s),
        }
    }
}

/// A marker flowing through the net, carrying a flat attribute map.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Token {
    attrs: BTreeMap<String, Value>,
}

impl Token {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: &str, value: Value) {
        self.attrs.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.attrs.get(name)
    }

    pub fn get_bool(&self, name: &str) -> Option<bool> {
        match self.attrs.get(name) {
            Some(Value::Bool(b)) => Some(*b),
            _ => None,
        }
    }

    pub fn get_int(&self, name: &str) -> Option<i64> {
        match self.attrs.get(name) {
            Some(Value::Int(i)) => Some(*i),
            _ => None,
        }
    }

    pub fn get_id(&self, name: &str) -> Option<&str> {
        match self.attrs.get(name) {
            Some(Value::Id(s)) => Some(s),
            _ => None,
        }
    }

    pub fn attrs(&self) -> &BTreeMap<String, Value> {
        &self.attrs
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.attrs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str("}")
    }
}

/// One output branch of a transition. `to == None` absorbs the token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputArc {
    #[serde(default)]
    pub tag: Tag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
}

impl OutputArc {
    pub fn to(tag: Tag, position: &str) -> Self {
        Self {
            tag,
            to: Some(position.to_string()),
        }
    }

    pub fn absorb(tag: Tag) -> Self {
        Self { tag, to: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDef {
    pub id: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<OutputArc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolver: Option<String>,
    #[serde(default = "identity_name")]
    pub procedure: String,
}

fn identity_name() -> String {
    "Identity".to_string()
}

/// Unvalidated description of a net: token positions, peripheral and
/// resolving positions, transitions (which carry the input map F and output
/// map H as arc lists) and the initial marking Mo.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDefinition {
    pub positions: Vec<String>,
    #[serde(default)]
    pub peripheral: Vec<String>,
    #[serde(default)]
    pub resolving: Vec<String>,
    #[serde(default)]
    pub transitions: Vec<TransitionDef>,
    /// Positions marked in Mo.
    #[serde(default)]
    pub initial: Vec<String>,
}

impl NetDefinition {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("net definitions always serialize")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum StructuralError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("`{owner}` references unknown id `{id}`")]
    DanglingArc { owner: String, id: String },
    #[error("initial marking places more than one token on `{0}`")]
    UnsafeInitial(String),
    #[error("transition `{0}` has an invalid branch structure")]
    BadBranching(String),
    #[error("transition `{0}` has no input position")]
    NoInput(String),
    #[error("transition `{0}` joins several inputs; only simple and switched transitions are supported")]
    UnsupportedScheme(String),
    #[error("transition `{transition}` names unknown procedure `{procedure}`")]
    UnknownProcedure {
        transition: String,
        procedure: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("invalid net definition: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct BuildError(pub Vec<StructuralError>);

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("transition `{transition}` branch {tag} is not enabled")]
    NotEnabled { transition: String, tag: Tag },
    #[error("unknown transition `{0}`")]
    UnknownTransition(String),
    #[error("several firings enabled at once: {0:?}")]
    Nondeterminism(Vec<(String, Tag)>),
    #[error("reachability exploration exceeded {0} markings")]
    StateExplosion(usize),
}

/// Token transforms named by transitions.
pub trait Procedures: Send + Sync {
    fn knows(&self, _name: &str) -> bool {
        true
    }

    fn apply(&self, name: &str, token: &mut Token);
}

/// Procedure table that leaves every token unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl Procedures for Identity {
    fn apply(&self, _name: &str, _token: &mut Token) {}
}

#[derive(Clone, Debug)]
struct Compiled {
    id: String,
    input: usize,
    branches: Vec<(Tag, Option<usize>)>,
    resolver: Option<String>,
    procedure: String,
}

/// A validated net. Cheap to clone; safe to share between threads.
#[derive(Clone)]
pub struct Net {
    def: Arc<NetDefinition>,
    index: BTreeMap<String, usize>,
    transitions: Arc<Vec<Compiled>>,
    procedures: Arc<dyn Procedures>,
}

impl fmt::Debug for Net {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Net")
            .field("positions", &self.def.positions)
            .field("transitions", &self.transitions.len())
            .finish()
    }
}

/// Occupancy of every position; at most one token each.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Marking {
    slots: Vec<Option<Token>>,
}

impl Marking {
    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(Option::is_none)
    }

    pub fn token_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    fn occupancy(&self) -> Vec<bool> {
        self.slots.iter().map(Option::is_some).collect()
    }
}

/// The set of occupied positions of a marking, ignoring token attributes.
pub type Occupancy = BTreeSet<String>;

/// Result of firing one transition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Firing {
    pub transition: String,
    pub tag: Tag,
    pub before: Token,
    pub after: Token,
    /// The token left the net.
    pub absorbed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiringRecord {
    pub step: usize,
    pub transition: String,
    pub tag: Tag,
    pub before: Token,
    pub after: Token,
}

impl fmt::Display for FiringRecord {
    /// `step transition branch {attr=val,...}`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.step, self.transition, self.tag, self.after)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOutcome {
    pub trace: Vec<FiringRecord>,
    pub marking: Marking,
}

impl Net {
    /// Validates `def` with identity procedures.
    pub fn build(def: NetDefinition) -> Result<Self, BuildError> {
        Self::build_with(def, Arc::new(Identity))
    }

    pub fn build_with(def: NetDefinition, procedures: Arc<dyn Procedures>) -> Result<Self, BuildError> {
        let mut errors = Vec::new();
        let mut seen = BTreeSet::new();
        let all_ids = def
            .positions
            .iter()
            .chain(&def.resolving)
            .chain(def.transitions.iter().map(|t| &t.id));
        for id in all_ids {
            if !seen.insert(id.as_str()) {
                errors.push(StructuralError::DuplicateId(id.clone()));
            }
        }

        let index: BTreeMap<String, usize> = def
            .positions
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        let resolving: BTreeSet<&str> = def.resolving.iter().map(String::as_str).collect();

        for p in &def.peripheral {
            if !index.contains_key(p) {
                errors.push(StructuralError::DanglingArc {
                    owner: "peripheral".into(),
                    id: p.clone(),
                });
            }
        }

        let mut marked = BTreeSet::new();
        for p in &def.initial {
            if !index.contains_key(p) {
                errors.push(StructuralError::DanglingArc {
                    owner: "initial".into(),
                    id: p.clone(),
                });
            } else if !marked.insert(p.as_str()) {
                errors.push(StructuralError::UnsafeInitial(p.clone()));
            }
        }

        let mut compiled = Vec::with_capacity(def.transitions.len());
        for t in &def.transitions {
            let before = errors.len();
            for p in t.inputs.iter().chain(t.outputs.iter().filter_map(|o| o.to.as_ref())) {
                if !index.contains_key(p) {
                    errors.push(StructuralError::DanglingArc {
                        owner: t.id.clone(),
                        id: p.clone(),
                    });
                }
            }
            match t.inputs.len() {
                0 => errors.push(StructuralError::NoInput(t.id.clone())),
                1 => {}
                _ => errors.push(StructuralError::UnsupportedScheme(t.id.clone())),
            }
            match (&t.resolver, t.outputs.len()) {
                (None, 1) => {}
                (Some(r), 2) => {
                    if !resolving.contains(r.as_str()) {
                        errors.push(StructuralError::DanglingArc {
                            owner: t.id.clone(),
                            id: r.clone(),
                        });
                    }
                    let tags: BTreeSet<Tag> = t.outputs.iter().map(|o| o.tag).collect();
                    if tags != BTreeSet::from([0, 1]) {
                        errors.push(StructuralError::BadBranching(t.id.clone()));
                    }
                }
                _ => errors.push(StructuralError::BadBranching(t.id.clone())),
            }
            if !procedures.knows(&t.procedure) {
                errors.push(StructuralError::UnknownProcedure {
                    transition: t.id.clone(),
                    procedure: t.procedure.clone(),
                });
            }
            if errors.len() == before {
                compiled.push(Compiled {
                    id: t.id.clone(),
                    input: index[&t.inputs[0]],
                    branches: t
                        .outputs
                        .iter()
                        .map(|o| (o.tag, o.to.as_ref().map(|p| index[p])))
                        .collect(),
                    resolver: t.resolver.clone(),
                    procedure: t.procedure.clone(),
                });
            }
        }

        if !errors.is_empty() {
            return Err(BuildError(errors));
        }
        Ok(Self {
            def: Arc::new(def),
            index,
            transitions: Arc::new(compiled),
            procedures,
        })
    }

    pub fn definition(&self) -> &NetDefinition {
        &self.def
    }

    pub fn position_count(&self) -> usize {
        self.def.positions.len()
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.len()
    }

    /// Input map F.
    pub fn input_arc(&self, position: &str, transition: &str) -> bool {
        self.find(transition)
            .is_some_and(|t| self.index.get(position) == Some(&t.input))
    }

    /// Output map H.
    pub fn output_arc(&self, transition: &str, position: &str) -> bool {
        let Some(p) = self.index.get(position) else {
            return false;
        };
        self.find(transition)
            .is_some_and(|t| t.branches.iter().any(|(_, to)| *to == Some(*p)))
    }

    /// Resolving position gating `transition`, if it is switched.
    pub fn resolver_of(&self, transition: &str) -> Option<&str> {
        self.find(transition).and_then(|t| t.resolver.as_deref())
    }

    pub fn empty_marking(&self) -> Marking {
        Marking {
            slots: vec![None; self.def.positions.len()],
        }
    }

    /// Mo, with every marked position holding a copy of `token`.
    pub fn initial_marking(&self, token: Token) -> Marking {
        let mut m = self.empty_marking();
        for p in &self.def.initial {
            m.slots[self.index[p]] = Some(token.clone());
        }
        m
    }

    /// Places `token` on `position`, replacing whatever was there.
    pub fn marking_with(&self, position: &str, token: Token) -> Option<Marking> {
        let i = *self.index.get(position)?;
        let mut m = self.empty_marking();
        m.slots[i] = Some(token);
        Some(m)
    }

    pub fn token_at<'m>(&self, marking: &'m Marking, position: &str) -> Option<&'m Token> {
        self.index.get(position).and_then(|&i| marking.slots[i].as_ref())
    }

    pub fn occupancy(&self, marking: &Marking) -> Occupancy {
        self.occupancy_of(&marking.occupancy())
    }

    fn occupancy_of(&self, occupied: &[bool]) -> Occupancy {
        occupied
            .iter()
            .zip(&self.def.positions)
            .filter(|(o, _)| **o)
            .map(|(_, p)| p.clone())
            .collect()
    }

    fn find(&self, id: &str) -> Option<&Compiled> {
        self.transitions.iter().find(|t| t.id == id)
    }

    fn branch_ready(occupied: &[bool], t: &Compiled, target: Option<usize>) -> bool {
        // The input's token leaves before the output is filled, so a
        // self-loop stays enabled.
        occupied[t.input] && target.is_none_or(|o| o == t.input || !occupied[o])
    }

    /// Firings enabled under fixed answers for the resolving positions.
    /// A switched transition whose resolver has no answer is not enabled.
    pub fn enabled(&self, marking: &Marking, resolutions: &BTreeMap<String, Tag>) -> Vec<(String, Tag)> {
        let occupied = marking.occupancy();
        let mut out = Vec::new();
        for t in self.transitions.iter() {
            for &(tag, target) in &t.branches {
                let selected = match &t.resolver {
                    None => true,
                    Some(r) => resolutions.get(r) == Some(&tag),
                };
                if selected && Self::branch_ready(&occupied, t, target) {
                    out.push((t.id.clone(), tag));
                }
            }
        }
        out
    }

    /// Firings enabled under some answer of the resolving positions.
    pub fn enabled_any(&self, marking: &Marking) -> Vec<(String, Tag)> {
        let occupied = marking.occupancy();
        self.transitions
            .iter()
            .flat_map(|t| {
                t.branches
                    .iter()
                    .filter(|(_, target)| Self::branch_ready(&occupied, t, *target))
                    .map(|(tag, _)| (t.id.clone(), *tag))
            })
            .collect()
    }

    /// Fires one branch: removes the input token, applies the transition's
    /// procedure and places the result on the branch output (or absorbs it).
    pub fn fire(&self, marking: &Marking, transition: &str, tag: Tag) -> Result<(Marking, Firing), EngineError> {
        let t = self
            .find(transition)
            .ok_or_else(|| EngineError::UnknownTransition(transition.to_string()))?;
        let not_enabled = || EngineError::NotEnabled {
            transition: transition.to_string(),
            tag,
        };
        let target = t
            .branches
            .iter()
            .find(|(bt, _)| *bt == tag)
            .map(|(_, to)| *to)
            .ok_or_else(not_enabled)?;
        if !Self::branch_ready(&marking.occupancy(), t, target) {
            return Err(not_enabled());
        }

        let mut next = marking.clone();
        let before = next.slots[t.input].take().expect("input occupied");
        let mut after = before.clone();
        self.procedures.apply(&t.procedure, &mut after);
        if let Some(o) = target {
            next.slots[o] = Some(after.clone());
        }
        Ok((
            next,
            Firing {
                transition: t.id.clone(),
                tag,
                before,
                after,
                absorbed: target.is_none(),
            },
        ))
    }

    /// Fires the unique enabled transition until none is enabled or
    /// `max_steps` firings have happened.
    ///
    /// For a switched transition the resolver is asked with the token as
    /// transformed by the transition's procedure, so a procedure that performs
    /// a check publishes its outcome to the resolving position.
    pub fn run<R>(&self, marking: Marking, mut resolver: R, max_steps: usize) -> Result<RunOutcome, EngineError>
    where
        R: FnMut(&str, &Token) -> Tag,
    {
        let mut marking = marking;
        let mut trace = Vec::new();
        while trace.len() < max_steps {
            let occupied = marking.occupancy();
            let mut candidates = Vec::new();
            for t in self.transitions.iter() {
                let Some(token) = marking.slots[t.input].as_ref() else {
                    continue;
                };
                let tag = match &t.resolver {
                    None => t.branches[0].0,
                    Some(r) => {
                        let mut probe = token.clone();
                        self.procedures.apply(&t.procedure, &mut probe);
                        resolver(r, &probe)
                    }
                };
                let Some(&(_, target)) = t.branches.iter().find(|(bt, _)| *bt == tag) else {
                    continue;
                };
                if Self::branch_ready(&occupied, t, target) {
                    candidates.push((t.id.clone(), tag));
                }
            }
            let (id, tag) = match candidates.len() {
                0 => break,
                1 => candidates.pop().unwrap(),
                _ => return Err(EngineError::Nondeterminism(candidates)),
            };
            let (next, firing) = self.fire(&marking, &id, tag)?;
            trace.push(FiringRecord {
                step: trace.len() + 1,
                transition: firing.transition,
                tag: firing.tag,
                before: firing.before,
                after: firing.after,
            });
            marking = next;
        }
        Ok(RunOutcome { trace, marking })
    }

    /// Breadth-first closure of the initial marking under every enabled
    /// firing, treating both branches of every switch as possible. Token
    /// attributes are ignored; markings are compared by occupancy.
    pub fn reachable_markings(&self, cap: usize) -> Result<Vec<Occupancy>, EngineError> {
        let mut start = vec![false; self.def.positions.len()];
        for p in &self.def.initial {
            start[self.index[p]] = true;
        }
        let mut seen = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([start]);
        while let Some(occupied) = queue.pop_front() {
            for t in self.transitions.iter() {
                for &(_, target) in &t.branches {
                    if !Self::branch_ready(&occupied, t, target) {
                        continue;
                    }
                    let mut next = occupied.clone();
                    next[t.input] = false;
                    if let Some(o) = target {
                        next[o] = true;
                    }
                    if seen.insert(next.clone()) {
                        if seen.len() > cap {
                            return Err(EngineError::StateExplosion(cap));
                        }
                        queue.push_back(next);
                    }
                }
            }
        }
        Ok(seen.iter().map(|o| self.occupancy_of(o)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> NetDefinition {
        NetDefinition {
            positions: vec!["a".into(), "b".into(), "c".into()],
            peripheral: vec!["a".into()],
            resolving: vec!["r".into()],
            transitions: vec![
                TransitionDef {
                    id: "go".into(),
                    inputs: vec!["a".into()],
                    outputs: vec![OutputArc::to(0, "b")],
                    resolver: None,
                    procedure: "Identity".into(),
                },
                TransitionDef {
                    id: "pick".into(),
                    inputs: vec!["b".into()],
                    outputs: vec![OutputArc::to(1, "c"), OutputArc::absorb(0)],
                    resolver: Some("r".into()),
                    procedure: "Identity".into(),
                },
            ],
            initial: vec!["a".into()],
        }
    }

    #[test]
    fn degenerate_net_is_valid() {
        let def = NetDefinition {
            positions: vec!["only".into()],
            peripheral: vec![],
            resolving: vec![],
            transitions: vec![],
            initial: vec![],
        };
        let net = Net::build(def).unwrap();
        assert_eq!(net.reachable_markings(10).unwrap(), vec![Occupancy::new()]);
        assert!(net.enabled_any(&net.empty_marking()).is_empty());
    }

    #[test]
    fn two_outputs_without_resolver_is_bad_branching() {
        let mut def = chain();
        def.transitions[1].resolver = None;
        let err = Net::build(def).unwrap_err();
        assert_eq!(err.0, vec![StructuralError::BadBranching("pick".into())]);
    }

    #[test]
    fn structural_errors_are_enumerated() {
        let mut def = chain();
        def.initial.push("a".into());
        def.transitions[0].outputs = vec![OutputArc::to(0, "nowhere")];
        def.positions.push("b".into());
        let err = Net::build(def).unwrap_err();
        assert!(err.0.contains(&StructuralError::DuplicateId("b".into())));
        assert!(err.0.contains(&StructuralError::UnsafeInitial("a".into())));
        assert!(err.0.contains(&StructuralError::DanglingArc {
            owner: "go".into(),
            id: "nowhere".into()
        }));
    }

    #[test]
    fn joins_are_rejected() {
        let mut def = chain();
        def.transitions[0].inputs.push("c".into());
        let err = Net::build(def).unwrap_err();
        assert_eq!(err.0, vec![StructuralError::UnsupportedScheme("go".into())]);
    }

    #[test]
    fn fire_on_empty_marking_is_not_enabled() {
        let net = Net::build(chain()).unwrap();
        let err = net.fire(&net.empty_marking(), "go", 0).unwrap_err();
        assert!(matches!(err, EngineError::NotEnabled { .. }));
        assert!(net.enabled(&net.empty_marking(), &BTreeMap::new()).is_empty());
    }

    #[test]
    fn switched_absorb_empties_marking() {
        let net = Net::build(chain()).unwrap();
        let m0 = net.initial_marking(Token::new());
        let (m1, _) = net.fire(&m0, "go", 0).unwrap();
        let (m2, f) = net.fire(&m1, "pick", 0).unwrap();
        assert!(f.absorbed);
        assert!(m2.is_empty());
    }

    #[test]
    fn run_with_zero_steps_is_identity() {
        let net = Net::build(chain()).unwrap();
        let m0 = net.initial_marking(Token::new());
        let out = net.run(m0.clone(), |_, _| 1, 0).unwrap();
        assert!(out.trace.is_empty());
        assert_eq!(out.marking, m0);
    }

    #[test]
    fn run_detects_nondeterminism() {
        let mut def = chain();
        def.transitions.push(TransitionDef {
            id: "other".into(),
            inputs: vec!["a".into()],
            outputs: vec![OutputArc::to(0, "c")],
            resolver: None,
            procedure: "Identity".into(),
        });
        let net = Net::build(def).unwrap();
        let err = net.run(net.initial_marking(Token::new()), |_, _| 0, 5).unwrap_err();
        assert!(matches!(err, EngineError::Nondeterminism(v) if v.len() == 2));
    }

    #[test]
    fn state_cap_is_enforced() {
        let net = Net::build(chain()).unwrap();
        assert_eq!(net.reachable_markings(2), Err(EngineError::StateExplosion(2)));
        assert_eq!(net.reachable_markings(4).unwrap().len(), 4);
    }

    #[test]
    fn toml_round_trip() {
        let def = chain();
        let text = def.to_toml();
        assert_eq!(NetDefinition::from_toml(&text).unwrap(), def);
    }

    #[test]
    fn record_line_format() {
        let r = FiringRecord {
            step: 3,
            transition: "t9".into(),
            tag: 0,
            before: Token::new(),
            after: Token::new().with("n", Value::Int(2)).with("ok", Value::Bool(true)),
        };
        assert_eq!(r.to_string(), "3 t9 0 {n=2,ok=true}");
    }
}
