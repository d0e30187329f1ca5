//! Life populations, relative worlds and the interaction and meeting rules.
//!
//! A [`SimState`] holds, per system, a list of [`LifeClass`]es. Each class
//! is a set of lives sharing one external-memory history. Interactions pair
//! up classes of the two participants, then split every joint history into
//! its futures with weights taken from the synchronized relative
//! wavefunction. A meeting is an interaction with the identity coupling.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{self, Basis, Ket, QmathError, SystemLabel, Unitary, C64};

/// Futures with `|a_ij|` at or below this are treated as absent.
pub const EPS_FUTURE: f64 = 1e-10;
/// Tolerance on equal side totals within a compatibility group.
pub const SIDE_MASS_TOL: f64 = 1e-9;
/// Classes with mass at or below this are pruned.
pub const PRUNE_MASS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Qmath(#[from] QmathError),
    #[error("unknown system `{0}`")]
    UnknownSystem(SystemLabel),
    #[error("system `{0}` declared twice")]
    DuplicateSystem(SystemLabel),
    #[error("system `{0}` has no lives yet")]
    NoClasses(SystemLabel),
    #[error("system `{0}` already has lives and cannot be prepared again")]
    AlreadyPrepared(SystemLabel),
    #[error("event `{event}`: an interaction needs two distinct systems")]
    SameSystem { event: EventId },
    #[error("event `{event}`: unitary acts on {got}, expected {expected}")]
    CouplingSpace { event: EventId, expected: String, got: String },
    #[error("event `{event}`: basis is for `{got}`, expected `{expected}`")]
    BasisSystem { event: EventId, expected: SystemLabel, got: SystemLabel },
    #[error("event `{event}`: compatibility group {group} has side masses {left} vs {right}")]
    SideMassMismatch { event: EventId, group: usize, left: f64, right: f64 },
    #[error("event `{event}`: history `{history}` has no future with nonzero weight")]
    InconsistentHistory { event: EventId, history: String },
    #[error("event `{event}`: preferred bases cover only {coverage:.12} of the evolved history state `{history}`")]
    BasisIncomplete { event: EventId, history: String, coverage: f64 },
    #[error("memories disagree on `{0}`")]
    MemoryConflict(String),
    #[error("coupling `{event}` acts on `{system}` which has no initial state")]
    MissingInitialState { event: EventId, system: SystemLabel },
    #[error("system `{0}` has no record and is not separable in its initial state")]
    NoHistoryVector(SystemLabel),
    #[error("{n} lives cannot represent mass {mass} of `{history}` exactly")]
    NotRepresentable { history: String, mass: f64, n: u64 },
    #[error("life with history `{history}` has no continuation at `{event}`")]
    Stranded { event: EventId, history: String },
}

pub type Result<T> = std::result::Result<T, EngineError>;

/// Interaction event; ordered by ordinal, then tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventId {
    pub ordinal: u32,
    pub tag: String,
}

impl EventId {
    pub fn new(ordinal: u32, tag: impl Into<String>) -> Self {
        EventId { ordinal, tag: tag.into() }
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag)
    }
}

/// One system's definite outcome at an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub label: String,
    pub index: usize,
    #[serde(skip)]
    pub vector: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub event: EventId,
    pub outcomes: BTreeMap<SystemLabel, Outcome>,
}

impl OutcomeRecord {
    fn key(&self) -> String {
        let parts: Vec<String> = self.outcomes.iter().map(|(s, o)| format!("{s}={}", o.label)).collect();
        format!("{}{{{}}}", self.event.tag, parts.join(","))
    }
}

/// External memory: outcome records sorted by event.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct History(Vec<OutcomeRecord>);

impl History {
    pub fn records(&self) -> &[OutcomeRecord] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Canonical serialization, e.g. `t1-source{q1=0,q2=0}|t2-alice{A=0,q1=0}`.
    pub fn key(&self) -> String {
        self.0.iter().map(OutcomeRecord::key).collect::<Vec<_>>().join("|")
    }

    pub fn record(&self, event: &EventId) -> Option<&OutcomeRecord> {
        self.0.binary_search_by(|r| r.event.cmp(event)).ok().map(|i| &self.0[i])
    }

    /// Most recent record that involves `sys`.
    pub fn latest_for(&self, sys: &SystemLabel) -> Option<&OutcomeRecord> {
        self.0.iter().rev().find(|r| r.outcomes.contains_key(sys))
    }

    pub fn latest_label(&self, sys: &SystemLabel) -> Option<&str> {
        self.latest_for(sys).map(|r| r.outcomes[sys].label.as_str())
    }

    fn merged(&self, other: &History) -> History {
        let mut map: BTreeMap<EventId, OutcomeRecord> = BTreeMap::new();
        for r in self.0.iter().chain(&other.0) {
            map.entry(r.event.clone())
                .and_modify(|e| {
                    for (s, o) in &r.outcomes {
                        e.outcomes.entry(s.clone()).or_insert_with(|| o.clone());
                    }
                })
                .or_insert_with(|| r.clone());
        }
        History(map.into_values().collect())
    }

    fn pushed(&self, record: OutcomeRecord) -> History {
        let mut h = self.0.clone();
        let pos = h.partition_point(|r| r.event < record.event);
        h.insert(pos, record);
        History(h)
    }
}

/// Joint initial state of one or more systems, tagged by where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub origin: String,
    pub ket: Ket,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub event: EventId,
    pub unitary: Unitary,
}

/// Internal memory: initial states plus couplings in causal order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InternalMemory {
    initial: Vec<InitialState>,
    couplings: Vec<Coupling>,
}

impl InternalMemory {
    pub fn with_initial(origin: impl Into<String>, ket: Ket) -> Self {
        InternalMemory { initial: vec![InitialState { origin: origin.into(), ket }], couplings: Vec::new() }
    }

    pub fn initial_states(&self) -> &[InitialState] {
        &self.initial
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn systems(&self) -> Vec<SystemLabel> {
        let mut out: Vec<SystemLabel> =
            self.initial.iter().flat_map(|i| i.ket.space().labels().cloned().collect::<Vec<_>>()).collect();
        out.sort();
        out
    }

    pub fn key(&self) -> String {
        let init: Vec<&str> = self.initial.iter().map(|i| i.origin.as_str()).collect();
        let coup: Vec<&str> = self.couplings.iter().map(|c| c.event.tag.as_str()).collect();
        format!("{}/{}", init.join(","), coup.join(","))
    }

    pub fn push_coupling(&mut self, event: EventId, unitary: Unitary) -> Result<()> {
        let c = Coupling { event, unitary };
        match self.couplings.binary_search_by(|x| x.event.cmp(&c.event)) {
            Ok(i) if self.couplings[i].unitary.approx_eq(&c.unitary, 1e-12) => Ok(()),
            Ok(_) => Err(EngineError::MemoryConflict(c.event.tag)),
            Err(i) => {
                self.couplings.insert(i, c);
                Ok(())
            }
        }
    }

    fn initial_for(&self, sys: &SystemLabel) -> Option<&InitialState> {
        self.initial.iter().find(|i| i.ket.space().contains(sys))
    }
}

/// Union of two memories; shared entries must agree.
pub fn synchronize(a: &InternalMemory, b: &InternalMemory) -> Result<InternalMemory> {
    let mut out = a.clone();
    for init in &b.initial {
        match out.initial.iter().find(|i| i.origin == init.origin) {
            Some(existing) if existing.ket == init.ket => {}
            Some(_) => return Err(EngineError::MemoryConflict(init.origin.clone())),
            None => {
                for s in init.ket.space().labels() {
                    if let Some(other) = out.initial_for(s) {
                        return Err(EngineError::MemoryConflict(format!("{}/{}", other.origin, init.origin)));
                    }
                }
                out.initial.push(init.clone());
            }
        }
    }
    out.initial.sort_by(|x, y| x.origin.cmp(&y.origin));
    for c in &b.couplings {
        out.push_coupling(c.event.clone(), c.unitary.clone())?;
    }
    Ok(out)
}

/// Tensor the initial states and apply all couplings in causal order.
pub fn relative_wavefunction(m: &InternalMemory) -> Result<Ket> {
    let kets: Vec<Ket> = m.initial.iter().map(|i| i.ket.clone()).collect();
    let mut psi = qmath::tensor(&kets)?;
    for c in &m.couplings {
        for s in c.unitary.space().labels() {
            if !psi.space().contains(s) {
                return Err(EngineError::MissingInitialState { event: c.event.clone(), system: s.clone() });
            }
        }
        psi = c.unitary.apply(&psi)?;
    }
    Ok(psi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifeClass {
    pub system: SystemLabel,
    pub history: History,
    pub mass: f64,
    pub memory: InternalMemory,
}

impl LifeClass {
    pub fn key(&self) -> String {
        self.history.key()
    }

    pub fn latest_label(&self) -> Option<&str> {
        self.history.latest_label(&self.system)
    }
}

/// True iff the two histories agree on every shared event and system.
pub fn compatible(a: &LifeClass, b: &LifeClass) -> bool {
    histories_compatible(&a.history, &b.history)
}

fn histories_compatible(a: &History, b: &History) -> bool {
    a.0.iter().all(|ra| match b.record(&ra.event) {
        None => true,
        Some(rb) => ra.outcomes.iter().all(|(s, o)| rb.outcomes.get(s).is_none_or(|p| p.label == o.label)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Prepare,
    Couple,
    Measure,
    Meet,
}

/// One joint history and one of its futures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    /// Prior history key per participant, aligned with [`EventTable::systems`].
    pub priors: Vec<String>,
    /// Mass of the joint prior history (the pairing mass).
    pub prior_mass: f64,
    /// Outcome label per participant.
    pub outcomes: Vec<String>,
    pub weight: f64,
    pub mass: f64,
    /// History key of the new class, shared by all participants.
    pub history: String,
}

/// Rows of one event: futures of every joint history with their masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTable {
    pub event: EventId,
    pub kind: EventKind,
    pub systems: Vec<SystemLabel>,
    pub rows: Vec<TableRow>,
}

pub type SplitTable = EventTable;
pub type PairingTable = EventTable;

impl EventTable {
    pub fn total_mass(&self) -> f64 {
        self.rows.iter().map(|r| r.mass).sum()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mass).collect()
    }

    /// Mass summed by outcome-label tuple.
    pub fn label_marginal(&self) -> BTreeMap<Vec<String>, f64> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            *out.entry(r.outcomes.clone()).or_insert(0.0) += r.mass;
        }
        out
    }

    /// Total pairing mass per prior class of participant `side`.
    pub fn side_marginal(&self, side: usize) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            *out.entry(r.priors[side].clone()).or_insert(0.0) += r.mass;
        }
        out
    }

    pub fn involves(&self, sys: &SystemLabel) -> Option<usize> {
        self.systems.iter().position(|s| s == sys)
    }
}

#[derive(Debug, Clone)]
struct SystemEntry {
    dim: usize,
    basis: Basis,
    classes: Vec<LifeClass>,
}

/// Per-system life populations plus a relative-wavefunction cache.
#[derive(Debug, Clone, Default)]
pub struct SimState {
    systems: BTreeMap<SystemLabel, SystemEntry>,
    cache: HashMap<String, Arc<Ket>>,
}

impl SimState {
    pub fn new() -> Self {
        SimState::default()
    }

    /// Declare a system that will receive its lives from a `prepare` event.
    pub fn declare(&mut self, label: SystemLabel, dim: usize, basis: Basis) -> Result<()> {
        if self.systems.contains_key(&label) {
            return Err(EngineError::DuplicateSystem(label));
        }
        self.check_basis(&label, &basis, &EventId::new(0, "declare"))?;
        self.systems.insert(label, SystemEntry { dim, basis, classes: Vec::new() });
        Ok(())
    }

    /// Add a system with a single class of mass 1 and empty history.
    pub fn add_system(&mut self, initial: Ket, basis: Basis) -> Result<()> {
        let [(label, dim)] = initial.space().systems() else {
            return Err(QmathError::DimensionMismatch { expected: 1, got: initial.space().len() }.into());
        };
        let (label, dim) = (label.clone(), *dim);
        self.declare(label.clone(), dim, basis)?;
        let class = LifeClass {
            system: label.clone(),
            history: History::default(),
            mass: 1.0,
            memory: InternalMemory::with_initial(format!("init:{label}"), initial),
        };
        self.systems.get_mut(&label).expect("just declared").classes.push(class);
        Ok(())
    }

    pub fn systems(&self) -> impl Iterator<Item = &SystemLabel> {
        self.systems.keys()
    }

    pub fn dim(&self, sys: &SystemLabel) -> Result<usize> {
        Ok(self.entry(sys)?.dim)
    }

    pub fn classes(&self, sys: &SystemLabel) -> Result<&[LifeClass]> {
        Ok(&self.entry(sys)?.classes)
    }

    pub fn preferred_basis(&self, sys: &SystemLabel) -> Result<&Basis> {
        Ok(&self.entry(sys)?.basis)
    }

    pub fn total_mass(&self, sys: &SystemLabel) -> Result<f64> {
        Ok(self.entry(sys)?.classes.iter().map(|c| c.mass).sum())
    }

    fn entry(&self, sys: &SystemLabel) -> Result<&SystemEntry> {
        self.systems.get(sys).ok_or_else(|| EngineError::UnknownSystem(sys.clone()))
    }

    fn check_basis(&self, sys: &SystemLabel, basis: &Basis, event: &EventId) -> Result<()> {
        if basis.system() != sys {
            return Err(EngineError::BasisSystem {
                event: event.clone(),
                expected: sys.clone(),
                got: basis.system().clone(),
            });
        }
        Ok(())
    }

    fn psi(&mut self, m: &InternalMemory) -> Result<Arc<Ket>> {
        let key = m.key();
        if let Some(k) = self.cache.get(&key) {
            return Ok(k.clone());
        }
        let k = Arc::new(relative_wavefunction(m)?);
        self.cache.insert(key, k.clone());
        Ok(k)
    }

    /// Joint preparation: the participants share one class per nonzero
    /// amplitude of `ket` in the product of their preferred bases.
    pub fn prepare(&mut self, event: EventId, ket: Ket, bases: Vec<Basis>) -> Result<SplitTable> {
        let systems: Vec<SystemLabel> = ket.space().labels().cloned().collect();
        if bases.len() != systems.len() {
            return Err(QmathError::DimensionMismatch { expected: systems.len(), got: bases.len() }.into());
        }
        for (s, b) in systems.iter().zip(&bases) {
            self.check_basis(s, b, &event)?;
            let e = self.entry(s)?;
            if !e.classes.is_empty() {
                return Err(EngineError::AlreadyPrepared(s.clone()));
            }
        }
        let memory = InternalMemory::with_initial(event.tag.clone(), ket.clone());
        let mut rows = Vec::new();
        let mut classes = Vec::new();
        let mut coverage = 0.0;
        for digits in multi_indices(&bases.iter().map(Basis::len).collect::<Vec<_>>()) {
            let bra = qmath::tensor(&digits.iter().zip(&bases).map(|(&i, b)| b.ket(i)).collect::<Vec<_>>())?;
            let mass = qmath::inner(&bra, &ket)?.norm_sqr();
            coverage += mass;
            if mass.sqrt() <= EPS_FUTURE {
                continue;
            }
            let record = record_for(&event, &systems, &bases, &digits);
            let history = History::default().pushed(record);
            rows.push(TableRow {
                priors: vec![String::new(); systems.len()],
                prior_mass: 1.0,
                outcomes: digits.iter().zip(&bases).map(|(&i, b)| b.label(i).to_string()).collect(),
                weight: mass,
                mass,
                history: history.key(),
            });
            classes.push((history, mass));
        }
        if (coverage - ket.norm_sqr()).abs() > 1e-9 {
            return Err(EngineError::BasisIncomplete { event, history: String::new(), coverage });
        }
        for (s, b) in systems.iter().zip(bases) {
            let e = self.systems.get_mut(s).expect("checked");
            e.basis = b;
            e.classes = classes
                .iter()
                .map(|(h, m)| LifeClass { system: s.clone(), history: h.clone(), mass: *m, memory: memory.clone() })
                .collect();
        }
        Ok(EventTable { event, kind: EventKind::Prepare, systems, rows })
    }

    /// Single-system coupling: joins the internal memory, splits nothing.
    pub fn local_unitary(&mut self, event: EventId, u: Unitary) -> Result<()> {
        let [(sys, _)] = u.space().systems() else {
            return Err(EngineError::CouplingSpace {
                event,
                expected: "one system".into(),
                got: u.space().to_string(),
            });
        };
        let sys = sys.clone();
        let e = self.systems.get_mut(&sys).ok_or_else(|| EngineError::UnknownSystem(sys.clone()))?;
        if e.classes.is_empty() {
            return Err(EngineError::NoClasses(sys));
        }
        for c in &mut e.classes {
            c.memory.push_coupling(event.clone(), u.clone())?;
        }
        Ok(())
    }

    /// Two-system interaction event; see the module docs.
    pub fn interact(
        &mut self,
        sys1: &SystemLabel,
        sys2: &SystemLabel,
        u: &Unitary,
        basis1: Basis,
        basis2: Basis,
        event: EventId,
        kind: EventKind,
    ) -> Result<SplitTable> {
        if sys1 == sys2 {
            return Err(EngineError::SameSystem { event });
        }
        let mut expected = vec![(sys1.clone(), self.dim(sys1)?), (sys2.clone(), self.dim(sys2)?)];
        let mut got: Vec<(SystemLabel, usize)> = u.space().systems().to_vec();
        expected.sort();
        got.sort();
        if expected != got {
            return Err(EngineError::CouplingSpace {
                event,
                expected: format!("{expected:?}"),
                got: u.space().to_string(),
            });
        }
        self.check_basis(sys1, &basis1, &event)?;
        self.check_basis(sys2, &basis2, &event)?;
        self.split(sys1, sys2, Some(u), basis1, basis2, event, kind)
    }

    /// Meeting: identity coupling, preferred bases unchanged.
    pub fn meet(&mut self, a: &SystemLabel, b: &SystemLabel, event: EventId) -> Result<PairingTable> {
        if a == b {
            return Err(EngineError::SameSystem { event });
        }
        let basis_a = self.preferred_basis(a)?.clone();
        let basis_b = self.preferred_basis(b)?.clone();
        self.split(a, b, None, basis_a, basis_b, event, EventKind::Meet)
    }

    #[allow(clippy::too_many_arguments)]
    fn split(
        &mut self,
        sys1: &SystemLabel,
        sys2: &SystemLabel,
        u: Option<&Unitary>,
        basis1: Basis,
        basis2: Basis,
        event: EventId,
        kind: EventKind,
    ) -> Result<SplitTable> {
        let pairs = self.pairing(sys1, sys2, &event, kind == EventKind::Meet)?;
        let c1 = self.entry(sys1)?.classes.clone();
        let c2 = self.entry(sys2)?.classes.clone();
        let systems = vec![sys1.clone(), sys2.clone()];
        let mut rows = Vec::new();
        let mut new_classes: Vec<(History, f64, InternalMemory)> = Vec::new();
        for (i, j, mu) in pairs {
            let (a, b) = (&c1[i], &c2[j]);
            let history = a.history.merged(&b.history);
            let mut memory = synchronize(&a.memory, &b.memory)?;
            let xi = history_vectors(&history, &memory)?;
            if let Some(u) = u {
                memory.push_coupling(event.clone(), u.clone())?;
            }
            let psi = self.psi(&memory)?;
            let evolved = {
                let local = qmath::tensor(&[xi[sys1].clone(), xi[sys2].clone()])?;
                match u {
                    Some(u) => u.apply(&local)?,
                    None => local,
                }
            };
            let others: Vec<Ket> =
                xi.iter().filter(|(s, _)| *s != sys1 && *s != sys2).map(|(_, k)| k.clone()).collect();
            let mut coverage = 0.0;
            let mut futures = Vec::new();
            for x in 0..basis1.len() {
                for y in 0..basis2.len() {
                    let uv = qmath::tensor(&[basis1.ket(x), basis2.ket(y)])?;
                    let a_xy = qmath::inner(&uv, &evolved)?;
                    coverage += a_xy.norm_sqr();
                    if a_xy.norm() <= EPS_FUTURE {
                        continue;
                    }
                    let mut parts = vec![basis1.ket(x), basis2.ket(y)];
                    parts.extend(others.iter().cloned());
                    let bra = qmath::tensor(&parts)?;
                    let q = qmath::inner(&bra, &psi)?.norm_sqr();
                    futures.push((x, y, q));
                }
            }
            if (coverage - evolved.norm_sqr()).abs() > 1e-9 {
                return Err(EngineError::BasisIncomplete { event, history: history.key(), coverage });
            }
            let denom: f64 = futures.iter().map(|f| f.2).sum();
            if denom <= 0.0 || futures.is_empty() {
                return Err(EngineError::InconsistentHistory { event, history: history.key() });
            }
            for (x, y, q) in futures {
                let weight = q / denom;
                let mass = mu * weight;
                let record = record_for(&event, &systems, &[basis1.clone(), basis2.clone()], &[x, y]);
                let new_history = history.pushed(record);
                rows.push(TableRow {
                    priors: vec![a.key(), b.key()],
                    prior_mass: mu,
                    outcomes: vec![basis1.label(x).to_string(), basis2.label(y).to_string()],
                    weight,
                    mass,
                    history: new_history.key(),
                });
                if mass > PRUNE_MASS {
                    new_classes.push((new_history, mass, memory.clone()));
                }
            }
        }
        for (s, b) in [(sys1, basis1), (sys2, basis2)] {
            let e = self.systems.get_mut(s).expect("checked");
            e.basis = b;
            e.classes = new_classes
                .iter()
                .map(|(h, m, mem)| LifeClass { system: s.clone(), history: h.clone(), mass: *m, memory: mem.clone() })
                .collect();
        }
        Ok(EventTable { event, kind, systems, rows })
    }

    /// Joint prior masses for every compatible class pair with nonzero weight.
    /// At a meeting whose Born pairing would move mass between the outcome
    /// labels of either side, every group is refitted to keep its class masses.
    fn pairing(
        &mut self,
        sys1: &SystemLabel,
        sys2: &SystemLabel,
        event: &EventId,
        meeting: bool,
    ) -> Result<Vec<(usize, usize, f64)>> {
        let c1 = self.entry(sys1)?.classes.clone();
        let c2 = self.entry(sys2)?.classes.clone();
        if c1.is_empty() {
            return Err(EngineError::NoClasses(sys1.clone()));
        }
        if c2.is_empty() {
            return Err(EngineError::NoClasses(sys2.clone()));
        }
        let (n1, n2) = (c1.len(), c2.len());
        let mut uf = UnionFind::new(n1 + n2);
        let mut edges = Vec::new();
        for (i, a) in c1.iter().enumerate() {
            for (j, b) in c2.iter().enumerate() {
                if compatible(a, b) {
                    uf.union(i, n1 + j);
                    edges.push((i, j));
                }
            }
        }
        for (i, a) in c1.iter().enumerate() {
            if !edges.iter().any(|e| e.0 == i) {
                return Err(EngineError::SideMassMismatch { event: event.clone(), group: i, left: a.mass, right: 0.0 });
            }
        }
        for (j, b) in c2.iter().enumerate() {
            if !edges.iter().any(|e| e.1 == j) {
                return Err(EngineError::SideMassMismatch { event: event.clone(), group: j, left: 0.0, right: b.mass });
            }
        }
        let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for &(i, j) in &edges {
            groups.entry(uf.find(i)).or_default().push((i, j));
        }
        let mut out = Vec::new();
        let mut weighted: Vec<(Vec<(usize, usize)>, Vec<f64>)> = Vec::new();
        for (g, (_, pairs)) in groups.into_iter().enumerate() {
            let left: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
            let right: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
            let ml: f64 = left.iter().map(|&i| c1[i].mass).sum();
            let mr: f64 = right.iter().map(|&j| c2[j].mass).sum();
            if (ml - mr).abs() > SIDE_MASS_TOL {
                return Err(EngineError::SideMassMismatch { event: event.clone(), group: g, left: ml, right: mr });
            }
            if left.len() == 1 {
                let mus = pairs.iter().map(|&(_, j)| c2[j].mass).collect();
                weighted.push((pairs, mus));
                continue;
            }
            if right.len() == 1 {
                let mus = pairs.iter().map(|&(i, _)| c1[i].mass).collect();
                weighted.push((pairs, mus));
                continue;
            }
            let mut qs = Vec::with_capacity(pairs.len());
            for &(i, j) in &pairs {
                let history = c1[i].history.merged(&c2[j].history);
                let memory = synchronize(&c1[i].memory, &c2[j].memory)?;
                let xi = history_vectors(&history, &memory)?;
                let psi = self.psi(&memory)?;
                let bra = qmath::tensor(&xi.into_values().collect::<Vec<_>>())?;
                qs.push(qmath::inner(&bra, &psi)?.norm_sqr());
            }
            let total: f64 = qs.iter().sum();
            if total <= 0.0 {
                let key = c1[pairs[0].0].key();
                return Err(EngineError::InconsistentHistory { event: event.clone(), history: key });
            }
            let mus: Vec<f64> = qs.iter().map(|q| ml * q / total).collect();
            weighted.push((pairs, mus));
        }
        let all_pairs: Vec<(usize, usize)> = weighted.iter().flat_map(|(p, _)| p.iter().copied()).collect();
        let all_mus: Vec<f64> = weighted.iter().flat_map(|(_, m)| m.iter().copied()).collect();
        let refit = meeting && !keeps_labels(&all_pairs, &all_mus, &c1, &c2);
        for (pairs, mut mus) in weighted {
            if refit {
                if let Some(fit) = fit_to_sides(&pairs, &mus, &c1, &c2) {
                    mus = fit;
                }
            }
            for (&(i, j), mu) in pairs.iter().zip(mus) {
                if mu > PRUNE_MASS {
                    out.push((i, j, mu));
                }
            }
        }
        Ok(out)
    }

    /// Outcome distribution of `sys` in `basis`. In the preferred basis this
    /// sums class masses by latest outcome; otherwise it averages each
    /// class's reduced relative state.
    pub fn reduced_distribution(&mut self, sys: &SystemLabel, basis: &Basis) -> Result<BTreeMap<String, f64>> {
        let e = self.entry(sys)?.clone();
        let mut out: BTreeMap<String, f64> = basis.labels().iter().map(|l| (l.clone(), 0.0)).collect();
        let preferred = e.basis.approx_eq(basis, 1e-12)
            && e.classes.iter().all(|c| c.latest_label().is_some() && !rotated_after_record(c));
        if preferred {
            for c in &e.classes {
                *out.get_mut(c.latest_label().expect("checked")).expect("label in basis") += c.mass;
            }
            return Ok(out);
        }
        for c in &e.classes {
            let psi = self.psi(&c.memory)?;
            let rho = qmath::partial_trace(&psi, std::slice::from_ref(sys))?;
            for (i, l) in basis.labels().iter().enumerate() {
                *out.get_mut(l).expect("label in basis") += c.mass * rho.expectation(&basis.ket(i))?;
            }
        }
        Ok(out)
    }
}

/// Pair masses leave the per-label totals of both sides unchanged.
/// Classes outside `pairs` are ignored.
fn keeps_labels(pairs: &[(usize, usize)], mus: &[f64], c1: &[LifeClass], c2: &[LifeClass]) -> bool {
    let side = |classes: &[LifeClass], pick: &dyn Fn(&(usize, usize)) -> usize| {
        let mut before: BTreeMap<&str, f64> = BTreeMap::new();
        let mut after: BTreeMap<&str, f64> = BTreeMap::new();
        let members: BTreeSet<usize> = pairs.iter().map(pick).collect();
        for &k in &members {
            *before.entry(classes[k].latest_label().unwrap_or("")).or_default() += classes[k].mass;
        }
        for (p, mu) in pairs.iter().zip(mus) {
            *after.entry(classes[pick(p)].latest_label().unwrap_or("")).or_default() += mu;
        }
        before.iter().all(|(l, m)| (m - after.get(l).copied().unwrap_or(0.0)).abs() <= SIDE_MASS_TOL)
    };
    side(c1, &|p| p.0) && side(c2, &|p| p.1)
}

/// Iterative proportional fitting of the pair masses to the class masses
/// of both sides. `None` when the support admits no such coupling.
fn fit_to_sides(pairs: &[(usize, usize)], mus: &[f64], c1: &[LifeClass], c2: &[LifeClass]) -> Option<Vec<f64>> {
    let mut m = mus.to_vec();
    for _ in 0..100_000 {
        for (pick, classes) in [(0usize, c1), (1, c2)] {
            let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
            for (p, mu) in pairs.iter().zip(&m) {
                *sums.entry(if pick == 0 { p.0 } else { p.1 }).or_default() += mu;
            }
            for (p, mu) in pairs.iter().zip(m.iter_mut()) {
                let k = if pick == 0 { p.0 } else { p.1 };
                if sums[&k] > 0.0 {
                    *mu *= classes[k].mass / sums[&k];
                }
            }
        }
        let worst = [(0usize, c1), (1, c2)]
            .iter()
            .flat_map(|(pick, classes)| {
                let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
                for (p, mu) in pairs.iter().zip(&m) {
                    *sums.entry(if *pick == 0 { p.0 } else { p.1 }).or_default() += mu;
                }
                sums.into_iter().map(|(k, s)| (s - classes[k].mass).abs()).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max);
        if worst <= 1e-15 {
            return Some(m);
        }
    }
    None
}

fn rotated_after_record(c: &LifeClass) -> bool {
    let last = c.history.latest_for(&c.system).map(|r| r.event.clone());
    c.memory.couplings.iter().any(|k| {
        k.unitary.space().len() == 1 && k.unitary.space().contains(&c.system) && Some(&k.event) > last.as_ref()
    })
}

/// `|ξ^h⟩` factors: for each system in the memory, its latest outcome vector
/// in `h` (or its initial ket) evolved by later single-system couplings.
fn history_vectors(h: &History, m: &InternalMemory) -> Result<BTreeMap<SystemLabel, Ket>> {
    let mut out = BTreeMap::new();
    for s in m.systems() {
        let (mut ket, after) = match h.latest_for(&s) {
            Some(r) => {
                let o = &r.outcomes[&s];
                (Ket::on(s.clone(), o.vector.clone())?, Some(r.event.clone()))
            }
            None => {
                let init = m.initial_for(&s).expect("system listed from initial states");
                if init.ket.space().len() != 1 {
                    return Err(EngineError::NoHistoryVector(s));
                }
                (init.ket.clone(), None)
            }
        };
        for c in &m.couplings {
            let sp = c.unitary.space();
            if sp.len() == 1 && sp.contains(&s) && after.as_ref().is_none_or(|e| &c.event > e) {
                ket = c.unitary.apply(&ket)?;
            }
        }
        out.insert(s, ket);
    }
    Ok(out)
}

fn record_for(event: &EventId, systems: &[SystemLabel], bases: &[Basis], digits: &[usize]) -> OutcomeRecord {
    let outcomes = systems
        .iter()
        .zip(bases)
        .zip(digits)
        .map(|((s, b), &i)| {
            (s.clone(), Outcome { label: b.label(i).to_string(), index: i, vector: b.vector(i).to_vec() })
        })
        .collect();
    OutcomeRecord { event: event.clone(), outcomes }
}

fn multi_indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &d in dims {
        out = out.into_iter().flat_map(|p| (0..d).map(move |i| [p.clone(), vec![i]].concat())).collect();
    }
    out
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Exact integer allocation of `n` lives to the given masses.
pub fn census<'a>(masses: impl IntoIterator<Item = (&'a str, f64)>, n: u64) -> Result<BTreeMap<String, u64>> {
    let mut out = BTreeMap::new();
    for (key, mass) in masses {
        let exact = mass * n as f64;
        let count = exact.round();
        if (exact - count).abs() > 1e-9 {
            return Err(EngineError::NotRepresentable { history: key.to_string(), mass, n });
        }
        if count > 0.0 {
            *out.entry(key.to_string()).or_insert(0) += count as u64;
        }
    }
    Ok(out)
}

/// Lives per history class of `sys` out of `n`.
pub fn finite_census(state: &SimState, sys: &SystemLabel, n: u64) -> Result<BTreeMap<String, u64>> {
    let classes = state.classes(sys)?;
    let keys: Vec<String> = classes.iter().map(LifeClass::key).collect();
    census(keys.iter().map(String::as_str).zip(classes.iter().map(|c| c.mass)), n)
}

/// One life's experience of a run: the records it lands in, event by event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledStep {
    pub event: EventId,
    pub systems: Vec<SystemLabel>,
    pub outcomes: Vec<String>,
    pub history: String,
}

/// Follows a life of one system through a sequence of event tables,
/// choosing each future with its conditional weight.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    tables: &'a [EventTable],
    viewpoint: SystemLabel,
}

impl<'a> Sampler<'a> {
    pub fn new(tables: &'a [EventTable], viewpoint: SystemLabel) -> Self {
        Sampler { tables, viewpoint }
    }

    pub fn sample_seeded(&self, seed: u64) -> Result<Vec<SampledStep>> {
        self.sample(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<SampledStep>> {
        let mut current = String::new();
        let mut steps = Vec::new();
        for t in self.tables {
            let Some(side) = t.involves(&self.viewpoint) else { continue };
            let rows: Vec<&TableRow> = t.rows.iter().filter(|r| r.priors[side] == current && r.mass > 0.0).collect();
            let total: f64 = rows.iter().map(|r| r.mass).sum();
            if rows.is_empty() || total <= 0.0 {
                return Err(EngineError::Stranded { event: t.event.clone(), history: current });
            }
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = rows[rows.len() - 1];
            for r in &rows {
                if pick < r.mass {
                    chosen = r;
                    break;
                }
                pick -= r.mass;
            }
            current = chosen.history.clone();
            steps.push(SampledStep {
                event: t.event.clone(),
                systems: t.systems.clone(),
                outcomes: chosen.outcomes.clone(),
                history: current.clone(),
            });
        }
        Ok(steps)
    }
}

#[cfg(test)]
mod tests;
