//! Declarative scenarios: systems, events and causal edges, plus the
//! built-in catalog and expected tables.
//!
//! Scenario files are UTF-8 JSON with schema tag `"pl-scenario/1"`.
//! Complex numbers are written as `[re, im]` pairs.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, EventId, EventKind};
use crate::qmath::{self, Basis, Ket, QmathError, Space, SystemLabel, Unitary, C64};

mod catalog;
mod golden;
mod random;
mod run;

pub use catalog::*;
pub use golden::{check_golden, expected_tables, Golden, GoldenEvent};
pub use random::{random_scenario, random_unitary, RandomShape};
pub use run::{
    execute, run, run_with_order, sample_run, Check, ClassSummary, Execution, RunReport, TableCensus, CHECK_TOL,
    REPORT_SCHEMA,
};

pub const SCHEMA: &str = "pl-scenario/1";

pub type Complex = [f64; 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario JSON: {0}")]
    Json(String),
    #[error("unsupported schema `{0}`, expected `{SCHEMA}`")]
    Schema(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("no expected tables for `{0}`")]
    NoGolden(String),
    #[error("system `{0}` declared twice")]
    DuplicateSystem(String),
    #[error("event `{0}` declared twice")]
    DuplicateEvent(String),
    #[error("event `{event}` refers to unknown system `{system}`")]
    UnknownSystem { event: String, system: String },
    #[error("edge refers to unknown event `{0}`")]
    UnknownEvent(String),
    #[error("causal edges contain a cycle")]
    Cycle,
    #[error("edge `{from}` -> `{to}` does not increase the ordinal")]
    OrdinalOrder { from: String, to: String },
    #[error("events `{a}` and `{b}` both touch `{system}` with the same ordinal")]
    SharedOrdinal { a: String, b: String, system: String },
    #[error("event `{event}`: {message}")]
    Invalid { event: String, message: String },
    #[error("{context}: {source}")]
    Qmath { context: String, source: QmathError },
    #[error("event `{event}`: {source}")]
    Engine { event: String, source: EngineError },
    #[error("invalid event order: {0}")]
    BadOrder(String),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub schema: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub systems: Vec<SystemSpec>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    /// Extra causal edges `[before, after]` by event tag.
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    /// System whose lives the sampler follows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<String>,
    /// Default number of lives for finite censuses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lives: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Names of report checks that are computed but not enforced.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub known_deviations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub id: String,
    pub dim: usize,
    /// Initial amplitudes. Systems without one receive lives from a `prepare` event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<Complex>>,
    /// Initial preferred basis; computational when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub tag: String,
    pub ordinal: u32,
    pub participants: Vec<String>,
    #[serde(flatten)]
    pub action: ActionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpec {
    /// Joint state of the participants, with their preferred bases.
    Prepare {
        state: Vec<Complex>,
        #[serde(default)]
        bases: BTreeMap<String, BasisSpec>,
    },
    /// One participant: local unitary. Two: interaction with new bases
    /// (current preferred bases when omitted).
    Couple {
        unitary: UnitarySpec,
        #[serde(default)]
        bases: BTreeMap<String, BasisSpec>,
    },
    /// `[system, apparatus]`: von Neumann measurement in `basis`.
    Measure {
        basis: BasisSpec,
        #[serde(default)]
        ready: usize,
    },
    Meet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSpec {
    Computational {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
    },
    Angle {
        theta: f64,
    },
    PlusMinus,
    Explicit {
        vectors: Vec<Vec<Complex>>,
        labels: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UnitarySpec {
    Identity,
    Hadamard,
    /// Rows of a square matrix on the participants, in participant order.
    Matrix {
        matrix: Vec<Vec<Complex>>,
    },
}

impl BasisSpec {
    pub fn computational() -> Self {
        BasisSpec::Computational { labels: None }
    }

    pub fn labeled(labels: &[&str]) -> Self {
        BasisSpec::Computational { labels: Some(labels.iter().map(|s| s.to_string()).collect()) }
    }

    pub fn real(vectors: &[&[f64]], labels: &[&str]) -> Self {
        BasisSpec::Explicit {
            vectors: vectors.iter().map(|v| v.iter().map(|&x| [x, 0.0]).collect()).collect(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn build(&self, system: &SystemLabel, dim: usize) -> std::result::Result<Basis, QmathError> {
        match self {
            BasisSpec::Computational { labels: None } => Ok(Basis::computational(system.clone(), dim)),
            BasisSpec::Computational { labels: Some(l) } => {
                if l.len() != dim {
                    return Err(QmathError::LabelCount { vectors: dim, labels: l.len() });
                }
                Basis::new(
                    system.clone(),
                    dim,
                    (0..dim)
                        .map(|i| (0..dim).map(|j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
                        .collect(),
                    l.clone(),
                )
            }
            BasisSpec::Angle { theta } => {
                check_dim(dim, 2)?;
                Ok(Basis::angle(system.clone(), *theta))
            }
            BasisSpec::PlusMinus => {
                check_dim(dim, 2)?;
                Ok(Basis::plus_minus(system.clone()))
            }
            BasisSpec::Explicit { vectors, labels } => {
                Basis::new(system.clone(), dim, vectors.iter().map(|v| to_c64(v)).collect(), labels.clone())
            }
        }
    }
}

impl UnitarySpec {
    pub fn real(rows: &[&[f64]]) -> Self {
        UnitarySpec::Matrix { matrix: rows.iter().map(|r| r.iter().map(|&x| [x, 0.0]).collect()).collect() }
    }

    pub fn build(&self, space: Space) -> std::result::Result<Unitary, QmathError> {
        match self {
            UnitarySpec::Identity => Ok(Unitary::identity(space)),
            UnitarySpec::Hadamard => {
                let [(label, dim)] = space.systems() else {
                    return Err(QmathError::DimensionMismatch { expected: 1, got: space.len() });
                };
                check_dim(*dim, 2)?;
                Ok(Unitary::hadamard(label.clone()))
            }
            UnitarySpec::Matrix { matrix } => {
                let d = space.dim();
                if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                    return Err(QmathError::DimensionMismatch { expected: d, got: matrix.len() });
                }
                Unitary::new(space, matrix.iter().flat_map(|r| to_c64(r)).collect())
            }
        }
    }
}

fn check_dim(dim: usize, expected: usize) -> std::result::Result<(), QmathError> {
    if dim != expected {
        return Err(QmathError::DimensionMismatch { expected, got: dim });
    }
    Ok(())
}

pub fn to_c64(v: &[Complex]) -> Vec<C64> {
    v.iter().map(|[re, im]| C64::new(*re, *im)).collect()
}

pub fn from_c64(v: &[C64]) -> Vec<Complex> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))?;
        if spec.schema != SCHEMA {
            return Err(ScenarioError::Schema(spec.schema));
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn event(&self, tag: &str) -> Option<&EventSpec> {
        self.events.iter().find(|e| e.tag == tag)
    }

    /// Same scenario without the named events (and edges touching them).
    pub fn without_events(&self, tags: &[&str]) -> ScenarioSpec {
        let mut out = self.clone();
        out.events.retain(|e| !tags.contains(&e.tag.as_str()));
        out.edges.retain(|(a, b)| !tags.contains(&a.as_str()) && !tags.contains(&b.as_str()));
        out
    }

    pub fn compile(&self) -> Result<Scenario> {
        Scenario::new(self.clone())
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Action {
    Prepare { ket: Ket, bases: Vec<Basis> },
    Local { unitary: Unitary },
    Interact { unitary: Unitary, bases: [Basis; 2], kind: EventKind },
    Meet,
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledEvent {
    pub id: EventId,
    pub participants: Vec<SystemLabel>,
    pub action: Action,
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledSystem {
    pub label: SystemLabel,
    pub dim: usize,
    pub initial: Option<Ket>,
    pub basis: Basis,
}

/// A validated scenario with resolved kets, bases and unitaries.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub(crate) systems: Vec<CompiledSystem>,
    pub(crate) events: Vec<CompiledEvent>,
    /// Predecessor lists, indexed like `events`.
    preds: Vec<BTreeSet<usize>>,
}

impl Scenario {
    pub fn new(spec: ScenarioSpec) -> Result<Self> {
        if spec.schema != SCHEMA {
            return Err(ScenarioError::Schema(spec.schema.clone()));
        }
        let mut dims: BTreeMap<String, usize> = BTreeMap::new();
        let mut systems = Vec::new();
        for s in &spec.systems {
            if dims.insert(s.id.clone(), s.dim).is_some() {
                return Err(ScenarioError::DuplicateSystem(s.id.clone()));
            }
            let label = SystemLabel::new(&s.id);
            let ctx = || format!("system `{}`", s.id);
            let basis = s
                .basis
                .clone()
                .unwrap_or_else(BasisSpec::computational)
                .build(&label, s.dim)
                .map_err(|e| ScenarioError::Qmath { context: ctx(), source: e })?;
            let initial = match &s.initial {
                None => None,
                Some(amps) => {
                    let k = Ket::new(Space::single(label.clone(), s.dim), to_c64(amps))
                        .map_err(|e| ScenarioError::Qmath { context: ctx(), source: e })?;
                    if !k.is_normalized() {
                        return Err(ScenarioError::Invalid {
                            event: s.id.clone(),
                            message: format!("initial state has norm² {}", k.norm_sqr()),
                        });
                    }
                    Some(k)
                }
            };
            systems.push(CompiledSystem { label, dim: s.dim, initial, basis });
        }

        let mut tags = BTreeMap::new();
        let mut events = Vec::new();
        for (idx, e) in spec.events.iter().enumerate() {
            if tags.insert(e.tag.clone(), idx).is_some() {
                return Err(ScenarioError::DuplicateEvent(e.tag.clone()));
            }
            events.push(compile_event(e, &dims)?);
        }

        let n = events.len();
        let mut preds: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for (a, b) in &spec.edges {
            let ia = *tags.get(a).ok_or_else(|| ScenarioError::UnknownEvent(a.clone()))?;
            let ib = *tags.get(b).ok_or_else(|| ScenarioError::UnknownEvent(b.clone()))?;
            if events[ia].id.ordinal >= events[ib].id.ordinal {
                return Err(ScenarioError::OrdinalOrder { from: a.clone(), to: b.clone() });
            }
            preds[ib].insert(ia);
        }
        let mut by_system: BTreeMap<&SystemLabel, Vec<usize>> = BTreeMap::new();
        for (i, e) in events.iter().enumerate() {
            for p in &e.participants {
                by_system.entry(p).or_default().push(i);
            }
        }
        for (sys, list) in by_system {
            let mut list = list;
            list.sort_by_key(|&i| events[i].id.ordinal);
            for w in list.windows(2) {
                let (a, b) = (&events[w[0]], &events[w[1]]);
                if a.id.ordinal == b.id.ordinal {
                    return Err(ScenarioError::SharedOrdinal {
                        a: a.id.tag.clone(),
                        b: b.id.tag.clone(),
                        system: sys.to_string(),
                    });
                }
                preds[w[1]].insert(w[0]);
            }
        }
        let scenario = Scenario { spec, systems, events, preds };
        scenario.default_order()?;
        Ok(scenario)
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn event_tags(&self) -> Vec<&str> {
        self.events.iter().map(|e| e.id.tag.as_str()).collect()
    }

    /// Topological order, smallest `(ordinal, tag)` first among ready events.
    pub fn default_order(&self) -> Result<Vec<usize>> {
        let n = self.events.len();
        let mut indeg: Vec<usize> = self.preds.iter().map(BTreeSet::len).collect();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (b, ps) in self.preds.iter().enumerate() {
            for &a in ps {
                succ[a].push(b);
            }
        }
        let mut ready: BinaryHeap<Reverse<(EventId, usize)>> =
            (0..n).filter(|&i| indeg[i] == 0).map(|i| Reverse((self.events[i].id.clone(), i))).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse((_, i))) = ready.pop() {
            order.push(i);
            for &j in &succ[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push(Reverse((self.events[j].id.clone(), j)));
                }
            }
        }
        if order.len() != n {
            return Err(ScenarioError::Cycle);
        }
        Ok(order)
    }

    /// Resolve tags to indices and check the order respects every edge.
    pub fn order_from_tags(&self, tags: &[&str]) -> Result<Vec<usize>> {
        let mut order = Vec::with_capacity(tags.len());
        for t in tags {
            let i = self
                .events
                .iter()
                .position(|e| e.id.tag == *t)
                .ok_or_else(|| ScenarioError::BadOrder(format!("unknown event `{t}`")))?;
            if order.contains(&i) {
                return Err(ScenarioError::BadOrder(format!("`{t}` listed twice")));
            }
            order.push(i);
        }
        if order.len() != self.events.len() {
            return Err(ScenarioError::BadOrder("not every event is listed".into()));
        }
        for (pos, &i) in order.iter().enumerate() {
            for p in &self.preds[i] {
                if !order[..pos].contains(p) {
                    return Err(ScenarioError::BadOrder(format!(
                        "`{}` must come after `{}`",
                        self.events[i].id.tag, self.events[*p].id.tag
                    )));
                }
            }
        }
        Ok(order)
    }

    /// Every valid topological order (for small scenarios).
    pub fn all_orders(&self, limit: usize) -> Vec<Vec<usize>> {
        fn go(s: &Scenario, done: &mut Vec<usize>, out: &mut Vec<Vec<usize>>, limit: usize) {
            if out.len() >= limit {
                return;
            }
            if done.len() == s.events.len() {
                out.push(done.clone());
                return;
            }
            for i in 0..s.events.len() {
                if !done.contains(&i) && s.preds[i].iter().all(|p| done.contains(p)) {
                    done.push(i);
                    go(s, done, out, limit);
                    done.pop();
                }
            }
        }
        let mut out = Vec::new();
        go(self, &mut Vec::new(), &mut out, limit);
        out
    }
}

fn compile_event(e: &EventSpec, dims: &BTreeMap<String, usize>) -> Result<CompiledEvent> {
    let tag = e.tag.clone();
    let invalid = |message: String| ScenarioError::Invalid { event: tag.clone(), message };
    let q = |source: QmathError| ScenarioError::Qmath { context: format!("event `{}`", e.tag), source };
    let mut labels = Vec::new();
    for p in &e.participants {
        if !dims.contains_key(p) {
            return Err(ScenarioError::UnknownSystem { event: e.tag.clone(), system: p.clone() });
        }
        let l = SystemLabel::new(p);
        if labels.contains(&l) {
            return Err(invalid(format!("participant `{p}` listed twice")));
        }
        labels.push(l);
    }
    if labels.is_empty() {
        return Err(invalid("no participants".into()));
    }
    let space = Space::new(labels.iter().map(|l| (l.clone(), dims[l.as_str()])).collect()).map_err(q)?;
    let basis_for = |bases: &BTreeMap<String, BasisSpec>, l: &SystemLabel| -> Result<Option<Basis>> {
        bases.get(l.as_str()).map(|b| b.build(l, dims[l.as_str()]).map_err(q)).transpose()
    };
    let check_basis_keys = |bases: &BTreeMap<String, BasisSpec>| -> Result<()> {
        for k in bases.keys() {
            if !e.participants.contains(k) {
                return Err(invalid(format!("basis given for non-participant `{k}`")));
            }
        }
        Ok(())
    };
    let action = match &e.action {
        ActionSpec::Prepare { state, bases } => {
            check_basis_keys(bases)?;
            let ket = Ket::new(space.clone(), to_c64(state)).map_err(q)?;
            if !ket.is_normalized() {
                return Err(invalid(format!("prepared state has norm² {}", ket.norm_sqr())));
            }
            let bases = labels
                .iter()
                .map(|l| Ok(basis_for(bases, l)?.unwrap_or_else(|| Basis::computational(l.clone(), dims[l.as_str()]))))
                .collect::<Result<Vec<_>>>()?;
            Action::Prepare { ket, bases }
        }
        ActionSpec::Couple { unitary, bases } => {
            check_basis_keys(bases)?;
            let u = unitary.build(space.clone()).map_err(q)?;
            match labels.len() {
                1 => {
                    if !bases.is_empty() {
                        return Err(invalid("a local unitary does not change the preferred basis".into()));
                    }
                    Action::Local { unitary: u }
                }
                2 => {
                    let b0 = basis_for(bases, &labels[0])?;
                    let b1 = basis_for(bases, &labels[1])?;
                    match (b0, b1) {
                        (Some(b0), Some(b1)) => {
                            Action::Interact { unitary: u, bases: [b0, b1], kind: EventKind::Couple }
                        }
                        _ => return Err(invalid("an interaction needs a basis for both participants".into())),
                    }
                }
                n => return Err(invalid(format!("couple takes one or two participants, got {n}"))),
            }
        }
        ActionSpec::Measure { basis, ready } => {
            if labels.len() != 2 {
                return Err(invalid("measure takes [system, apparatus]".into()));
            }
            let (sys, app) = (&labels[0], &labels[1]);
            let b = basis.build(sys, dims[sys.as_str()]).map_err(q)?;
            let m = dims[app.as_str()];
            let u = qmath::measurement_coupling(&b, app.clone(), m, *ready).map_err(q)?;
            let pointer = qmath::pointer_basis(&b, app.clone(), m, *ready);
            Action::Interact { unitary: u, bases: [b, pointer], kind: EventKind::Measure }
        }
        ActionSpec::Meet => {
            if labels.len() != 2 {
                return Err(invalid("meet takes two participants".into()));
            }
            Action::Meet
        }
    };
    Ok(CompiledEvent { id: EventId::new(e.ordinal, e.tag.clone()), participants: labels, action })
}
