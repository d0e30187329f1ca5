use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Action, Result, Scenario, ScenarioError};
use crate::engine::{self, EngineError, EventKind, EventTable, SampledStep, Sampler, SimState};
use crate::oracle;
use crate::qmath::{self, Basis, Ket, SystemLabel};

pub const REPORT_SCHEMA: &str = "pl-report/1";
pub const CHECK_TOL: f64 = 1e-9;

/// One engine-versus-oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// False for `pairing:` diagnostics and for checks listed under
    /// `known_deviations`.
    pub enforced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub system: SystemLabel,
    pub history: String,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCensus {
    pub event: String,
    pub lives: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<BTreeMap<String, u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub scenario: String,
    pub order: Vec<String>,
    pub tables: Vec<EventTable>,
    pub classes: Vec<ClassSummary>,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub censuses: Vec<TableCensus>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RunReport {
    /// Every enforced check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.enforced)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.enforced && !c.passed).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, tag: &str) -> Option<&EventTable> {
        self.tables.iter().find(|t| t.event.tag == tag)
    }

    pub fn classes_of(&self, sys: &str) -> Vec<&ClassSummary> {
        self.classes.iter().filter(|c| c.system.as_str() == sys).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Integer lives per row (splits) or per outcome pair (meetings).
    pub fn censuses(&self, n: u64) -> Vec<TableCensus> {
        self.tables.iter().map(|t| table_census(t, n)).collect()
    }
}

fn table_census(t: &EventTable, n: u64) -> TableCensus {
    let result = if t.kind == EventKind::Meet {
        let marg: Vec<(String, f64)> = t.label_marginal().into_iter().map(|(k, m)| (k.join(","), m)).collect();
        engine::census(marg.iter().map(|(k, m)| (k.as_str(), *m)), n)
    } else {
        engine::census(t.rows.iter().map(|r| (r.history.as_str(), r.mass)), n)
    };
    match result {
        Ok(counts) => TableCensus { event: t.event.tag.clone(), lives: n, counts: Some(counts), error: None },
        Err(e) => TableCensus { event: t.event.tag.clone(), lives: n, counts: None, error: Some(e.to_string()) },
    }
}

/// Engine state and universal state after a run.
#[derive(Debug, Clone)]
pub struct Execution {
    pub state: SimState,
    pub universal: Option<Ket>,
    pub report: RunReport,
}

impl Execution {
    /// Distribution of the latest labels of `systems` over the classes of
    /// `holder`, keeping only classes whose records match every
    /// `(system, label)` in `given`, renormalized.
    pub fn conditional_joint(
        &self,
        holder: &str,
        systems: &[&str],
        given: &[(&str, &str)],
    ) -> Result<BTreeMap<Vec<String>, f64>> {
        let holder = SystemLabel::new(holder);
        let classes = self
            .state
            .classes(&holder)
            .map_err(|e| ScenarioError::Engine { event: "<postselect>".into(), source: e })?;
        let mut out: BTreeMap<Vec<String>, f64> = BTreeMap::new();
        for c in classes {
            let matches = given.iter().all(|(s, l)| c.history.latest_label(&SystemLabel::new(*s)) == Some(*l));
            if !matches {
                continue;
            }
            let key = systems
                .iter()
                .map(|s| c.history.latest_label(&SystemLabel::new(*s)).unwrap_or("").to_string())
                .collect();
            *out.entry(key).or_insert(0.0) += c.mass;
        }
        let total: f64 = out.values().sum();
        if total <= 0.0 {
            return Err(ScenarioError::Invalid {
                event: "<postselect>".into(),
                message: "no lives match the condition".into(),
            });
        }
        out.values_mut().for_each(|m| *m /= total);
        Ok(out)
    }
}

pub fn run(scenario: &Scenario) -> Result<RunReport> {
    Ok(execute(scenario, &scenario.default_order()?)?.report)
}

pub fn run_with_order(scenario: &Scenario, tags: &[&str]) -> Result<RunReport> {
    Ok(execute(scenario, &scenario.order_from_tags(tags)?)?.report)
}

/// Follow one life of `viewpoint` through a finished run.
pub fn sample_run(
    report: &RunReport,
    viewpoint: &str,
    seed: u64,
) -> std::result::Result<Vec<SampledStep>, EngineError> {
    Sampler::new(&report.tables, SystemLabel::new(viewpoint)).sample_seeded(seed)
}

pub fn execute(scenario: &Scenario, order: &[usize]) -> Result<Execution> {
    let mut state = SimState::new();
    let mut universal: Option<Ket> = None;
    let setup = |e: EngineError| ScenarioError::Engine { event: "<setup>".into(), source: e };
    for s in &scenario.systems {
        match &s.initial {
            Some(k) => {
                state.add_system(k.clone(), s.basis.clone()).map_err(setup)?;
                universal = Some(join(universal, k)?);
            }
            None => state.declare(s.label.clone(), s.dim, s.basis.clone()).map_err(setup)?,
        }
    }

    let mut tables = Vec::new();
    let mut checks = Vec::new();
    for &i in order {
        let ev = &scenario.events[i];
        let tag = ev.id.tag.clone();
        let eng = |e: EngineError| ScenarioError::Engine { event: tag.clone(), source: e };
        let priors: Vec<BTreeMap<String, f64>> = ev
            .participants
            .iter()
            .map(|p| state.classes(p).map(|cs| cs.iter().map(|c| (c.key(), c.mass)).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(eng)?;
        let table = match &ev.action {
            Action::Prepare { ket, bases } => {
                let t = state.prepare(ev.id.clone(), ket.clone(), bases.clone()).map_err(eng)?;
                universal = Some(join(universal, ket)?);
                Some(t)
            }
            Action::Local { unitary } => {
                state.local_unitary(ev.id.clone(), unitary.clone()).map_err(eng)?;
                universal = Some(evolve(universal, unitary, &tag)?);
                None
            }
            Action::Interact { unitary, bases, kind } => {
                let [b1, b2] = bases.clone();
                let (s1, s2) = (&ev.participants[0], &ev.participants[1]);
                let t = state.interact(s1, s2, unitary, b1, b2, ev.id.clone(), *kind).map_err(eng)?;
                universal = Some(evolve(universal, unitary, &tag)?);
                Some(t)
            }
            Action::Meet => {
                let (s1, s2) = (&ev.participants[0], &ev.participants[1]);
                Some(state.meet(s1, s2, ev.id.clone()).map_err(eng)?)
            }
        };
        let Some(table) = table else { continue };
        let psi = universal.as_ref().expect("a table implies prepared systems");
        let bases: Vec<Basis> = table
            .systems
            .iter()
            .map(|s| state.preferred_basis(s).cloned())
            .collect::<std::result::Result<_, _>>()
            .map_err(eng)?;
        let born = oracle::born_joint(psi, &bases)
            .map_err(|e| ScenarioError::Invalid { event: tag.clone(), message: format!("oracle: {e}") })?;
        let engine_joint = table.label_marginal();
        let deviation = born
            .probabilities
            .iter()
            .map(|(k, p)| (p - engine_joint.get(k).copied().unwrap_or(0.0)).abs())
            .chain(engine_joint.iter().map(|(k, m)| (m - born.probabilities.get(k).copied().unwrap_or(0.0)).abs()))
            .fold(0.0, f64::max);
        checks.push(check(scenario, format!("born:{tag}"), deviation));
        if table.kind != EventKind::Prepare {
            let deviation = priors
                .iter()
                .enumerate()
                .flat_map(|(side, prior)| {
                    let got = table.side_marginal(side);
                    prior.iter().map(move |(k, m)| (m - got.get(k).copied().unwrap_or(0.0)).abs()).collect::<Vec<_>>()
                })
                .fold(0.0, f64::max);
            checks.push(check(scenario, format!("pairing:{tag}"), deviation));
        }
        tables.push(table);
    }

    let mut classes = Vec::new();
    for s in &scenario.systems {
        let label = &s.label;
        let cs = state.classes(label).map_err(setup)?;
        if cs.is_empty() {
            continue;
        }
        let total: f64 = cs.iter().map(|c| c.mass).sum();
        classes.extend(cs.iter().map(|c| ClassSummary {
            system: label.clone(),
            history: c.history.key(),
            mass: c.mass,
        }));
        checks.push(check(scenario, format!("mass:{label}"), (total - 1.0).abs()));
        let basis = state.preferred_basis(label).map_err(setup)?.clone();
        let engine_dist = state.reduced_distribution(label, &basis).map_err(setup)?;
        let psi = universal.as_ref().expect("classes imply a universal state");
        let rho = qmath::partial_trace(psi, std::slice::from_ref(label))
            .map_err(|e| ScenarioError::Qmath { context: format!("system `{label}`"), source: e })?;
        let mut deviation: f64 = 0.0;
        for (i, l) in basis.labels().iter().enumerate() {
            let p = rho
                .expectation(&basis.ket(i))
                .map_err(|e| ScenarioError::Qmath { context: format!("system `{label}`"), source: e })?;
            deviation = deviation.max((p - engine_dist[l]).abs());
        }
        checks.push(check(scenario, format!("marginal:{label}"), deviation));
    }

    let mut report = RunReport {
        schema: REPORT_SCHEMA.into(),
        scenario: scenario.spec.name.clone(),
        order: order.iter().map(|&i| scenario.events[i].id.tag.clone()).collect(),
        tables,
        classes,
        checks,
        censuses: Vec::new(),
        notes: scenario.spec.notes.clone(),
    };
    if let Some(n) = scenario.spec.lives {
        report.censuses = report.censuses(n);
    }
    Ok(Execution { state, universal, report })
}

fn check(scenario: &Scenario, name: String, deviation: f64) -> Check {
    let enforced = !name.starts_with("pairing:") && !scenario.spec.known_deviations.contains(&name);
    Check { name, deviation, tolerance: CHECK_TOL, passed: deviation <= CHECK_TOL, enforced }
}

fn join(universal: Option<Ket>, k: &Ket) -> Result<Ket> {
    match universal {
        None => Ok(k.clone()),
        Some(u) => qmath::tensor(&[u, k.clone()])
            .map_err(|e| ScenarioError::Qmath { context: "universal state".into(), source: e }),
    }
}

fn evolve(universal: Option<Ket>, u: &qmath::Unitary, tag: &str) -> Result<Ket> {
    let psi = universal.ok_or_else(|| ScenarioError::Invalid {
        event: tag.into(),
        message: "coupling before any system has a state".into(),
    })?;
    u.apply(&psi).map_err(|e| ScenarioError::Qmath { context: format!("event `{tag}`"), source: e })
}
