use serde::{Deserialize, Serialize};

use super::{run::Check, Result, RunReport, ScenarioError, CATALOG};

/// Expected row masses of one event, as integers over a common denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenEvent {
    pub event: String,
    pub denominator: u64,
    pub masses: Vec<u64>,
}

impl GoldenEvent {
    pub fn values(&self) -> Vec<f64> {
        self.masses.iter().map(|&m| m as f64 / self.denominator as f64).collect()
    }
}

/// Expected tables for a catalog scenario. Scenarios without exact rational
/// tables have no events and rely on the oracle checks of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Golden {
    pub scenario: String,
    /// `published`, `derived` or `oracle`.
    pub source: String,
    pub tolerance: f64,
    pub events: Vec<GoldenEvent>,
    #[serde(default)]
    pub notes: Vec<String>,
}

fn data(name: &str) -> Option<&'static str> {
    Some(match name {
        "example1" => include_str!("../../golden/example1.json"),
        "example2" => include_str!("../../golden/example2.json"),
        "example3" => include_str!("../../golden/example3.json"),
        "classical_observer_hadamard" => include_str!("../../golden/classical_observer_hadamard.json"),
        "ballistic_scatter" => include_str!("../../golden/ballistic_scatter.json"),
        "neutron_superposed_target" => include_str!("../../golden/neutron_superposed_target.json"),
        "wigner_mermin" => include_str!("../../golden/wigner_mermin.json"),
        _ => return None,
    })
}

pub fn expected_tables(name: &str) -> Result<Golden> {
    if !CATALOG.contains(&name) {
        return Err(ScenarioError::UnknownScenario(name.to_string()));
    }
    match data(name) {
        Some(text) => serde_json::from_str(text).map_err(|e| ScenarioError::Json(format!("golden `{name}`: {e}"))),
        None => Ok(Golden {
            scenario: name.to_string(),
            source: "oracle".into(),
            tolerance: super::run::CHECK_TOL,
            events: Vec::new(),
            notes: Vec::new(),
        }),
    }
}

/// One `golden:<event>` check per expected event, comparing rows in order.
pub fn check_golden(report: &RunReport, golden: &Golden) -> Vec<Check> {
    golden
        .events
        .iter()
        .map(|g| {
            let deviation = match report.table(&g.event) {
                Some(t) if t.rows.len() == g.masses.len() => {
                    t.masses().iter().zip(g.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
                }
                _ => f64::INFINITY,
            };
            Check {
                name: format!("golden:{}", g.event),
                deviation,
                tolerance: golden.tolerance,
                passed: deviation <= golden.tolerance,
                enforced: true,
            }
        })
        .collect()
}
