//! Classroom Bell exercise: students play lives of two qubits from a
//! singlet source. Each round Alice and Bob pick settings, the engine runs
//! the round at a finite number of lives, and a referee pairs students.

use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, EngineError, EventKind, EventTable};
use crate::oracle;
use crate::scenarios::{self, ScenarioError};

pub const SCHEMA: &str = "pl-exercise/1";
pub const DEFAULT_LIVES: u64 = 8;
pub const QUANTUM_P_SAME_GIVEN_DIFFERENT: f64 = 0.75;
const MAX_SEARCH_LIVES: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExerciseError {
    #[error(
        "{n} lives per system cannot be split exactly for every setting pair; the smallest valid number is {minimal}"
    )]
    NotRepresentable { n: u64, minimal: u64 },
    #[error("setting {0} is not one of 1, 2, 3")]
    BadSetting(u8),
    #[error("round {0} does not exist")]
    UnknownRound(usize),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

pub type Result<T> = std::result::Result<T, ExerciseError>;

/// One student's part in a round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentAssignment {
    pub student: usize,
    /// `qubit1/A` or `qubit2/B`.
    pub system: String,
    /// Source world, e.g. `q1=0,q2=1`.
    pub source: String,
    pub outcome: String,
    pub history: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub alice: usize,
    pub bob: usize,
    pub outcome_a: String,
    pub outcome_b: String,
    pub same: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Pairs respect each row of the pairing table.
    History,
    /// Per-history counts are fractional; pairs respect the outcome-pair counts.
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub index: usize,
    pub setting_a: u8,
    pub setting_b: u8,
    pub alice: Vec<StudentAssignment>,
    pub bob: Vec<StudentAssignment>,
    pub pairs: Vec<Pair>,
    pub matching: Matching,
    pub same: u64,
    pub different: u64,
    /// Engine pair counts per outcome pair `a,b`.
    pub pair_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TallyCell {
    pub setting_a: u8,
    pub setting_b: u8,
    pub same: u64,
    pub different: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies(pub Vec<TallyCell>);

impl Default for Tallies {
    fn default() -> Self {
        Tallies(
            (1..=3)
                .flat_map(|a| (1..=3).map(move |b| TallyCell { setting_a: a, setting_b: b, same: 0, different: 0 }))
                .collect(),
        )
    }
}

impl Tallies {
    pub fn from_rounds(rounds: &[RoundResult]) -> Self {
        let mut t = Tallies::default();
        for r in rounds {
            t.add(r);
        }
        t
    }

    pub fn add(&mut self, r: &RoundResult) {
        let cell = self.cell_mut(r.setting_a, r.setting_b);
        cell.same += r.same;
        cell.different += r.different;
    }

    fn cell_mut(&mut self, a: u8, b: u8) -> &mut TallyCell {
        self.0.iter_mut().find(|c| c.setting_a == a && c.setting_b == b).expect("settings validated")
    }

    /// `(same, total)` over different-setting pairs.
    pub fn different_settings(&self) -> (u64, u64) {
        self.0
            .iter()
            .filter(|c| c.setting_a != c.setting_b)
            .fold((0, 0), |(s, n), c| (s + c.same, n + c.same + c.different))
    }

    /// `(opposite, total)` over same-setting pairs.
    pub fn same_settings(&self) -> (u64, u64) {
        self.0
            .iter()
            .filter(|c| c.setting_a == c.setting_b)
            .fold((0, 0), |(o, n), c| (o + c.different, n + c.same + c.different))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub rounds: usize,
    pub tallies: Tallies,
    pub p_same_given_different: Option<f64>,
    pub p_opposite_given_same: Option<f64>,
    pub quantum_prediction: f64,
    pub lhv_bound: f64,
    /// 95% lower limit on `p_same_given_different` if the pairs were
    /// independent draws. Rounds are exact populations, so the verdict uses
    /// the conditional itself.
    pub lower_confidence: Option<f64>,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub schema: String,
    pub id: String,
    pub lives_per_system: u64,
    pub seed: u64,
    pub rounds: Vec<RoundResult>,
    pub tallies: Tallies,
}

/// True when every split and meeting of every setting pair has an exact
/// integer census at `n` lives.
pub fn representable(n: u64) -> bool {
    if n == 0 {
        return false;
    }
    (1..=3u8).all(|a| {
        (1..=3u8).all(|b| {
            let Ok(r) = round_report(a, b) else { return false };
            r.censuses(n).iter().all(|c| c.counts.is_some())
        })
    })
}

pub fn minimal_lives() -> u64 {
    (1..=MAX_SEARCH_LIVES).find(|&n| representable(n)).unwrap_or(MAX_SEARCH_LIVES)
}

fn round_report(a: u8, b: u8) -> Result<scenarios::RunReport> {
    static CACHE: OnceLock<Mutex<BTreeMap<(u8, u8), scenarios::RunReport>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().expect("cache lock").get(&(a, b)) {
        return Ok(r.clone());
    }
    let spec = scenarios::wigner_mermin_round(a, b);
    let report = scenarios::run(&spec.compile()?)?;
    cache.lock().expect("cache lock").insert((a, b), report.clone());
    Ok(report)
}

impl Session {
    pub fn new(id: impl Into<String>, lives_per_system: u64, seed: u64) -> Result<Self> {
        if !representable(lives_per_system) {
            return Err(ExerciseError::NotRepresentable { n: lives_per_system, minimal: minimal_lives() });
        }
        Ok(Session {
            schema: SCHEMA.into(),
            id: id.into(),
            lives_per_system,
            seed,
            rounds: Vec::new(),
            tallies: Tallies::default(),
        })
    }

    pub fn play_round(&mut self, setting_a: u8, setting_b: u8) -> Result<&RoundResult> {
        for s in [setting_a, setting_b] {
            if !(1..=3).contains(&s) {
                return Err(ExerciseError::BadSetting(s));
            }
        }
        let index = self.rounds.len();
        let round = play(self.lives_per_system, self.seed, index, setting_a, setting_b)?;
        self.tallies.add(&round);
        self.rounds.push(round);
        Ok(self.rounds.last().expect("just pushed"))
    }

    pub fn round(&self, index: usize) -> Result<&RoundResult> {
        self.rounds.get(index).ok_or(ExerciseError::UnknownRound(index))
    }

    pub fn summary(&self) -> Summary {
        let (same, diff_total) = self.tallies.different_settings();
        let (opp, same_total) = self.tallies.same_settings();
        let p = (diff_total > 0).then(|| same as f64 / diff_total as f64);
        let lower = p.map(|p| p - 1.96 * (p * (1.0 - p) / diff_total as f64).sqrt());
        let bound = oracle::lhv_bound_mermin();
        let verdict = match p {
            None => "insufficient data",
            Some(p) if p > bound => "violation",
            Some(_) => "no violation",
        };
        Summary {
            schema: SCHEMA.into(),
            rounds: self.rounds.len(),
            tallies: self.tallies.clone(),
            p_same_given_different: p,
            p_opposite_given_same: (same_total > 0).then(|| opp as f64 / same_total as f64),
            quantum_prediction: QUANTUM_P_SAME_GIVEN_DIFFERENT,
            lhv_bound: bound,
            lower_confidence: lower,
            verdict: verdict.into(),
        }
    }
}

struct Student {
    source: String,
    class: String,
    outcome: String,
}

/// Deal students to the rows of a split table in proportion to row masses,
/// within each prior class.
fn deal(students: &mut [Student], table: &EventTable, side: usize, n: u64, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in students.iter().enumerate() {
        by_class.entry(s.class.clone()).or_default().push(i);
    }
    let counts = engine::census(table.rows.iter().map(|r| (r.history.as_str(), r.mass)), n)?;
    for (class, mut members) in by_class {
        members.shuffle(rng);
        let mut it = members.into_iter();
        for row in table.rows.iter().filter(|r| r.priors[side] == class) {
            for _ in 0..counts.get(&row.history).copied().unwrap_or(0) {
                let i = it.next().expect("census matches class size");
                students[i].class = row.history.clone();
                students[i].outcome = row.outcomes[side].clone();
            }
        }
    }
    Ok(())
}

/// The per-history meeting census uses up every student of each class.
fn fits(meet: &EventTable, counts: &BTreeMap<String, u64>, alice: &[Student], bob: &[Student]) -> bool {
    let mut need: [BTreeMap<&str, u64>; 2] = Default::default();
    for r in &meet.rows {
        let c = counts.get(&r.history).copied().unwrap_or(0);
        for side in 0..2 {
            *need[side].entry(r.priors[side].as_str()).or_default() += c;
        }
    }
    need.iter_mut().for_each(|m| m.retain(|_, c| *c > 0));
    [alice, bob].iter().zip(&need).all(|(students, need)| {
        let mut have: BTreeMap<&str, u64> = BTreeMap::new();
        for s in students.iter() {
            *have.entry(s.class.as_str()).or_default() += 1;
        }
        have == *need
    })
}

fn play(n: u64, seed: u64, index: usize, setting_a: u8, setting_b: u8) -> Result<RoundResult> {
    let report = round_report(setting_a, setting_b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let table = |tag: &str| report.table(tag).expect("round has four events");
    let source = table("t1");
    let counts = engine::census(source.rows.iter().map(|r| (r.history.as_str(), r.mass)), n)?;
    let fresh = || -> Vec<Student> {
        source
            .rows
            .iter()
            .flat_map(|r| {
                let label = format!("q1={},q2={}", r.outcomes[0], r.outcomes[1]);
                (0..counts[&r.history]).map(move |_| Student {
                    source: label.clone(),
                    class: r.history.clone(),
                    outcome: String::new(),
                })
            })
            .collect()
    };
    let mut alice = fresh();
    let mut bob = fresh();
    deal(&mut alice, table("t2"), 0, n, &mut rng)?;
    deal(&mut bob, table("t3"), 0, n, &mut rng)?;

    let meet = table("t4");
    debug_assert_eq!(meet.kind, EventKind::Meet);
    let labels: Vec<(String, f64)> = meet.label_marginal().into_iter().map(|(k, m)| (k.join(","), m)).collect();
    let pair_counts = engine::census(labels.iter().map(|(k, m)| (k.as_str(), *m)), n)?;
    let per_history = engine::census(meet.rows.iter().map(|r| (r.history.as_str(), r.mass)), n)
        .ok()
        .filter(|c| fits(meet, c, &alice, &bob));

    // each pairing bucket lists (row key for Alice, row key for Bob, count)
    let (matching, buckets): (Matching, Vec<(String, String, u64)>) = match per_history {
        Some(c) => (
            Matching::History,
            meet.rows
                .iter()
                .map(|r| (r.priors[0].clone(), r.priors[1].clone(), c.get(&r.history).copied().unwrap_or(0)))
                .collect(),
        ),
        None => (
            Matching::Label,
            meet.label_marginal()
                .into_keys()
                .map(|k| {
                    let c = pair_counts.get(&k.join(",")).copied().unwrap_or(0);
                    (k[0].clone(), k[1].clone(), c)
                })
                .collect(),
        ),
    };
    let key = |s: &Student| match matching {
        Matching::History => s.class.clone(),
        Matching::Label => s.outcome.clone(),
    };
    let mut pools_a: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut pools_b: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in alice.iter().enumerate() {
        pools_a.entry(key(s)).or_default().push(i);
    }
    for (i, s) in bob.iter().enumerate() {
        pools_b.entry(key(s)).or_default().push(i);
    }
    for pool in pools_a.values_mut().chain(pools_b.values_mut()) {
        pool.shuffle(&mut rng);
    }
    let mut pairs = Vec::new();
    for (ka, kb, c) in buckets {
        for _ in 0..c {
            let a = pools_a.get_mut(&ka).and_then(Vec::pop).expect("pair counts match Alice's classes");
            let b = pools_b.get_mut(&kb).and_then(Vec::pop).expect("pair counts match Bob's classes");
            let (oa, ob) = (alice[a].outcome.clone(), bob[b].outcome.clone());
            pairs.push(Pair { alice: a, bob: b, same: oa == ob, outcome_a: oa, outcome_b: ob });
        }
    }
    pairs.sort_by_key(|p| p.alice);
    let same = pairs.iter().filter(|p| p.same).count() as u64;
    let assign = |v: &[Student], system: &str| -> Vec<StudentAssignment> {
        v.iter()
            .enumerate()
            .map(|(i, s)| StudentAssignment {
                student: i,
                system: system.into(),
                source: s.source.clone(),
                outcome: s.outcome.clone(),
                history: s.class.clone(),
            })
            .collect()
    };
    Ok(RoundResult {
        index,
        setting_a,
        setting_b,
        alice: assign(&alice, "qubit1/A"),
        bob: assign(&bob, "qubit2/B"),
        different: pairs.len() as u64 - same,
        same,
        pairs,
        matching,
        pair_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_lives_is_minimal() {
        assert_eq!(minimal_lives(), 8);
        assert!(representable(16));
        match Session::new("s", 6, 1) {
            Err(ExerciseError::NotRepresentable { n: 6, minimal: 8 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn source_worlds_hold_half_the_students() {
        let mut s = Session::new("s", 8, 3).unwrap();
        let r = s.play_round(1, 1).unwrap();
        let zero = r.alice.iter().filter(|a| a.source == "q1=0,q2=1").count();
        assert_eq!(zero, 4);
    }

    #[test]
    fn same_and_different_settings() {
        let mut s = Session::new("s", 8, 42).unwrap();
        for a in 1..=3 {
            for b in 1..=3 {
                let r = s.play_round(a, b).unwrap().clone();
                assert_eq!(r.pairs.len(), 8);
                let mut seen_a: Vec<usize> = r.pairs.iter().map(|p| p.alice).collect();
                let mut seen_b: Vec<usize> = r.pairs.iter().map(|p| p.bob).collect();
                seen_a.sort();
                seen_b.sort();
                assert_eq!(seen_a, (0..8).collect::<Vec<_>>());
                assert_eq!(seen_b, (0..8).collect::<Vec<_>>());
                if a == b {
                    assert_eq!(r.different, 8);
                } else {
                    assert_eq!(r.same, 6, "{a}{b}");
                }
                let mut by_labels: BTreeMap<String, u64> = BTreeMap::new();
                for p in &r.pairs {
                    *by_labels.entry(format!("{},{}", p.outcome_a, p.outcome_b)).or_default() += 1;
                }
                assert_eq!(by_labels, r.pair_counts);
            }
        }
        assert_eq!(s.tallies, Tallies::from_rounds(&s.rounds));
        let sum = s.summary();
        assert_eq!(sum.p_same_given_different, Some(0.75));
        assert_eq!(sum.p_opposite_given_same, Some(1.0));
    }

    #[test]
    fn replay_is_deterministic() {
        let mut a = Session::new("a", 8, 9).unwrap();
        let mut b = Session::new("b", 8, 9).unwrap();
        for (x, y) in [(1, 2), (2, 3), (3, 3)] {
            assert_eq!(a.play_round(x, y).unwrap(), b.play_round(x, y).unwrap());
        }
    }

    #[test]
    fn summary_without_data() {
        let s = Session::new("s", 8, 1).unwrap();
        let sum = s.summary();
        assert_eq!(sum.p_same_given_different, None);
        assert_eq!(sum.verdict, "insufficient data");
        assert!((sum.lhv_bound - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bad_setting() {
        let mut s = Session::new("s", 8, 1).unwrap();
        assert_eq!(s.play_round(0, 1).unwrap_err(), ExerciseError::BadSetting(0));
        assert!(s.rounds.is_empty());
    }
}
