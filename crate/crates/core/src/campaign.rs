//! Bell sampling campaigns: many rounds with random settings, each round one
//! sampled life of Alice's apparatus followed through the engine tables.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, EventTable, Sampler};
use crate::oracle::{self, OracleError};
use crate::qmath::{Basis, Ket, QmathError, Space, SystemLabel};
use crate::scenarios::{self, ScenarioError, CHSH_OPTIMAL};

pub const DEFAULT_WORKERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellMode {
    /// Three settings per side, 120° apart.
    Mermin,
    /// Two settings per side at the optimal CHSH angles.
    Chsh,
}

impl std::str::FromStr for BellMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mermin" => Ok(BellMode::Mermin),
            "chsh" => Ok(BellMode::Chsh),
            other => Err(format!("unknown mode `{other}` (expected mermin or chsh)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("a campaign needs at least one round")]
    NoRounds,
    #[error("a campaign needs at least one worker")]
    NoWorkers,
    #[error("round report for settings ({0}, {1}) has no meeting")]
    NoMeeting(u8, u8),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Qmath(#[from] QmathError),
}

pub type Result<T> = std::result::Result<T, CampaignError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub mode: BellMode,
    pub rounds: u64,
    pub seed: u64,
    /// Worker `w` draws from stream `w` of the seed, so results depend on
    /// the worker count but not on scheduling.
    pub workers: usize,
}

impl CampaignConfig {
    pub fn new(mode: BellMode, rounds: u64, seed: u64) -> Self {
        CampaignConfig { mode, rounds, seed, workers: DEFAULT_WORKERS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SettingTally {
    pub setting_a: u8,
    pub setting_b: u8,
    pub same: u64,
    pub different: u64,
}

impl SettingTally {
    pub fn total(&self) -> u64 {
        self.same + self.different
    }

    /// Empirical `E = P(same) − P(different)`.
    pub fn correlator(&self) -> Option<f64> {
        (self.total() > 0).then(|| (self.same as f64 - self.different as f64) / self.total() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub mode: BellMode,
    pub rounds: u64,
    pub seed: u64,
    pub workers: usize,
    pub tallies: Vec<SettingTally>,
    /// Mermin: P(same | different settings). CHSH: S.
    pub statistic: Option<f64>,
    /// Mermin only: P(opposite | same settings).
    pub p_opposite_given_same: Option<f64>,
    pub quantum: f64,
    pub lhv_bound: f64,
}

impl CampaignResult {
    pub fn tally(&self, a: u8, b: u8) -> Option<&SettingTally> {
        self.tallies.iter().find(|t| t.setting_a == a && t.setting_b == b)
    }
}

fn settings(mode: BellMode) -> u8 {
    match mode {
        BellMode::Mermin => 3,
        BellMode::Chsh => 2,
    }
}

fn round_tables(mode: BellMode, a: u8, b: u8) -> Result<Vec<EventTable>> {
    let spec = match mode {
        BellMode::Mermin => scenarios::wigner_mermin_round(a, b),
        BellMode::Chsh => scenarios::chsh_round(CHSH_OPTIMAL[a as usize - 1], CHSH_OPTIMAL[b as usize + 1]),
    };
    let report = scenarios::run(&spec.compile()?)?;
    if report.table("t4").is_none() {
        return Err(CampaignError::NoMeeting(a, b));
    }
    Ok(report.tables)
}

/// Exact quantum value of the campaign statistic on the singlet.
pub fn quantum_value(mode: BellMode) -> Result<f64> {
    match mode {
        BellMode::Mermin => Ok(0.75),
        BellMode::Chsh => {
            let space = Space::new(vec![(SystemLabel::new("q1"), 2), (SystemLabel::new("q2"), 2)])?;
            let psi = Ket::from_real(space, &[0.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0])?;
            let [a, a2, b, b2] = CHSH_OPTIMAL;
            Ok(oracle::chsh_value(
                &psi,
                &Basis::angle("q1", a),
                &Basis::angle("q1", a2),
                &Basis::angle("q2", b),
                &Basis::angle("q2", b2),
            )?)
        }
    }
}

pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignResult> {
    if cfg.rounds == 0 {
        return Err(CampaignError::NoRounds);
    }
    if cfg.workers == 0 {
        return Err(CampaignError::NoWorkers);
    }
    let k = settings(cfg.mode);
    let mut tables = BTreeMap::new();
    for a in 1..=k {
        for b in 1..=k {
            tables.insert((a, b), round_tables(cfg.mode, a, b)?);
        }
    }
    let tables = &tables;
    let viewpoint = SystemLabel::new("A");
    let chunks: Vec<Result<BTreeMap<(u8, u8), SettingTally>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.workers)
            .map(|w| {
                let lo = cfg.rounds * w as u64 / cfg.workers as u64;
                let hi = cfg.rounds * (w as u64 + 1) / cfg.workers as u64;
                let viewpoint = viewpoint.clone();
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(w as u64);
                    let mut out: BTreeMap<(u8, u8), SettingTally> = BTreeMap::new();
                    for _ in lo..hi {
                        let a = rng.random_range(1..=k);
                        let b = rng.random_range(1..=k);
                        let steps = Sampler::new(&tables[&(a, b)], viewpoint.clone()).sample(&mut rng)?;
                        let meet = steps.last().ok_or(CampaignError::NoMeeting(a, b))?;
                        let t = out.entry((a, b)).or_insert(SettingTally {
                            setting_a: a,
                            setting_b: b,
                            ..Default::default()
                        });
                        if meet.outcomes[0] == meet.outcomes[1] {
                            t.same += 1;
                        } else {
                            t.different += 1;
                        }
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    let mut merged: BTreeMap<(u8, u8), SettingTally> = (1..=k)
        .flat_map(|a| {
            (1..=k).map(move |b| ((a, b), SettingTally { setting_a: a, setting_b: b, same: 0, different: 0 }))
        })
        .collect();
    for chunk in chunks {
        for (key, t) in chunk? {
            let m = merged.get_mut(&key).expect("all settings present");
            m.same += t.same;
            m.different += t.different;
        }
    }
    let tallies: Vec<SettingTally> = merged.into_values().collect();

    let (statistic, p_opposite_given_same, lhv_bound) = match cfg.mode {
        BellMode::Mermin => {
            let ratio = |pick: &dyn Fn(&SettingTally) -> bool, num: &dyn Fn(&SettingTally) -> u64| {
                let (n, d) = tallies.iter().filter(|t| pick(t)).fold((0, 0), |(n, d), t| (n + num(t), d + t.total()));
                (d > 0).then(|| n as f64 / d as f64)
            };
            let p = ratio(&|t| t.setting_a != t.setting_b, &|t| t.same);
            let q = ratio(&|t| t.setting_a == t.setting_b, &|t| t.different);
            (p, q, oracle::lhv_bound_mermin())
        }
        BellMode::Chsh => {
            let e =
                |a, b| tallies.iter().find(|t| t.setting_a == a && t.setting_b == b).and_then(SettingTally::correlator);
            let s = match (e(1, 1), e(1, 2), e(2, 1), e(2, 2)) {
                (Some(ab), Some(ab2), Some(a2b), Some(a2b2)) => Some((ab + ab2 + a2b - a2b2).abs()),
                _ => None,
            };
            (s, None, 2.0)
        }
    };
    Ok(CampaignResult {
        mode: cfg.mode,
        rounds: cfg.rounds,
        seed: cfg.seed,
        workers: cfg.workers,
        tallies,
        statistic,
        p_opposite_given_same,
        quantum: quantum_value(cfg.mode)?,
        lhv_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chsh_quantum_value_is_tsirelson() {
        assert!((quantum_value(BellMode::Chsh).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn same_settings_always_disagree() {
        let r = run_campaign(&CampaignConfig::new(BellMode::Mermin, 3000, 3)).unwrap();
        for s in 1..=3 {
            assert_eq!(r.tally(s, s).unwrap().same, 0);
        }
        assert_eq!(r.p_opposite_given_same, Some(1.0));
        assert_eq!(r.tallies.iter().map(SettingTally::total).sum::<u64>(), 3000);
    }

    #[test]
    fn deterministic_per_seed_and_workers() {
        let cfg = CampaignConfig { workers: 3, ..CampaignConfig::new(BellMode::Chsh, 2000, 11) };
        assert_eq!(run_campaign(&cfg).unwrap(), run_campaign(&cfg).unwrap());
        let other = CampaignConfig { seed: 12, ..cfg };
        assert_ne!(run_campaign(&cfg).unwrap().tallies, run_campaign(&other).unwrap().tallies);
    }

    #[test]
    fn rejects_empty_campaign() {
        assert!(matches!(run_campaign(&CampaignConfig::new(BellMode::Mermin, 0, 1)), Err(CampaignError::NoRounds)));
        let cfg = CampaignConfig { workers: 0, ..CampaignConfig::new(BellMode::Mermin, 5, 1) };
        assert!(matches!(run_campaign(&cfg), Err(CampaignError::NoWorkers)));
    }
}
