//! Textbook quantum reference: Born-rule joint distributions, Bell
//! statistics, local-hidden-variable bounds, weak values and post-selection.
//!
//! Built on [`crate::qmath`] alone so engine cross-checks stay independent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{self, Basis, Ket, Operator, QmathError, SystemLabel, C64};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Qmath(#[from] QmathError),
    #[error("no rounds with {0} settings")]
    EmptyConditioningClass(&'static str),
    #[error("setting {0} outside 1..=3")]
    BadSetting(u8),
    #[error("pre- and post-selected states are orthogonal")]
    OrthogonalSelection,
    #[error("projection has zero norm")]
    ZeroProjection,
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Probability per joint outcome, keyed by one label per system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub systems: Vec<SystemLabel>,
    pub probabilities: BTreeMap<Vec<String>, f64>,
}

impl JointDistribution {
    pub fn get(&self, labels: &[&str]) -> f64 {
        let key: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        self.probabilities.get(&key).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probabilities.values().sum()
    }

    /// `E = Σ p·s_a·s_b` with basis vector 0 ↦ +1 and any other ↦ −1.
    pub fn correlator(&self, bases: &[&Basis]) -> f64 {
        self.probabilities
            .iter()
            .map(|(labels, p)| {
                let sign: f64 =
                    labels.iter().zip(bases).map(|(l, b)| if b.index_of(l) == Some(0) { 1.0 } else { -1.0 }).product();
                p * sign
            })
            .sum()
    }
}

/// Joint Born distribution of `psi` in the given bases; unmeasured systems
/// are traced out. Incomplete bases (apparatus pointers) are allowed.
pub fn born_joint(psi: &Ket, bases: &[Basis]) -> Result<JointDistribution> {
    let keep: Vec<SystemLabel> = bases.iter().map(|b| b.system().clone()).collect();
    let rho = qmath::partial_trace(psi, &keep)?;
    let mut probabilities = BTreeMap::new();
    let mut digits = vec![0usize; bases.len()];
    loop {
        let ket = qmath::tensor(&digits.iter().zip(bases).map(|(&i, b)| b.ket(i)).collect::<Vec<_>>())?;
        let p = rho.expectation(&ket)?.max(0.0);
        let labels = digits.iter().zip(bases).map(|(&i, b)| b.label(i).to_string()).collect();
        probabilities.insert(labels, p);
        let mut k = bases.len();
        loop {
            if k == 0 {
                return Ok(JointDistribution { systems: keep, probabilities });
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < bases[k].len() {
                break;
            }
            digits[k] = 0;
        }
    }
}

/// One classroom round: settings in 1..=3 and outcomes as ±1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerminRound {
    pub setting_a: u8,
    pub setting_b: u8,
    pub outcome_a: i8,
    pub outcome_b: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MerminStatistic {
    pub p_same_given_different: f64,
    pub p_opposite_given_same: f64,
}

/// Empirical conditional frequencies. Errors if either conditioning class
/// (different settings, same settings) is empty.
pub fn mermin_statistic(rounds: &[MerminRound]) -> Result<MerminStatistic> {
    let (mut diff, mut same_out, mut same, mut opp) = (0u64, 0u64, 0u64, 0u64);
    for r in rounds {
        for s in [r.setting_a, r.setting_b] {
            if !(1..=3).contains(&s) {
                return Err(OracleError::BadSetting(s));
            }
        }
        if r.setting_a != r.setting_b {
            diff += 1;
            same_out += u64::from(r.outcome_a == r.outcome_b);
        } else {
            same += 1;
            opp += u64::from(r.outcome_a != r.outcome_b);
        }
    }
    if diff == 0 {
        return Err(OracleError::EmptyConditioningClass("different"));
    }
    if same == 0 {
        return Err(OracleError::EmptyConditioningClass("equal"));
    }
    Ok(MerminStatistic {
        p_same_given_different: same_out as f64 / diff as f64,
        p_opposite_given_same: opp as f64 / same as f64,
    })
}

/// Best P(same | different settings) over all 8 deterministic
/// anticorrelated strategies, found by enumeration.
pub fn lhv_bound_mermin() -> f64 {
    (0..8u8)
        .map(|bits| {
            let alice: [i8; 3] = std::array::from_fn(|k| if bits >> k & 1 == 1 { -1 } else { 1 });
            let bob = alice.map(|a| -a);
            let mut same = 0;
            let mut pairs = 0;
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        pairs += 1;
                        same += usize::from(alice[i] == bob[j]);
                    }
                }
            }
            same as f64 / pairs as f64
        })
        .fold(0.0, f64::max)
}

/// `S = |E(a,b) + E(a,b′) + E(a′,b) − E(a′,b′)|` for a two-qubit state.
pub fn chsh_value(psi: &Ket, a: &Basis, a2: &Basis, b: &Basis, b2: &Basis) -> Result<f64> {
    let e = |x: &Basis, y: &Basis| -> Result<f64> { Ok(born_joint(psi, &[x.clone(), y.clone()])?.correlator(&[x, y])) };
    Ok((e(a, b)? + e(a, b2)? + e(a2, b)? - e(a2, b2)?).abs())
}

/// `⟨φ|A|ψ⟩ / ⟨φ|ψ⟩`.
pub fn weak_value(pre: &Ket, post: &Ket, observable: &Operator) -> Result<C64> {
    let overlap = qmath::inner(post, pre)?;
    if overlap.norm() <= 1e-12 {
        return Err(OracleError::OrthogonalSelection);
    }
    Ok(observable.sandwich(post, pre)? / overlap)
}

/// Project `sys` onto `outcome` and renormalize the remaining state.
pub fn postselect(psi: &Ket, sys: &SystemLabel, outcome: &Ket) -> Result<Ket> {
    let rest = psi.project_out(sys, outcome)?;
    if rest.norm_sqr().sqrt() <= 1e-12 {
        return Err(OracleError::ZeroProjection);
    }
    Ok(rest.normalized()?)
}

/// `|⟨a|b⟩|²` for normalized kets on the same systems.
pub fn fidelity(a: &Ket, b: &Ket) -> Result<f64> {
    Ok(qmath::inner(a, b)?.norm_sqr())
}
