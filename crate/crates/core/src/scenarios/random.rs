use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ActionSpec, BasisSpec, Complex, EventSpec, ScenarioSpec, SystemSpec, UnitarySpec, SCHEMA};
use crate::qmath::C64;

/// Shape of generated scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomShape {
    pub max_objects: usize,
    pub max_dim: usize,
    pub max_events: usize,
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape { max_objects: 3, max_dim: 2, max_events: 4 }
    }
}

fn entry(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Unitary from the QR factor of a matrix with uniform random entries.
pub fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<C64>> {
    let q = DMatrix::from_fn(n, n, |_, _| entry(rng)).qr().q();
    (0..n).map(|i| (0..n).map(|j| q[(i, j)]).collect()).collect()
}

fn pairs(rows: &[Vec<C64>]) -> Vec<Vec<Complex>> {
    rows.iter().map(|r| r.iter().map(|c| [c.re, c.im]).collect()).collect()
}

fn random_basis(dim: usize, rng: &mut ChaCha8Rng) -> BasisSpec {
    let u = random_unitary(dim, rng);
    let columns: Vec<Vec<C64>> = (0..dim).map(|j| (0..dim).map(|i| u[i][j]).collect()).collect();
    BasisSpec::Explicit { vectors: pairs(&columns), labels: (0..dim).map(|i| format!("b{i}")).collect() }
}

fn random_state(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Complex> {
    let v: Vec<C64> = (0..dim).map(|_| entry(rng)).collect();
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.iter().map(|c| [c.re / norm, c.im / norm]).collect()
}

/// A small scenario with generic amplitudes: one joint preparation of the
/// object systems, then measurements by fresh apparatus, two-system
/// couplings, local unitaries and meetings of apparatus, in random order.
pub fn random_scenario(seed: u64, shape: RandomShape) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_obj = rng.random_range(2..=shape.max_objects.max(2));
    let dims: Vec<usize> = (0..n_obj).map(|_| rng.random_range(2..=shape.max_dim.max(2))).collect();
    let objects: Vec<String> = (0..n_obj).map(|i| format!("s{i}")).collect();
    let mut systems: Vec<SystemSpec> = objects
        .iter()
        .zip(&dims)
        .map(|(id, &dim)| SystemSpec { id: id.clone(), dim, initial: None, basis: None })
        .collect();
    let total: usize = dims.iter().product();
    let mut events = vec![EventSpec {
        tag: "t1".into(),
        ordinal: 1,
        participants: objects.clone(),
        action: ActionSpec::Prepare {
            state: random_state(total, &mut rng),
            bases: objects.iter().zip(&dims).map(|(id, &d)| (id.clone(), random_basis(d, &mut rng))).collect(),
        },
    }];
    let mut apparatus: Vec<String> = Vec::new();
    let n_events = rng.random_range(2..=shape.max_events.max(2));
    for k in 0..n_events {
        let ordinal = k as u32 + 2;
        let tag = format!("t{ordinal}");
        let roll: f64 = rng.random();
        let (participants, action) = if roll < 0.2 && apparatus.len() >= 2 {
            let a = rng.random_range(0..apparatus.len());
            let mut b = rng.random_range(0..apparatus.len() - 1);
            if b >= a {
                b += 1;
            }
            (vec![apparatus[a].clone(), apparatus[b].clone()], ActionSpec::Meet)
        } else if roll < 0.45 {
            let i = rng.random_range(0..n_obj);
            let j = (i + rng.random_range(1..n_obj)) % n_obj;
            let u = random_unitary(dims[i] * dims[j], &mut rng);
            let bases = [(i, dims[i]), (j, dims[j])]
                .into_iter()
                .map(|(s, d)| (objects[s].clone(), random_basis(d, &mut rng)))
                .collect();
            (
                vec![objects[i].clone(), objects[j].clone()],
                ActionSpec::Couple { unitary: UnitarySpec::Matrix { matrix: pairs(&u) }, bases },
            )
        } else if roll < 0.55 {
            let i = rng.random_range(0..n_obj);
            let u = random_unitary(dims[i], &mut rng);
            (
                vec![objects[i].clone()],
                ActionSpec::Couple { unitary: UnitarySpec::Matrix { matrix: pairs(&u) }, bases: Default::default() },
            )
        } else {
            let i = rng.random_range(0..n_obj);
            let m = format!("M{}", apparatus.len());
            let mut ready = vec![[0.0, 0.0]; dims[i] + 1];
            ready[0] = [1.0, 0.0];
            systems.push(SystemSpec { id: m.clone(), dim: dims[i] + 1, initial: Some(ready), basis: None });
            apparatus.push(m.clone());
            (vec![objects[i].clone(), m], ActionSpec::Measure { basis: random_basis(dims[i], &mut rng), ready: 0 })
        };
        events.push(EventSpec { tag, ordinal, participants, action });
    }
    ScenarioSpec {
        schema: SCHEMA.into(),
        name: format!("random_{seed}"),
        description: "Generated scenario with generic amplitudes.".into(),
        systems,
        events,
        edges: Vec::new(),
        observer: None,
        lives: None,
        notes: Vec::new(),
        known_deviations: Vec::new(),
    }
}
