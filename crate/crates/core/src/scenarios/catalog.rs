use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::{
    ActionSpec, BasisSpec, Complex, EventSpec, Result, ScenarioError, ScenarioSpec, SystemSpec, UnitarySpec, SCHEMA,
};
use crate::continuum::{EraserConfig, Grid};
use crate::qmath::C64;

/// Names accepted by [`builtin`].
pub const CATALOG: &[&str] = &[
    "example0",
    "example1",
    "example2",
    "example3",
    "classical_observer_hadamard",
    "remote_entanglement",
    "ballistic_scatter",
    "neutron_superposed_target",
    "square_well",
    "chsh_optimal",
    "wigner_mermin",
    "eraser_plus_basis",
    "eraser_computational",
];

/// Mermin settings 1, 2, 3 sit at 0, 2π/3 and 4π/3.
pub fn mermin_angle(setting: u8) -> f64 {
    f64::from(setting.saturating_sub(1)) * 2.0 * PI / 3.0
}

/// `(a, a′, b, b′)` reaching `2√2` on the singlet.
pub const CHSH_OPTIMAL: [f64; 4] = [0.0, PI / 2.0, PI / 4.0, -PI / 4.0];

/// `0.8|00⟩ + 0.6|11⟩`.
pub const EQ1_STATE: [Complex; 4] = [[0.8, 0.0], [0.0, 0.0], [0.0, 0.0], [0.6, 0.0]];

pub const SINGLET: [Complex; 4] = [[0.0, 0.0], [FRAC_1_SQRT_2, 0.0], [-FRAC_1_SQRT_2, 0.0], [0.0, 0.0]];

pub fn builtin(name: &str) -> Result<ScenarioSpec> {
    Ok(match name {
        "example0" => example0(EQ1_STATE, PI / 3.0, 2.0 * PI / 3.0),
        "example1" => example1(),
        "example2" => example2(),
        "example3" => example3(),
        "classical_observer_hadamard" => classical_observer_hadamard(),
        "remote_entanglement" => remote_entanglement(1, 2),
        "ballistic_scatter" => ballistic_scatter(),
        "neutron_superposed_target" => neutron_superposed_target(),
        "square_well" => square_well(),
        "chsh_optimal" => chsh_round(CHSH_OPTIMAL[0], CHSH_OPTIMAL[2]),
        "wigner_mermin" => wigner_mermin_round(1, 2),
        "eraser_plus_basis" => eraser(true),
        "eraser_computational" => eraser(false),
        other => return Err(ScenarioError::UnknownScenario(other.to_string())),
    })
}

fn spec(name: &str, description: &str, systems: Vec<SystemSpec>, events: Vec<EventSpec>) -> ScenarioSpec {
    ScenarioSpec {
        schema: SCHEMA.into(),
        name: name.into(),
        description: description.into(),
        systems,
        events,
        edges: Vec::new(),
        observer: None,
        lives: None,
        notes: Vec::new(),
        known_deviations: Vec::new(),
    }
}

fn system(id: &str, dim: usize, basis: Option<BasisSpec>) -> SystemSpec {
    SystemSpec { id: id.into(), dim, initial: None, basis }
}

/// A system starting in computational state 0 (an apparatus at its ready state).
fn ready(id: &str, dim: usize) -> SystemSpec {
    let mut amps = vec![[0.0, 0.0]; dim];
    amps[0] = [1.0, 0.0];
    SystemSpec { id: id.into(), dim, initial: Some(amps), basis: None }
}

fn event(tag: &str, ordinal: u32, participants: &[&str], action: ActionSpec) -> EventSpec {
    EventSpec { tag: tag.into(), ordinal, participants: participants.iter().map(|s| s.to_string()).collect(), action }
}

fn prepare(state: Vec<Complex>, bases: &[(&str, BasisSpec)]) -> ActionSpec {
    ActionSpec::Prepare { state, bases: bases.iter().map(|(k, b)| (k.to_string(), b.clone())).collect() }
}

fn measure(basis: BasisSpec) -> ActionSpec {
    ActionSpec::Measure { basis, ready: 0 }
}

fn couple(unitary: UnitarySpec, bases: &[(&str, BasisSpec)]) -> ActionSpec {
    ActionSpec::Couple { unitary, bases: bases.iter().map(|(k, b)| (k.to_string(), b.clone())).collect() }
}

fn x_basis() -> BasisSpec {
    BasisSpec::real(&[&[0.6, 0.8], &[0.8, -0.6]], &["x", "y"])
}

/// Source prepares `q1, q2` at t1, A measures `q1` at t2, B measures `q2`
/// at t3, and A meets B at t4.
fn two_party(
    name: &str,
    description: &str,
    state: [Complex; 4],
    source: BasisSpec,
    alice: BasisSpec,
    bob: BasisSpec,
) -> ScenarioSpec {
    let mut s = spec(
        name,
        description,
        vec![
            system("q1", 2, Some(source.clone())),
            system("q2", 2, Some(source.clone())),
            ready("A", 3),
            ready("B", 3),
        ],
        vec![
            event("t1", 1, &["q1", "q2"], prepare(state.to_vec(), &[("q1", source.clone()), ("q2", source)])),
            event("t2", 2, &["q1", "A"], measure(alice)),
            event("t3", 3, &["q2", "B"], measure(bob)),
            event("t4", 4, &["A", "B"], ActionSpec::Meet),
        ],
    );
    s.observer = Some("A".into());
    s
}

/// Any two-qubit source in the computational basis, measured along the
/// angles `theta_a` and `theta_b`.
pub fn example0(state: [Complex; 4], theta_a: f64, theta_b: f64) -> ScenarioSpec {
    two_party(
        "example0",
        "Arbitrary two-qubit source; Alice and Bob measure along chosen axes and meet.",
        state,
        BasisSpec::computational(),
        BasisSpec::Angle { theta: theta_a },
        BasisSpec::Angle { theta: theta_b },
    )
}

pub fn example1() -> ScenarioSpec {
    let mut s = two_party(
        "example1",
        "Source 0.8|00⟩ + 0.6|11⟩; both measure {|0⟩, |1⟩}; they meet.",
        EQ1_STATE,
        BasisSpec::computational(),
        BasisSpec::computational(),
        BasisSpec::computational(),
    );
    s.lives = Some(25);
    s
}

pub fn example2() -> ScenarioSpec {
    let mut s = two_party(
        "example2",
        "Source 0.8|00⟩ + 0.6|11⟩; both measure {|+⟩, |−⟩}; they meet.",
        EQ1_STATE,
        BasisSpec::computational(),
        BasisSpec::PlusMinus,
        BasisSpec::PlusMinus,
    );
    s.lives = Some(2500);
    s
}

pub fn example3() -> ScenarioSpec {
    let mut s = two_party(
        "example3",
        "Source 0.8|00⟩ + 0.6|11⟩ split in {|+⟩, |−⟩}; Alice measures {|0⟩, |1⟩}, Bob measures {x, y}; they meet.",
        EQ1_STATE,
        BasisSpec::PlusMinus,
        BasisSpec::computational(),
        x_basis(),
    );
    s.notes = vec![
        "Bob's split uses w(b | s1 s2) ∝ |⟨s1 b|ψ⟩|²: w(x|+±) = 576/625, w(y|+±) = 49/625, w(x|−±) = 0, w(y|−±) = 1.".into(),
        "The printed Bob split and meeting tables for this example are not reproduced: they give every source class the overall frequencies P(x) = 288/625 and P(y) = 337/625 with x and y exchanged.".into(),
        "Source classes with q1 = − hold no x lives for Bob, so no pairing at t4 can match the Born joint distribution. The meeting keeps every class mass instead, fitting the Born pair weights to both sides within each source class; born:t4 is reported but not enforced.".into(),
    ];
    s.known_deviations = vec!["born:t4".into()];
    s
}

/// Apparatus `m` reads `q`, a Hadamard rotates `q`, then a second register
/// `m2` reads `q` again.
pub fn classical_observer_hadamard() -> ScenarioSpec {
    let mut s = spec(
        "classical_observer_hadamard",
        "Qubit 0.8|0⟩ + 0.6|1⟩ measured, rotated by a Hadamard, and measured again.",
        vec![
            SystemSpec { id: "q".into(), dim: 2, initial: Some(vec![[0.8, 0.0], [0.6, 0.0]]), basis: None },
            ready("m", 3),
            ready("m2", 3),
        ],
        vec![
            event("t1", 1, &["q", "m"], measure(BasisSpec::computational())),
            event("t2", 2, &["q"], couple(UnitarySpec::Hadamard, &[])),
            event("t3", 3, &["q", "m2"], measure(BasisSpec::computational())),
        ],
    );
    s.observer = Some("m".into());
    s.lives = Some(50);
    s
}

/// Two emitters `d1, d2` share a photon field; detector `D` counts photons,
/// then A and B measure the emitters at Mermin settings and meet D and each other.
pub fn remote_entanglement(setting_a: u8, setting_b: u8) -> ScenarioSpec {
    let gf = || BasisSpec::labeled(&["g", "f"]);
    // index (d1·2 + d2)·3 + photons; each emitter is excited with amplitude 1/√2
    let mut state = vec![[0.0, 0.0]; 12];
    state[2] = [0.5, 0.0];
    state[4] = [0.5, 0.0];
    state[7] = [0.5, 0.0];
    state[9] = [0.5, 0.0];
    let mut s = spec(
        "remote_entanglement",
        "Emitters entangled by a photon count at D; conditioned on one photon, A and B see singlet statistics.",
        vec![
            system("d1", 2, Some(gf())),
            system("d2", 2, Some(gf())),
            system("field", 3, None),
            ready("D", 4),
            ready("A", 3),
            ready("B", 3),
        ],
        vec![
            event("t1", 1, &["d1", "d2", "field"], prepare(state, &[("d1", gf()), ("d2", gf())])),
            event("t2", 2, &["d1"], couple(UnitarySpec::real(&[&[1.0, 0.0], &[0.0, -1.0]]), &[])),
            event("t3", 3, &["field", "D"], measure(BasisSpec::computational())),
            event("t4", 4, &["d1", "A"], measure(BasisSpec::Angle { theta: mermin_angle(setting_a) })),
            event("t5", 5, &["d2", "B"], measure(BasisSpec::Angle { theta: mermin_angle(setting_b) })),
            event("t6", 6, &["A", "D"], ActionSpec::Meet),
            event("t7", 7, &["A", "B"], ActionSpec::Meet),
        ],
    );
    s.observer = Some("A".into());
    s.notes = vec![format!("Settings A = {setting_a}, B = {setting_b}. Condition on D = 1 for the entangled pair.")];
    s
}

pub fn ballistic_scatter() -> ScenarioSpec {
    let bt = || BasisSpec::labeled(&["B", "T"]);
    let s = FRAC_1_SQRT_2;
    let mut out = spec(
        "ballistic_scatter",
        "Two particles collide once; half the lives bounce, half transmit.",
        vec![
            SystemSpec { id: "p1".into(), dim: 2, initial: Some(vec![[1.0, 0.0], [0.0, 0.0]]), basis: Some(bt()) },
            SystemSpec { id: "p2".into(), dim: 2, initial: Some(vec![[1.0, 0.0], [0.0, 0.0]]), basis: Some(bt()) },
        ],
        vec![
            event(
                "t1",
                1,
                &["p1", "p2"],
                couple(
                    UnitarySpec::real(&[&[s, 0.0, s, 0.0], &[0.0, s, 0.0, s], &[0.0, s, 0.0, -s], &[s, 0.0, -s, 0.0]]),
                    &[("p1", bt()), ("p2", bt())],
                ),
            ),
            event("t2", 2, &["p1", "p2"], ActionSpec::Meet),
        ],
    );
    out.lives = Some(2);
    out
}

/// A neutron runs into a target held in a superposition of two locations.
pub fn neutron_superposed_target() -> ScenarioSpec {
    let nb = || BasisSpec::labeled(&["in", "hit1", "hit2"]);
    let tb = || BasisSpec::labeled(&["L1", "L2"]);
    // index target·3 + neutron
    let swap_at = |loc: usize, slot: usize| -> UnitarySpec {
        let mut rows = vec![vec![0.0; 6]; 6];
        for t in 0..2 {
            for n in 0..3 {
                let m = if t == loc && n == 0 {
                    slot
                } else if t == loc && n == slot {
                    0
                } else {
                    n
                };
                rows[t * 3 + m][t * 3 + n] = 1.0;
            }
        }
        UnitarySpec::Matrix { matrix: rows.iter().map(|r| r.iter().map(|&x| [x, 0.0]).collect()).collect() }
    };
    let mut s = spec(
        "neutron_superposed_target",
        "Ballistic neutron meets a target at location 1 or location 2; the matching is one-to-one.",
        vec![
            SystemSpec {
                id: "n".into(),
                dim: 3,
                initial: Some(vec![[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]),
                basis: Some(nb()),
            },
            system("target", 2, Some(tb())),
        ],
        vec![
            event("t1", 1, &["target"], prepare(vec![[FRAC_1_SQRT_2, 0.0], [FRAC_1_SQRT_2, 0.0]], &[("target", tb())])),
            event("t2", 2, &["target", "n"], couple(swap_at(0, 1), &[("target", tb()), ("n", nb())])),
            event("t3", 3, &["target", "n"], couple(swap_at(1, 2), &[("target", tb()), ("n", nb())])),
        ],
    );
    s.observer = Some("n".into());
    s.lives = Some(2);
    s
}

pub const WELL_BINS: usize = 16;

/// `√(2/(N+1))·sin(nπ(j+1)/(N+1))`: energy eigenstates of an `N`-site well.
pub fn well_eigenvector(n: usize, bins: usize) -> Vec<f64> {
    let scale = (2.0 / (bins as f64 + 1.0)).sqrt();
    (0..bins).map(|j| scale * (n as f64 * PI * (j as f64 + 1.0) / (bins as f64 + 1.0)).sin()).collect()
}

/// Electron in `(|1⟩ + |2⟩)/√2` on a 16-site well; `M` measures energy, then
/// a detector `P` measures position.
pub fn square_well() -> ScenarioSpec {
    let bins = WELL_BINS;
    let xs: Vec<String> = (0..bins).map(|j| format!("x{j}")).collect();
    let es: Vec<String> = (1..=bins).map(|n| format!("E{n}")).collect();
    let position = BasisSpec::Computational { labels: Some(xs) };
    let energy = BasisSpec::Explicit {
        vectors: (1..=bins).map(|n| well_eigenvector(n, bins).into_iter().map(|v| [v, 0.0]).collect()).collect(),
        labels: es,
    };
    let (e1, e2) = (well_eigenvector(1, bins), well_eigenvector(2, bins));
    let initial = e1.iter().zip(&e2).map(|(a, b)| [(a + b) * FRAC_1_SQRT_2, 0.0]).collect();
    let mut s = spec(
        "square_well",
        "Energy measurement on a two-level superposition in a square well, then a position readout.",
        vec![
            SystemSpec { id: "e".into(), dim: bins, initial: Some(initial), basis: Some(position.clone()) },
            ready("M", bins + 1),
            ready("P", bins + 1),
        ],
        vec![event("t1", 1, &["e", "M"], measure(energy)), event("t2", 2, &["e", "P"], measure(position))],
    );
    s.observer = Some("M".into());
    s
}

fn bell_pair(name: &str, description: &str, theta_a: f64, theta_b: f64) -> ScenarioSpec {
    two_party(
        name,
        description,
        SINGLET,
        BasisSpec::computational(),
        BasisSpec::Angle { theta: theta_a },
        BasisSpec::Angle { theta: theta_b },
    )
}

/// One CHSH round on the singlet with the given analyzer angles.
pub fn chsh_round(theta_a: f64, theta_b: f64) -> ScenarioSpec {
    bell_pair("chsh_optimal", "Singlet source; Alice and Bob measure at CHSH angles and meet.", theta_a, theta_b)
}

/// One Mermin round on the singlet at settings `1..=3`.
pub fn wigner_mermin_round(setting_a: u8, setting_b: u8) -> ScenarioSpec {
    let mut s = bell_pair(
        "wigner_mermin",
        "Singlet source; Alice and Bob pick among three axes 120° apart and meet.",
        mermin_angle(setting_a),
        mermin_angle(setting_b),
    );
    s.lives = Some(8);
    s.notes = vec![format!("Settings A = {setting_a}, B = {setting_b}.")];
    s
}

/// Eraser on a 16-bin screen `s` with which-path qubit `w`. Detector `D`
/// reads the screen; `A` reads the qubit in `{+, −}` or `{0, 1}`; they meet.
pub fn eraser(plus_basis: bool) -> ScenarioSpec {
    let cfg = engine_eraser_config();
    let bins = cfg.grid.bins;
    let omega: Vec<Complex> = cfg.omega().into_iter().flatten().map(|c: C64| [c.re, c.im]).collect();
    let xs: Vec<String> = (0..bins).map(|j| format!("x{j}")).collect();
    let screen = BasisSpec::Computational { labels: Some(xs) };
    let (name, qubit) = if plus_basis {
        ("eraser_plus_basis", BasisSpec::PlusMinus)
    } else {
        ("eraser_computational", BasisSpec::computational())
    };
    let mut s = spec(
        name,
        "Which-path qubit entangled with a screen; the qubit basis decides whether the meeting reveals fringes.",
        vec![system("s", bins, Some(screen.clone())), system("w", 2, None), ready("D", bins + 1), ready("A", 3)],
        vec![
            event("t1", 1, &["s", "w"], prepare(omega, &[("s", screen.clone())])),
            event("t2", 2, &["s", "D"], measure(screen)),
            event("t3", 3, &["w", "A"], measure(qubit)),
            event("t4", 4, &["D", "A"], ActionSpec::Meet),
        ],
    );
    s.observer = Some("A".into());
    s
}

/// 16 bins at `j·dx`, `j = −8..7`, `dx = 10/16`, `σ = 0.8`, `k = 2`.
pub fn engine_eraser_config() -> EraserConfig {
    EraserConfig::new(0.8, 2.0, Grid::new(-5.0, 5.0, 16).expect("valid grid")).expect("valid eraser config")
}

/// Spec names with a one-line description each.
pub fn catalog_descriptions() -> BTreeMap<&'static str, String> {
    CATALOG.iter().map(|n| (*n, builtin(n).expect("catalog entries build").description)).collect()
}
