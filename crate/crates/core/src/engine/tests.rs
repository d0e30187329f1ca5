use super::*;
use crate::qmath::{measurement_coupling, pointer_basis, Space};

fn l(s: &str) -> SystemLabel {
    SystemLabel::new(s)
}

fn eq1() -> Ket {
    let space = Space::new(vec![(l("q1"), 2), (l("q2"), 2)]).unwrap();
    Ket::from_real(space, &[0.8, 0.0, 0.0, 0.6]).unwrap()
}

fn x_basis(sys: &str) -> Basis {
    Basis::real(sys, &[&[0.6, 0.8], &[0.8, -0.6]], &["x", "y"]).unwrap()
}

/// Source at t1, then `q1` measured by `A` at t2 and `q2` by `B` at t3.
fn two_party(source_basis: fn(&str) -> Basis, alice: Basis, bob: Option<Basis>) -> (SimState, Vec<EventTable>) {
    let mut st = SimState::new();
    st.declare(l("q1"), 2, source_basis("q1")).unwrap();
    st.declare(l("q2"), 2, source_basis("q2")).unwrap();
    st.add_system(Ket::basis_state("A", 3, 0), Basis::computational("A", 3)).unwrap();
    st.add_system(Ket::basis_state("B", 3, 0), Basis::computational("B", 3)).unwrap();
    let mut tables =
        vec![st.prepare(EventId::new(1, "t1-source"), eq1(), vec![source_basis("q1"), source_basis("q2")]).unwrap()];
    let ua = measurement_coupling(&alice, "A", 3, 0).unwrap();
    let pa = pointer_basis(&alice, "A", 3, 0);
    tables
        .push(st.interact(&l("q1"), &l("A"), &ua, alice, pa, EventId::new(2, "t2-alice"), EventKind::Measure).unwrap());
    if let Some(bob) = bob {
        let ub = measurement_coupling(&bob, "B", 3, 0).unwrap();
        let pb = pointer_basis(&bob, "B", 3, 0);
        tables
            .push(st.interact(&l("q2"), &l("B"), &ub, bob, pb, EventId::new(3, "t3-bob"), EventKind::Measure).unwrap());
    }
    (st, tables)
}

fn comp(s: &str) -> Basis {
    Basis::computational(s, 2)
}

fn pm(s: &str) -> Basis {
    Basis::plus_minus(s)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn example1_splits_and_meets() {
    let (mut st, tables) = two_party(comp, comp("q1"), Some(comp("q2")));
    assert!(close(&tables[1].masses(), &[16.0 / 25.0, 9.0 / 25.0], 1e-12));
    assert!(close(&tables[2].masses(), &[16.0 / 25.0, 9.0 / 25.0], 1e-12));
    let meet = st.meet(&l("A"), &l("B"), EventId::new(4, "t4-meet")).unwrap();
    assert!(close(&meet.masses(), &[16.0 / 25.0, 9.0 / 25.0], 1e-12));
    assert_eq!(meet.rows[0].outcomes, vec!["0", "0"]);
    assert_eq!(meet.rows[1].outcomes, vec!["1", "1"]);
}

#[test]
fn example2_split_and_meeting_masses() {
    let (mut st, tables) = two_party(comp, pm("q1"), Some(pm("q2")));
    let split = [8.0 / 25.0, 8.0 / 25.0, 9.0 / 50.0, 9.0 / 50.0];
    assert!(close(&tables[1].masses(), &split, 1e-12));
    assert!(close(&tables[2].masses(), &split, 1e-12));
    let meet = st.meet(&l("A"), &l("B"), EventId::new(4, "t4-meet")).unwrap();
    let expected: Vec<f64> = [784.0, 16.0, 16.0, 784.0, 441.0, 9.0, 9.0, 441.0].iter().map(|m| m / 2500.0).collect();
    assert!(close(&meet.masses(), &expected, 1e-12), "{:?}", meet.masses());
}

#[test]
fn example3_alice_split_from_plus_source() {
    let (_, tables) = two_party(pm, comp("q1"), None);
    let masses = tables[1].masses();
    // (+,+) class of mass 49/100 splits 16/25 : 9/25
    assert!((masses[0] - 784.0 / 2500.0).abs() < 1e-12);
    assert!((masses[1] - 441.0 / 2500.0).abs() < 1e-12);
}

#[test]
fn example3_bob_weights_follow_formula() {
    let (mut st, tables) = two_party(pm, comp("q1"), Some(x_basis("q2")));
    let bob = &tables[2];
    let plus_plus: Vec<&TableRow> =
        bob.rows.iter().filter(|r| r.priors[0].starts_with("t1-source{q1=+,q2=+}")).collect();
    assert_eq!(plus_plus.len(), 2);
    assert!((plus_plus[0].weight - 576.0 / 625.0).abs() < 1e-12);
    assert!((plus_plus[1].weight - 49.0 / 625.0).abs() < 1e-12);
    let dist = st.reduced_distribution(&l("q2"), &x_basis("q2")).unwrap();
    assert!((dist["x"] - 288.0 / 625.0).abs() < 1e-12);
    assert!((dist["y"] - 337.0 / 625.0).abs() < 1e-12);
}

#[test]
fn compatibility_rules() {
    let (st, _) = two_party(comp, pm("q1"), Some(pm("q2")));
    let a = st.classes(&l("A")).unwrap();
    let b = st.classes(&l("B")).unwrap();
    // Alice(+, source 00) vs Bob(-, source 00)
    assert!(compatible(&a[0], &b[1]));
    // source 00 vs source 11
    assert!(!compatible(&a[0], &b[2]));
    let fresh = LifeClass { system: l("C"), history: History::default(), mass: 1.0, memory: InternalMemory::default() };
    assert!(compatible(&a[0], &fresh));
}

#[test]
fn memories_synchronize() {
    let (st, _) = two_party(comp, comp("q1"), Some(comp("q2")));
    let ma = &st.classes(&l("A")).unwrap()[0].memory;
    let mb = &st.classes(&l("B")).unwrap()[0].memory;
    assert_eq!(synchronize(ma, ma).unwrap(), *ma);
    let ab = synchronize(ma, mb).unwrap();
    let ba = synchronize(mb, ma).unwrap();
    assert_eq!(ab.couplings().len(), 2);
    let pa = relative_wavefunction(&ab).unwrap();
    let pb = relative_wavefunction(&ba).unwrap();
    assert!(pa.distance(&pb).unwrap() < 1e-12);
    assert!((pa.norm_sqr() - 1.0).abs() < 1e-10);
}

#[test]
fn memory_conflict_detected() {
    let mut a = InternalMemory::with_initial("s", Ket::basis_state("q", 2, 0));
    let mut b = a.clone();
    a.push_coupling(EventId::new(2, "t2"), Unitary::hadamard("q")).unwrap();
    b.push_coupling(EventId::new(2, "t2"), Unitary::identity(Space::single("q", 2))).unwrap();
    assert!(matches!(synchronize(&a, &b), Err(EngineError::MemoryConflict(_))));
}

#[test]
fn relative_wavefunction_without_couplings_is_initial_product() {
    let m = synchronize(
        &InternalMemory::with_initial("a", Ket::basis_state("a", 2, 1)),
        &InternalMemory::with_initial("b", Ket::basis_state("b", 2, 0)),
    )
    .unwrap();
    let psi = relative_wavefunction(&m).unwrap();
    assert_eq!(psi.amplitude(&[1, 0]), C64::new(1.0, 0.0));
}

#[test]
fn product_state_meeting_factors() {
    let mut st = SimState::new();
    st.add_system(Ket::from_real(Space::single("a", 2), &[0.6, 0.8]).unwrap(), comp("a")).unwrap();
    st.add_system(Ket::from_real(Space::single("b", 2), &[0.8, 0.6]).unwrap(), comp("b")).unwrap();
    st.add_system(Ket::basis_state("A", 3, 0), Basis::computational("A", 3)).unwrap();
    st.add_system(Ket::basis_state("B", 3, 0), Basis::computational("B", 3)).unwrap();
    for (q, m, t) in [("a", "A", 1), ("b", "B", 2)] {
        let u = measurement_coupling(&comp(q), m, 3, 0).unwrap();
        st.interact(
            &l(q),
            &l(m),
            &u,
            comp(q),
            pointer_basis(&comp(q), m, 3, 0),
            EventId::new(t, format!("t{t}")),
            EventKind::Measure,
        )
        .unwrap();
    }
    let meet = st.meet(&l("A"), &l("B"), EventId::new(3, "t3")).unwrap();
    let ma = [0.36, 0.64];
    let mb = [0.64, 0.36];
    let expected: Vec<f64> = ma.iter().flat_map(|x| mb.iter().map(move |y| x * y)).collect();
    assert!(close(&meet.masses(), &expected, 1e-12));
}

#[test]
fn remeasuring_same_basis_keeps_classes() {
    let (mut st, _) = two_party(comp, pm("q1"), None);
    let before = st.classes(&l("q1")).unwrap().len();
    let alice = pm("q1");
    let u = measurement_coupling(&alice, "A2", 3, 0).unwrap();
    st.add_system(Ket::basis_state("A2", 3, 0), Basis::computational("A2", 3)).unwrap();
    let pa = pointer_basis(&alice, "A2", 3, 0);
    st.interact(&l("q1"), &l("A2"), &u, alice, pa, EventId::new(5, "t5"), EventKind::Measure).unwrap();
    assert_eq!(st.classes(&l("q1")).unwrap().len(), before);
}

#[test]
fn hadamard_before_second_measurement() {
    let mut st = SimState::new();
    st.add_system(Ket::from_real(Space::single("q", 2), &[0.8, 0.6]).unwrap(), comp("q")).unwrap();
    for m in ["m", "m2"] {
        st.add_system(Ket::basis_state(m, 3, 0), Basis::computational(m, 3)).unwrap();
    }
    let u1 = measurement_coupling(&comp("q"), "m", 3, 0).unwrap();
    st.interact(
        &l("q"),
        &l("m"),
        &u1,
        comp("q"),
        pointer_basis(&comp("q"), "m", 3, 0),
        EventId::new(1, "t1"),
        EventKind::Measure,
    )
    .unwrap();
    st.local_unitary(EventId::new(2, "t2-h"), Unitary::hadamard("q")).unwrap();
    let u2 = measurement_coupling(&comp("q"), "m2", 3, 0).unwrap();
    let t = st
        .interact(
            &l("q"),
            &l("m2"),
            &u2,
            comp("q"),
            pointer_basis(&comp("q"), "m2", 3, 0),
            EventId::new(3, "t3"),
            EventKind::Measure,
        )
        .unwrap();
    assert!(close(&t.masses(), &[8.0 / 25.0, 8.0 / 25.0, 9.0 / 50.0, 9.0 / 50.0], 1e-12));
}

#[test]
fn unknown_and_empty_systems() {
    let mut st = SimState::new();
    st.declare(l("q"), 2, comp("q")).unwrap();
    assert!(matches!(st.meet(&l("q"), &l("z"), EventId::new(1, "t")), Err(EngineError::UnknownSystem(_))));
    st.add_system(Ket::basis_state("r", 2, 0), comp("r")).unwrap();
    assert!(matches!(st.meet(&l("q"), &l("r"), EventId::new(1, "t")), Err(EngineError::NoClasses(_))));
}

#[test]
fn census_counts() {
    let (st, _) = two_party(comp, comp("q1"), None);
    let c = finite_census(&st, &l("q1"), 25).unwrap();
    assert_eq!(c.values().copied().collect::<Vec<_>>(), vec![16, 9]);
    let err = census([("a", 0.5), ("b", 0.5)], 7).unwrap_err();
    assert!(matches!(err, EngineError::NotRepresentable { n: 7, .. }));
    let c = census([("a", 3.0 / 8.0), ("b", 1.0 / 8.0), ("c", 3.0 / 8.0), ("d", 1.0 / 8.0)], 8).unwrap();
    assert_eq!(c.values().copied().collect::<Vec<_>>(), vec![3, 1, 3, 1]);
}

#[test]
fn sampler_is_deterministic_and_conditions_on_history() {
    let (mut st, mut tables) = two_party(comp, pm("q1"), Some(pm("q2")));
    tables.push(st.meet(&l("A"), &l("B"), EventId::new(4, "t4-meet")).unwrap());
    let s = Sampler::new(&tables, l("A"));
    assert_eq!(s.sample_seeded(7).unwrap(), s.sample_seeded(7).unwrap());
    let steps = s.sample_seeded(7).unwrap();
    assert_eq!(steps.len(), 2);
    assert_eq!(steps[1].event.tag, "t4-meet");
    // the meeting row carries Alice's own earlier outcome
    assert_eq!(steps[1].outcomes[0], steps[0].outcomes[1]);
}
