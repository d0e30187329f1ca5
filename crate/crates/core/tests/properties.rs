use approx::assert_abs_diff_eq;
use plives::campaign::{run_campaign, BellMode, CampaignConfig, SettingTally};
use plives::continuum::{wasserstein1, DensityProfile, Grid};
use plives::engine::census;
use plives::oracle::born_joint;
use plives::qmath::{inner, Basis, Ket, Operator, Space, Unitary, C64};
use plives::scenarios::{execute, random_scenario, random_unitary, RandomShape, RunReport, ScenarioSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_run(seed: u64) -> RunReport {
    let spec = random_scenario(seed, RandomShape::default());
    let sc = spec.compile().unwrap();
    execute(&sc, &sc.default_order().unwrap()).unwrap().report
}

fn ket(amps: &[(f64, f64)]) -> Ket {
    let v: Vec<C64> = amps.iter().map(|&(re, im)| C64::new(re, im)).collect();
    Ket::on("q", v).unwrap().normalized().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_runs_conserve_mass_and_marginals(seed in any::<u64>()) {
        let r = random_run(seed);
        for c in r.checks.iter().filter(|c| c.name.starts_with("mass:") || c.name.starts_with("marginal:")) {
            prop_assert!(c.passed, "{} {} deviation {}", r.scenario, c.name, c.deviation);
        }
        for t in &r.tables {
            prop_assert!((t.total_mass() - 1.0).abs() < 1e-9, "{} {}", r.scenario, t.event);
            prop_assert!(t.rows.iter().all(|row| row.mass >= 0.0));
        }
    }

    #[test]
    fn random_splits_follow_the_born_rule(seed in any::<u64>()) {
        let r = random_run(seed);
        let meets: Vec<&str> = r.tables.iter().filter(|t| t.kind == plives::engine::EventKind::Meet).map(|t| t.event.tag.as_str()).collect();
        for c in r.checks.iter().filter(|c| c.name.starts_with("born:")) {
            let tag = &c.name["born:".len()..];
            if !meets.contains(&tag) {
                prop_assert!(c.passed, "{} {} deviation {}", r.scenario, c.name, c.deviation);
            }
        }
    }

    #[test]
    fn random_reorderings_agree(seed in any::<u64>()) {
        let sc = random_scenario(seed, RandomShape::default()).compile().unwrap();
        let orders = sc.all_orders(6);
        let base = execute(&sc, &orders[0]).unwrap().report;
        for o in &orders[1..] {
            let other = execute(&sc, o).unwrap().report;
            for c in &base.classes {
                let twin = other.classes.iter().find(|d| d.system == c.system && d.history == c.history);
                prop_assert!(twin.is_some_and(|d| (d.mass - c.mass).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn scenario_json_round_trips(seed in any::<u64>()) {
        let spec = random_scenario(seed, RandomShape::default());
        prop_assert_eq!(ScenarioSpec::from_json(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn report_json_round_trips(seed in 0u64..1000) {
        let r = random_run(seed);
        let back: RunReport = serde_json::from_str(&r.to_json()).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn census_recovers_integer_counts(counts in prop::collection::vec(0u64..40, 1..8)) {
        let n: u64 = counts.iter().sum();
        prop_assume!(n > 0);
        let keys: Vec<String> = (0..counts.len()).map(|i| format!("h{i}")).collect();
        let masses: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let got = census(keys.iter().map(String::as_str).zip(masses.iter().copied()), n).unwrap();
        prop_assert_eq!(got.values().sum::<u64>(), n);
        for (k, c) in keys.iter().zip(&counts) {
            prop_assert_eq!(got.get(k).copied().unwrap_or(0), *c);
        }
    }

    #[test]
    fn census_rejects_fractional_counts(k in 1u64..7) {
        let masses = [("a", 0.5), ("b", 0.5)];
        prop_assert!(census(masses, 2 * k + 1).is_err());
        prop_assert!(census(masses, 2 * k).is_ok());
    }

    #[test]
    fn random_unitaries_preserve_norms(seed in any::<u64>(), dim in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_unitary(dim, &mut rng);
        let space = Space::single("q", dim);
        let u = Unitary::new(space.clone(), rows.into_iter().flatten().collect()).unwrap();
        let product = u.dagger().operator().compose(u.operator()).unwrap();
        prop_assert!(product.max_abs_diff(&Operator::identity(space)) < 1e-12);
        let psi = Ket::basis_state("q", dim, (seed % dim as u64) as usize);
        assert_abs_diff_eq!(u.apply(&psi).unwrap().norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn born_probabilities_sum_to_one(a in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2), theta in 0.0f64..6.3) {
        prop_assume!(a.iter().map(|(x, y)| x * x + y * y).sum::<f64>() > 1e-3);
        let psi = ket(&a);
        let basis = Basis::angle("q", theta);
        let joint = born_joint(&psi, &[basis.clone()]).unwrap();
        assert_abs_diff_eq!(joint.total(), 1.0, epsilon = 1e-12);
        for (i, l) in basis.labels().iter().enumerate() {
            let amp = inner(&basis.ket(i), &psi).unwrap();
            assert_abs_diff_eq!(joint.get(&[l.as_str()]), amp.norm_sqr(), epsilon = 1e-12);
        }
    }

    #[test]
    fn earth_mover_distance_is_a_metric(
        a in prop::collection::vec(0.0f64..1.0, 16),
        b in prop::collection::vec(0.0f64..1.0, 16),
        c in prop::collection::vec(0.0f64..1.0, 16),
    ) {
        let grid = Grid::new(0.0, 1.0, 16).unwrap();
        let profile = |w: &[f64]| DensityProfile::from_weights(grid, w.to_vec());
        let (Ok(a), Ok(b), Ok(c)) = (profile(&a), profile(&b), profile(&c)) else { return Ok(()) };
        let ab = wasserstein1(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!(wasserstein1(&a, &a).unwrap() < 1e-15);
        assert_abs_diff_eq!(ab, wasserstein1(&b, &a).unwrap(), epsilon = 1e-12);
        prop_assert!(ab <= wasserstein1(&a, &c).unwrap() + wasserstein1(&c, &b).unwrap() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn campaign_tallies_cover_every_round(seed in any::<u64>(), rounds in 1u64..400, workers in 1usize..5) {
        let cfg = CampaignConfig { workers, ..CampaignConfig::new(BellMode::Mermin, rounds, seed) };
        let r = run_campaign(&cfg).unwrap();
        prop_assert_eq!(r.tallies.iter().map(SettingTally::total).sum::<u64>(), rounds);
        prop_assert!((1..=3).all(|s| r.tally(s, s).unwrap().same == 0));
    }
}
