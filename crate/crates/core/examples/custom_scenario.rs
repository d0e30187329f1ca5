//! Build a scenario in code, save it as JSON, load it back and run it.

use plives::scenarios::{ActionSpec, BasisSpec, EventSpec, ScenarioSpec, SystemSpec, SCHEMA};

fn system(id: &str, dim: usize, initial: Option<Vec<[f64; 2]>>) -> SystemSpec {
    SystemSpec { id: id.into(), dim, initial, basis: None }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ScenarioSpec {
        schema: SCHEMA.into(),
        name: "biased_coin".into(),
        description: "A qubit 0.6|0> + 0.8|1> read twice by two apparatus that then meet.".into(),
        systems: vec![
            system("q", 2, Some(vec![[0.6, 0.0], [0.8, 0.0]])),
            system("M1", 3, Some(vec![[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])),
            system("M2", 3, Some(vec![[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])),
        ],
        events: vec![
            EventSpec {
                tag: "t1".into(),
                ordinal: 1,
                participants: vec!["q".into(), "M1".into()],
                action: ActionSpec::Measure { basis: BasisSpec::computational(), ready: 0 },
            },
            EventSpec {
                tag: "t2".into(),
                ordinal: 2,
                participants: vec!["q".into(), "M2".into()],
                action: ActionSpec::Measure { basis: BasisSpec::computational(), ready: 0 },
            },
            EventSpec {
                tag: "t3".into(),
                ordinal: 3,
                participants: vec!["M1".into(), "M2".into()],
                action: ActionSpec::Meet,
            },
        ],
        edges: Vec::new(),
        observer: Some("M1".into()),
        lives: Some(25),
        notes: Vec::new(),
        known_deviations: Vec::new(),
    };
    let path = std::env::temp_dir().join("biased_coin.json");
    std::fs::write(&path, spec.to_json())?;
    let loaded = ScenarioSpec::from_json(&std::fs::read_to_string(&path)?)?;
    let report = plives::scenarios::run(&loaded.compile()?)?;
    println!("saved to {}; `pl run {}` runs it too", path.display(), path.display());
    for c in &report.censuses {
        println!("{}: {:?}", c.event, c.counts);
    }
    println!("all checks passed: {}", report.passed());
    Ok(())
}
