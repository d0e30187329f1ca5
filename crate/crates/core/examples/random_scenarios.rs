//! Generate random scenarios and report the worst oracle deviations.

use plives::scenarios::{random_scenario, run, RandomShape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(50);
    let mut worst = 0.0f64;
    let mut failing = 0;
    for seed in 0..n {
        let report = run(&random_scenario(seed, RandomShape::default()).compile()?)?;
        for c in report.checks.iter().filter(|c| c.name.starts_with("marginal:")) {
            worst = worst.max(c.deviation);
        }
        if !report.passed() {
            failing += 1;
            println!("{}: {:?}", report.scenario, report.failures().iter().map(|c| &c.name).collect::<Vec<_>>());
        }
    }
    println!("{n} scenarios, {failing} with failing enforced checks, worst marginal deviation {worst:.2e}");
    Ok(())
}
