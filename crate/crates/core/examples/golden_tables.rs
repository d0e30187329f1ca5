//! Print the engine tables for the three two-party examples.
//!
//! `cargo run -p plives --example golden_tables`

use plives::scenarios::{self, run};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for spec in [scenarios::example1(), scenarios::example2(), scenarios::example3()] {
        let report = run(&spec.compile()?)?;
        println!("== {} ({})", report.scenario, spec.description);
        for t in &report.tables {
            println!("{} {:?} {:?}", t.event.tag, t.kind, t.systems.iter().map(|s| s.as_str()).collect::<Vec<_>>());
            for row in &t.rows {
                let priors: Vec<&str> = row.priors.iter().map(String::as_str).filter(|p| !p.is_empty()).collect();
                println!("  {:>10.6}  {:<12} {}", row.mass, row.outcomes.join(","), priors.join(" ; "));
            }
        }
        for c in report.checks.iter().filter(|c| !c.passed) {
            println!("  check {} deviates by {:.3e} (enforced: {})", c.name, c.deviation, c.enforced);
        }
        println!();
    }
    Ok(())
}
