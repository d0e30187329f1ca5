//! Follow single lives of Alice's apparatus through the Mermin round.

use plives::scenarios::{run, sample_run, wigner_mermin_round};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let report = run(&wigner_mermin_round(1, 2).compile()?)?;
    for seed in 0..5 {
        let steps = sample_run(&report, "A", seed)?;
        let trail: Vec<String> = steps.iter().map(|s| format!("{}:{}", s.event.tag, s.outcomes.join("/"))).collect();
        println!("life {seed}: {}", trail.join("  "));
    }
    Ok(())
}
