//! Sampling Bell campaigns in both modes.
//!
//! `cargo run -p plives --release --example bell_campaign -- 100000 7`

use plives::campaign::{run_campaign, BellMode, CampaignConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let rounds = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100_000);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    for mode in [BellMode::Mermin, BellMode::Chsh] {
        let r = run_campaign(&CampaignConfig::new(mode, rounds, seed))?;
        println!("{mode:?}: {} rounds, seed {seed}", r.rounds);
        for t in &r.tallies {
            println!("  ({}, {})  same {:>6}  different {:>6}", t.setting_a, t.setting_b, t.same, t.different);
        }
        println!(
            "  statistic {:.4}  quantum {:.4}  local bound {:.4}",
            r.statistic.unwrap_or(f64::NAN),
            r.quantum,
            r.lhv_bound
        );
    }
    Ok(())
}
