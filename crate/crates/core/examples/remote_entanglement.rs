//! Two emitters entangled by a single detected photon, then a Mermin round
//! on them, conditioned on the detector reading one photon.

use plives::engine::census;
use plives::scenarios::{execute, remote_entanglement};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (a, b) in [(1, 1), (1, 2), (2, 3)] {
        let sc = remote_entanglement(a, b).compile()?;
        let ex = execute(&sc, &sc.default_order()?)?;
        let joint = ex.conditional_joint("A", &["A", "B"], &[("D", "1")])?;
        let keys: Vec<(String, f64)> = joint.iter().map(|(k, v)| (k.join(","), *v)).collect();
        let counts = census(keys.iter().map(|(k, v)| (k.as_str(), *v)), 8)?;
        println!("A={a} B={b}: {counts:?}");
    }
    Ok(())
}
