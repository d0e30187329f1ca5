//! Quantum eraser on a 1024-bin screen: fringes appear only after sorting by
//! the which-path qubit in the {+, -} basis. Writes CSV to stdout.

use plives::continuum::{eraser_distributions, eraser_unconditional, profiles_to_csv, visibility, EraserConfig};
use plives::qmath::Basis;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EraserConfig::default();
    let pm = eraser_distributions(&cfg, &Basis::plus_minus("w"))?;
    let comp = eraser_distributions(&cfg, &Basis::computational("w", 2))?;
    let total = eraser_unconditional(&cfg)?;
    for (name, p) in [("w=+", &pm.conditional["+"]), ("w=0", &comp.conditional["0"]), ("unconditional", &total)] {
        eprintln!("{name:>14}: visibility {:.6}", visibility(p, &cfg));
    }
    print!(
        "{}",
        profiles_to_csv(&[("w=+", &pm.conditional["+"]), ("w=-", &pm.conditional["-"]), ("unconditional", &total)])?
    );
    Ok(())
}
