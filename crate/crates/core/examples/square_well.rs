//! Energy measurement on (|1> + |2>)/sqrt(2) in a unit square well: the
//! position density loses its cross term, and lives limited to speed c
//! need at least W1(before, after)/c to redistribute.

use num_complex::Complex64;
use plives::continuum::{collapse_time_lower_bound, square_well_profiles};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    for bins in [256, 512, 1024, 2048] {
        let (before, after) = square_well_profiles(1.0, &[(1, c), (2, c)], bins)?;
        let bound = collapse_time_lower_bound(&before, &after, 1.0)?;
        println!("{bins:>5} bins: mean before {:.4}, after {:.4}, W1/c = {bound:.6}", before.mean(), after.mean());
    }
    Ok(())
}
