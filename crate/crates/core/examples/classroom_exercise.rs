//! The eight-student Wigner-Mermin exercise, all nine setting pairs.

use plives::exercise::{minimal_lives, Session};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("smallest class: {} students per side", minimal_lives());
    let mut session = Session::new("demo", 8, 2024)?;
    for a in 1..=3 {
        for b in 1..=3 {
            let round = session.play_round(a, b)?;
            let pairs: Vec<String> = round.pairs.iter().map(|p| format!("{}{}", p.outcome_a, p.outcome_b)).collect();
            println!("A={a} B={b}  same {}/8  [{}]  {:?}", round.same, pairs.join(" "), round.matching);
        }
    }
    let s = session.summary();
    println!(
        "P(same | different) = {:?}, quantum {}, local bound {:.4}: {}",
        s.p_same_given_different, s.quantum_prediction, s.lhv_bound, s.verdict
    );
    Ok(())
}
