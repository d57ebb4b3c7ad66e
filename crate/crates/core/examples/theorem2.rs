//! Expected share of an assessor that guesses instead of scoring, against
//! the closed-form bound, over a range of beta values.

use std::path::PathBuf;

use pqml::sim::{theorem2_experiment, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/theorem2.json")));
    let base = Scenario::from_path(&config)?;
    let t2 = base.theorem2.ok_or("scenario has no theorem2 section")?;
    println!("k = {}, delta = {}, epsilon = {}", base.rewards.k, t2.delta, t2.epsilon);
    println!(
        "{:>8} {:>10} {:>10} {:>10} {:>12}",
        "beta", "guesser", "se", "honest", "closed form"
    );
    for beta in [None, Some(0.0), Some(2.0), Some(5.0), Some(10.0)] {
        let mut sc = base.clone();
        let t = sc.theorem2.as_mut().unwrap();
        t.rounds = 20_000;
        t.beta = beta;
        let r = theorem2_experiment(&sc)?;
        let tag = if beta.is_none() { " (bound)" } else { "" };
        println!(
            "{:>8.4} {:>10.6} {:>10.6} {:>10.6} {:>12.6}{tag}",
            r.beta, r.guesser_share, r.se, r.honest_share, r.closed_form_share
        );
    }
    Ok(())
}
