//! Inference reward and assessor shares for a few hand-picked rounds.

use pqml::rewards::{assessor_shares, inference_reward};
use pqml::{QualityScore, ScoreDomain};

fn scores(xs: &[&str]) -> Vec<QualityScore> {
    xs.iter().map(|x| x.parse().expect("score")).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let domain = ScoreDomain::default();
    let rounds = [
        vec!["10", "10", "10"],
        vec!["9", "9", "8"],
        vec!["5", "5", "8"],
        vec!["7.5", "2", "7.25", "7.75"],
    ];
    for r in &rounds {
        let s = scores(r);
        print!("scores {:<24}", r.join(","));
        for alpha in [0.1, 0.5, 2.0] {
            print!(" chi(a={alpha}) {:.6}", inference_reward(&s, alpha, domain)?);
        }
        println!();
        for beta in [0.0, 0.5, 3.0] {
            let h = assessor_shares(&s, beta)?;
            let shown: Vec<String> = h.as_slice().iter().map(|x| format!("{x:.6}")).collect();
            println!("    shares(b={beta}) {}", shown.join(" "));
        }
    }
    Ok(())
}
