//! Parameter thresholds: the smallest alpha that stops downgrading and the
//! beta range that limits a guessing assessor.

use pqml::domain::{validate_market, ModelProfile};
use pqml::rewards::{alpha_threshold, beta_bound, beta_for_guesser_share, guesser_expected_share};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let market = validate_market(vec![
        ModelProfile::new("large", 9.0, 5.0, 1.0),
        ModelProfile::new("medium", 8.0, 3.0, 1.2),
        ModelProfile::new("small", 7.0, 2.0, 1.5),
    ])?;
    let t = alpha_threshold(&market);
    println!("alpha threshold {:.6}", t.theta);
    for p in &t.pairs {
        println!("  {} over {}: {:.6}", p.costlier, p.cheaper, p.alpha);
    }
    for s in &t.skipped {
        println!("  skipped {} / {}: {:?}", s.costlier, s.cheaper, s.reason);
    }

    let (delta, epsilon) = (1.0, 0.1);
    println!(
        "\n{:>4} {:>10} {:>10} {:>12} {:>12}",
        "k", "bound", "share", "beta(eps)", "share"
    );
    for k in [2, 5, 10, 21, 50] {
        let b = beta_bound(delta, epsilon, k)?;
        let at_bound = if b.feasible {
            format!("{:.6}", guesser_expected_share(b.beta, delta, k)?)
        } else {
            "infeasible".to_string()
        };
        let exact = beta_for_guesser_share(delta, epsilon, k)?;
        let at_exact = guesser_expected_share(exact.max(0.0), delta, k)?;
        println!("{k:>4} {:>10.6} {at_bound:>10} {exact:>12.6} {at_exact:>12.6}", b.beta);
    }
    Ok(())
}
