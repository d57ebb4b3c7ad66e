//! Per-query profit of honest, downgraded and free-riding inference nodes,
//! above the alpha threshold and far below it.

use std::path::PathBuf;

use pqml::sim::{theorem1_experiment, Scenario, Theorem1Report};
use pqml::Fixed;

fn show(r: &Theorem1Report) {
    println!("alpha {:.6} (threshold {:.6}), bounty {}", r.alpha, r.theta, r.bounty);
    for row in &r.rows {
        println!(
            "  {:<18} cost {:>10} profit/query {:>9.4} ± {:.4}",
            row.strategy, row.cost, row.mean_profit, row.se
        );
    }
    println!("  most profitable: {}\n", r.most_profitable);
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/theorem1.json")));
    let mut sc = Scenario::from_path(&config)?;
    if let Some(t) = sc.theorem1.as_mut() {
        t.queries = Some(2000);
    }
    show(&theorem1_experiment(&sc)?);

    let mut low = sc.clone();
    low.theorem1.get_or_insert_with(Default::default).alpha_factor = Some(0.1);
    low.rewards.bounty = Fixed::from_int(35);
    show(&theorem1_experiment(&low)?);
    Ok(())
}
