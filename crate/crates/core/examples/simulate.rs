//! Runs a scenario end to end and prints the summary and the most and least
//! profitable nodes.
//!
//!     cargo run --example simulate -- scenarios/default.json

use std::path::PathBuf;

use pqml::sim::{run, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/default.json")));
    let sc = Scenario::from_path(&config)?;
    let out = run(&sc)?;
    let s = &out.summary;
    println!(
        "{} queries -> {} rounds ({} finalized, {} aborted, {} failed)",
        s.queries, s.rounds, s.finalized, s.aborted, s.failed_queries
    );
    if let Some(l) = s.latency {
        println!(
            "latency ms: mean {:.2} median {:.2} p95 {:.2}",
            l.mean_ms, l.median_ms, l.p95_ms
        );
    }
    if let Some(v) = s.consensus_variance {
        println!("consensus score variance {v:.4} (diversity bound {})", s.delta);
    }
    println!(
        "funds committed {} posted {} conserved {}",
        s.funds_committed, s.funds_posted, s.conservation_holds
    );

    let mut nodes = out.nodes.clone();
    nodes.sort_by_key(|n| std::cmp::Reverse(n.profit));
    println!(
        "\n{:<14} {:<10} {:>6} {:>6} {:>14}",
        "node", "strategy", "tasks", "incl", "profit"
    );
    let show = |n: &pqml::sim::NodeMetrics| {
        println!(
            "{:<14} {:<10} {:>6} {:>6} {:>14}",
            n.node.to_string(),
            n.strategy,
            n.assignments,
            n.included,
            n.profit
        );
    };
    nodes.iter().take(5).for_each(show);
    println!("...");
    nodes.iter().rev().take(3).rev().for_each(show);
    Ok(())
}
