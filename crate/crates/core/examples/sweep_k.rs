//! Consensus latency as the quorum size grows, with the assessor pool held
//! fixed.

use std::path::PathBuf;

use pqml::sim::{sweep_k, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/sweep.json")));
    let sc = Scenario::from_path(&config)?;
    let ks = [1, 2, 5, 10, 15, 20, 25, 30];
    let rows = sweep_k(&sc, &ks)?;
    println!(
        "{} assessors, m = {}, mean assessor latency {:.1} ms",
        sc.assessor_population(),
        sc.rewards.m,
        sc.mean_assessor_latency_ms()
    );
    println!(
        "{:>3} {:>9} {:>9} {:>9} {:>12}",
        "k", "mean", "median", "p95", "assessor"
    );
    for r in &rows {
        println!(
            "{:>3} {:>9.2} {:>9.2} {:>9.2} {:>12.2}",
            r.k, r.mean_ms, r.median_ms, r.p95_ms, r.assessor_mean_ms
        );
    }
    println!(
        "k=30 / k=1 mean latency: {:.2}",
        rows.last().unwrap().mean_ms / rows[0].mean_ms
    );
    Ok(())
}
