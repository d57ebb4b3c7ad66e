//! How the inference reward spreads over a simulated workload for several
//! alpha values; writes the histogram as CSV to stdout.

use std::path::PathBuf;

use pqml::rewards::{reward_distribution, write_reward_distribution_csv};
use pqml::sim::{run, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/variance.json")));
    let sc = Scenario::from_path(&config)?;
    let out = run(&sc)?;
    let scores: Vec<_> = out.rounds.iter().filter_map(|r| r.consensus).collect();
    let hists = reward_distribution(&scores, &[0.05, 0.2, 0.5, 1.0], sc.domain, 10)?;
    for h in &hists {
        eprintln!("alpha {:<5} mean reward {:.4}", h.alpha, h.mean_reward);
    }
    write_reward_distribution_csv(std::io::stdout().lock(), &hists)?;
    Ok(())
}
