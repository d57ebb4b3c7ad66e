//! Runs a small scenario, checks the ledger's hash chain, replays it
//! through the auditor, then shows a one-byte edit being caught.

use std::path::PathBuf;

use pqml::consensus::audit_replay;
use pqml::ledger::{verify_chain, ChainStatus};
use pqml::sim::{run_to_dir, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/copier.json")));
    let sc = Scenario::from_path(&config)?;
    let dir = std::env::temp_dir().join(format!("pqml-ledger-audit-{}", std::process::id()));
    let out = run_to_dir(&sc, &dir)?;
    let ledger = dir.join("ledger.jsonl");
    println!("{} rounds written to {}", out.summary.rounds, ledger.display());

    match verify_chain(&ledger)? {
        ChainStatus::Ok { records, head } => println!("chain ok: {records} records, head {}", hex::encode(head)),
        ChainStatus::Broken { first_bad_seq, reason } => println!("chain broken at {first_bad_seq}: {reason}"),
    }
    let report = audit_replay(&ledger, sc.audit_params())?;
    println!(
        "audit: {} rounds, {} divergences",
        report.rounds_checked,
        report.divergences.len()
    );

    let mut bytes = std::fs::read(&ledger)?;
    let i = bytes.len() / 3;
    bytes[i] ^= 0x01;
    let tampered = dir.join("tampered.jsonl");
    std::fs::write(&tampered, &bytes)?;
    match verify_chain(&tampered) {
        Ok(ChainStatus::Broken { first_bad_seq, reason }) => {
            println!("tampered copy: broken at {first_bad_seq}: {reason}")
        }
        Ok(ChainStatus::Ok { .. }) => println!("tampered copy: unexpectedly intact"),
        Err(e) => println!("tampered copy: unreadable ({e})"),
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
