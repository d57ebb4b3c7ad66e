//! Command-line front end. [`run`] takes argv and output sinks so every
//! subcommand can be driven in-process; the `pqml` binary only forwards to it.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::consensus::{self, AuditReport, ConsensusError};
use crate::domain::{MarketConfig, QualityScore, ScoreDomain};
use crate::fixed::Fixed;
use crate::ledger::{self, ChainStatus};
use crate::rewards;
use crate::sim::{self, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pqml", version, about = "Proof-of-quality consensus simulator and toolkit")]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write ledger.jsonl, metrics.csv, summary.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Latency table over a list of quorum sizes; writes sweep_k.csv.
    SweepK {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parameter thresholds.
    #[command(subcommand)]
    Thresholds(ThresholdCmd),
    /// Evaluate a reward function.
    #[command(subcommand)]
    Reward(RewardCmd),
    /// Histogram single-score inference rewards for several alphas.
    AnalyzeRewards {
        /// CSV with a `score` or `consensus` column (else the first column).
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        domain: DomainArgs,
    },
    /// Check the hash chain of a ledger file.
    VerifyLedger {
        #[arg(long)]
        path: PathBuf,
    },
    /// Replay a ledger and compare recorded outcomes with recomputed ones.
    Audit {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Profit of each inference strategy on the scenario's market.
    Theorem1 {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte-Carlo share of a guessing assessor.
    Theorem2 {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ThresholdCmd {
    /// Smallest alpha that makes downgrading unprofitable.
    Alpha {
        /// JSON list of model profiles, or a scenario file.
        #[arg(long)]
        market: PathBuf,
    },
    /// Largest beta keeping a guesser's share below epsilon.
    Beta {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        k: usize,
    },
}

#[derive(Debug, Args, Clone, Copy)]
pub struct DomainArgs {
    #[arg(long, default_value = "0")]
    pub lower: Fixed,
    #[arg(long, default_value = "10")]
    pub upper: Fixed,
}

#[derive(Debug, Subcommand)]
pub enum RewardCmd {
    /// Inference reward for the given scores.
    Chi {
        #[arg(long, value_delimiter = ',', required = true)]
        scores: Vec<QualityScore>,
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        domain: DomainArgs,
    },
    /// Assessor shares for the given scores.
    Phi {
        #[arg(long, value_delimiter = ',', required = true)]
        scores: Vec<QualityScore>,
        #[arg(long)]
        beta: f64,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_FAILURE,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> CmdResult {
    let json = cli.json;
    match &cli.command {
        Command::Simulate { config, seed, out: dir } => simulate(json, out, config, *seed, dir),
        Command::SweepK { config, k, out: dir } => sweep(json, out, config, k, dir),
        Command::Thresholds(ThresholdCmd::Alpha { market }) => alpha(json, out, market),
        Command::Thresholds(ThresholdCmd::Beta { delta, epsilon, k }) => beta(json, out, *delta, *epsilon, *k),
        Command::Reward(RewardCmd::Chi { scores, alpha, domain }) => chi(json, out, scores, *alpha, *domain),
        Command::Reward(RewardCmd::Phi { scores, beta }) => phi(json, out, scores, *beta),
        Command::AnalyzeRewards {
            scores,
            alphas,
            bins,
            out: file,
            domain,
        } => analyze(json, out, scores, alphas, *bins, file, *domain),
        Command::VerifyLedger { path } => verify(json, out, path),
        Command::Audit { path, config } => audit(json, out, path, config),
        Command::Theorem1 { config } => theorem1(json, out, config),
        Command::Theorem2 { config } => theorem2(json, out, config),
    }
}

fn emit_json(out: &mut dyn Write, value: &impl Serialize) -> Result<(), Failure> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn domain_of(d: DomainArgs) -> Result<ScoreDomain, Failure> {
    ScoreDomain::new(d.lower, d.upper).map_err(|e| usage(e.to_string()))
}

fn simulate(json: bool, out: &mut dyn Write, config: &Path, seed: Option<u64>, dir: &Path) -> CmdResult {
    let mut sc = Scenario::from_path(config)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    let run = sim::run_to_dir(&sc, dir)?;
    let s = &run.summary;
    if json {
        emit_json(out, s)?;
    } else {
        writeln!(out, "seed {}", s.seed)?;
        writeln!(
            out,
            "rounds {} finalized {} aborted {} failed {}",
            s.rounds, s.finalized, s.aborted, s.failed_queries
        )?;
        if let Some(l) = s.latency {
            writeln!(
                out,
                "latency_ms mean {:.6} median {:.6} p95 {:.6}",
                l.mean_ms, l.median_ms, l.p95_ms
            )?;
        }
        if let Some(v) = s.consensus_variance {
            writeln!(out, "consensus_variance {v:.6}")?;
        }
        writeln!(
            out,
            "conservation {}",
            if s.conservation_holds { "ok" } else { "violated" }
        )?;
        writeln!(out, "ledger {} records head {}", s.ledger_records, s.ledger_head)?;
        writeln!(out, "wrote {}", dir.display())?;
    }
    Ok(if s.conservation_holds { EXIT_OK } else { EXIT_FAILURE })
}

fn sweep(json: bool, out: &mut dyn Write, config: &Path, ks: &[usize], dir: &Path) -> CmdResult {
    let sc = Scenario::from_path(config)?;
    let rows = sim::sweep_k(&sc, ks)?;
    fs::create_dir_all(dir)?;
    let path = dir.join("sweep_k.csv");
    sim::write_sweep_csv(&rows, File::create(&path)?)?;
    if json {
        emit_json(out, &rows)?;
    } else {
        writeln!(out, "k,mean_ms,median_ms,p95_ms,assessor_mean_ms")?;
        for r in &rows {
            writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                r.k, r.mean_ms, r.median_ms, r.p95_ms, r.assessor_mean_ms
            )?;
        }
    }
    Ok(EXIT_OK)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MarketFile {
    List(MarketConfig),
    Wrapped { market: MarketConfig },
}

fn alpha(json: bool, out: &mut dyn Write, path: &Path) -> CmdResult {
    let text = fs::read_to_string(path)?;
    let market = match serde_json::from_str::<MarketFile>(&text) {
        Ok(MarketFile::List(m)) | Ok(MarketFile::Wrapped { market: m }) => m,
        Err(_) => serde_json::from_str::<MarketConfig>(&text)?,
    };
    let t = rewards::alpha_threshold(&market);
    if json {
        emit_json(out, &t)?;
        return Ok(EXIT_OK);
    }
    writeln!(out, "theta {:.6}", t.theta)?;
    if t.no_eligible_pair {
        writeln!(out, "no pair of models constrains alpha")?;
    }
    writeln!(out, "costlier,cheaper,alpha")?;
    for p in &t.pairs {
        writeln!(out, "{},{},{:.6}", p.costlier, p.cheaper, p.alpha)?;
    }
    for s in &t.skipped {
        writeln!(out, "{},{},skipped:{:?}", s.costlier, s.cheaper, s.reason)?;
    }
    Ok(EXIT_OK)
}

fn beta(json: bool, out: &mut dyn Write, delta: f64, epsilon: f64, k: usize) -> CmdResult {
    let b = rewards::beta_bound(delta, epsilon, k).map_err(|e| usage(e.to_string()))?;
    let share = rewards::guesser_expected_share(b.beta.max(0.0), delta, k)?;
    if json {
        emit_json(
            out,
            &json!({"beta": b.beta, "feasible": b.feasible, "guesser_share_at_beta": share}),
        )?;
    } else {
        writeln!(out, "beta {:.6}", b.beta)?;
        writeln!(out, "feasible {}", b.feasible)?;
        writeln!(out, "guesser_share_at_beta {share:.6}")?;
    }
    Ok(EXIT_OK)
}

fn chi(json: bool, out: &mut dyn Write, scores: &[QualityScore], alpha: f64, domain: DomainArgs) -> CmdResult {
    let domain = domain_of(domain)?;
    let v = rewards::inference_reward(scores, alpha, domain).map_err(|e| usage(e.to_string()))?;
    if json {
        emit_json(out, &json!({ "chi": v }))?;
    } else {
        writeln!(out, "{v:.6}")?;
    }
    Ok(EXIT_OK)
}

fn phi(json: bool, out: &mut dyn Write, scores: &[QualityScore], beta: f64) -> CmdResult {
    let h = rewards::assessor_shares(scores, beta).map_err(|e| usage(e.to_string()))?;
    if json {
        emit_json(out, &json!({ "shares": h.as_slice() }))?;
    } else {
        let parts: Vec<String> = h.as_slice().iter().map(|x| format!("{x:.6}")).collect();
        writeln!(out, "{}", parts.join(","))?;
    }
    Ok(EXIT_OK)
}

fn read_score_column(path: &Path) -> Result<Vec<QualityScore>, Failure> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "score")
        .or_else(|| headers.iter().position(|h| h == "consensus"))
        .unwrap_or(0);
    let mut scores = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(col).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        let s: QualityScore = cell
            .parse()
            .map_err(|e| usage(format!("{}: row {}: {e}", path.display(), i + 2)))?;
        scores.push(s);
    }
    Ok(scores)
}

fn analyze(
    json: bool,
    out: &mut dyn Write,
    scores: &Path,
    alphas: &[f64],
    bins: usize,
    file: &Path,
    domain: DomainArgs,
) -> CmdResult {
    let domain = domain_of(domain)?;
    let samples = read_score_column(scores)?;
    let hists = rewards::reward_distribution(&samples, alphas, domain, bins).map_err(|e| usage(e.to_string()))?;
    rewards::write_reward_distribution_csv(File::create(file)?, &hists)?;
    if json {
        emit_json(out, &hists)?;
    } else {
        writeln!(out, "samples {}", samples.len())?;
        for h in &hists {
            writeln!(out, "alpha {:.6} mean_reward {:.6}", h.alpha, h.mean_reward)?;
        }
        writeln!(out, "wrote {}", file.display())?;
    }
    Ok(EXIT_OK)
}

fn verify(json: bool, out: &mut dyn Write, path: &Path) -> CmdResult {
    let status = ledger::verify_chain(path)?;
    if json {
        emit_json(out, &status)?;
    } else {
        match &status {
            ChainStatus::Ok { records, head } => writeln!(out, "ok {records} records head {}", hex::encode(head))?,
            ChainStatus::Broken { first_bad_seq, reason } => {
                writeln!(out, "broken first_bad_seq {first_bad_seq}: {reason}")?
            }
        }
    }
    Ok(if status.is_ok() { EXIT_OK } else { EXIT_FAILURE })
}

fn audit(json: bool, out: &mut dyn Write, path: &Path, config: &Path) -> CmdResult {
    let sc = Scenario::from_path(config)?;
    let report: AuditReport = match consensus::audit_replay(path, sc.audit_params()) {
        Ok(r) => r,
        Err(ConsensusError::BrokenChain { first_bad_seq, reason }) => {
            if json {
                emit_json(
                    out,
                    &json!({"chain": "broken", "first_bad_seq": first_bad_seq, "reason": reason}),
                )?;
            } else {
                writeln!(out, "chain broken first_bad_seq {first_bad_seq}: {reason}")?;
            }
            return Ok(EXIT_FAILURE);
        }
        Err(e) => return Err(e.into()),
    };
    if json {
        emit_json(out, &report)?;
    } else {
        writeln!(out, "rounds_checked {}", report.rounds_checked)?;
        writeln!(out, "divergences {}", report.divergences.len())?;
        for d in &report.divergences {
            writeln!(
                out,
                "round {} seq {} {}: recorded {} recomputed {}",
                d.round_id, d.seq, d.field, d.recorded, d.recomputed
            )?;
        }
    }
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_FAILURE })
}

fn theorem1(json: bool, out: &mut dyn Write, config: &Path) -> CmdResult {
    let sc = Scenario::from_path(config)?;
    let r = sim::theorem1_experiment(&sc)?;
    if json {
        emit_json(out, &r)?;
        return Ok(EXIT_OK);
    }
    writeln!(out, "theta {:.6} alpha {:.6} bounty {}", r.theta, r.alpha, r.bounty)?;
    writeln!(out, "strategy,cost,queries,mean_profit,se,total_profit")?;
    for row in &r.rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6}",
            row.strategy, row.cost, row.queries, row.mean_profit, row.se, row.total_profit
        )?;
    }
    writeln!(out, "most_profitable {}", r.most_profitable)?;
    writeln!(out, "best_model_wins {}", r.best_model_wins)?;
    Ok(EXIT_OK)
}

fn theorem2(json: bool, out: &mut dyn Write, config: &Path) -> CmdResult {
    let sc = Scenario::from_path(config)?;
    let r = sim::theorem2_experiment(&sc)?;
    if json {
        emit_json(out, &r)?;
    } else {
        writeln!(out, "k {} delta {:.6} epsilon {:.6}", r.k, r.delta, r.epsilon)?;
        writeln!(out, "beta {:.6} beta_bound {:.6}", r.beta, r.beta_bound)?;
        writeln!(out, "rounds {}", r.rounds)?;
        writeln!(out, "guesser_share {:.6} se {:.6}", r.guesser_share, r.se)?;
        writeln!(out, "honest_share {:.6}", r.honest_share)?;
        writeln!(out, "closed_form_share {:.6}", r.closed_form_share)?;
        writeln!(out, "passes {}", r.passes)?;
    }
    Ok(if r.passes { EXIT_OK } else { EXIT_FAILURE })
}
