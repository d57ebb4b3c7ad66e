//! Deterministic discrete-event simulation of the full protocol.
//!
//! One management node, a pool of inference nodes and a pool of assessors
//! exchange messages over a simulated network. Time is integer
//! microseconds. Every random draw is a SHA-256 counter stream keyed by the
//! scenario seed and the node, so a (scenario, seed) pair fixes the ledger
//! bytes.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::commitment::{seal, RevealRecord, Scheme};
use crate::consensus::{CommitOutcome, ConsensusError, ConsensusRound, RevealOutcome};
use crate::domain::{Amount, DomainError, MarketConfig, ModelId, NodeId, QualityScore, RewardParams, ScoreDomain};
use crate::fixed::Fixed;
use crate::ledger::{
    AbortReason, AssessorsAssigned, CommitQuorum, LedgerError, LedgerEvent, LedgerWriter, QueryPosted, ResponsePosted,
    RoundAborted, RoundFinalized, ScoreRevealed, ScoreSealed,
};
use crate::rewards::{self, RewardsError};
use crate::scheduler::{SchedulerError, SchedulerParams, SchedulerPools};
use crate::scoring::{
    self, guesser_score, normal_quantile, unit_interval, AssessorStrategy, GuessDistribution, InferenceStrategy,
    ResponseSource, ScoringError,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Rewards(#[from] RewardsError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("scenario json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invariant violated at t={time_us}us: {message}")]
    Invariant { time_us: u64, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Per-node delay distribution, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LatencyModel {
    Constant {
        ms: f64,
    },
    Uniform {
        lo_ms: f64,
        hi_ms: f64,
    },
    /// `exp(N(mu, sigma²))` milliseconds.
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    /// Log-normal parameterised by its mean.
    LogNormalMean {
        mean_ms: f64,
        sigma: f64,
    },
}

impl LatencyModel {
    pub fn constant(ms: f64) -> Self {
        LatencyModel::Constant { ms }
    }

    pub fn log_normal_with_mean(mean_ms: f64, sigma: f64) -> Self {
        LatencyModel::LogNormalMean { mean_ms, sigma }
    }

    fn mu_sigma(&self) -> Option<(f64, f64)> {
        match *self {
            LatencyModel::LogNormal { mu, sigma } => Some((mu, sigma)),
            LatencyModel::LogNormalMean { mean_ms, sigma } => Some((libm::log(mean_ms) - sigma * sigma / 2.0, sigma)),
            _ => None,
        }
    }

    pub fn mean_ms(&self) -> f64 {
        match *self {
            LatencyModel::Constant { ms } => ms,
            LatencyModel::Uniform { lo_ms, hi_ms } => (lo_ms + hi_ms) / 2.0,
            _ => {
                let (mu, sigma) = self.mu_sigma().expect("log-normal");
                libm::exp(mu + sigma * sigma / 2.0)
            }
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = match *self {
            LatencyModel::Constant { ms } => ms > 0.0 && ms.is_finite(),
            LatencyModel::Uniform { lo_ms, hi_ms } => lo_ms > 0.0 && hi_ms >= lo_ms && hi_ms.is_finite(),
            LatencyModel::LogNormal { mu, sigma } => mu.is_finite() && sigma >= 0.0 && sigma.is_finite(),
            LatencyModel::LogNormalMean { mean_ms, sigma } => {
                mean_ms > 0.0 && mean_ms.is_finite() && sigma >= 0.0 && sigma.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::Config(format!("bad latency model {self:?}")))
        }
    }

    /// A draw in whole microseconds, never below 1.
    pub fn draw_us(&self, u: f64) -> u64 {
        let ms = match *self {
            LatencyModel::Constant { ms } => ms,
            LatencyModel::Uniform { lo_ms, hi_ms } => lo_ms + (hi_ms - lo_ms) * u,
            _ => {
                let (mu, sigma) = self.mu_sigma().expect("log-normal");
                libm::exp(mu + sigma * normal_quantile(u))
            }
        };
        ((ms * 1000.0).round() as u64).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Interarrival {
    Fixed { ms: f64 },
    Exponential { mean_ms: f64 },
}

impl Default for Interarrival {
    fn default() -> Self {
        Interarrival::Fixed { ms: 100.0 }
    }
}

impl Interarrival {
    fn draw_us(&self, u: f64) -> u64 {
        let ms = match *self {
            Interarrival::Fixed { ms } => ms,
            Interarrival::Exponential { mean_ms } => -mean_ms * libm::log(u),
        };
        (ms * 1000.0).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGroup<S> {
    pub count: usize,
    pub strategy: S,
    pub latency: LatencyModel,
}

fn default_rho() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardsConfig {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub m: usize,
    /// Assessment budget as a fraction of the bounty.
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub bounty: Amount,
}

impl RewardsConfig {
    pub fn params(&self) -> RewardParams {
        RewardParams {
            alpha: self.alpha,
            beta: self.beta,
            k: self.k,
            m: self.m,
        }
    }
}

fn default_gamma() -> QualityScore {
    QualityScore(Fixed::from_int(7))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub waiting_threshold: u64,
    pub bonus: Fixed,
    /// Consensus score at or above which the inference node did well.
    #[serde(default = "default_gamma")]
    pub gamma: QualityScore,
    #[serde(default)]
    pub step_cap: Option<Fixed>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        let p = SchedulerParams::default();
        SchedulerConfig {
            waiting_threshold: p.waiting_threshold,
            bonus: p.bonus,
            gamma: default_gamma(),
            step_cap: p.step_cap,
        }
    }
}

/// Commit and reveal windows as multiples of the mean assessor latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deadlines {
    pub commit_factor: f64,
    pub reveal_factor: f64,
}

impl Default for Deadlines {
    fn default() -> Self {
        Deadlines {
            commit_factor: 10.0,
            reveal_factor: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeRideConfig {
    pub cost: Amount,
    pub quality_floor: QualityScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Theorem1Config {
    /// Overrides `rewards.alpha` with this multiple of the market threshold.
    #[serde(default)]
    pub alpha_factor: Option<f64>,
    #[serde(default)]
    pub queries: Option<u64>,
    #[serde(default)]
    pub free_ride: Option<FreeRideConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Config {
    pub rounds: u64,
    pub delta: f64,
    pub epsilon: f64,
    /// Defaults to the β bound for (delta, epsilon, k).
    #[serde(default)]
    pub beta: Option<f64>,
}

fn default_hop() -> LatencyModel {
    LatencyModel::constant(5.0)
}

fn default_delta() -> f64 {
    1.0
}

fn default_attempts() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub queries: u64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub domain: ScoreDomain,
    pub market: MarketConfig,
    pub rewards: RewardsConfig,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub interarrival: Interarrival,
    #[serde(default = "default_hop")]
    pub network_hop: LatencyModel,
    pub inference: Vec<NodeGroup<InferenceStrategy>>,
    pub assessors: Vec<NodeGroup<AssessorStrategy>>,
    #[serde(default)]
    pub deadlines: Deadlines,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default)]
    pub theorem1: Option<Theorem1Config>,
    #[serde(default)]
    pub theorem2: Option<Theorem2Config>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &Path) -> Result<Self, SimError> {
        Self::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn inference_population(&self) -> usize {
        self.inference.iter().map(|g| g.count).sum()
    }

    pub fn assessor_population(&self) -> usize {
        self.assessors.iter().map(|g| g.count).sum()
    }

    /// Population-weighted mean of the assessor compute latencies.
    pub fn mean_assessor_latency_ms(&self) -> f64 {
        let n = self.assessor_population() as f64;
        self.assessors
            .iter()
            .map(|g| g.count as f64 * g.latency.mean_ms())
            .sum::<f64>()
            / n
    }

    pub fn commit_window_us(&self) -> u64 {
        (self.deadlines.commit_factor * self.mean_assessor_latency_ms() * 1000.0).round() as u64
    }

    pub fn reveal_window_us(&self) -> u64 {
        (self.deadlines.reveal_factor * self.mean_assessor_latency_ms() * 1000.0).round() as u64
    }

    pub fn audit_params(&self) -> crate::consensus::AuditParams {
        crate::consensus::AuditParams {
            rewards: self.rewards.params(),
            domain: self.domain,
            rho: self.rewards.rho,
            reveal_window: self.reveal_window_us(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let cfg = |m: String| Err(SimError::Config(m));
        self.rewards.params().validate()?;
        if self.inference_population() == 0 {
            return cfg("no inference nodes".into());
        }
        if self.rewards.m > self.assessor_population() {
            return cfg(format!(
                "m={} exceeds the assessor population {}",
                self.rewards.m,
                self.assessor_population()
            ));
        }
        if !(self.rewards.rho >= 0.0 && self.rewards.rho.is_finite()) {
            return cfg(format!("rho must be non-negative, got {}", self.rewards.rho));
        }
        if self.rewards.bounty.is_negative() {
            return cfg("bounty is negative".into());
        }
        if self.max_attempts == 0 {
            return cfg("max_attempts must be at least 1".into());
        }
        if !(self.deadlines.commit_factor > 0.0 && self.deadlines.reveal_factor > 0.0) {
            return cfg("deadline factors must be positive".into());
        }
        match self.interarrival {
            Interarrival::Fixed { ms } if ms >= 0.0 && ms.is_finite() => {}
            Interarrival::Exponential { mean_ms } if mean_ms > 0.0 && mean_ms.is_finite() => {}
            other => return cfg(format!("bad interarrival {other:?}")),
        }
        self.network_hop.validate()?;
        for g in &self.inference {
            g.latency.validate()?;
            g.strategy.validate(&self.market)?;
        }
        for g in &self.assessors {
            g.latency.validate()?;
            match &g.strategy {
                AssessorStrategy::Guesser { distribution } if distribution.variance() < self.delta => {
                    return cfg(format!(
                        "guesser variance {} is below delta {}",
                        distribution.variance(),
                        self.delta
                    ));
                }
                AssessorStrategy::Constant { value } if !self.domain.contains(*value) => {
                    return cfg(format!("constant score {value} outside the domain"));
                }
                AssessorStrategy::Late { extra_delay_ms } if extra_delay_ms.is_nan() || *extra_delay_ms < 0.0 => {
                    return cfg("late delay must be non-negative".into());
                }
                _ => {}
            }
        }
        SchedulerPools::fresh(&[], &[], self.scheduler_params())?;
        Ok(())
    }

    pub fn scheduler_params(&self) -> SchedulerParams {
        SchedulerParams {
            waiting_threshold: self.scheduler.waiting_threshold,
            bonus: self.scheduler.bonus,
            step_cap: self.scheduler.step_cap,
        }
    }
}

/// Uniform draws for one node: `H("stream-v1" ‖ seed ‖ node ‖ counter)`.
#[derive(Debug, Default)]
struct Streams {
    seed: u64,
    counters: HashMap<NodeId, u64>,
}

impl Streams {
    fn next(&mut self, node: NodeId) -> f64 {
        let c = self.counters.entry(node).or_insert(0);
        let mut h = Sha256::new();
        h.update(b"stream-v1");
        h.update(self.seed.to_be_bytes());
        h.update(node.to_bytes());
        h.update(c.to_be_bytes());
        *c += 1;
        unit_interval(&h.finalize().into())
    }
}

fn derive(tag: &[u8], seed: u64, parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(tag);
    h.update(seed.to_be_bytes());
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn derive_u64(tag: &[u8], seed: u64, parts: &[&[u8]]) -> u64 {
    u64::from_be_bytes(derive(tag, seed, parts)[..8].try_into().expect("8 bytes"))
}

/// Seed for the sweep run at `k`.
pub fn sweep_seed(seed: u64, k: usize) -> u64 {
    derive_u64(b"sweep-v1", seed, &[&(k as u64).to_be_bytes()])
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Arrival {
        query_id: u64,
        attempt: u32,
    },
    ResponseReady {
        round_id: u64,
    },
    CommitDelivered {
        round_id: u64,
        assessor: NodeId,
    },
    CopierCommit {
        round_id: u64,
        assessor: NodeId,
        score: QualityScore,
    },
    RevealDelivered {
        round_id: u64,
        assessor: NodeId,
    },
    CommitDeadline {
        round_id: u64,
    },
    RevealDeadline {
        round_id: u64,
    },
}

struct RoundCtx {
    round: ConsensusRound,
    attempt: u32,
    arrival_us: u64,
    source: ResponseSource,
    declared: ModelId,
    secrets: HashMap<NodeId, (crate::commitment::SealedScore, RevealRecord)>,
    compute_us: HashMap<NodeId, u64>,
    copiers_notified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round_id: u64,
    pub query_id: u64,
    pub attempt: u32,
    pub inference_node: NodeId,
    pub status: String,
    pub arrival_ms: f64,
    pub end_ms: f64,
    pub latency_ms: f64,
    pub consensus: Option<QualityScore>,
    pub chi: Option<f64>,
    pub inference_payout: Amount,
    pub inference_cost: Amount,
    /// Mean compute latency of the included assessors.
    pub assessor_compute_ms: Option<f64>,
    pub excluded_commits: usize,
    pub shares_uniform: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeMetrics {
    pub node: NodeId,
    pub strategy: String,
    pub assignments: u64,
    pub included: u64,
    pub reward: Amount,
    pub cost: Amount,
    pub profit: Amount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        };
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Some(LatencyStats {
            mean_ms: s.iter().sum::<f64>() / n as f64,
            median_ms: median,
            p95_ms: s[rank - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub seed: u64,
    pub queries: u64,
    pub rounds: u64,
    pub finalized: u64,
    pub aborted: u64,
    pub failed_queries: u64,
    pub latency: Option<LatencyStats>,
    pub consensus_variance: Option<f64>,
    pub delta: f64,
    /// Σ (bounty + assessment budget) over finalized rounds.
    pub funds_committed: Amount,
    /// Σ of every posting, including returned remainders.
    pub funds_posted: Amount,
    pub conservation_holds: bool,
    pub all_shares_uniform: bool,
    pub ledger_records: u64,
    pub ledger_head: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub summary: Summary,
    pub rounds: Vec<RoundMetrics>,
    pub nodes: Vec<NodeMetrics>,
}

impl RunOutput {
    pub fn latencies_ms(&self) -> Vec<f64> {
        self.rounds
            .iter()
            .filter(|r| r.status == "finalized")
            .map(|r| r.latency_ms)
            .collect()
    }

    pub fn consensus_scores(&self) -> Vec<f64> {
        self.rounds
            .iter()
            .filter_map(|r| r.consensus.map(|s| s.to_f64()))
            .collect()
    }

    pub fn write_metrics_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        #[derive(Serialize)]
        struct Row<'a> {
            round_id: u64,
            query_id: u64,
            attempt: u32,
            inference_node: NodeId,
            status: &'a str,
            arrival_ms: f64,
            end_ms: f64,
            latency_ms: f64,
            consensus: Option<QualityScore>,
            chi: Option<f64>,
            inference_payout: Amount,
            inference_cost: Amount,
            assessor_compute_ms: Option<f64>,
            excluded_commits: usize,
        }
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rounds {
            w.serialize(Row {
                round_id: r.round_id,
                query_id: r.query_id,
                attempt: r.attempt,
                inference_node: r.inference_node,
                status: &r.status,
                arrival_ms: r.arrival_ms,
                end_ms: r.end_ms,
                latency_ms: r.latency_ms,
                consensus: r.consensus,
                chi: r.chi,
                inference_payout: r.inference_payout,
                inference_cost: r.inference_cost,
                assessor_compute_ms: r.assessor_compute_ms,
                excluded_commits: r.excluded_commits,
            })?;
        }
        w.flush().map_err(|e| SimError::Csv(e.into()))?;
        Ok(())
    }
}

struct NodeInfo<S> {
    strategy: S,
    latency: LatencyModel,
}

struct Sim<'a, W: Write> {
    sc: &'a Scenario,
    params: RewardParams,
    ledger: LedgerWriter<W>,
    queue: BinaryHeap<Reverse<(u64, u64, Event)>>,
    seq: u64,
    now: u64,
    streams: Streams,
    pools: SchedulerPools,
    inference: HashMap<NodeId, NodeInfo<InferenceStrategy>>,
    assessors: HashMap<NodeId, NodeInfo<AssessorStrategy>>,
    rounds: HashMap<u64, RoundCtx>,
    next_round: u64,
    metrics: Vec<RoundMetrics>,
    nodes: HashMap<NodeId, NodeMetrics>,
    failed: u64,
    committed: Amount,
    posted: Amount,
}

const MANAGEMENT: NodeId = NodeId::management(0);

impl<'a, W: Write> Sim<'a, W> {
    fn new(sc: &'a Scenario, out: W) -> Result<Self, SimError> {
        let mut inference = HashMap::new();
        let mut assessors = HashMap::new();
        let mut nodes = HashMap::new();
        let mut inf_ids = Vec::new();
        let mut ass_ids = Vec::new();
        for g in &sc.inference {
            for _ in 0..g.count {
                let id = NodeId::inference(inf_ids.len() as u64);
                inf_ids.push(id);
                inference.insert(
                    id,
                    NodeInfo {
                        strategy: g.strategy.clone(),
                        latency: g.latency,
                    },
                );
                nodes.insert(id, NodeMetrics::new(id, g.strategy.name()));
            }
        }
        for g in &sc.assessors {
            for _ in 0..g.count {
                let id = NodeId::assessor(ass_ids.len() as u64);
                ass_ids.push(id);
                assessors.insert(
                    id,
                    NodeInfo {
                        strategy: g.strategy.clone(),
                        latency: g.latency,
                    },
                );
                nodes.insert(id, NodeMetrics::new(id, g.strategy.name()));
            }
        }
        Ok(Sim {
            sc,
            params: sc.rewards.params(),
            ledger: LedgerWriter::new(out),
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            streams: Streams {
                seed: sc.seed,
                counters: HashMap::new(),
            },
            pools: SchedulerPools::fresh(&inf_ids, &ass_ids, sc.scheduler_params())?,
            inference,
            assessors,
            rounds: HashMap::new(),
            next_round: 0,
            metrics: Vec::new(),
            nodes,
            failed: 0,
            committed: Fixed::ZERO,
            posted: Fixed::ZERO,
        })
    }

    fn at(&mut self, time: u64, event: Event) {
        self.queue.push(Reverse((time, self.seq, event)));
        self.seq += 1;
    }

    fn hop(&mut self, node: NodeId) -> u64 {
        let u = self.streams.next(node);
        self.sc.network_hop.draw_us(u)
    }

    fn log(&mut self, event: LedgerEvent) -> Result<(), SimError> {
        self.ledger.append(self.now, event)?;
        Ok(())
    }

    fn invariant(&self, message: impl Into<String>) -> SimError {
        SimError::Invariant {
            time_us: self.now,
            message: message.into(),
        }
    }

    fn run(mut self) -> Result<(RunOutput, W), SimError> {
        if self.sc.queries > 0 {
            self.at(
                0,
                Event::Arrival {
                    query_id: 0,
                    attempt: 1,
                },
            );
        }
        while let Some(Reverse((time, _, event))) = self.queue.pop() {
            if time < self.now {
                return Err(self.invariant("clock moved backwards"));
            }
            self.now = time;
            self.handle(event)?;
        }
        self.ledger.flush()?;
        let summary = self.summary();
        let mut nodes: Vec<NodeMetrics> = self.nodes.into_values().collect();
        nodes.sort_by_key(|n| n.node);
        for n in &mut nodes {
            n.profit = n.reward - n.cost;
        }
        Ok((
            RunOutput {
                summary,
                rounds: self.metrics,
                nodes,
            },
            self.ledger.into_inner(),
        ))
    }

    fn summary(&self) -> Summary {
        let finalized: Vec<&RoundMetrics> = self.metrics.iter().filter(|r| r.status == "finalized").collect();
        let lat: Vec<f64> = finalized.iter().map(|r| r.latency_ms).collect();
        let scores: Vec<f64> = finalized
            .iter()
            .filter_map(|r| r.consensus.map(|s| s.to_f64()))
            .collect();
        Summary {
            seed: self.sc.seed,
            queries: self.sc.queries,
            rounds: self.metrics.len() as u64,
            finalized: finalized.len() as u64,
            aborted: (self.metrics.len() - finalized.len()) as u64,
            failed_queries: self.failed,
            latency: LatencyStats::from_samples(&lat),
            consensus_variance: scoring::empirical_variance(&scores).ok(),
            delta: self.sc.delta,
            funds_committed: self.committed,
            funds_posted: self.posted,
            conservation_holds: self.committed == self.posted,
            all_shares_uniform: finalized.iter().all(|r| r.shares_uniform == Some(true)),
            ledger_records: self.ledger.len(),
            ledger_head: hex::encode(self.ledger.head()),
        }
    }

    fn handle(&mut self, event: Event) -> Result<(), SimError> {
        match event {
            Event::Arrival { query_id, attempt } => self.on_arrival(query_id, attempt),
            Event::ResponseReady { round_id } => self.on_response(round_id),
            Event::CommitDelivered { round_id, assessor } => self.on_commit(round_id, assessor),
            Event::CopierCommit {
                round_id,
                assessor,
                score,
            } => {
                self.seal_for(round_id, assessor, score)?;
                self.on_commit(round_id, assessor)
            }
            Event::RevealDelivered { round_id, assessor } => self.on_reveal(round_id, assessor),
            Event::CommitDeadline { round_id } | Event::RevealDeadline { round_id } => {
                let ctx = self.rounds.get_mut(&round_id).expect("known round");
                if let Some(reason) = ctx.round.on_timeout(self.now) {
                    self.abort(round_id, reason)?;
                }
                Ok(())
            }
        }
    }

    fn on_arrival(&mut self, query_id: u64, attempt: u32) -> Result<(), SimError> {
        if attempt == 1 && query_id + 1 < self.sc.queries {
            let u = self.streams.next(MANAGEMENT);
            let gap = self.sc.interarrival.draw_us(u);
            self.at(
                self.now + gap,
                Event::Arrival {
                    query_id: query_id + 1,
                    attempt: 1,
                },
            );
        }
        self.log(LedgerEvent::QueryPosted(QueryPosted {
            query_id,
            attempt,
            bounty: self.sc.rewards.bounty,
            payload: format!("query {query_id}"),
        }))?;
        let sel = self.pools.on_query_arrival(self.params.m)?;
        let round_id = self.next_round;
        self.next_round += 1;
        let round = ConsensusRound::new(round_id, query_id, sel.inference, sel.assessors.clone(), self.params.k)?;

        let info = &self.inference[&sel.inference];
        let strategy = info.strategy.clone();
        let compute_latency = info.latency;
        let cost = strategy.cost(&self.sc.market)?;
        let out = self.hop(sel.inference);
        let compute = compute_latency.draw_us(self.streams.next(sel.inference));
        let back = self.hop(sel.inference);
        for n in std::iter::once(sel.inference).chain(sel.assessors.iter().copied()) {
            self.nodes.get_mut(&n).expect("known node").assignments += 1;
        }
        self.nodes.get_mut(&sel.inference).expect("known node").cost += cost;
        self.rounds.insert(
            round_id,
            RoundCtx {
                round,
                attempt,
                arrival_us: self.now,
                source: strategy.source(),
                declared: strategy.declared_model(),
                secrets: HashMap::new(),
                compute_us: HashMap::new(),
                copiers_notified: false,
            },
        );
        self.at(self.now + out + compute + back, Event::ResponseReady { round_id });
        Ok(())
    }

    fn nonce(&self, round_id: u64, node: NodeId) -> [u8; 32] {
        derive(b"nonce-v1", self.sc.seed, &[&node.to_bytes(), &round_id.to_be_bytes()])
    }

    fn seal_for(&mut self, round_id: u64, assessor: NodeId, score: QualityScore) -> Result<(), SimError> {
        let nonce = self.nonce(round_id, assessor);
        let pair = seal(self.sc.scheme, score, round_id, assessor, nonce);
        self.rounds
            .get_mut(&round_id)
            .expect("known round")
            .secrets
            .insert(assessor, pair);
        Ok(())
    }

    fn on_response(&mut self, round_id: u64) -> Result<(), SimError> {
        let commit_window = self.sc.commit_window_us();
        let reveal_window = self.sc.reveal_window_us();
        let ctx = self.rounds.get_mut(&round_id).expect("known round");
        let deadline_commit = self.now + commit_window;
        ctx.round.open_commit(deadline_commit, reveal_window)?;
        let query_id = ctx.round.query_id;
        let inference_node = ctx.round.inference_node;
        let assigned = ctx.round.assigned().to_vec();
        let declared = ctx.declared.clone();
        let source = ctx.source.clone();
        self.log(LedgerEvent::ResponsePosted(ResponsePosted {
            round_id,
            query_id,
            responder: inference_node,
            declared_model: declared.clone(),
            payload: format!("response to query {query_id} by {inference_node}"),
        }))?;
        self.log(LedgerEvent::AssessorsAssigned(AssessorsAssigned {
            round_id,
            query_id,
            inference_node,
            assessors: assigned.clone(),
            k: self.params.k,
            deadline_commit,
        }))?;
        let honest = scoring::response_score(self.sc.seed, query_id, &source, &self.sc.market, self.sc.domain)?;
        let guess_center = self
            .sc
            .market
            .get(&declared)
            .map(|p| p.expected_quality.to_f64())
            .unwrap_or((self.sc.domain.lower().to_f64() + self.sc.domain.upper().to_f64()) / 2.0);
        for a in assigned {
            let info = &self.assessors[&a];
            let strategy = info.strategy.clone();
            let latency = info.latency;
            let (score, extra_us) = match strategy {
                AssessorStrategy::Honest => (honest, 0),
                AssessorStrategy::Late { extra_delay_ms } => (honest, (extra_delay_ms * 1000.0).round() as u64),
                AssessorStrategy::Constant { value } => (value, 0),
                AssessorStrategy::Guesser { distribution } => {
                    let node_seed = derive_u64(b"guesser-v1", self.sc.seed, &[&a.to_bytes()]);
                    (
                        guesser_score(node_seed, query_id, distribution, guess_center, self.sc.domain),
                        0,
                    )
                }
                AssessorStrategy::Silent | AssessorStrategy::Copier => continue,
            };
            let out = self.hop(a);
            let compute = latency.draw_us(self.streams.next(a));
            let back = self.hop(a);
            self.seal_for(round_id, a, score)?;
            self.rounds
                .get_mut(&round_id)
                .expect("known round")
                .compute_us
                .insert(a, compute);
            self.at(
                self.now + out + compute + back + extra_us,
                Event::CommitDelivered { round_id, assessor: a },
            );
        }
        self.at(deadline_commit + 1, Event::CommitDeadline { round_id });
        Ok(())
    }

    fn on_commit(&mut self, round_id: u64, assessor: NodeId) -> Result<(), SimError> {
        let now = self.now;
        let ctx = self.rounds.get_mut(&round_id).expect("known round");
        let sealed = ctx.secrets[&assessor].0.clone();
        let outcome = ctx.round.on_commit(sealed.clone(), now)?;
        let excluded = matches!(outcome, CommitOutcome::Excluded(_));
        self.log(LedgerEvent::ScoreSealed(ScoreSealed::from_sealed(&sealed, excluded)))?;
        if let CommitOutcome::QuorumReached {
            included,
            deadline_reveal,
        } = outcome
        {
            self.log(LedgerEvent::CommitQuorum(CommitQuorum {
                round_id,
                included: included.clone(),
                deadline_reveal,
            }))?;
            for a in included {
                let notice = self.hop(a);
                let send = self.hop(a);
                self.at(now + notice + send, Event::RevealDelivered { round_id, assessor: a });
            }
            self.at(deadline_reveal + 1, Event::RevealDeadline { round_id });
        }
        Ok(())
    }

    fn on_reveal(&mut self, round_id: u64, assessor: NodeId) -> Result<(), SimError> {
        let now = self.now;
        let ctx = self.rounds.get_mut(&round_id).expect("known round");
        let reveal = ctx.secrets[&assessor].1.clone();
        let outcome = ctx.round.on_reveal(reveal.clone(), now)?;
        self.log(LedgerEvent::ScoreRevealed(ScoreRevealed::from_reveal(
            &reveal,
            outcome.status(),
        )))?;
        let ctx = self.rounds.get_mut(&round_id).expect("known round");
        if matches!(outcome, RevealOutcome::Accepted | RevealOutcome::Finalized(_)) && !ctx.copiers_notified {
            ctx.copiers_notified = true;
            let copiers: Vec<NodeId> = ctx
                .round
                .assigned()
                .iter()
                .copied()
                .filter(|a| self.assessors[a].strategy == AssessorStrategy::Copier)
                .collect();
            for c in copiers {
                let see = self.hop(c);
                let send = self.hop(c);
                self.at(
                    now + see + send,
                    Event::CopierCommit {
                        round_id,
                        assessor: c,
                        score: reveal.score,
                    },
                );
            }
        }
        match outcome {
            RevealOutcome::Finalized(score) => self.finalize(round_id, score),
            RevealOutcome::Rejected(_) => self.abort(round_id, AbortReason::InvalidReveal),
            _ => Ok(()),
        }
    }

    fn finalize(&mut self, round_id: u64, score: QualityScore) -> Result<(), SimError> {
        self.log(LedgerEvent::RoundFinalized(RoundFinalized {
            round_id,
            consensus_score: score,
        }))?;
        let sc = self.sc;
        let ctx = &self.rounds[&round_id];
        let postings = ctx
            .round
            .finalize_rewards(&self.params, sc.domain, sc.rewards.bounty, sc.rewards.rho)?;
        let total = postings.total();
        if total != sc.rewards.bounty + postings.budget {
            return Err(self.invariant(format!("round {round_id} postings sum to {total}")));
        }
        let included = ctx.round.included().to_vec();
        let compute: Vec<f64> = included
            .iter()
            .filter_map(|a| ctx.compute_us.get(a))
            .map(|us| *us as f64 / 1000.0)
            .collect();
        let excluded_commits = ctx.round.sealed().values().filter(|e| e.excluded).count();
        let k = included.len();
        let uniform = postings
            .assessors
            .iter()
            .filter(|a| a.included)
            .all(|a| a.share == 1.0 / k as f64);
        let metrics = RoundMetrics {
            round_id,
            query_id: ctx.round.query_id,
            attempt: ctx.attempt,
            inference_node: ctx.round.inference_node,
            status: "finalized".into(),
            arrival_ms: ctx.arrival_us as f64 / 1000.0,
            end_ms: self.now as f64 / 1000.0,
            latency_ms: (self.now - ctx.arrival_us) as f64 / 1000.0,
            consensus: Some(score),
            chi: Some(postings.chi),
            inference_payout: postings.inference.amount,
            inference_cost: self.inference[&ctx.round.inference_node].strategy.cost(&sc.market)?,
            assessor_compute_ms: (!compute.is_empty()).then(|| compute.iter().sum::<f64>() / compute.len() as f64),
            excluded_commits,
            shares_uniform: Some(uniform),
        };
        self.log(LedgerEvent::RewardsDistributed(postings.to_record()))?;
        self.committed += sc.rewards.bounty + postings.budget;
        self.posted += total;
        self.nodes.get_mut(&postings.inference.node).expect("known node").reward += postings.inference.amount;
        let well = score >= sc.scheduler.gamma;
        self.pools.on_task_outcome(postings.inference.node, well)?;
        let threshold = 1.0 / k as f64;
        for a in &postings.assessors {
            let n = self.nodes.get_mut(&a.node).expect("known node");
            n.reward += a.amount;
            if a.included {
                n.included += 1;
            }
            self.pools.on_task_outcome(a.node, a.included && a.share >= threshold)?;
        }
        self.metrics.push(metrics);
        Ok(())
    }

    fn abort(&mut self, round_id: u64, reason: AbortReason) -> Result<(), SimError> {
        let ctx = &self.rounds[&round_id];
        let query_id = ctx.round.query_id;
        let attempt = ctx.attempt;
        let requeued = attempt < self.sc.max_attempts;
        let slackers: Vec<NodeId> = ctx
            .round
            .assigned()
            .iter()
            .copied()
            .filter(|a| ctx.round.flagged().contains(a) || ctx.round.sealed().get(a).is_none_or(|e| e.excluded))
            .collect();
        let metrics = RoundMetrics {
            round_id,
            query_id,
            attempt,
            inference_node: ctx.round.inference_node,
            status: match reason {
                AbortReason::CommitTimeout => "commit_timeout",
                AbortReason::RevealTimeout => "reveal_timeout",
                AbortReason::InvalidReveal => "invalid_reveal",
            }
            .into(),
            arrival_ms: ctx.arrival_us as f64 / 1000.0,
            end_ms: self.now as f64 / 1000.0,
            latency_ms: (self.now - ctx.arrival_us) as f64 / 1000.0,
            consensus: None,
            chi: None,
            inference_payout: Fixed::ZERO,
            inference_cost: self.inference[&ctx.round.inference_node]
                .strategy
                .cost(&self.sc.market)?,
            assessor_compute_ms: None,
            excluded_commits: ctx.round.sealed().values().filter(|e| e.excluded).count(),
            shares_uniform: None,
        };
        self.log(LedgerEvent::RoundAborted(RoundAborted {
            round_id,
            query_id,
            reason,
            requeued,
        }))?;
        for a in slackers {
            self.pools.on_task_outcome(a, false)?;
        }
        self.metrics.push(metrics);
        if requeued {
            self.at(
                self.now,
                Event::Arrival {
                    query_id,
                    attempt: attempt + 1,
                },
            );
        } else {
            self.failed += 1;
        }
        Ok(())
    }
}

impl NodeMetrics {
    fn new(node: NodeId, strategy: &str) -> Self {
        NodeMetrics {
            node,
            strategy: strategy.to_string(),
            assignments: 0,
            included: 0,
            reward: Fixed::ZERO,
            cost: Fixed::ZERO,
            profit: Fixed::ZERO,
        }
    }
}

/// Runs `scenario`, writing the ledger to `ledger`.
pub fn run_with<W: Write>(scenario: &Scenario, ledger: W) -> Result<(RunOutput, W), SimError> {
    scenario.validate()?;
    Sim::new(scenario, ledger)?.run()
}

/// Runs `scenario` and discards the ledger.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    Ok(run_with(scenario, io::sink())?.0)
}

/// Runs `scenario` into memory, returning the ledger bytes.
pub fn run_in_memory(scenario: &Scenario) -> Result<(RunOutput, Vec<u8>), SimError> {
    run_with(scenario, Vec::new())
}

/// Runs `scenario` and writes `ledger.jsonl`, `metrics.csv` and
/// `summary.json` into `dir`.
pub fn run_to_dir(scenario: &Scenario, dir: &Path) -> Result<RunOutput, SimError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ledger_path = dir.join("ledger.jsonl");
    let file = File::create(&ledger_path).map_err(io_err(&ledger_path))?;
    let (out, w) = run_with(scenario, BufWriter::new(file))?;
    w.into_inner()
        .map_err(|e| SimError::Io {
            path: ledger_path.clone(),
            source: e.into_error(),
        })?
        .sync_all()
        .map_err(io_err(&ledger_path))?;
    let metrics_path = dir.join("metrics.csv");
    out.write_metrics_csv(File::create(&metrics_path).map_err(io_err(&metrics_path))?)?;
    let summary_path = dir.join("summary.json");
    let mut s = serde_json::to_string_pretty(&SummaryFile {
        summary: &out.summary,
        nodes: &out.nodes,
    })?;
    s.push('\n');
    fs::write(&summary_path, s).map_err(io_err(&summary_path))?;
    Ok(out)
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    #[serde(flatten)]
    summary: &'a Summary,
    nodes: &'a [NodeMetrics],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub assessor_mean_ms: f64,
}

/// One run per `k` with seeds derived from the scenario seed, in parallel.
pub fn sweep_k(scenario: &Scenario, ks: &[usize]) -> Result<Vec<SweepRow>, SimError> {
    let variants: Vec<Scenario> = ks
        .iter()
        .map(|&k| {
            let mut s = scenario.clone();
            s.rewards.k = k;
            s.seed = sweep_seed(scenario.seed, k);
            s.validate().map(|_| s)
        })
        .collect::<Result<_, _>>()?;
    let results: Vec<Result<RunOutput, SimError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants.iter().map(|s| scope.spawn(move || run(s))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep run panicked"))
            .collect()
    });
    ks.iter()
        .zip(results)
        .map(|(&k, r)| {
            let out = r?;
            let stats = LatencyStats::from_samples(&out.latencies_ms())
                .ok_or_else(|| SimError::Config(format!("no round finalized at k={k}")))?;
            let compute: Vec<f64> = out.rounds.iter().filter_map(|r| r.assessor_compute_ms).collect();
            Ok(SweepRow {
                k,
                mean_ms: stats.mean_ms,
                median_ms: stats.median_ms,
                p95_ms: stats.p95_ms,
                assessor_mean_ms: compute.iter().sum::<f64>() / compute.len().max(1) as f64,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| SimError::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyProfit {
    pub strategy: String,
    pub model: Option<ModelId>,
    pub expected_quality: Option<QualityScore>,
    pub cost: Amount,
    pub queries: u64,
    pub total_profit: f64,
    pub mean_profit: f64,
    /// Standard error of `mean_profit`.
    pub se: f64,
    pub aborted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub theta: f64,
    pub alpha: f64,
    pub bounty: Amount,
    pub rows: Vec<StrategyProfit>,
    pub most_profitable: String,
    pub best_model_wins: bool,
}

/// Profit of each strategy when a single inference node serves every query.
pub fn theorem1_experiment(scenario: &Scenario) -> Result<Theorem1Report, SimError> {
    let cfg = scenario.theorem1.unwrap_or_default();
    let theta = rewards::alpha_threshold(&scenario.market).theta;
    let alpha = match cfg.alpha_factor {
        Some(f) => f * theta,
        None => scenario.rewards.alpha,
    };
    let latency = scenario
        .inference
        .first()
        .map(|g| g.latency)
        .ok_or_else(|| SimError::Config("no inference group".into()))?;
    let mut strategies: Vec<InferenceStrategy> = scenario
        .market
        .models()
        .iter()
        .map(|m| InferenceStrategy::UseModel { model: m.id.clone() })
        .collect();
    if let Some(fr) = cfg.free_ride {
        strategies.push(InferenceStrategy::FreeRide {
            cost: fr.cost,
            quality_floor: fr.quality_floor,
        });
    }
    let variants: Vec<Scenario> = strategies
        .iter()
        .map(|st| {
            let mut s = scenario.clone();
            s.rewards.alpha = alpha;
            if let Some(q) = cfg.queries {
                s.queries = q;
            }
            s.inference = vec![NodeGroup {
                count: 1,
                strategy: st.clone(),
                latency,
            }];
            s.validate().map(|_| s)
        })
        .collect::<Result<_, _>>()?;
    let outputs: Vec<Result<RunOutput, SimError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants.iter().map(|s| scope.spawn(move || run(s))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("theorem1 run panicked"))
            .collect()
    });
    let mut rows = Vec::new();
    for (st, out) in strategies.iter().zip(outputs) {
        let out = out?;
        let profits: Vec<f64> = out
            .rounds
            .iter()
            .map(|r| (r.inference_payout - r.inference_cost).to_f64())
            .collect();
        let n = profits.len() as f64;
        let mean = profits.iter().sum::<f64>() / n;
        let se = scoring::empirical_variance(&profits)
            .map(|v| (v / n).sqrt())
            .unwrap_or(0.0);
        let (model, e) = match st {
            InferenceStrategy::UseModel { model } => (
                Some(model.clone()),
                scenario.market.get(model).map(|p| p.expected_quality),
            ),
            _ => (None, None),
        };
        rows.push(StrategyProfit {
            strategy: match &model {
                Some(m) => format!("use_model:{m}"),
                None => st.name().to_string(),
            },
            model,
            expected_quality: e,
            cost: st.cost(&scenario.market)?,
            queries: out.rounds.len() as u64,
            total_profit: profits.iter().sum(),
            mean_profit: mean,
            se,
            aborted: out.summary.aborted,
        });
    }
    let best = rows
        .iter()
        .max_by(|a, b| a.mean_profit.total_cmp(&b.mean_profit))
        .expect("at least one strategy");
    let top_model = scenario
        .market
        .models()
        .iter()
        .max_by_key(|m| (m.expected_quality, m.cost))
        .map(|m| m.id.clone());
    Ok(Theorem1Report {
        theta,
        alpha,
        bounty: scenario.rewards.bounty,
        most_profitable: best.strategy.clone(),
        best_model_wins: best.model == top_model,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem2Report {
    pub k: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub beta_bound: f64,
    pub rounds: u64,
    pub guesser_share: f64,
    pub se: f64,
    pub honest_share: f64,
    /// `guesser_expected_share(beta, delta, k)`.
    pub closed_form_share: f64,
    pub passes: bool,
}

/// Monte-Carlo share of one guesser against `k − 1` honest assessors who
/// agree on the score of the market's first model.
pub fn theorem2_experiment(scenario: &Scenario) -> Result<Theorem2Report, SimError> {
    let cfg = scenario
        .theorem2
        .ok_or_else(|| SimError::Config("scenario has no theorem2 section".into()))?;
    let k = scenario.rewards.k;
    if k < 2 {
        return Err(SimError::Config(
            "need k >= 2 for a guesser among honest assessors".into(),
        ));
    }
    if cfg.rounds < 2 {
        return Err(SimError::Config("need at least 2 rounds".into()));
    }
    let bound = rewards::beta_bound(cfg.delta, cfg.epsilon, k)?.beta;
    let beta = cfg.beta.unwrap_or(bound);
    let model = scenario.market.models()[0].id.clone();
    let guess = GuessDistribution::uniform_with_variance(cfg.delta);
    let guesser_seed = derive_u64(
        b"guesser-v1",
        scenario.seed,
        &[&NodeId::assessor(k as u64 - 1).to_bytes()],
    );
    let mut shares = Vec::with_capacity(cfg.rounds as usize);
    let mut honest_sum = 0.0;
    let mut scores = vec![QualityScore(Fixed::ZERO); k];
    for r in 0..cfg.rounds {
        let honest = scoring::honest_score(scenario.seed, r, &model, &scenario.market, scenario.domain)?;
        scores[..k - 1].fill(honest);
        scores[k - 1] = guesser_score(guesser_seed, r, guess, honest.to_f64(), scenario.domain);
        let h = rewards::assessor_shares(&scores, beta)?.into_inner();
        shares.push(h[k - 1]);
        honest_sum += h[0];
    }
    let n = shares.len() as f64;
    let mean = shares.iter().sum::<f64>() / n;
    let se = (scoring::empirical_variance(&shares)? / n).sqrt();
    Ok(Theorem2Report {
        k,
        delta: cfg.delta,
        epsilon: cfg.epsilon,
        beta,
        beta_bound: bound,
        rounds: cfg.rounds,
        guesser_share: mean,
        se,
        honest_share: honest_sum / n,
        closed_form_share: rewards::guesser_expected_share(beta, cfg.delta, k)?,
        passes: beta <= bound && mean <= cfg.epsilon + 3.0 * se,
    })
}
