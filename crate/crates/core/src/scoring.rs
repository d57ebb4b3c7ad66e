//! Quality scores: a deterministic synthetic scorer, adversarial assessor
//! and inference strategies, and a line-JSON adapter for an external scorer.
//!
//! The synthetic scorer draws `clamp(e + σ·Φ⁻¹(u))` where `u` comes from
//! hashing `(seed, query, model)`. Honest assessors hash the same inputs,
//! so they agree exactly.

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{normalize_score, Amount, DomainError, MarketConfig, ModelId, QualityScore, ScoreDomain};
use crate::fixed::Fixed;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("unknown model {0}")]
    UnknownModel(ModelId),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("adapter protocol error: {0}")]
    Protocol(String),
    #[error("adapter i/o: {0}")]
    Io(#[from] io::Error),
}

/// Maps a 256-bit digest to a uniform double strictly inside (0, 1).
pub fn unit_interval(digest: &[u8; 32]) -> f64 {
    let x = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes")) >> 12;
    (x as f64 + 0.5) / (1u64 << 52) as f64
}

/// Standard normal quantile, Wichura's AS241 (PPND16); relative accuracy
/// about 1e-16 over (0, 1).
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    fn poly(c: &[f64; 8], r: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, x| acc * r + x)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = libm::sqrt(-libm::log(p.min(1.0 - p)));
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn score_digest(tag: &[u8], seed: u64, query_id: u64, extra: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(tag);
    h.update(seed.to_be_bytes());
    h.update(query_id.to_be_bytes());
    h.update((extra.len() as u64).to_be_bytes());
    h.update(extra);
    h.finalize().into()
}

fn clamped(value: f64, domain: ScoreDomain) -> QualityScore {
    let fixed =
        Fixed::from_f64(value.clamp(domain.lower().to_f64(), domain.upper().to_f64())).expect("finite in domain");
    domain.clamp(QualityScore(fixed))
}

/// Score an honest assessor gives `model`'s response to `query_id`.
pub fn honest_score(
    seed: u64,
    query_id: u64,
    model: &ModelId,
    market: &MarketConfig,
    domain: ScoreDomain,
) -> Result<QualityScore, ScoringError> {
    let profile = market
        .get(model)
        .ok_or_else(|| ScoringError::UnknownModel(model.clone()))?;
    let e = profile.expected_quality;
    let sigma = profile.quality_stddev;
    if sigma == Fixed::ZERO {
        return Ok(domain.clamp(e));
    }
    let u = unit_interval(&score_digest(b"score-v1", seed, query_id, model.as_str().as_bytes()));
    Ok(clamped(e.to_f64() + sigma.to_f64() * normal_quantile(u), domain))
}

/// Distribution a guesser draws from, centred on its best estimate of the score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum GuessDistribution {
    Uniform { half_width: f64 },
    Normal { sd: f64 },
}

impl GuessDistribution {
    /// Uniform with the given variance: half-width `√(3·var)`.
    pub fn uniform_with_variance(var: f64) -> Self {
        GuessDistribution::Uniform {
            half_width: (3.0 * var).sqrt(),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            GuessDistribution::Uniform { half_width } => half_width * half_width / 3.0,
            GuessDistribution::Normal { sd } => sd * sd,
        }
    }

    /// Deviation from the centre for a uniform draw `u`.
    pub fn deviation(&self, u: f64) -> f64 {
        match *self {
            GuessDistribution::Uniform { half_width } => (2.0 * u - 1.0) * half_width,
            GuessDistribution::Normal { sd } => sd * normal_quantile(u),
        }
    }
}

/// A guess by the node with `node_seed` for `query_id`, independent of the
/// honest score.
pub fn guesser_score(
    node_seed: u64,
    query_id: u64,
    distribution: GuessDistribution,
    center: f64,
    domain: ScoreDomain,
) -> QualityScore {
    let u = unit_interval(&score_digest(b"guess-v1", node_seed, query_id, &[]));
    clamped(center + distribution.deviation(u), domain)
}

/// Unbiased sample variance.
pub fn empirical_variance(samples: &[f64]) -> Result<f64, ScoringError> {
    if samples.len() < 2 {
        return Err(ScoringError::TooFewSamples(samples.len()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    Ok(samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AssessorStrategy {
    #[default]
    Honest,
    Guesser {
        distribution: GuessDistribution,
    },
    Constant {
        value: QualityScore,
    },
    /// Honest score, sent `extra_delay_ms` late.
    Late {
        extra_delay_ms: f64,
    },
    Silent,
    /// Waits for the first reveal of the round and commits that score.
    Copier,
}

impl AssessorStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            AssessorStrategy::Honest => "honest",
            AssessorStrategy::Guesser { .. } => "guesser",
            AssessorStrategy::Constant { .. } => "constant",
            AssessorStrategy::Late { .. } => "late",
            AssessorStrategy::Silent => "silent",
            AssessorStrategy::Copier => "copier",
        }
    }
}

/// What the assessors actually score.
#[derive(Debug, Clone, PartialEq)]
pub enum ResponseSource {
    Model(ModelId),
    Floor(QualityScore),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InferenceStrategy {
    UseModel {
        model: ModelId,
    },
    /// Declares `from` but runs `to`, paying `to`'s cost.
    Downgrade {
        from: ModelId,
        to: ModelId,
    },
    /// Garbage output that always scores `quality_floor`.
    FreeRide {
        cost: Amount,
        quality_floor: QualityScore,
    },
}

impl InferenceStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            InferenceStrategy::UseModel { .. } => "use_model",
            InferenceStrategy::Downgrade { .. } => "downgrade",
            InferenceStrategy::FreeRide { .. } => "free_ride",
        }
    }

    pub fn validate(&self, market: &MarketConfig) -> Result<(), ScoringError> {
        let known = |m: &ModelId| {
            market
                .get(m)
                .map(|_| ())
                .ok_or_else(|| ScoringError::UnknownModel(m.clone()))
        };
        match self {
            InferenceStrategy::UseModel { model } => known(model),
            InferenceStrategy::Downgrade { from, to } => known(from).and(known(to)),
            InferenceStrategy::FreeRide { cost, quality_floor } => {
                if cost.is_negative() {
                    return Err(ScoringError::InvalidStrategy("free-ride cost is negative".into()));
                }
                if market.models().iter().any(|m| m.expected_quality < *quality_floor) {
                    return Err(ScoringError::InvalidStrategy(
                        "free-ride quality floor exceeds a model's expected quality".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Model named in the posted response.
    pub fn declared_model(&self) -> ModelId {
        match self {
            InferenceStrategy::UseModel { model } => model.clone(),
            InferenceStrategy::Downgrade { from, .. } => from.clone(),
            InferenceStrategy::FreeRide { .. } => ModelId::new("none"),
        }
    }

    pub fn source(&self) -> ResponseSource {
        match self {
            InferenceStrategy::UseModel { model } => ResponseSource::Model(model.clone()),
            InferenceStrategy::Downgrade { to, .. } => ResponseSource::Model(to.clone()),
            InferenceStrategy::FreeRide { quality_floor, .. } => ResponseSource::Floor(*quality_floor),
        }
    }

    /// Cost actually incurred per query.
    pub fn cost(&self, market: &MarketConfig) -> Result<Amount, ScoringError> {
        let cost_of = |m: &ModelId| {
            market
                .get(m)
                .map(|p| p.cost)
                .ok_or_else(|| ScoringError::UnknownModel(m.clone()))
        };
        match self {
            InferenceStrategy::UseModel { model } => cost_of(model),
            InferenceStrategy::Downgrade { to, .. } => cost_of(to),
            InferenceStrategy::FreeRide { cost, .. } => Ok(*cost),
        }
    }
}

/// Honest score of whatever `source` produced.
pub fn response_score(
    seed: u64,
    query_id: u64,
    source: &ResponseSource,
    market: &MarketConfig,
    domain: ScoreDomain,
) -> Result<QualityScore, ScoringError> {
    match source {
        ResponseSource::Model(m) => honest_score(seed, query_id, m, market, domain),
        ResponseSource::Floor(s) => Ok(domain.clamp(*s)),
    }
}

pub const DEFAULT_ADAPTER_TIMEOUT_MS: u64 = 5000;

fn default_timeout() -> u64 {
    DEFAULT_ADAPTER_TIMEOUT_MS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AdapterTransport {
    Process {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
    Tcp {
        addr: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub transport: AdapterTransport,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub domain: ScoreDomain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExternalOutcome {
    Score(QualityScore),
    /// No reply within the timeout; the assessor counts as silent.
    Absent,
}

#[derive(Serialize)]
struct AdapterRequest<'a> {
    id: u64,
    query: &'a str,
    response: &'a str,
}

#[derive(Deserialize)]
struct AdapterReply {
    id: u64,
    raw: f64,
}

enum Channel {
    Process {
        child: Child,
        stdin: ChildStdin,
        lines: Receiver<io::Result<String>>,
    },
    Tcp {
        reader: BufReader<TcpStream>,
        writer: TcpStream,
        partial: Vec<u8>,
    },
}

/// One connection to a scoring adapter, one request in flight at a time.
pub struct ExternalScorer {
    channel: Channel,
    next_id: u64,
    timeout: Duration,
    domain: ScoreDomain,
}

enum Line {
    Got(String),
    TimedOut,
    Closed,
}

impl ExternalScorer {
    pub fn connect(config: &AdapterConfig) -> Result<Self, ScoringError> {
        let channel = match &config.transport {
            AdapterTransport::Process { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                let (tx, rx) = mpsc::channel();
                std::thread::spawn(move || {
                    for line in BufReader::new(stdout).lines() {
                        if tx.send(line).is_err() {
                            break;
                        }
                    }
                });
                Channel::Process {
                    child,
                    stdin,
                    lines: rx,
                }
            }
            AdapterTransport::Tcp { addr } => {
                let stream = TcpStream::connect(addr)?;
                Channel::Tcp {
                    reader: BufReader::new(stream.try_clone()?),
                    writer: stream,
                    partial: Vec::new(),
                }
            }
        };
        Ok(ExternalScorer {
            channel,
            next_id: 1,
            timeout: Duration::from_millis(config.timeout_ms),
            domain: config.domain,
        })
    }

    fn send(&mut self, line: &str) -> io::Result<()> {
        let w: &mut dyn Write = match &mut self.channel {
            Channel::Process { stdin, .. } => stdin,
            Channel::Tcp { writer, .. } => writer,
        };
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
        w.flush()
    }

    fn recv(&mut self, deadline: Instant) -> io::Result<Line> {
        let left = deadline.saturating_duration_since(Instant::now());
        match &mut self.channel {
            Channel::Process { lines, .. } => match lines.recv_timeout(left) {
                Ok(line) => line.map(Line::Got),
                Err(RecvTimeoutError::Timeout) => Ok(Line::TimedOut),
                Err(RecvTimeoutError::Disconnected) => Ok(Line::Closed),
            },
            Channel::Tcp { reader, partial, .. } => {
                if left.is_zero() {
                    return Ok(Line::TimedOut);
                }
                reader.get_ref().set_read_timeout(Some(left))?;
                match reader.read_until(b'\n', partial) {
                    Ok(0) => Ok(Line::Closed),
                    Ok(_) if partial.last() == Some(&b'\n') => {
                        let line = String::from_utf8(std::mem::take(partial))
                            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                        Ok(Line::Got(line.trim_end().to_string()))
                    }
                    Ok(_) => Ok(Line::Closed),
                    Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                        Ok(Line::TimedOut)
                    }
                    Err(e) => Err(e),
                }
            }
        }
    }

    /// Scores one (query, response) pair. Replies to earlier, timed-out
    /// requests are skipped.
    pub fn score(&mut self, query: &str, response: &str) -> Result<ExternalOutcome, ScoringError> {
        let id = self.next_id;
        self.next_id += 1;
        let req = serde_json::to_string(&AdapterRequest { id, query, response }).expect("serializable");
        self.send(&req)?;
        let deadline = Instant::now() + self.timeout;
        loop {
            let line = match self.recv(deadline)? {
                Line::Got(l) => l,
                Line::TimedOut => return Ok(ExternalOutcome::Absent),
                Line::Closed => return Err(ScoringError::Protocol("adapter closed the channel".into())),
            };
            let reply: AdapterReply = serde_json::from_str(&line)
                .map_err(|e| ScoringError::Protocol(format!("malformed reply {line:?}: {e}")))?;
            if reply.id < id {
                continue;
            }
            if reply.id > id {
                return Err(ScoringError::Protocol(format!(
                    "reply id {} for request {id}",
                    reply.id
                )));
            }
            return match normalize_score(reply.raw, self.domain) {
                Ok(s) => Ok(ExternalOutcome::Score(s)),
                Err(DomainError::RawOutOfRange(raw)) => {
                    Err(ScoringError::Protocol(format!("raw score {raw} outside [-1, 1]")))
                }
                Err(e) => Err(ScoringError::Protocol(e.to_string())),
            };
        }
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Channel::Process { child, .. } = &mut self.channel {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Connects, scores one pair, and disconnects.
pub fn external_score(config: &AdapterConfig, query: &str, response: &str) -> Result<ExternalOutcome, ScoringError> {
    ExternalScorer::connect(config)?.score(query, response)
}
