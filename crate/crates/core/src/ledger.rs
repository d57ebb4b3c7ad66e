//! Append-only, hash-chained event log.
//!
//! One JSON object per line with keys in the fixed order
//! `seq, timestamp, prev_hash, kind, body` and no insignificant whitespace.
//! Each record's `prev_hash` is the SHA-256 of the previous line's bytes
//! (without the newline); record 0 links to 32 zero bytes. `timestamp` is
//! simulated time in integer microseconds.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::commitment::{RevealRecord, Scheme, SealedScore};
use crate::domain::{Amount, ModelId, NodeId, QualityScore};

pub type Hash = [u8; 32];

pub const GENESIS_HASH: Hash = [0u8; 32];

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("ledger i/o failed: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("serializing record failed: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecordKind {
    QueryPosted,
    ResponsePosted,
    AssessorsAssigned,
    ScoreSealed,
    CommitQuorum,
    ScoreRevealed,
    RoundFinalized,
    RoundAborted,
    RewardsDistributed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPosted {
    pub query_id: u64,
    pub attempt: u32,
    pub bounty: Amount,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponsePosted {
    pub round_id: u64,
    pub query_id: u64,
    pub responder: NodeId,
    pub declared_model: ModelId,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessorsAssigned {
    pub round_id: u64,
    pub query_id: u64,
    pub inference_node: NodeId,
    pub assessors: Vec<NodeId>,
    pub k: usize,
    pub deadline_commit: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreSealed {
    pub round_id: u64,
    pub assessor: NodeId,
    pub scheme: Scheme,
    #[serde(with = "hex::serde")]
    pub commitment: Vec<u8>,
    pub excluded: bool,
}

impl ScoreSealed {
    pub fn from_sealed(sealed: &SealedScore, excluded: bool) -> Self {
        ScoreSealed {
            round_id: sealed.round_id,
            assessor: sealed.assessor,
            scheme: sealed.scheme,
            commitment: sealed.commitment.clone(),
            excluded,
        }
    }

    pub fn to_sealed(&self) -> SealedScore {
        SealedScore {
            scheme: self.scheme,
            round_id: self.round_id,
            assessor: self.assessor,
            commitment: self.commitment.clone(),
        }
    }
}

/// Posted by the management node once k commitments are in; it fixes the
/// included set and opens the reveal phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitQuorum {
    pub round_id: u64,
    pub included: Vec<NodeId>,
    pub deadline_reveal: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevealStatus {
    Accepted,
    /// From an assessor outside the included set; never aggregated.
    Ignored,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRevealed {
    pub round_id: u64,
    pub assessor: NodeId,
    pub score: QualityScore,
    #[serde(with = "hex::serde")]
    pub opening: Vec<u8>,
    pub status: RevealStatus,
}

impl ScoreRevealed {
    pub fn from_reveal(reveal: &RevealRecord, status: RevealStatus) -> Self {
        ScoreRevealed {
            round_id: reveal.round_id,
            assessor: reveal.assessor,
            score: reveal.score,
            opening: reveal.opening.clone(),
            status,
        }
    }

    pub fn to_reveal(&self) -> RevealRecord {
        RevealRecord {
            round_id: self.round_id,
            assessor: self.assessor,
            score: self.score,
            opening: self.opening.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundFinalized {
    pub round_id: u64,
    pub consensus_score: QualityScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    CommitTimeout,
    RevealTimeout,
    InvalidReveal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundAborted {
    pub round_id: u64,
    pub query_id: u64,
    pub reason: AbortReason,
    pub requeued: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub node: NodeId,
    pub amount: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardsDistributed {
    pub round_id: u64,
    pub inference: Posting,
    /// One posting per assigned assessor, zero for those left out of the
    /// included set.
    pub assessors: Vec<Posting>,
    /// Unpaid inference bounty handed back to the querying user.
    pub returned: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body")]
pub enum LedgerEvent {
    QueryPosted(QueryPosted),
    ResponsePosted(ResponsePosted),
    AssessorsAssigned(AssessorsAssigned),
    ScoreSealed(ScoreSealed),
    CommitQuorum(CommitQuorum),
    ScoreRevealed(ScoreRevealed),
    RoundFinalized(RoundFinalized),
    RoundAborted(RoundAborted),
    RewardsDistributed(RewardsDistributed),
}

impl LedgerEvent {
    pub fn kind(&self) -> RecordKind {
        match self {
            LedgerEvent::QueryPosted(_) => RecordKind::QueryPosted,
            LedgerEvent::ResponsePosted(_) => RecordKind::ResponsePosted,
            LedgerEvent::AssessorsAssigned(_) => RecordKind::AssessorsAssigned,
            LedgerEvent::ScoreSealed(_) => RecordKind::ScoreSealed,
            LedgerEvent::CommitQuorum(_) => RecordKind::CommitQuorum,
            LedgerEvent::ScoreRevealed(_) => RecordKind::ScoreRevealed,
            LedgerEvent::RoundFinalized(_) => RecordKind::RoundFinalized,
            LedgerEvent::RoundAborted(_) => RecordKind::RoundAborted,
            LedgerEvent::RewardsDistributed(_) => RecordKind::RewardsDistributed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub seq: u64,
    pub timestamp: u64,
    #[serde(with = "hex::serde")]
    pub prev_hash: Hash,
    #[serde(flatten)]
    pub event: LedgerEvent,
}

impl LedgerRecord {
    /// Canonical line form, without the trailing newline.
    pub fn to_line(&self) -> Result<String, LedgerError> {
        serde_json::to_string(self).map_err(|e| LedgerError::Serialize(e.to_string()))
    }

    pub fn kind(&self) -> RecordKind {
        self.event.kind()
    }
}

pub fn hash_line(line: &[u8]) -> Hash {
    Sha256::digest(line).into()
}

/// Single writer for a ledger stream.
pub struct LedgerWriter<W: Write> {
    out: W,
    next_seq: u64,
    last_hash: Hash,
}

impl<W: Write> LedgerWriter<W> {
    pub fn new(out: W) -> Self {
        LedgerWriter {
            out,
            next_seq: 0,
            last_hash: GENESIS_HASH,
        }
    }

    pub fn append(&mut self, timestamp: u64, event: LedgerEvent) -> Result<LedgerRecord, LedgerError> {
        let record = LedgerRecord {
            seq: self.next_seq,
            timestamp,
            prev_hash: self.last_hash,
            event,
        };
        let line = record.to_line()?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.last_hash = hash_line(line.as_bytes());
        self.next_seq += 1;
        Ok(record)
    }

    /// Hash of the most recent record, or the genesis hash when empty.
    pub fn head(&self) -> Hash {
        self.last_hash
    }

    pub fn len(&self) -> u64 {
        self.next_seq
    }

    pub fn is_empty(&self) -> bool {
        self.next_seq == 0
    }

    pub fn flush(&mut self) -> Result<(), LedgerError> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl LedgerWriter<io::BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self, LedgerError> {
        Ok(LedgerWriter::new(io::BufWriter::new(File::create(path)?)))
    }
}

fn lines_of<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, io::Result<String>)> {
    reader.lines().enumerate().map(|(i, l)| (i + 1, l))
}

fn parse_line(line_no: usize, line: &str) -> Result<LedgerRecord, LedgerError> {
    serde_json::from_str(line).map_err(|e| LedgerError::Parse {
        line: line_no,
        message: e.to_string(),
    })
}

/// Reads every record; a malformed line is a parse error naming its line
/// number (1-based).
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<LedgerRecord>, LedgerError> {
    lines_of(reader).map(|(n, line)| parse_line(n, &line?)).collect()
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRecord>, LedgerError> {
    read_records(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainStatus {
    Ok {
        records: u64,
        #[serde(with = "hex::serde")]
        head: Hash,
    },
    Broken {
        first_bad_seq: u64,
        reason: String,
    },
}

impl ChainStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, ChainStatus::Ok { .. })
    }
}

/// Recomputes every link. Also requires each line to be in canonical form,
/// which catches edits the successor's `prev_hash` cannot see (such as in
/// the final record) unless they happen to be canonical themselves; pair
/// with [`ChainStatus::Ok::head`] to pin the tail.
pub fn verify_records<R: BufRead>(reader: R) -> Result<ChainStatus, LedgerError> {
    let mut expected_prev = GENESIS_HASH;
    let mut count = 0u64;
    for (line_no, line) in lines_of(reader) {
        let line = line?;
        let record = parse_line(line_no, &line)?;
        let seq = count;
        let broken = |reason: String| {
            Ok(ChainStatus::Broken {
                first_bad_seq: seq,
                reason,
            })
        };
        if record.seq != seq {
            return broken(format!("expected seq {seq}, found {}", record.seq));
        }
        if record.prev_hash != expected_prev {
            return broken("prev_hash does not match previous record".into());
        }
        if record.to_line()? != line {
            return broken("record is not in canonical form".into());
        }
        expected_prev = hash_line(line.as_bytes());
        count += 1;
    }
    Ok(ChainStatus::Ok {
        records: count,
        head: expected_prev,
    })
}

pub fn verify_chain(path: &Path) -> Result<ChainStatus, LedgerError> {
    verify_records(BufReader::new(File::open(path)?))
}
