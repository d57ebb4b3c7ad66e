//! Two-phase quality consensus for a single query.
//!
//! A round is assigned `m` assessors but aggregates only the first `k`
//! commitments, ordered by (commit time, node id). Once the quorum is fixed
//! the included assessors reveal; the consensus score is the exact
//! micro-unit mean of their `k` scores. Commitments arriving after the
//! quorum or the deadline are kept on record, marked excluded, and earn
//! nothing.
//!
//! Every transition takes the simulated time `now` explicitly, so the same
//! transition functions drive both the simulator and [`audit_replay`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::commitment::{self, CommitError, RevealRecord, SealedScore};
use crate::domain::{Amount, NodeId, QualityScore, RewardParams, ScoreDomain};
use crate::fixed::Fixed;
use crate::ledger::{
    self, AbortReason, ChainStatus, LedgerError, LedgerEvent, Posting, RevealStatus, RewardsDistributed,
};
use crate::rewards::{self, RewardsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitResponse,
    Commit,
    Reveal,
    Finalized,
    Aborted,
}

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("round {round_id}: {node} is not an assigned assessor")]
    UnknownAssessor { round_id: u64, node: NodeId },
    #[error("round {round_id}: duplicate commit from {node}")]
    DuplicateCommit { round_id: u64, node: NodeId },
    #[error("message for round {got} delivered to round {expected}")]
    WrongRound { expected: u64, got: u64 },
    #[error("round {round_id} is in phase {actual:?}, expected {expected:?}")]
    Phase {
        round_id: u64,
        expected: Phase,
        actual: Phase,
    },
    #[error("invalid round: {0}")]
    InvalidRound(String),
    #[error(transparent)]
    Rewards(#[from] RewardsError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("ledger chain broken at seq {first_bad_seq}: {reason}")]
    BrokenChain { first_bad_seq: u64, reason: String },
    #[error("ledger seq {seq}: {message}")]
    MalformedLedger { seq: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionReason {
    AfterQuorum,
    AfterDeadline,
    RoundClosed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommitOutcome {
    Accepted,
    QuorumReached {
        included: Vec<NodeId>,
        deadline_reveal: u64,
    },
    Excluded(ExclusionReason),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RevealOutcome {
    Accepted,
    Finalized(QualityScore),
    /// Not aggregated: sender outside the included set, duplicate, late, or
    /// round not in its reveal phase.
    Ignored,
    /// Verification failed; the sender is flagged and the round aborted.
    Rejected(CommitError),
}

impl RevealOutcome {
    pub fn status(&self) -> RevealStatus {
        match self {
            RevealOutcome::Accepted | RevealOutcome::Finalized(_) => RevealStatus::Accepted,
            RevealOutcome::Ignored => RevealStatus::Ignored,
            RevealOutcome::Rejected(_) => RevealStatus::Invalid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitEntry {
    pub sealed: SealedScore,
    pub time: u64,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevealEntry {
    pub reveal: RevealRecord,
    pub time: u64,
    pub status: RevealStatus,
}

/// State of one query's assessment.
#[derive(Debug, Clone)]
pub struct ConsensusRound {
    pub round_id: u64,
    pub query_id: u64,
    pub inference_node: NodeId,
    assigned: Vec<NodeId>,
    k: usize,
    phase: Phase,
    sealed: BTreeMap<NodeId, CommitEntry>,
    revealed: Vec<RevealEntry>,
    included: Vec<NodeId>,
    valid: BTreeMap<NodeId, QualityScore>,
    flagged: BTreeSet<NodeId>,
    consensus: Option<QualityScore>,
    deadline_commit: u64,
    deadline_reveal: Option<u64>,
    reveal_window: u64,
    abort_reason: Option<AbortReason>,
}

impl ConsensusRound {
    pub fn new(
        round_id: u64,
        query_id: u64,
        inference_node: NodeId,
        assigned: Vec<NodeId>,
        k: usize,
    ) -> Result<Self, ConsensusError> {
        let unique: BTreeSet<_> = assigned.iter().collect();
        if unique.len() != assigned.len() {
            return Err(ConsensusError::InvalidRound("duplicate assessor assignment".into()));
        }
        if k == 0 || k > assigned.len() {
            return Err(ConsensusError::InvalidRound(format!(
                "need 1 <= k <= m, got k={k} m={}",
                assigned.len()
            )));
        }
        Ok(ConsensusRound {
            round_id,
            query_id,
            inference_node,
            assigned,
            k,
            phase: Phase::AwaitResponse,
            sealed: BTreeMap::new(),
            revealed: Vec::new(),
            included: Vec::new(),
            valid: BTreeMap::new(),
            flagged: BTreeSet::new(),
            consensus: None,
            deadline_commit: 0,
            deadline_reveal: None,
            reveal_window: 0,
            abort_reason: None,
        })
    }

    /// The response is posted: commits are accepted until `deadline_commit`,
    /// and the reveal deadline will be set `reveal_window` after the quorum.
    pub fn open_commit(&mut self, deadline_commit: u64, reveal_window: u64) -> Result<(), ConsensusError> {
        self.expect_phase(Phase::AwaitResponse)?;
        self.deadline_commit = deadline_commit;
        self.reveal_window = reveal_window;
        self.phase = Phase::Commit;
        Ok(())
    }

    fn expect_phase(&self, expected: Phase) -> Result<(), ConsensusError> {
        if self.phase != expected {
            return Err(ConsensusError::Phase {
                round_id: self.round_id,
                expected,
                actual: self.phase,
            });
        }
        Ok(())
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assigned(&self) -> &[NodeId] {
        &self.assigned
    }

    pub fn included(&self) -> &[NodeId] {
        &self.included
    }

    pub fn sealed(&self) -> &BTreeMap<NodeId, CommitEntry> {
        &self.sealed
    }

    pub fn reveals(&self) -> &[RevealEntry] {
        &self.revealed
    }

    pub fn flagged(&self) -> &BTreeSet<NodeId> {
        &self.flagged
    }

    pub fn consensus_score(&self) -> Option<QualityScore> {
        self.consensus
    }

    pub fn deadline_commit(&self) -> u64 {
        self.deadline_commit
    }

    pub fn deadline_reveal(&self) -> Option<u64> {
        self.deadline_reveal
    }

    pub fn abort_reason(&self) -> Option<AbortReason> {
        self.abort_reason
    }

    /// Scores of the included set in inclusion order, once all are revealed.
    pub fn included_scores(&self) -> Option<Vec<QualityScore>> {
        self.included.iter().map(|n| self.valid.get(n).copied()).collect()
    }

    fn check_round(&self, round_id: u64) -> Result<(), ConsensusError> {
        if round_id != self.round_id {
            return Err(ConsensusError::WrongRound {
                expected: self.round_id,
                got: round_id,
            });
        }
        Ok(())
    }

    pub fn on_commit(&mut self, sealed: SealedScore, now: u64) -> Result<CommitOutcome, ConsensusError> {
        self.check_round(sealed.round_id)?;
        let node = sealed.assessor;
        if !self.assigned.contains(&node) {
            return Err(ConsensusError::UnknownAssessor {
                round_id: self.round_id,
                node,
            });
        }
        if self.sealed.contains_key(&node) {
            self.flagged.insert(node);
            return Err(ConsensusError::DuplicateCommit {
                round_id: self.round_id,
                node,
            });
        }
        let reason = match self.phase {
            Phase::AwaitResponse => return self.expect_phase(Phase::Commit).map(|_| unreachable!()),
            Phase::Commit if now > self.deadline_commit => Some(ExclusionReason::AfterDeadline),
            Phase::Commit => None,
            Phase::Reveal => Some(ExclusionReason::AfterQuorum),
            Phase::Finalized | Phase::Aborted => Some(ExclusionReason::RoundClosed),
        };
        self.sealed.insert(
            node,
            CommitEntry {
                sealed,
                time: now,
                excluded: reason.is_some(),
            },
        );
        if let Some(reason) = reason {
            return Ok(CommitOutcome::Excluded(reason));
        }
        let mut on_time: Vec<(u64, NodeId)> = self
            .sealed
            .iter()
            .filter(|(_, e)| !e.excluded)
            .map(|(n, e)| (e.time, *n))
            .collect();
        if on_time.len() < self.k {
            return Ok(CommitOutcome::Accepted);
        }
        on_time.sort();
        self.included = on_time.iter().take(self.k).map(|(_, n)| *n).collect();
        let deadline_reveal = now + self.reveal_window;
        self.deadline_reveal = Some(deadline_reveal);
        self.phase = Phase::Reveal;
        Ok(CommitOutcome::QuorumReached {
            included: self.included.clone(),
            deadline_reveal,
        })
    }

    pub fn on_reveal(&mut self, reveal: RevealRecord, now: u64) -> Result<RevealOutcome, ConsensusError> {
        self.check_round(reveal.round_id)?;
        let node = reveal.assessor;
        let aggregatable = self.phase == Phase::Reveal
            && self.included.contains(&node)
            && !self.valid.contains_key(&node)
            && self.deadline_reveal.is_some_and(|d| now <= d);
        let outcome = if !aggregatable {
            RevealOutcome::Ignored
        } else {
            let entry = &self.sealed[&node];
            match commitment::open(&entry.sealed, &reveal) {
                Ok(score) => {
                    self.valid.insert(node, score);
                    if self.valid.len() == self.k {
                        let scores = self.included_scores().expect("all included revealed");
                        let mean = QualityScore::mean(&scores).expect("k >= 1");
                        self.consensus = Some(mean);
                        self.phase = Phase::Finalized;
                        RevealOutcome::Finalized(mean)
                    } else {
                        RevealOutcome::Accepted
                    }
                }
                Err(err) => {
                    self.flagged.insert(node);
                    self.included.retain(|n| *n != node);
                    // no replacement pool, so fewer than k honest reveals remain
                    self.phase = Phase::Aborted;
                    self.abort_reason = Some(AbortReason::InvalidReveal);
                    RevealOutcome::Rejected(err)
                }
            }
        };
        self.revealed.push(RevealEntry {
            reveal,
            time: now,
            status: outcome.status(),
        });
        Ok(outcome)
    }

    /// Aborts the round if `now` is past the active phase's deadline without
    /// enough commits or reveals. Returns the reason when it aborts.
    pub fn on_timeout(&mut self, now: u64) -> Option<AbortReason> {
        let reason = match self.phase {
            Phase::Commit if now > self.deadline_commit => AbortReason::CommitTimeout,
            Phase::Reveal if self.deadline_reveal.is_some_and(|d| now > d) && self.valid.len() < self.k => {
                AbortReason::RevealTimeout
            }
            _ => return None,
        };
        self.phase = Phase::Aborted;
        self.abort_reason = Some(reason);
        Some(reason)
    }

    /// Reward postings for a finalized round.
    ///
    /// The inference node earns `bounty · χ`, the rest of the bounty returns
    /// to the user, and the assessment budget `round(ρ · bounty)` is split
    /// by the share vector among the included assessors with largest-remainder
    /// rounding, so every posting sums to `bounty + budget` exactly.
    pub fn finalize_rewards(
        &self,
        params: &RewardParams,
        domain: ScoreDomain,
        bounty: Amount,
        rho: f64,
    ) -> Result<RewardPostings, ConsensusError> {
        self.expect_phase(Phase::Finalized)?;
        let scores = self.included_scores().expect("finalized round has all reveals");
        let chi = rewards::inference_reward(&scores, params.alpha, domain)?;
        let shares = rewards::assessor_shares(&scores, params.beta)?.into_inner();

        let inference_amount = scale_amount(bounty, chi);
        let budget = scale_amount(bounty, rho);
        let split = split_budget(budget, &shares);

        let mut by_node: HashMap<NodeId, (Amount, f64)> = HashMap::new();
        for ((node, amount), share) in self.included.iter().zip(split).zip(&shares) {
            by_node.insert(*node, (amount, *share));
        }
        let assessors = self
            .assigned
            .iter()
            .map(|node| {
                let (amount, share) = by_node.get(node).copied().unwrap_or((Fixed::ZERO, 0.0));
                AssessorPosting {
                    node: *node,
                    amount,
                    share,
                    included: by_node.contains_key(node),
                }
            })
            .collect();
        Ok(RewardPostings {
            round_id: self.round_id,
            chi,
            inference: Posting {
                node: self.inference_node,
                amount: inference_amount,
            },
            assessors,
            returned: bounty - inference_amount,
            budget,
        })
    }
}

fn scale_amount(amount: Amount, factor: f64) -> Amount {
    Fixed::from_micros((amount.micros() as f64 * factor).round_ties_even() as i64)
}

/// Largest-remainder apportionment of `budget` micro-units by `shares`;
/// ties in the remainder go to the earlier entry.
fn split_budget(budget: Amount, shares: &[f64]) -> Vec<Amount> {
    let total = budget.micros();
    let raw: Vec<f64> = shares.iter().map(|h| total as f64 * h).collect();
    let mut floors: Vec<i64> = raw.iter().map(|r| r.floor() as i64).collect();
    let mut left = total - floors.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut i = 0;
    while left > 0 && !order.is_empty() {
        floors[order[i % order.len()]] += 1;
        left -= 1;
        i += 1;
    }
    floors.into_iter().map(Fixed::from_micros).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssessorPosting {
    pub node: NodeId,
    pub amount: Amount,
    pub share: f64,
    pub included: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardPostings {
    pub round_id: u64,
    pub chi: f64,
    pub inference: Posting,
    pub assessors: Vec<AssessorPosting>,
    pub returned: Amount,
    pub budget: Amount,
}

impl RewardPostings {
    pub fn total(&self) -> Amount {
        self.inference.amount + self.returned + self.assessors.iter().map(|a| a.amount).sum()
    }

    pub fn to_record(&self) -> RewardsDistributed {
        RewardsDistributed {
            round_id: self.round_id,
            inference: self.inference.clone(),
            assessors: self
                .assessors
                .iter()
                .map(|a| Posting {
                    node: a.node,
                    amount: a.amount,
                })
                .collect(),
            returned: self.returned,
        }
    }
}

/// Protocol parameters an auditor needs beyond the ledger itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditParams {
    pub rewards: RewardParams,
    pub domain: ScoreDomain,
    pub rho: f64,
    /// Reveal window after the commit quorum, in simulated microseconds.
    pub reveal_window: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub round_id: u64,
    pub seq: u64,
    pub field: String,
    pub recorded: String,
    pub recomputed: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub rounds_checked: usize,
    pub divergences: Vec<Divergence>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.divergences.is_empty()
    }
}

struct Auditor {
    params: AuditParams,
    bounties: HashMap<u64, Amount>,
    rounds: BTreeMap<u64, ConsensusRound>,
    finalized_seen: BTreeSet<u64>,
    divergences: Vec<Divergence>,
}

impl Auditor {
    fn diverge(&mut self, round_id: u64, seq: u64, field: &str, recorded: impl ToString, recomputed: impl ToString) {
        self.divergences.push(Divergence {
            round_id,
            seq,
            field: field.to_string(),
            recorded: recorded.to_string(),
            recomputed: recomputed.to_string(),
        });
    }

    fn round(&mut self, round_id: u64, seq: u64) -> Result<&mut ConsensusRound, ConsensusError> {
        self.rounds.get_mut(&round_id).ok_or(ConsensusError::MalformedLedger {
            seq,
            message: format!("record for unknown round {round_id}"),
        })
    }

    fn apply(&mut self, seq: u64, now: u64, event: &LedgerEvent) -> Result<(), ConsensusError> {
        match event {
            LedgerEvent::QueryPosted(q) => {
                self.bounties.insert(q.query_id, q.bounty);
            }
            LedgerEvent::ResponsePosted(_) => {}
            LedgerEvent::AssessorsAssigned(a) => {
                let mut round =
                    ConsensusRound::new(a.round_id, a.query_id, a.inference_node, a.assessors.clone(), a.k)?;
                round.open_commit(a.deadline_commit, self.params.reveal_window)?;
                self.rounds.insert(a.round_id, round);
            }
            LedgerEvent::ScoreSealed(s) => {
                let round = self.round(s.round_id, seq)?;
                let excluded = match round.on_commit(s.to_sealed(), now) {
                    Ok(CommitOutcome::Excluded(_)) => true,
                    Ok(_) => false,
                    Err(ConsensusError::DuplicateCommit { .. }) | Err(ConsensusError::UnknownAssessor { .. }) => true,
                    Err(e) => return Err(e),
                };
                if excluded != s.excluded {
                    self.diverge(s.round_id, seq, "excluded", s.excluded, excluded);
                }
            }
            LedgerEvent::CommitQuorum(q) => {
                let round = self.round(q.round_id, seq)?;
                let included = round.included().to_vec();
                let deadline = round.deadline_reveal();
                let phase = round.phase();
                if phase != Phase::Reveal {
                    self.diverge(q.round_id, seq, "phase", "reveal", format!("{phase:?}"));
                }
                if included != q.included {
                    self.diverge(
                        q.round_id,
                        seq,
                        "included",
                        fmt_nodes(&q.included),
                        fmt_nodes(&included),
                    );
                }
                if deadline != Some(q.deadline_reveal) {
                    self.diverge(q.round_id, seq, "deadline_reveal", q.deadline_reveal, fmt_opt(deadline));
                }
            }
            LedgerEvent::ScoreRevealed(r) => {
                let round = self.round(r.round_id, seq)?;
                let status = round.on_reveal(r.to_reveal(), now)?.status();
                if status != r.status {
                    self.diverge(
                        r.round_id,
                        seq,
                        "reveal_status",
                        format!("{:?}", r.status),
                        format!("{status:?}"),
                    );
                }
            }
            LedgerEvent::RoundFinalized(f) => {
                self.finalized_seen.insert(f.round_id);
                let round = self.round(f.round_id, seq)?;
                let score = round.consensus_score();
                if score != Some(f.consensus_score) {
                    self.diverge(f.round_id, seq, "consensus_score", f.consensus_score, fmt_opt(score));
                }
            }
            LedgerEvent::RoundAborted(a) => {
                let round = self.round(a.round_id, seq)?;
                if round.phase() != Phase::Aborted {
                    round.on_timeout(now);
                }
                let reason = round.abort_reason();
                if reason != Some(a.reason) {
                    self.diverge(
                        a.round_id,
                        seq,
                        "abort_reason",
                        format!("{:?}", a.reason),
                        format!("{reason:?}"),
                    );
                }
            }
            LedgerEvent::RewardsDistributed(d) => {
                let params = self.params;
                let round = self.round(d.round_id, seq)?;
                let query_id = round.query_id;
                if round.phase() != Phase::Finalized {
                    let phase = round.phase();
                    self.diverge(d.round_id, seq, "phase", "finalized", format!("{phase:?}"));
                    return Ok(());
                }
                let round = round.clone();
                let bounty = self
                    .bounties
                    .get(&query_id)
                    .copied()
                    .ok_or(ConsensusError::MalformedLedger {
                        seq,
                        message: format!("no QueryPosted for query {query_id}"),
                    })?;
                let expect = round
                    .finalize_rewards(&params.rewards, params.domain, bounty, params.rho)?
                    .to_record();
                if expect.inference != d.inference {
                    self.diverge(
                        d.round_id,
                        seq,
                        "inference_payout",
                        d.inference.amount,
                        expect.inference.amount,
                    );
                }
                if expect.returned != d.returned {
                    self.diverge(d.round_id, seq, "returned", d.returned, expect.returned);
                }
                if expect.assessors != d.assessors {
                    self.diverge(
                        d.round_id,
                        seq,
                        "assessor_payouts",
                        fmt_postings(&d.assessors),
                        fmt_postings(&expect.assessors),
                    );
                }
            }
        }
        Ok(())
    }
}

fn fmt_nodes(nodes: &[NodeId]) -> String {
    nodes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_postings(p: &[Posting]) -> String {
    p.iter()
        .map(|p| format!("{}={}", p.node, p.amount))
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

/// Rebuilds every round from ledger records alone and reports where the
/// recorded quorum, consensus, aborts or payouts disagree with the replay.
///
/// The chain is verified first; a broken chain is an error, not a divergence.
pub fn audit_replay(path: &Path, params: AuditParams) -> Result<AuditReport, ConsensusError> {
    if let ChainStatus::Broken { first_bad_seq, reason } = ledger::verify_chain(path)? {
        return Err(ConsensusError::BrokenChain { first_bad_seq, reason });
    }
    audit_records(&ledger::read_ledger(path)?, params)
}

/// [`audit_replay`] over records already in memory (chain not checked).
pub fn audit_records(records: &[ledger::LedgerRecord], params: AuditParams) -> Result<AuditReport, ConsensusError> {
    let mut auditor = Auditor {
        params,
        bounties: HashMap::new(),
        rounds: BTreeMap::new(),
        finalized_seen: BTreeSet::new(),
        divergences: Vec::new(),
    };
    for r in records {
        auditor.apply(r.seq, r.timestamp, &r.event)?;
    }
    let missing: Vec<(u64, Option<QualityScore>)> = auditor
        .rounds
        .iter()
        .filter(|(id, r)| r.phase() == Phase::Finalized && !auditor.finalized_seen.contains(id))
        .map(|(id, r)| (*id, r.consensus_score()))
        .collect();
    for (id, score) in missing {
        auditor.diverge(id, u64::MAX, "round_finalized", "missing", fmt_opt(score));
    }
    Ok(AuditReport {
        rounds_checked: auditor.rounds.len(),
        divergences: auditor.divergences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commitment::{seal, Scheme};

    fn a(i: u64) -> NodeId {
        NodeId::assessor(i)
    }

    fn q(x: f64) -> QualityScore {
        QualityScore(Fixed::from_f64(x).unwrap())
    }

    fn nonce(node: NodeId) -> [u8; 32] {
        let mut n = [7u8; 32];
        n[..8].copy_from_slice(&node.index.to_be_bytes());
        n
    }

    fn round(m: u64, k: usize) -> ConsensusRound {
        let mut r = ConsensusRound::new(1, 1, NodeId::inference(0), (1..=m).map(a).collect(), k).unwrap();
        r.open_commit(1_000, 500).unwrap();
        r
    }

    fn sealed(node: NodeId, score: f64) -> (SealedScore, RevealRecord) {
        seal(Scheme::HashCommit, q(score), 1, node, nonce(node))
    }

    fn params(k: usize, m: usize) -> RewardParams {
        RewardParams {
            alpha: 1.0,
            beta: 0.5,
            k,
            m,
        }
    }

    #[test]
    fn late_third_commit_is_excluded() {
        let mut r = round(3, 2);
        let (s1, r1) = sealed(a(1), 7.0);
        let (s2, r2) = sealed(a(2), 9.0);
        let (s3, _) = sealed(a(3), 1.0);
        assert_eq!(r.on_commit(s1, 10).unwrap(), CommitOutcome::Accepted);
        assert!(matches!(
            r.on_commit(s2, 20).unwrap(),
            CommitOutcome::QuorumReached { .. }
        ));
        assert_eq!(r.phase(), Phase::Reveal);
        assert_eq!(r.deadline_reveal(), Some(520));
        assert_eq!(
            r.on_commit(s3, 30).unwrap(),
            CommitOutcome::Excluded(ExclusionReason::AfterQuorum)
        );
        assert!(r.sealed()[&a(3)].excluded);
        assert_eq!(r.included(), &[a(1), a(2)]);
        r.on_reveal(r1, 40).unwrap();
        assert_eq!(r.on_reveal(r2, 41).unwrap(), RevealOutcome::Finalized(q(8.0)));
        let p = r
            .finalize_rewards(&params(2, 3), ScoreDomain::default(), Fixed::from_int(20), 0.1)
            .unwrap();
        assert_eq!(p.assessors[2].amount, Fixed::ZERO);
        assert!(!p.assessors[2].included);
    }

    #[test]
    fn k_one_first_commit_fixes_quorum() {
        let mut r = round(3, 1);
        let (s, _) = sealed(a(2), 5.0);
        assert_eq!(
            r.on_commit(s, 3).unwrap(),
            CommitOutcome::QuorumReached {
                included: vec![a(2)],
                deadline_reveal: 503
            }
        );
    }

    #[test]
    fn ties_in_commit_time_break_by_node_id() {
        let mut r = round(3, 2);
        // delivered out of id order at the same instant
        r.on_commit(sealed(a(3), 5.0).0, 10).unwrap();
        r.on_commit(sealed(a(1), 5.0).0, 10).unwrap();
        assert_eq!(r.included(), &[a(1), a(3)]);
        let mut r = round(3, 2);
        r.on_commit(sealed(a(3), 5.0).0, 5).unwrap();
        r.on_commit(sealed(a(2), 5.0).0, 9).unwrap();
        assert_eq!(r.included(), &[a(3), a(2)]);
    }

    #[test]
    fn commit_violations() {
        let mut r = round(3, 2);
        assert!(matches!(
            r.on_commit(sealed(a(9), 5.0).0, 1),
            Err(ConsensusError::UnknownAssessor { .. })
        ));
        r.on_commit(sealed(a(1), 5.0).0, 1).unwrap();
        assert!(matches!(
            r.on_commit(sealed(a(1), 6.0).0, 2),
            Err(ConsensusError::DuplicateCommit { .. })
        ));
        assert!(r.flagged().contains(&a(1)));
        let other = seal(Scheme::HashCommit, q(1.0), 99, a(2), nonce(a(2))).0;
        assert!(matches!(r.on_commit(other, 3), Err(ConsensusError::WrongRound { .. })));
    }

    #[test]
    fn commit_before_response_is_a_phase_error() {
        let mut r = ConsensusRound::new(1, 1, NodeId::inference(0), vec![a(1)], 1).unwrap();
        assert!(matches!(
            r.on_commit(sealed(a(1), 5.0).0, 0),
            Err(ConsensusError::Phase { .. })
        ));
    }

    #[test]
    fn commit_after_deadline_is_excluded() {
        let mut r = round(3, 2);
        assert_eq!(
            r.on_commit(sealed(a(1), 5.0).0, 1_001).unwrap(),
            CommitOutcome::Excluded(ExclusionReason::AfterDeadline)
        );
    }

    #[test]
    fn three_reveals_average_in_micros() {
        let mut r = round(3, 3);
        let pairs: Vec<_> = [(1, 5.0), (2, 5.0), (3, 8.0)]
            .iter()
            .map(|(i, s)| sealed(a(*i), *s))
            .collect();
        for (i, (s, _)) in pairs.iter().enumerate() {
            r.on_commit(s.clone(), i as u64).unwrap();
        }
        let mut last = None;
        for (_, rv) in pairs {
            last = Some(r.on_reveal(rv, 50).unwrap());
        }
        assert_eq!(last, Some(RevealOutcome::Finalized(q(6.0))));
        assert_eq!(r.consensus_score().unwrap().to_string(), "6.000000");
    }

    #[test]
    fn tampered_reveal_aborts() {
        let mut r = round(2, 2);
        let (s1, mut r1) = sealed(a(1), 7.0);
        let (s2, _) = sealed(a(2), 7.0);
        r.on_commit(s1, 1).unwrap();
        r.on_commit(s2, 2).unwrap();
        r1.score = QualityScore::from_micros(r1.score.micros() + 1);
        assert!(matches!(r.on_reveal(r1, 3).unwrap(), RevealOutcome::Rejected(_)));
        assert_eq!(r.phase(), Phase::Aborted);
        assert_eq!(r.abort_reason(), Some(AbortReason::InvalidReveal));
        assert!(r.flagged().contains(&a(1)));
        assert!(r.consensus_score().is_none());
    }

    #[test]
    fn reveal_from_excluded_assessor_is_ignored() {
        let mut r = round(3, 2);
        let (s1, _) = sealed(a(1), 7.0);
        let (s2, _) = sealed(a(2), 7.0);
        let (s3, r3) = sealed(a(3), 2.0);
        r.on_commit(s1, 1).unwrap();
        r.on_commit(s2, 2).unwrap();
        r.on_commit(s3, 3).unwrap();
        assert_eq!(r.on_reveal(r3, 4).unwrap(), RevealOutcome::Ignored);
        assert_eq!(r.reveals().len(), 1);
    }

    #[test]
    fn commit_timeout_aborts() {
        let mut r = round(3, 3);
        r.on_commit(sealed(a(1), 5.0).0, 1).unwrap();
        r.on_commit(sealed(a(2), 5.0).0, 1).unwrap();
        assert_eq!(r.on_timeout(1_000), None);
        assert_eq!(r.on_timeout(1_001), Some(AbortReason::CommitTimeout));
        assert_eq!(r.phase(), Phase::Aborted);
    }

    #[test]
    fn reveal_timeout_with_k_minus_one_reveals() {
        let mut r = round(3, 3);
        let pairs: Vec<_> = (1..=3).map(|i| sealed(a(i), 5.0)).collect();
        for (s, _) in &pairs {
            r.on_commit(s.clone(), 10).unwrap();
        }
        r.on_reveal(pairs[0].1.clone(), 20).unwrap();
        r.on_reveal(pairs[1].1.clone(), 20).unwrap();
        assert_eq!(r.on_timeout(510), None);
        assert_eq!(r.on_timeout(511), Some(AbortReason::RevealTimeout));
    }

    #[test]
    fn over_provisioning_absorbs_silent_nodes() {
        let mut r = round(5, 3);
        let pairs: Vec<_> = (1..=3).map(|i| sealed(a(i), 6.0)).collect();
        for (s, _) in &pairs {
            r.on_commit(s.clone(), 10).unwrap();
        }
        for (_, rv) in pairs {
            r.on_reveal(rv, 20).unwrap();
        }
        assert_eq!(r.phase(), Phase::Finalized);
        assert_eq!(r.on_timeout(10_000), None);
    }

    #[test]
    fn rewards_for_perfect_and_equal_scores() {
        let mut r = round(3, 3);
        let pairs: Vec<_> = (1..=3).map(|i| sealed(a(i), 10.0)).collect();
        for (s, _) in &pairs {
            r.on_commit(s.clone(), 10).unwrap();
        }
        for (_, rv) in pairs {
            r.on_reveal(rv, 20).unwrap();
        }
        let bounty = Fixed::from_int(30);
        let p = r
            .finalize_rewards(&params(3, 3), ScoreDomain::default(), bounty, 0.1)
            .unwrap();
        assert_eq!(p.inference.amount, bounty);
        assert_eq!(p.returned, Fixed::ZERO);
        for post in &p.assessors {
            assert_eq!(post.amount, Fixed::from_int(1));
            assert_eq!(post.share, 1.0 / 3.0);
        }
        assert_eq!(p.total(), bounty + Fixed::from_int(3));
    }

    #[test]
    fn rewards_conserve_to_the_micro_unit() {
        let mut r = round(4, 3);
        let pairs: Vec<_> = [(1, 6.3), (2, 7.1), (3, 9.9)]
            .iter()
            .map(|(i, s)| sealed(a(*i), *s))
            .collect();
        for (s, _) in &pairs {
            r.on_commit(s.clone(), 10).unwrap();
        }
        for (_, rv) in pairs {
            r.on_reveal(rv, 20).unwrap();
        }
        let bounty = Fixed::from_micros(17_333_337);
        let p = r
            .finalize_rewards(&params(3, 4), ScoreDomain::default(), bounty, 0.137)
            .unwrap();
        assert_eq!(p.total(), bounty + p.budget);
        assert_eq!(
            p.budget,
            Fixed::from_micros((17_333_337.0f64 * 0.137).round_ties_even() as i64)
        );
        assert_eq!(p.assessors[3].amount, Fixed::ZERO);
    }

    #[test]
    fn finalize_before_finalized_is_an_error() {
        let r = round(3, 2);
        assert!(matches!(
            r.finalize_rewards(&params(2, 3), ScoreDomain::default(), Fixed::ONE, 0.1),
            Err(ConsensusError::Phase { .. })
        ));
    }

    #[test]
    fn budget_split_is_exact() {
        let shares = [1.0 / 3.0; 3];
        let split = split_budget(Fixed::from_micros(10), &shares);
        assert_eq!(split.iter().map(|a| a.micros()).collect::<Vec<_>>(), [4, 3, 3]);
        let split = split_budget(Fixed::from_micros(1_000_001), &[0.5, 0.5]);
        assert_eq!(split.iter().map(|a| a.micros()).sum::<i64>(), 1_000_001);
    }
}
