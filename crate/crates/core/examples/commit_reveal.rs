//! One consensus round driven by hand: three assessors seal their scores,
//! the first two form the quorum, the late one is excluded, and the round
//! pays out.

use pqml::commitment::{seal, Scheme};
use pqml::consensus::{CommitOutcome, ConsensusRound, RevealOutcome};
use pqml::{Fixed, NodeId, QualityScore, RewardParams, ScoreDomain};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assessors: Vec<NodeId> = (0..3).map(NodeId::assessor).collect();
    let params = RewardParams {
        alpha: 0.5,
        beta: 0.5,
        k: 2,
        m: 3,
    };
    let mut round = ConsensusRound::new(0, 42, NodeId::inference(0), assessors.clone(), params.k)?;
    round.open_commit(10_000, 5_000)?;

    let plan = [
        ("7.5", Scheme::HashCommit, 1_000),
        ("8.25", Scheme::KeypairSeal, 2_000),
        ("3", Scheme::HashCommit, 4_000),
    ];
    let mut reveals = Vec::new();
    for (i, (score, scheme, at)) in plan.iter().enumerate() {
        let score: QualityScore = score.parse()?;
        let mut randomness = [0u8; 32];
        randomness[0] = i as u8 + 1;
        let (sealed, reveal) = seal(*scheme, score, 0, assessors[i], randomness);
        println!(
            "t={at:>5} {} commits {:?}: {}",
            assessors[i],
            scheme,
            hex::encode(&sealed.commitment[..8])
        );
        match round.on_commit(sealed, *at)? {
            CommitOutcome::QuorumReached {
                included,
                deadline_reveal,
            } => {
                let names: Vec<String> = included.iter().map(|n| n.to_string()).collect();
                println!("        quorum {}, reveals due by {deadline_reveal}", names.join(" "));
            }
            CommitOutcome::Excluded(reason) => println!("        excluded: {reason:?}"),
            CommitOutcome::Accepted => {}
        }
        reveals.push(reveal);
    }

    for (i, reveal) in reveals.into_iter().enumerate() {
        let at = 5_000 + i as u64 * 100;
        match round.on_reveal(reveal, at)? {
            RevealOutcome::Finalized(score) => println!("t={at:>5} consensus {score}"),
            other => println!("t={at:>5} reveal {:?}", other.status()),
        }
    }

    let payout = round.finalize_rewards(&params, ScoreDomain::default(), Fixed::from_int(10), 0.1)?;
    println!(
        "chi {:.6}: inference {} earns {}, user gets back {}",
        payout.chi, payout.inference.node, payout.inference.amount, payout.returned
    );
    for a in &payout.assessors {
        println!(
            "  {} share {:.6} amount {} included {}",
            a.node, a.share, a.amount, a.included
        );
    }
    println!(
        "total posted {} of {}",
        payout.total(),
        Fixed::from_int(10) + payout.budget
    );
    Ok(())
}
