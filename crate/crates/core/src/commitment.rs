//! Score sealing for the commit and reveal phases.
//!
//! Two schemes bind an assessor to a score before anyone else's score is
//! visible:
//!
//! * `hash-commit`: `SHA-256("PQML-commit-v1" ‖ round ‖ assessor ‖ score ‖ nonce)`,
//!   opened by revealing the 32-byte nonce.
//! * `keypair-seal`: an Ed25519 signature over `(round ‖ assessor ‖ score)`
//!   under a fresh per-round key, opened by revealing the public key.

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{NodeId, QualityScore};

pub const COMMIT_DOMAIN: &[u8] = b"PQML-commit-v1";
pub const SEAL_DOMAIN: &[u8] = b"PQML-seal-v1";

pub const HASH_COMMITMENT_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    HashCommit,
    KeypairSeal,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommitError {
    #[error("reveal for round {reveal_round} by {reveal_assessor} does not match seal for round {sealed_round} by {sealed_assessor}")]
    Mismatch {
        sealed_round: u64,
        sealed_assessor: NodeId,
        reveal_round: u64,
        reveal_assessor: NodeId,
    },
    #[error("opening by {0} does not verify against its commitment")]
    Verification(NodeId),
    #[error("malformed {what} from {assessor}: expected {expected} bytes, got {got}")]
    Malformed {
        assessor: NodeId,
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

impl CommitError {
    /// The assessor whose reveal failed; consensus treats it as misbehaving.
    pub fn assessor(&self) -> NodeId {
        match self {
            CommitError::Mismatch { reveal_assessor, .. } => *reveal_assessor,
            CommitError::Verification(a) => *a,
            CommitError::Malformed { assessor, .. } => *assessor,
        }
    }
}

/// The published, hiding half of a commitment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedScore {
    pub scheme: Scheme,
    pub round_id: u64,
    pub assessor: NodeId,
    #[serde(with = "hex::serde")]
    pub commitment: Vec<u8>,
}

/// The opening published once the commit quorum is reached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealRecord {
    pub round_id: u64,
    pub assessor: NodeId,
    pub score: QualityScore,
    /// Nonce for hash-commit, public key for keypair-seal.
    #[serde(with = "hex::serde")]
    pub opening: Vec<u8>,
}

fn hash_commitment(round_id: u64, assessor: NodeId, score: QualityScore, nonce: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(COMMIT_DOMAIN);
    h.update(round_id.to_be_bytes());
    h.update(assessor.to_bytes());
    h.update(score.to_be_bytes());
    h.update(nonce);
    h.finalize().into()
}

fn seal_message(round_id: u64, assessor: NodeId, score: QualityScore) -> Vec<u8> {
    let mut msg = Vec::with_capacity(SEAL_DOMAIN.len() + 8 + 9 + 8);
    msg.extend_from_slice(SEAL_DOMAIN);
    msg.extend_from_slice(&round_id.to_be_bytes());
    msg.extend_from_slice(&assessor.to_bytes());
    msg.extend_from_slice(&score.to_be_bytes());
    msg
}

/// Seals `score`. `randomness` is the nonce (hash-commit) or the secret key
/// seed (keypair-seal); identical inputs give byte-identical output.
pub fn seal(
    scheme: Scheme,
    score: QualityScore,
    round_id: u64,
    assessor: NodeId,
    randomness: [u8; 32],
) -> (SealedScore, RevealRecord) {
    let (commitment, opening) = match scheme {
        Scheme::HashCommit => (
            hash_commitment(round_id, assessor, score, &randomness).to_vec(),
            randomness.to_vec(),
        ),
        Scheme::KeypairSeal => {
            let key = SigningKey::from_bytes(&randomness);
            let sig = key.sign(&seal_message(round_id, assessor, score));
            (sig.to_bytes().to_vec(), key.verifying_key().to_bytes().to_vec())
        }
    };
    (
        SealedScore {
            scheme,
            round_id,
            assessor,
            commitment,
        },
        RevealRecord {
            round_id,
            assessor,
            score,
            opening,
        },
    )
}

/// Checks `reveal` against `sealed` and returns the bound score.
pub fn open(sealed: &SealedScore, reveal: &RevealRecord) -> Result<QualityScore, CommitError> {
    if sealed.round_id != reveal.round_id || sealed.assessor != reveal.assessor {
        return Err(CommitError::Mismatch {
            sealed_round: sealed.round_id,
            sealed_assessor: sealed.assessor,
            reveal_round: reveal.round_id,
            reveal_assessor: reveal.assessor,
        });
    }
    let assessor = reveal.assessor;
    let malformed = |what, expected, got| CommitError::Malformed {
        assessor,
        what,
        expected,
        got,
    };
    match sealed.scheme {
        Scheme::HashCommit => {
            if sealed.commitment.len() != HASH_COMMITMENT_LEN {
                return Err(malformed("commitment", HASH_COMMITMENT_LEN, sealed.commitment.len()));
            }
            let expect = hash_commitment(reveal.round_id, assessor, reveal.score, &reveal.opening);
            if expect.as_slice() != sealed.commitment.as_slice() {
                return Err(CommitError::Verification(assessor));
            }
        }
        Scheme::KeypairSeal => {
            let sig: [u8; SIGNATURE_LEN] = sealed
                .commitment
                .as_slice()
                .try_into()
                .map_err(|_| malformed("signature", SIGNATURE_LEN, sealed.commitment.len()))?;
            let pk: [u8; 32] = reveal
                .opening
                .as_slice()
                .try_into()
                .map_err(|_| malformed("public key", 32, reveal.opening.len()))?;
            let key = VerifyingKey::from_bytes(&pk).map_err(|_| CommitError::Verification(assessor))?;
            key.verify(
                &seal_message(reveal.round_id, assessor, reveal.score),
                &Signature::from_bytes(&sig),
            )
            .map_err(|_| CommitError::Verification(assessor))?;
        }
    }
    Ok(reveal.score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn nonce(i: u64) -> [u8; 32] {
        let mut n = [0u8; 32];
        n[..8].copy_from_slice(&i.to_be_bytes());
        n[31] = 0xa5;
        n
    }

    const A: NodeId = NodeId::assessor(3);

    #[test]
    fn round_trip_both_schemes() {
        for scheme in [Scheme::HashCommit, Scheme::KeypairSeal] {
            let s = QualityScore::from_micros(7_250_000);
            let (sealed, reveal) = seal(scheme, s, 9, A, nonce(1));
            assert_eq!(open(&sealed, &reveal).unwrap(), s);
        }
    }

    #[test]
    fn binding_rejects_one_micro_change() {
        for scheme in [Scheme::HashCommit, Scheme::KeypairSeal] {
            let (sealed, mut reveal) = seal(scheme, QualityScore::from_micros(7_000_000), 9, A, nonce(1));
            reveal.score = QualityScore::from_micros(7_000_001);
            assert_eq!(open(&sealed, &reveal), Err(CommitError::Verification(A)));
        }
    }

    #[test]
    fn nonce_changes_commitment() {
        let s = QualityScore::from_micros(5_000_000);
        let (a, _) = seal(Scheme::HashCommit, s, 1, A, nonce(1));
        let (b, _) = seal(Scheme::HashCommit, s, 1, A, nonce(2));
        assert_ne!(a.commitment, b.commitment);
        let (a, _) = seal(Scheme::KeypairSeal, s, 1, A, nonce(1));
        let (b, _) = seal(Scheme::KeypairSeal, s, 1, A, nonce(2));
        assert_ne!(a.commitment, b.commitment);
    }

    #[test]
    fn seal_is_deterministic() {
        let s = QualityScore::from_micros(1);
        for scheme in [Scheme::HashCommit, Scheme::KeypairSeal] {
            assert_eq!(seal(scheme, s, 4, A, nonce(7)), seal(scheme, s, 4, A, nonce(7)));
        }
    }

    #[test]
    fn mismatched_round_or_assessor() {
        let (sealed, mut reveal) = seal(Scheme::HashCommit, QualityScore::from_micros(1), 1, A, nonce(1));
        reveal.round_id = 2;
        assert!(matches!(open(&sealed, &reveal), Err(CommitError::Mismatch { .. })));
        let (sealed, mut reveal) = seal(Scheme::HashCommit, QualityScore::from_micros(1), 1, A, nonce(1));
        reveal.assessor = NodeId::assessor(4);
        let err = open(&sealed, &reveal).unwrap_err();
        assert_eq!(err.assessor(), NodeId::assessor(4));
    }

    #[test]
    fn malformed_lengths() {
        let (mut sealed, reveal) = seal(Scheme::HashCommit, QualityScore::from_micros(1), 1, A, nonce(1));
        sealed.commitment.pop();
        assert!(matches!(open(&sealed, &reveal), Err(CommitError::Malformed { .. })));
        let (sealed, mut reveal) = seal(Scheme::KeypairSeal, QualityScore::from_micros(1), 1, A, nonce(1));
        reveal.opening.push(0);
        assert!(matches!(open(&sealed, &reveal), Err(CommitError::Malformed { .. })));
    }

    #[test]
    fn commitment_length_is_fixed() {
        let (h, _) = seal(Scheme::HashCommit, QualityScore::from_micros(1), 1, A, nonce(1));
        assert_eq!(h.commitment.len(), HASH_COMMITMENT_LEN);
        let (k, r) = seal(Scheme::KeypairSeal, QualityScore::from_micros(1), 1, A, nonce(1));
        assert_eq!(k.commitment.len(), SIGNATURE_LEN);
        assert_eq!(r.opening.len(), 32);
    }

    #[test]
    fn no_collisions_over_many_pairs() {
        let mut seen = HashSet::with_capacity(100_000);
        for i in 0..100_000u64 {
            // distinct (score, nonce) pairs
            let s = QualityScore::from_micros((i % 10_000) as i64 * 1000);
            let (sealed, _) = seal(Scheme::HashCommit, s, 1, A, nonce(i));
            assert!(seen.insert(sealed.commitment));
        }
    }

    #[test]
    fn commitment_bits_are_balanced() {
        let s = QualityScore::from_micros(8_000_000);
        let mut ones = [0u32; 256];
        let n = 10_000u64;
        for i in 0..n {
            let (sealed, _) = seal(Scheme::HashCommit, s, 1, A, nonce(i));
            for (byte_idx, byte) in sealed.commitment.iter().enumerate() {
                for bit in 0..8 {
                    ones[byte_idx * 8 + bit] += ((byte >> bit) & 1) as u32;
                }
            }
        }
        for count in ones {
            let frac = count as f64 / n as f64;
            assert!((0.4..=0.6).contains(&frac), "bit frequency {frac}");
        }
    }

    #[test]
    fn serializes_hex() {
        let (sealed, _) = seal(Scheme::HashCommit, QualityScore::from_micros(1), 1, A, nonce(1));
        let json = serde_json::to_string(&sealed).unwrap();
        assert!(json.contains("\"scheme\":\"hash-commit\""));
        let hex_str = hex::encode(&sealed.commitment);
        assert!(json.contains(&hex_str));
        assert_eq!(hex_str, hex_str.to_lowercase());
        let back: SealedScore = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sealed);
    }
}
