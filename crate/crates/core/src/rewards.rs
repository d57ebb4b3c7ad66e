//! Reward functions and the parameter thresholds that make honest
//! behaviour the profitable one.
//!
//! * [`inference_reward`] is the fraction χ of the bounty paid to the
//!   inference node: `exp(-α (U - mean))`.
//! * [`assessor_shares`] splits the assessment budget by a softmax over
//!   `-β (s_i - s̄)²`, so assessors close to the round average earn more.
//! * [`alpha_threshold`] and [`beta_bound`] size α and β from the model
//!   market and the score-diversity bound Δ.
//!
//! Exponentials and logarithms go through `libm` so every platform produces
//! the same bits for ledger amounts derived from them.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::domain::{MarketConfig, ModelId, QualityScore, ScoreDomain};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardsError {
    #[error("score list is empty")]
    EmptyScores,
    #[error("score {score} outside domain [{lower}, {upper}]")]
    OutOfDomain {
        score: QualityScore,
        lower: QualityScore,
        upper: QualityScore,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("csv output failed: {0}")]
    Csv(String),
}

/// Assessor reward shares `(h_1, ..., h_k)`; non-negative, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareVector(Vec<f64>);

impl ShareVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn check_scores(scores: &[QualityScore], domain: ScoreDomain) -> Result<(), RewardsError> {
    if scores.is_empty() {
        return Err(RewardsError::EmptyScores);
    }
    if let Some(&bad) = scores.iter().find(|s| !domain.contains(**s)) {
        return Err(RewardsError::OutOfDomain {
            score: bad,
            lower: QualityScore(domain.lower()),
            upper: QualityScore(domain.upper()),
        });
    }
    Ok(())
}

/// χ(s_1..s_k) = exp(-α (U - mean)), with the mean taken exactly in
/// micro-units before conversion.
pub fn inference_reward(scores: &[QualityScore], alpha: f64, domain: ScoreDomain) -> Result<f64, RewardsError> {
    check_scores(scores, domain)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(RewardsError::InvalidArgument(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let sum: i128 = scores.iter().map(|s| s.micros() as i128).sum();
    let k = scores.len() as i128;
    // U - mean = (k*U - sum) / k, exact numerator
    let gap_micros = k * domain.upper().micros() as i128 - sum;
    let gap = gap_micros as f64 / (k as f64 * 1e6);
    Ok(libm::exp(-alpha * gap))
}

/// φ(s_1..s_k): softmax of `-β (s_i - s̄)²`, stabilized by subtracting the
/// largest exponent.
///
/// Deviations are formed exactly as `k·s_i - Σs` in micro-units, so scores
/// equidistant from the mean get bit-identical shares.
pub fn assessor_shares(scores: &[QualityScore], beta: f64) -> Result<ShareVector, RewardsError> {
    if scores.is_empty() {
        return Err(RewardsError::EmptyScores);
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(RewardsError::InvalidArgument(format!(
            "beta must be non-negative, got {beta}"
        )));
    }
    let k = scores.len() as i128;
    let sum: i128 = scores.iter().map(|s| s.micros() as i128).sum();
    let scale = k as f64 * 1e6;
    let exponents: Vec<f64> = scores
        .iter()
        .map(|s| {
            let dev = (k * s.micros() as i128 - sum) as f64 / scale;
            -beta * dev * dev
        })
        .collect();
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = exponents.iter().map(|x| libm::exp(x - max)).collect();
    let total: f64 = weights.iter().sum();
    Ok(ShareVector(weights.into_iter().map(|w| w / total).collect()))
}

/// One eligible model pair and its pairwise threshold `ln(e_j - e_l) / (c_j - c_l)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairThreshold {
    pub costlier: ModelId,
    pub cheaper: ModelId,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    EqualCost,
    NonPositiveQualityGap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedPair {
    pub costlier: ModelId,
    pub cheaper: ModelId,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaThreshold {
    /// Largest pairwise threshold, clamped at zero.
    pub theta: f64,
    pub pairs: Vec<PairThreshold>,
    pub skipped: Vec<SkippedPair>,
    /// Set when no pair was eligible and `theta` defaulted to zero.
    pub no_eligible_pair: bool,
}

/// Smallest α that, pair by pair over the cost-sorted market, keeps the
/// costlier model's reward gap above its cost gap.
pub fn alpha_threshold(market: &MarketConfig) -> AlphaThreshold {
    let models = market.models();
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for (j, hi) in models.iter().enumerate() {
        for lo in &models[j + 1..] {
            let reason = if hi.cost == lo.cost {
                Some(SkipReason::EqualCost)
            } else if hi.expected_quality <= lo.expected_quality {
                Some(SkipReason::NonPositiveQualityGap)
            } else {
                None
            };
            if let Some(reason) = reason {
                skipped.push(SkippedPair {
                    costlier: hi.id.clone(),
                    cheaper: lo.id.clone(),
                    reason,
                });
                continue;
            }
            let de = (hi.expected_quality.0 - lo.expected_quality.0).to_f64();
            let dc = (hi.cost - lo.cost).to_f64();
            pairs.push(PairThreshold {
                costlier: hi.id.clone(),
                cheaper: lo.id.clone(),
                alpha: libm::log(de) / dc,
            });
        }
    }
    let theta = pairs.iter().map(|p| p.alpha).fold(0.0, f64::max);
    AlphaThreshold {
        theta,
        no_eligible_pair: pairs.is_empty(),
        pairs,
        skipped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaBound {
    /// `(1/Δ) · ln((k-1) / (ε⁻¹ - 1))`.
    pub beta: f64,
    /// False when the bound is negative: no non-negative β satisfies it,
    /// and the smallest share reachable at β = 0 is `1/k`.
    pub feasible: bool,
}

fn check_guesser_args(delta: f64, epsilon: f64, k: usize) -> Result<(), RewardsError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(RewardsError::InvalidArgument(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(RewardsError::InvalidArgument(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if k < 2 {
        return Err(RewardsError::InvalidArgument(format!("k must be >= 2, got {k}")));
    }
    Ok(())
}

/// Upper bound on β for a guessing assessor, `(1/Δ) · ln((k-1)/(ε⁻¹-1))`.
pub fn beta_bound(delta: f64, epsilon: f64, k: usize) -> Result<BetaBound, RewardsError> {
    check_guesser_args(delta, epsilon, k)?;
    let beta = libm::log((k - 1) as f64 / (1.0 / epsilon - 1.0)) / delta;
    Ok(BetaBound {
        beta,
        feasible: beta >= 0.0,
    })
}

/// The β at which [`guesser_expected_share`] equals ε exactly,
/// `(1/Δ) · ln((ε⁻¹-1)/(k-1))`. The share bound is decreasing in β, so it
/// stays at or below ε for every β from here upward.
pub fn beta_for_guesser_share(delta: f64, epsilon: f64, k: usize) -> Result<f64, RewardsError> {
    check_guesser_args(delta, epsilon, k)?;
    Ok(libm::log((1.0 / epsilon - 1.0) / (k - 1) as f64) / delta)
}

/// Jensen-style bound on a guesser's expected share,
/// `exp(-βΔ) / (exp(-βΔ) + k - 1)`.
pub fn guesser_expected_share(beta: f64, delta: f64, k: usize) -> Result<f64, RewardsError> {
    if beta.is_nan() || beta < 0.0 || delta.is_nan() || delta < 0.0 || k < 2 {
        return Err(RewardsError::InvalidArgument(format!(
            "need beta >= 0, delta >= 0, k >= 2; got beta={beta} delta={delta} k={k}"
        )));
    }
    let w = libm::exp(-beta * delta);
    Ok(w / (w + (k - 1) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bucket {
    pub low: f64,
    pub high: f64,
    pub count: u64,
}

/// Histogram of single-score rewards χ([s]) for one α.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardHistogram {
    pub alpha: f64,
    pub buckets: Vec<Bucket>,
    pub mean_reward: f64,
}

/// Reward histograms over `[0, 1]` with `bins` equal-width buckets, one per α.
/// A reward of exactly 1 falls in the top bucket.
pub fn reward_distribution(
    samples: &[QualityScore],
    alphas: &[f64],
    domain: ScoreDomain,
    bins: usize,
) -> Result<Vec<RewardHistogram>, RewardsError> {
    check_scores(samples, domain)?;
    if alphas.is_empty() {
        return Err(RewardsError::InvalidArgument("no alpha values".into()));
    }
    if bins == 0 {
        return Err(RewardsError::InvalidArgument("bins must be >= 1".into()));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let mut counts = vec![0u64; bins];
            let mut total = 0.0;
            for s in samples {
                let chi = inference_reward(std::slice::from_ref(s), alpha, domain)?;
                total += chi;
                let idx = ((chi * bins as f64) as usize).min(bins - 1);
                counts[idx] += 1;
            }
            let buckets = counts
                .into_iter()
                .enumerate()
                .map(|(i, count)| Bucket {
                    low: i as f64 / bins as f64,
                    high: (i + 1) as f64 / bins as f64,
                    count,
                })
                .collect();
            Ok(RewardHistogram {
                alpha,
                buckets,
                mean_reward: total / samples.len() as f64,
            })
        })
        .collect()
}

/// Writes `alpha,bucket_low,bucket_high,count,mean_reward` rows.
pub fn write_reward_distribution_csv<W: Write>(out: W, histograms: &[RewardHistogram]) -> Result<(), RewardsError> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| RewardsError::Csv(e.to_string());
    w.write_record(["alpha", "bucket_low", "bucket_high", "count", "mean_reward"])
        .map_err(csv_err)?;
    for h in histograms {
        for b in &h.buckets {
            w.write_record([
                h.alpha.to_string(),
                b.low.to_string(),
                b.high.to_string(),
                b.count.to_string(),
                h.mean_reward.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| RewardsError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{validate_market, ModelProfile};
    use crate::fixed::Fixed;
    use proptest::prelude::*;

    fn scores(v: &[f64]) -> Vec<QualityScore> {
        v.iter().map(|x| QualityScore(Fixed::from_f64(*x).unwrap())).collect()
    }

    fn d() -> ScoreDomain {
        ScoreDomain::default()
    }

    #[test]
    fn inference_reward_examples() {
        assert_eq!(inference_reward(&scores(&[10.0; 3]), 1.0, d()).unwrap(), 1.0);
        let r = inference_reward(&scores(&[8.0; 3]), 0.5, d()).unwrap();
        assert!((r - (-1.0f64).exp()).abs() < 1e-15);
        assert!((r - 0.367879).abs() < 1e-6);
        let r = inference_reward(&scores(&[7.0, 9.0]), 2.0, d()).unwrap();
        assert!((r - 0.018316).abs() < 1e-6);
    }

    #[test]
    fn inference_reward_errors() {
        assert_eq!(inference_reward(&[], 1.0, d()), Err(RewardsError::EmptyScores));
        assert!(matches!(
            inference_reward(&scores(&[11.0]), 1.0, d()),
            Err(RewardsError::OutOfDomain { .. })
        ));
        assert!(inference_reward(&scores(&[5.0]), 0.0, d()).is_err());
    }

    #[test]
    fn shares_examples() {
        let h = assessor_shares(&scores(&[5.0; 3]), 3.0).unwrap();
        assert!(h.as_slice().iter().all(|x| *x == 1.0 / 3.0));

        let h = assessor_shares(&scores(&[6.0, 8.0]), 1.0).unwrap();
        assert_eq!(h.as_slice(), &[0.5, 0.5]);

        // s̄ = 6, Z = 2e^{-1/2} + e^{-2}
        let h = assessor_shares(&scores(&[5.0, 5.0, 8.0]), 0.5).unwrap();
        let z = 2.0 * (-0.5f64).exp() + (-2.0f64).exp();
        let expect = [(-0.5f64).exp() / z, (-0.5f64).exp() / z, (-2.0f64).exp() / z];
        for (a, b) in h.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((h.as_slice()[0] - 0.449816).abs() < 1e-6);
        assert!((h.as_slice()[2] - 0.100368).abs() < 1e-6);
    }

    #[test]
    fn shares_survive_huge_exponents() {
        // β (s_i - s̄)² ≈ 25 000, far past exp underflow
        let h = assessor_shares(&scores(&[0.0, 10.0, 10.0]), 1000.0).unwrap();
        let sum: f64 = h.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(h.as_slice().iter().all(|x| x.is_finite()));
        assert!(h.as_slice()[0] < h.as_slice()[1]);
    }

    #[test]
    fn shares_reject_bad_input() {
        assert_eq!(assessor_shares(&[], 1.0), Err(RewardsError::EmptyScores));
        assert!(assessor_shares(&scores(&[1.0]), -0.1).is_err());
    }

    fn market(v: &[(f64, f64)]) -> MarketConfig {
        let models = v
            .iter()
            .enumerate()
            .map(|(i, (e, c))| ModelProfile::new(&format!("m{i}"), *e, *c, 0.0))
            .collect();
        validate_market(models).unwrap()
    }

    #[test]
    fn alpha_threshold_examples() {
        let t = alpha_threshold(&market(&[(9.0, 5.0), (7.0, 2.0)]));
        assert!((t.theta - 2f64.ln() / 3.0).abs() < 1e-15);
        assert!((t.theta - 0.231049).abs() < 1e-6);
        assert_eq!(t.pairs.len(), 1);

        let t = alpha_threshold(&market(&[(8.0, 4.0), (7.0, 1.0)]));
        assert_eq!(t.theta, 0.0);
        assert!(!t.no_eligible_pair);

        let t = alpha_threshold(&market(&[(8.0, 4.0)]));
        assert_eq!(t.theta, 0.0);
        assert!(t.no_eligible_pair);
    }

    #[test]
    fn alpha_threshold_skips_equal_cost_pairs() {
        // unequal quality at equal cost is dominated, so only twins reach here
        let t = alpha_threshold(&market(&[(9.0, 5.0), (9.0, 5.0), (6.0, 1.0)]));
        assert_eq!(t.skipped.len(), 1);
        assert_eq!(t.skipped[0].reason, SkipReason::EqualCost);
        assert_eq!(t.pairs.len(), 2);
        assert!((t.theta - 3f64.ln() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_threshold_clamps_negative_pairs() {
        // quality gap 0.5 gives a negative log, no constraint on alpha
        let t = alpha_threshold(&market(&[(7.5, 3.0), (7.0, 1.0)]));
        assert!(t.pairs[0].alpha < 0.0);
        assert_eq!(t.theta, 0.0);
    }

    #[test]
    fn beta_bound_examples() {
        let b = beta_bound(1.0, 0.1, 21).unwrap();
        assert!((b.beta - (20.0f64 / 9.0).ln()).abs() < 1e-15);
        assert!((b.beta - 0.798508).abs() < 1e-6);
        assert!(b.feasible);
        assert_eq!(beta_bound(1.0, 0.5, 2).unwrap().beta, 0.0);
        assert!((beta_bound(2.0, 0.1, 21).unwrap().beta - 0.399254).abs() < 1e-6);

        let neg = beta_bound(1.0, 0.01, 5).unwrap();
        assert!(neg.beta < 0.0 && !neg.feasible);

        assert!(beta_bound(0.0, 0.1, 21).is_err());
        assert!(beta_bound(1.0, 1.0, 21).is_err());
        assert!(beta_bound(1.0, 0.1, 1).is_err());
    }

    #[test]
    fn guesser_share_examples() {
        assert_eq!(guesser_expected_share(0.0, 1.0, 21).unwrap(), 1.0 / 21.0);
        // at β = ln(20/9), exp(-β) = 9/20
        let at_bound = guesser_expected_share(0.798508, 1.0, 21).unwrap();
        assert!((at_bound - 0.45 / 20.45).abs() < 1e-7);
        assert!(guesser_expected_share(200.0, 1.0, 21).unwrap() < 1e-80);
        assert!(guesser_expected_share(-1.0, 1.0, 21).is_err());
    }

    #[test]
    fn exact_guesser_beta_inverts_share() {
        // ε above 1/k needs a positive β
        let beta = beta_for_guesser_share(1.0, 0.01, 21).unwrap();
        assert!(beta > 0.0);
        let share = guesser_expected_share(beta, 1.0, 21).unwrap();
        assert!((share - 0.01).abs() < 1e-12);
    }

    #[test]
    fn reward_distribution_examples() {
        let h = reward_distribution(&scores(&[10.0, 10.0]), &[0.5], d(), 2).unwrap();
        assert_eq!(h[0].buckets[1].count, 2);
        assert_eq!(h[0].buckets[0].count, 0);
        assert_eq!(h[0].mean_reward, 1.0);

        let h = reward_distribution(&scores(&[8.0; 100]), &[0.5], d(), 20).unwrap();
        assert!((h[0].mean_reward - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(h[0].buckets[7].count, 100);

        assert!(reward_distribution(&[], &[0.5], d(), 2).is_err());
        assert!(reward_distribution(&scores(&[8.0]), &[0.5], d(), 0).is_err());
    }

    #[test]
    fn reward_distribution_csv_layout() {
        let h = reward_distribution(&scores(&[10.0]), &[1.0, 2.0], d(), 2).unwrap();
        let mut buf = Vec::new();
        write_reward_distribution_csv(&mut buf, &h).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "alpha,bucket_low,bucket_high,count,mean_reward");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[2], "1,0.5,1,1,1");
    }

    fn score_vec(max_len: usize) -> impl Strategy<Value = Vec<QualityScore>> {
        proptest::collection::vec(0i64..=10_000_000, 1..=max_len)
            .prop_map(|v| v.into_iter().map(QualityScore::from_micros).collect())
    }

    proptest! {
        #[test]
        fn shares_sum_to_one_and_follow_deviation(s in score_vec(30), beta in 0.0f64..10.0) {
            let h = assessor_shares(&s, beta).unwrap();
            let sum: f64 = h.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(h.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
            if beta == 0.0 {
                prop_assert!(h.as_slice().iter().all(|x| *x == 1.0 / s.len() as f64));
            }
        }

        #[test]
        fn shares_are_permutation_equivariant(s in score_vec(12), beta in 0.0f64..5.0, rot in 0usize..12) {
            let h = assessor_shares(&s, beta).unwrap();
            let mut r = s.clone();
            let n = r.len();
            r.rotate_left(rot % n);
            let hr = assessor_shares(&r, beta).unwrap();
            for i in 0..n {
                prop_assert!((hr.as_slice()[i] - h.as_slice()[(i + rot) % n]).abs() < 1e-15);
            }
        }

        #[test]
        fn alpha_threshold_ignores_input_order(rot in 0usize..3) {
            let mut models = vec![
                ModelProfile::new("a", 9.0, 5.0, 0.0),
                ModelProfile::new("b", 8.0, 3.0, 0.0),
                ModelProfile::new("c", 6.0, 1.0, 0.0),
            ];
            let base = alpha_threshold(&validate_market(models.clone()).unwrap()).theta;
            models.rotate_left(rot);
            prop_assert_eq!(alpha_threshold(&validate_market(models).unwrap()).theta, base);
        }

        #[test]
        fn reward_is_bounded_and_monotone(s in score_vec(10), alpha in 0.01f64..5.0, i in 0usize..10) {
            let chi = inference_reward(&s, alpha, d()).unwrap();
            prop_assert!(chi > 0.0 && chi <= 1.0);
            let i = i % s.len();
            if s[i].micros() < 10_000_000 {
                let mut up = s.clone();
                up[i] = QualityScore::from_micros(s[i].micros() + 1);
                prop_assert!(inference_reward(&up, alpha, d()).unwrap() >= chi);
            }
        }
    }
}
