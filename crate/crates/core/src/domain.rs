//! Value types shared across the protocol: scores, nodes, models and the
//! market they form.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::fixed::Fixed;

/// Reward units, carried in the same six-decimal fixed point as scores.
pub type Amount = Fixed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("score domain requires lower < upper, got [{lower}, {upper}]")]
    InvalidDomain { lower: Fixed, upper: Fixed },
    #[error("raw score {0} outside [-1, 1]")]
    RawOutOfRange(f64),
    #[error("score {score} outside domain [{lower}, {upper}]")]
    ScoreOutOfRange { score: Fixed, lower: Fixed, upper: Fixed },
    #[error("market is empty")]
    EmptyMarket,
    #[error("duplicate model id `{0}`")]
    DuplicateModel(String),
    #[error("model `{id}` is invalid: {reason}")]
    InvalidModel { id: String, reason: String },
    #[error("model `{dominant}` dominates model `{dominated}`")]
    Dominated { dominant: String, dominated: String },
    #[error("invalid reward parameters: {0}")]
    InvalidParams(String),
    #[error("invalid node id `{0}`")]
    InvalidNodeId(String),
}

/// Closed interval `[lower, upper]` of admissible quality scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScoreDomain {
    lower: Fixed,
    upper: Fixed,
}

impl ScoreDomain {
    pub fn new(lower: Fixed, upper: Fixed) -> Result<Self, DomainError> {
        if lower >= upper {
            return Err(DomainError::InvalidDomain { lower, upper });
        }
        Ok(ScoreDomain { lower, upper })
    }

    pub fn lower(&self) -> Fixed {
        self.lower
    }

    pub fn upper(&self) -> Fixed {
        self.upper
    }

    pub fn contains(&self, score: QualityScore) -> bool {
        self.lower <= score.0 && score.0 <= self.upper
    }

    pub fn check(&self, score: QualityScore) -> Result<QualityScore, DomainError> {
        if self.contains(score) {
            Ok(score)
        } else {
            Err(DomainError::ScoreOutOfRange {
                score: score.0,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    pub fn clamp(&self, score: QualityScore) -> QualityScore {
        QualityScore(score.0.clamp(self.lower, self.upper))
    }

    pub fn width(&self) -> Fixed {
        self.upper - self.lower
    }
}

impl Default for ScoreDomain {
    fn default() -> Self {
        ScoreDomain {
            lower: Fixed::ZERO,
            upper: Fixed::from_int(10),
        }
    }
}

impl<'de> Deserialize<'de> for ScoreDomain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            lower: Fixed,
            upper: Fixed,
        }
        let raw = Raw::deserialize(deserializer)?;
        ScoreDomain::new(raw.lower, raw.upper).map_err(serde::de::Error::custom)
    }
}

/// A quality score `s = M(q, r)` in micro-units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualityScore(pub Fixed);

impl QualityScore {
    pub const fn from_micros(micros: i64) -> Self {
        QualityScore(Fixed::from_micros(micros))
    }

    pub fn micros(self) -> i64 {
        self.0.micros()
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64()
    }

    /// Canonical commitment encoding: big-endian two's complement of the
    /// micro-unit integer.
    pub fn to_be_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    pub fn from_be_bytes(bytes: [u8; 8]) -> Self {
        QualityScore(Fixed::from_be_bytes(bytes))
    }

    /// Exact fixed-point arithmetic mean, ties to even.
    pub fn mean(scores: &[QualityScore]) -> Option<QualityScore> {
        let raw: Vec<Fixed> = scores.iter().map(|s| s.0).collect();
        Fixed::mean(&raw).map(QualityScore)
    }
}

impl fmt::Display for QualityScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for QualityScore {
    type Err = crate::fixed::ParseFixedError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(QualityScore)
    }
}

/// Maps a cross-encoder output in `[-1, 1]` affinely onto `domain`.
pub fn normalize_score(raw: f64, domain: ScoreDomain) -> Result<QualityScore, DomainError> {
    if !(-1.0..=1.0).contains(&raw) {
        return Err(DomainError::RawOutOfRange(raw));
    }
    if raw == 1.0 {
        return Ok(QualityScore(domain.upper));
    }
    if raw == -1.0 {
        return Ok(QualityScore(domain.lower));
    }
    let width = domain.width().micros() as f64;
    let offset = ((raw + 1.0) / 2.0 * width).round_ties_even() as i64;
    let value = Fixed::from_micros(domain.lower.micros() + offset);
    Ok(domain.clamp(QualityScore(value)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Management,
    Inference,
    Assessor,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::Management => "management",
            Role::Inference => "inference",
            Role::Assessor => "assessor",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Role::Management => 0,
            Role::Inference => 1,
            Role::Assessor => 2,
        }
    }
}

/// Participant identifier. Serialized as `role-index`, e.g. `assessor-7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub role: Role,
    pub index: u64,
}

impl NodeId {
    pub const fn new(role: Role, index: u64) -> Self {
        NodeId { role, index }
    }

    pub const fn assessor(index: u64) -> Self {
        NodeId::new(Role::Assessor, index)
    }

    pub const fn inference(index: u64) -> Self {
        NodeId::new(Role::Inference, index)
    }

    pub const fn management(index: u64) -> Self {
        NodeId::new(Role::Management, index)
    }

    /// Role tag byte followed by the big-endian index.
    pub fn to_bytes(self) -> [u8; 9] {
        let mut out = [0u8; 9];
        out[0] = self.role.tag();
        out[1..].copy_from_slice(&self.index.to_be_bytes());
        out
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.role.as_str(), self.index)
    }
}

impl FromStr for NodeId {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DomainError::InvalidNodeId(s.to_string());
        let (role, index) = s.rsplit_once('-').ok_or_else(bad)?;
        let role = match role {
            "management" => Role::Management,
            "inference" => Role::Inference,
            "assessor" => Role::Assessor,
            _ => return Err(bad()),
        };
        let index = index.parse().map_err(|_| bad())?;
        Ok(NodeId { role, index })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelId(pub String);

impl ModelId {
    pub fn new(id: impl Into<String>) -> Self {
        ModelId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: u64,
    pub payload: String,
    /// Simulated microseconds.
    pub arrival_time: u64,
    pub bounty: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub query_id: u64,
    pub responder: NodeId,
    pub payload: String,
    /// Simulated microseconds.
    pub produced_time: u64,
    pub declared_model: ModelId,
}

/// A generative model on the market with its expected quality `e` and
/// per-query cost `c`. `quality_stddev` drives the synthetic scorer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub id: ModelId,
    pub expected_quality: QualityScore,
    pub cost: Amount,
    #[serde(default)]
    pub quality_stddev: Fixed,
}

impl ModelProfile {
    pub fn new(id: &str, expected_quality: f64, cost: f64, quality_stddev: f64) -> Self {
        ModelProfile {
            id: ModelId::new(id),
            expected_quality: QualityScore(Fixed::from_f64(expected_quality).expect("finite")),
            cost: Fixed::from_f64(cost).expect("finite"),
            quality_stddev: Fixed::from_f64(quality_stddev).expect("finite"),
        }
    }

    /// `self` is at least as good and at most as costly as `other`, and
    /// strictly better on one of the two.
    pub fn dominates(&self, other: &ModelProfile) -> bool {
        let e = (self.expected_quality, other.expected_quality);
        let c = (self.cost, other.cost);
        e.0 >= e.1 && c.0 <= c.1 && (e.0 > e.1 || c.0 < c.1)
    }
}

/// Models sorted non-ascending by cost, free of domination.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketConfig {
    models: Vec<ModelProfile>,
}

impl MarketConfig {
    pub fn models(&self) -> &[ModelProfile] {
        &self.models
    }

    pub fn get(&self, id: &ModelId) -> Option<&ModelProfile> {
        self.models.iter().find(|m| &m.id == id)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

impl<'de> Deserialize<'de> for MarketConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let models = Vec::<ModelProfile>::deserialize(deserializer)?;
        validate_market(models).map_err(serde::de::Error::custom)
    }
}

/// Checks the no-domination hypothesis and returns the market sorted by
/// descending cost (stable, so equal-cost models stay adjacent in input
/// order).
pub fn validate_market(models: Vec<ModelProfile>) -> Result<MarketConfig, DomainError> {
    if models.is_empty() {
        return Err(DomainError::EmptyMarket);
    }
    let mut seen = BTreeSet::new();
    for m in &models {
        if !seen.insert(m.id.clone()) {
            return Err(DomainError::DuplicateModel(m.id.0.clone()));
        }
        if m.cost.is_negative() {
            return Err(DomainError::InvalidModel {
                id: m.id.0.clone(),
                reason: format!("negative cost {}", m.cost),
            });
        }
        if m.quality_stddev.is_negative() {
            return Err(DomainError::InvalidModel {
                id: m.id.0.clone(),
                reason: format!("negative quality stddev {}", m.quality_stddev),
            });
        }
    }
    for a in &models {
        for b in &models {
            if a.id != b.id && a.dominates(b) {
                return Err(DomainError::Dominated {
                    dominant: a.id.0.clone(),
                    dominated: b.id.0.clone(),
                });
            }
        }
    }
    let mut models = models;
    models.sort_by_key(|m| std::cmp::Reverse(m.cost));
    Ok(MarketConfig { models })
}

/// Parameters of the reward functions and the consensus quorum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    /// Inference reward decay.
    pub alpha: f64,
    /// Assessment concentration.
    pub beta: f64,
    /// Scores aggregated into the consensus.
    pub k: usize,
    /// Assessors assigned per query.
    pub m: usize,
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(DomainError::InvalidParams(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(DomainError::InvalidParams(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        if self.k == 0 || self.k > self.m {
            return Err(DomainError::InvalidParams(format!(
                "need 1 <= k <= m, got k={} m={}",
                self.k, self.m
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(id: &str, e: f64, c: f64) -> ModelProfile {
        ModelProfile::new(id, e, c, 0.0)
    }

    #[test]
    fn normalize_endpoints_and_midpoint() {
        let d = ScoreDomain::default();
        assert_eq!(normalize_score(1.0, d).unwrap().to_string(), "10.000000");
        assert_eq!(normalize_score(-1.0, d).unwrap().to_string(), "0.000000");
        assert_eq!(normalize_score(0.5, d).unwrap().to_string(), "7.500000");
        assert!(normalize_score(1.2, d).is_err());
        assert!(normalize_score(f64::NAN, d).is_err());
    }

    #[test]
    fn normalize_into_shifted_domain() {
        let d = ScoreDomain::new(Fixed::from_int(-5), Fixed::from_int(5)).unwrap();
        assert_eq!(normalize_score(0.0, d).unwrap(), QualityScore(Fixed::ZERO));
    }

    #[test]
    fn domain_rejects_empty_interval() {
        assert!(ScoreDomain::new(Fixed::from_int(3), Fixed::from_int(3)).is_err());
    }

    #[test]
    fn market_examples() {
        let m = validate_market(vec![model("b", 7.0, 2.0), model("a", 9.0, 5.0)]).unwrap();
        let ids: Vec<_> = m.models().iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);

        let err = validate_market(vec![model("a", 9.0, 2.0), model("b", 7.0, 5.0)]).unwrap_err();
        assert_eq!(
            err,
            DomainError::Dominated {
                dominant: "a".into(),
                dominated: "b".into()
            }
        );

        assert!(validate_market(vec![model("a", 9.0, 5.0), model("b", 8.0, 3.0), model("c", 6.0, 1.0),]).is_ok());
    }

    #[test]
    fn market_rejects_duplicates_and_empty() {
        assert_eq!(validate_market(vec![]), Err(DomainError::EmptyMarket));
        assert!(matches!(
            validate_market(vec![model("a", 9.0, 5.0), model("a", 7.0, 2.0)]),
            Err(DomainError::DuplicateModel(_))
        ));
    }

    #[test]
    fn equal_cost_and_quality_is_not_domination() {
        assert!(validate_market(vec![model("a", 7.0, 2.0), model("b", 7.0, 2.0)]).is_ok());
    }

    #[test]
    fn node_id_text_form() {
        let id = NodeId::assessor(12);
        assert_eq!(id.to_string(), "assessor-12");
        assert_eq!("assessor-12".parse::<NodeId>().unwrap(), id);
        assert!("validator-1".parse::<NodeId>().is_err());
        assert_eq!(serde_json::to_string(&id).unwrap(), "\"assessor-12\"");
    }

    #[test]
    fn reward_params_ranges() {
        let ok = RewardParams {
            alpha: 1.0,
            beta: 0.0,
            k: 2,
            m: 3,
        };
        assert!(ok.validate().is_ok());
        assert!(RewardParams { k: 4, ..ok }.validate().is_err());
        assert!(RewardParams { alpha: 0.0, ..ok }.validate().is_err());
        assert!(RewardParams { beta: -1.0, ..ok }.validate().is_err());
        assert!(RewardParams { k: 0, ..ok }.validate().is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_monotone(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
            let d = ScoreDomain::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(normalize_score(lo, d).unwrap() <= normalize_score(hi, d).unwrap());
        }

        #[test]
        fn accepted_markets_trade_quality_for_cost(
            specs in proptest::collection::vec((0u32..=100, 0u32..=100), 1..6)
        ) {
            let models: Vec<_> = specs
                .iter()
                .enumerate()
                .map(|(i, (e, c))| model(&format!("m{i}"), *e as f64 / 10.0, *c as f64 / 10.0))
                .collect();
            // brute-force domination oracle
            let dominated = models.iter().any(|a| models.iter().any(|b| {
                a.id != b.id
                    && a.expected_quality >= b.expected_quality
                    && a.cost <= b.cost
                    && (a.expected_quality > b.expected_quality || a.cost < b.cost)
            }));
            match validate_market(models) {
                Ok(market) => {
                    prop_assert!(!dominated);
                    for w in market.models().windows(2) {
                        prop_assert!(w[0].cost >= w[1].cost);
                        if w[0].cost > w[1].cost {
                            prop_assert!(w[0].expected_quality > w[1].expected_quality);
                        }
                    }
                }
                Err(_) => prop_assert!(dominated),
            }
        }
    }
}
