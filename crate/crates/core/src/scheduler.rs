//! Deterministic energy/step node selection.
//!
//! Each node accrues `step` units of energy per query arrival. The node (or
//! top-`m` assessors) with the most energy is picked, ties going to the
//! earlier joiner, and its energy resets to zero. Good work multiplies the
//! step by 1.5; poor work resets it to 1. A node left idle for more than `T`
//! queries gets a temporary `+B` on its step until it is next picked.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::NodeId;
use crate::fixed::Fixed;

/// Hard ceiling on a node's base step, far above any configured cap, so
/// energy stays inside `i64` micro-units.
pub const STEP_LIMIT: Fixed = Fixed::from_micros(1_000_000 * 1_000_000);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("inference pool is empty")]
    EmptyInferencePool,
    #[error("assessor pool has {available} nodes, need {needed}")]
    InsufficientAssessors { available: usize, needed: usize },
    #[error("node {0} appears in both pools or twice in one")]
    DuplicateNode(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid scheduler parameter: {0}")]
    InvalidParam(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeState {
    pub node: NodeId,
    pub energy: Fixed,
    /// Base step, excluding any waiting bonus.
    pub step: Fixed,
    pub waiting_bonus_active: bool,
    pub queries_since_assignment: u64,
    pub join_order: u64,
}

impl NodeState {
    pub fn new(node: NodeId, join_order: u64) -> Self {
        NodeState {
            node,
            energy: Fixed::ZERO,
            step: Fixed::ONE,
            waiting_bonus_active: false,
            queries_since_assignment: 0,
            join_order,
        }
    }

    pub fn effective_step(&self, bonus: Fixed) -> Fixed {
        if self.waiting_bonus_active {
            self.step.checked_add(bonus).unwrap_or(STEP_LIMIT)
        } else {
            self.step
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerParams {
    /// Idle queries after which the waiting bonus applies.
    pub waiting_threshold: u64,
    pub bonus: Fixed,
    #[serde(default)]
    pub step_cap: Option<Fixed>,
}

impl Default for SchedulerParams {
    fn default() -> Self {
        SchedulerParams {
            waiting_threshold: 10,
            bonus: Fixed::ONE,
            step_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub inference: NodeId,
    pub assessors: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerPools {
    pub inference_pool: Vec<NodeState>,
    pub assessor_pool: Vec<NodeState>,
    pub params: SchedulerParams,
    index: HashMap<NodeId, (bool, usize)>,
}

impl SchedulerPools {
    pub fn new(
        inference_pool: Vec<NodeState>,
        assessor_pool: Vec<NodeState>,
        params: SchedulerParams,
    ) -> Result<Self, SchedulerError> {
        if params.bonus.is_negative() {
            return Err(SchedulerError::InvalidParam("bonus must be non-negative"));
        }
        if params.step_cap.is_some_and(|c| c < Fixed::ONE) {
            return Err(SchedulerError::InvalidParam("step cap must be at least 1"));
        }
        let mut index = HashMap::new();
        for (i, n) in inference_pool.iter().enumerate() {
            if index.insert(n.node, (true, i)).is_some() {
                return Err(SchedulerError::DuplicateNode(n.node));
            }
        }
        for (i, n) in assessor_pool.iter().enumerate() {
            if index.insert(n.node, (false, i)).is_some() {
                return Err(SchedulerError::DuplicateNode(n.node));
            }
        }
        Ok(SchedulerPools {
            inference_pool,
            assessor_pool,
            params,
            index,
        })
    }

    /// Fresh pools; join order follows the order given.
    pub fn fresh(inference: &[NodeId], assessors: &[NodeId], params: SchedulerParams) -> Result<Self, SchedulerError> {
        let mk = |ids: &[NodeId], offset: usize| -> Vec<NodeState> {
            ids.iter()
                .enumerate()
                .map(|(i, n)| NodeState::new(*n, (offset + i) as u64))
                .collect()
        };
        Self::new(mk(inference, 0), mk(assessors, inference.len()), params)
    }

    pub fn state(&self, node: NodeId) -> Option<&NodeState> {
        let (inf, i) = *self.index.get(&node)?;
        Some(if inf {
            &self.inference_pool[i]
        } else {
            &self.assessor_pool[i]
        })
    }

    fn state_mut(&mut self, node: NodeId) -> Option<&mut NodeState> {
        let (inf, i) = *self.index.get(&node)?;
        Some(if inf {
            &mut self.inference_pool[i]
        } else {
            &mut self.assessor_pool[i]
        })
    }

    /// Accrues energy, then picks one inference node and `m` assessors.
    pub fn on_query_arrival(&mut self, m: usize) -> Result<Selection, SchedulerError> {
        if self.inference_pool.is_empty() {
            return Err(SchedulerError::EmptyInferencePool);
        }
        if self.assessor_pool.len() < m {
            return Err(SchedulerError::InsufficientAssessors {
                available: self.assessor_pool.len(),
                needed: m,
            });
        }
        let params = self.params;
        for n in self.inference_pool.iter_mut().chain(self.assessor_pool.iter_mut()) {
            n.energy = n
                .energy
                .checked_add(n.effective_step(params.bonus))
                .unwrap_or(Fixed::from_micros(i64::MAX));
            n.queries_since_assignment += 1;
            if n.queries_since_assignment > params.waiting_threshold && !n.waiting_bonus_active {
                n.waiting_bonus_active = true;
            }
        }
        let inference = top(&self.inference_pool, 1)[0];
        let assessors = top(&self.assessor_pool, m);
        for i in std::iter::once(inference).chain(assessors.iter().copied()) {
            let n = self.state_mut(i).expect("selected from pool");
            n.energy = Fixed::ZERO;
            n.queries_since_assignment = 0;
            n.waiting_bonus_active = false;
        }
        Ok(Selection { inference, assessors })
    }

    /// Good work multiplies the base step by 1.5 (up to the cap); poor work
    /// resets it to 1.
    pub fn on_task_outcome(&mut self, node: NodeId, performed_well: bool) -> Result<(), SchedulerError> {
        let cap = self.params.step_cap.unwrap_or(STEP_LIMIT).min(STEP_LIMIT);
        let n = self.state_mut(node).ok_or(SchedulerError::UnknownNode(node))?;
        n.step = if performed_well {
            n.step.mul_ratio(3, 2).min(cap)
        } else {
            Fixed::ONE
        };
        Ok(())
    }
}

fn top(pool: &[NodeState], m: usize) -> Vec<NodeId> {
    let mut order: Vec<&NodeState> = pool.iter().collect();
    order.sort_by(|a, b| b.energy.cmp(&a.energy).then(a.join_order.cmp(&b.join_order)));
    order.into_iter().take(m).map(|n| n.node).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fx(x: f64) -> Fixed {
        Fixed::from_f64(x).unwrap()
    }

    fn node(i: u64, energy: f64, step: f64, idle: u64) -> NodeState {
        NodeState {
            node: NodeId::inference(i),
            energy: fx(energy),
            step: fx(step),
            waiting_bonus_active: false,
            queries_since_assignment: idle,
            join_order: i,
        }
    }

    fn energies(p: &SchedulerPools) -> Vec<f64> {
        p.inference_pool.iter().map(|n| n.energy.to_f64()).collect()
    }

    const ORANGE: NodeId = NodeId::inference(0);
    const BLUE: NodeId = NodeId::inference(1);
    const GREEN: NodeId = NodeId::inference(2);
    const GREY: NodeId = NodeId::inference(3);

    /// Four-node replay: the highest-energy node wins, a larger step lets a
    /// node overtake an equal-energy neighbour, and an idle node's bonus
    /// gets it picked.
    #[test]
    fn four_node_replay() {
        let pool = vec![
            node(0, 9.0, 1.0, 0),
            node(1, 4.0, 1.0, 0),
            node(2, 3.0, 2.0, 0),
            node(3, 4.0, 1.0, 1),
        ];
        let params = SchedulerParams {
            waiting_threshold: 2,
            bonus: Fixed::ONE,
            step_cap: None,
        };
        let mut p = SchedulerPools::new(pool, vec![], params).unwrap();

        let s = p.on_query_arrival(0).unwrap();
        assert_eq!(s.inference, ORANGE);
        assert_eq!(energies(&p), [0.0, 5.0, 5.0, 5.0]);
        p.on_task_outcome(ORANGE, true).unwrap();
        assert_eq!(p.state(ORANGE).unwrap().step, fx(1.5));

        // green's step 2 takes it past blue; grey crosses T and gains B
        let s = p.on_query_arrival(0).unwrap();
        assert_eq!(s.inference, GREEN);
        assert_eq!(energies(&p), [1.5, 6.0, 0.0, 6.0]);
        assert!(p.state(GREY).unwrap().waiting_bonus_active);
        assert_eq!(p.state(GREY).unwrap().effective_step(Fixed::ONE), fx(2.0));

        // grey's bonus puts it ahead of blue despite equal energy before
        let s = p.on_query_arrival(0).unwrap();
        assert_eq!(s.inference, GREY);
        assert_eq!(energies(&p), [3.0, 7.0, 2.0, 0.0]);
        assert!(!p.state(GREY).unwrap().waiting_bonus_active);
        assert!(p.state(BLUE).unwrap().waiting_bonus_active);

        let s = p.on_query_arrival(0).unwrap();
        assert_eq!(s.inference, BLUE);
    }

    #[test]
    fn fresh_pool_round_robins_in_join_order() {
        let ids: Vec<NodeId> = (0..5).map(NodeId::inference).collect();
        let mut p = SchedulerPools::fresh(&ids, &[], SchedulerParams::default()).unwrap();
        let picks: Vec<NodeId> = (0..10).map(|_| p.on_query_arrival(0).unwrap().inference).collect();
        let expect: Vec<NodeId> = ids.iter().chain(ids.iter()).copied().collect();
        assert_eq!(picks, expect);
    }

    #[test]
    fn step_updates() {
        let mut p = SchedulerPools::fresh(&[ORANGE], &[], SchedulerParams::default()).unwrap();
        p.on_task_outcome(ORANGE, true).unwrap();
        assert_eq!(p.state(ORANGE).unwrap().step, fx(1.5));
        p.on_task_outcome(ORANGE, true).unwrap();
        assert_eq!(p.state(ORANGE).unwrap().step, fx(2.25));
        p.on_task_outcome(ORANGE, false).unwrap();
        assert_eq!(p.state(ORANGE).unwrap().step, Fixed::ONE);
        p.on_task_outcome(ORANGE, false).unwrap();
        assert_eq!(p.state(ORANGE).unwrap().step, Fixed::ONE);
        assert_eq!(p.on_task_outcome(BLUE, true), Err(SchedulerError::UnknownNode(BLUE)));
    }

    #[test]
    fn step_cap_limits_compounding() {
        let params = SchedulerParams {
            step_cap: Some(fx(2.0)),
            ..Default::default()
        };
        let mut p = SchedulerPools::fresh(&[ORANGE], &[], params).unwrap();
        for _ in 0..5 {
            p.on_task_outcome(ORANGE, true).unwrap();
        }
        assert_eq!(p.state(ORANGE).unwrap().step, fx(2.0));
        let mut p = SchedulerPools::fresh(&[ORANGE], &[], SchedulerParams::default()).unwrap();
        for _ in 0..200 {
            p.on_task_outcome(ORANGE, true).unwrap();
        }
        assert_eq!(p.state(ORANGE).unwrap().step, STEP_LIMIT);
    }

    #[test]
    fn pool_errors() {
        let a: Vec<NodeId> = (0..2).map(NodeId::assessor).collect();
        let mut p = SchedulerPools::fresh(&[ORANGE], &a, SchedulerParams::default()).unwrap();
        assert_eq!(
            p.on_query_arrival(3),
            Err(SchedulerError::InsufficientAssessors {
                available: 2,
                needed: 3
            })
        );
        let mut p = SchedulerPools::fresh(&[], &a, SchedulerParams::default()).unwrap();
        assert_eq!(p.on_query_arrival(1), Err(SchedulerError::EmptyInferencePool));
        assert_eq!(
            SchedulerPools::fresh(&[ORANGE, ORANGE], &[], SchedulerParams::default()).unwrap_err(),
            SchedulerError::DuplicateNode(ORANGE)
        );
    }

    #[test]
    fn assessor_top_m() {
        let a: Vec<NodeId> = (0..4).map(NodeId::assessor).collect();
        let mut p = SchedulerPools::fresh(&[ORANGE], &a, SchedulerParams::default()).unwrap();
        assert_eq!(p.on_query_arrival(3).unwrap().assessors, &a[..3]);
        // the left-out node now leads
        assert_eq!(p.on_query_arrival(3).unwrap().assessors[0], a[3]);
    }

    #[test]
    fn larger_step_is_picked_first() {
        let mut p = SchedulerPools::fresh(&[ORANGE, BLUE], &[], SchedulerParams::default()).unwrap();
        p.on_task_outcome(BLUE, true).unwrap();
        // equal energy 0, BLUE steps faster and wins despite joining later
        assert_eq!(p.on_query_arrival(0).unwrap().inference, BLUE);
    }

    fn outcome_bit(seed: u64, t: usize, j: usize) -> bool {
        let x = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((t as u64) << 20 | j as u64)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9);
        (x >> 31) & 1 == 1
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn no_starvation(n in 2usize..=50, m in 1usize..=4, t in 1u64..=10, seed: u64) {
            let m = m.min(n);
            let ids: Vec<NodeId> = (0..n as u64).map(NodeId::assessor).collect();
            let params = SchedulerParams {
                waiting_threshold: t,
                bonus: Fixed::ONE,
                step_cap: Some(fx(4.0)),
            };
            let mut p = SchedulerPools::fresh(&[ORANGE], &ids, params).unwrap();
            let mut last = vec![0usize; n];
            let window = 10 * n;
            for q in 1..=10_000usize {
                let s = p.on_query_arrival(m).unwrap();
                for (j, a) in s.assessors.iter().enumerate() {
                    last[a.index as usize] = q;
                    p.on_task_outcome(*a, outcome_bit(seed, q, j)).unwrap();
                }
                if q >= window {
                    for (i, l) in last.iter().enumerate() {
                        prop_assert!(q - l < window, "node {i} idle since {l} at {q}");
                    }
                }
            }
        }

        #[test]
        fn selection_is_deterministic(n in 1usize..=12, seed: u64) {
            let ids: Vec<NodeId> = (0..n as u64).map(NodeId::inference).collect();
            let run = || {
                let mut p = SchedulerPools::fresh(&ids, &[], SchedulerParams::default()).unwrap();
                (0..200).map(|q| {
                    let s = p.on_query_arrival(0).unwrap();
                    p.on_task_outcome(s.inference, outcome_bit(seed, q, 0)).unwrap();
                    s.inference
                }).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(), run());
        }

        #[test]
        fn selected_node_restarts_at_its_step(n in 2usize..=10, steps in 1usize..50) {
            let ids: Vec<NodeId> = (0..n as u64).map(NodeId::inference).collect();
            let mut p = SchedulerPools::fresh(&ids, &[], SchedulerParams::default()).unwrap();
            for _ in 0..steps {
                let s = p.on_query_arrival(0).unwrap();
                let step = p.state(s.inference).unwrap().effective_step(p.params.bonus);
                p.on_query_arrival(0).unwrap();
                let after = p.state(s.inference).unwrap();
                prop_assert!(after.energy == step || after.energy == Fixed::ZERO);
            }
        }
    }
}
