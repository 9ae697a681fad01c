//! Discrete augmentation-policy search.
//!
//! A policy is 30 categorical decisions (5 sub-policies x 2 ops x
//! {kind, probability level, magnitude level}). The controller keeps one
//! logit vector per decision, samples policies from their softmax and is
//! updated with a score-function gradient against a running-mean baseline.

mod child;
mod search;

pub use child::{evaluate_policy, roi_crop, ChildTrainer, ClassifierChild, ClassifierChildConfig, DetectionChild};
pub use search::{search, SearchConfig, SearchOutcome, DEFAULT_BUDGET, DEFAULT_TOP_K};

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::math::exp;
use crate::transforms::policy::{
    OpKind, Policy, PolicyOp, SubPolicy, MAGNITUDE_LEVELS, OPS_PER_SUBPOLICY, PROBABILITY_LEVELS,
    SUBPOLICIES_PER_POLICY,
};
use crate::{Error, Result};

/// Decisions per op: kind, probability level, magnitude level.
const FIELDS: usize = 3;
pub const DECISIONS: usize = SUBPOLICIES_PER_POLICY * OPS_PER_SUBPOLICY * FIELDS;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpace {
    ops: Vec<OpKind>,
    probability_levels: u8,
    magnitude_levels: u8,
}

impl SearchSpace {
    pub fn new(ops: Vec<OpKind>, probability_levels: u8, magnitude_levels: u8) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::Config("search space needs at least one op".into()));
        }
        if ops.iter().enumerate().any(|(i, k)| ops[..i].contains(k)) {
            return Err(Error::Config("search space lists an op twice".into()));
        }
        if !(1..=PROBABILITY_LEVELS).contains(&probability_levels)
            || !(1..=MAGNITUDE_LEVELS).contains(&magnitude_levels)
        {
            return Err(Error::Config(alloc::format!(
                "levels must be 1..={PROBABILITY_LEVELS} and 1..={MAGNITUDE_LEVELS}, got {probability_levels} and {magnitude_levels}"
            )));
        }
        Ok(Self { ops, probability_levels, magnitude_levels })
    }

    /// All 18 ops, including blur and box occlusion.
    pub fn extended() -> Self {
        Self::new(OpKind::EXTENDED.to_vec(), PROBABILITY_LEVELS, MAGNITUDE_LEVELS).expect("static catalog")
    }

    /// The 16 base ops.
    pub fn base() -> Self {
        Self::new(OpKind::BASE.to_vec(), PROBABILITY_LEVELS, MAGNITUDE_LEVELS).expect("static catalog")
    }

    pub fn ops(&self) -> &[OpKind] {
        &self.ops
    }

    pub fn probability_levels(&self) -> u8 {
        self.probability_levels
    }

    pub fn magnitude_levels(&self) -> u8 {
        self.magnitude_levels
    }

    fn arity(&self, field: usize) -> usize {
        match field {
            0 => self.ops.len(),
            1 => self.probability_levels as usize,
            _ => self.magnitude_levels as usize,
        }
    }

    /// Category index of every decision in `policy`, or `None` if the policy
    /// uses an op or level outside this space.
    pub fn choices(&self, policy: &Policy) -> Option<[usize; DECISIONS]> {
        let mut out = [0; DECISIONS];
        for (s, sp) in policy.sub_policies.iter().enumerate() {
            for (o, op) in sp.ops.iter().enumerate() {
                let base = decision_index(s, o, 0);
                out[base] = self.ops.iter().position(|k| *k == op.kind)?;
                out[base + 1] = op.probability_level as usize;
                out[base + 2] = op.magnitude_level as usize;
                if out[base + 1] >= self.arity(1) || out[base + 2] >= self.arity(2) {
                    return None;
                }
            }
        }
        Some(out)
    }
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self::extended()
    }
}

/// Flat index of decision `field` (0 kind, 1 probability, 2 magnitude) of op `op` in sub-policy `sub`.
pub fn decision_index(sub: usize, op: usize, field: usize) -> usize {
    (sub * OPS_PER_SUBPOLICY + op) * FIELDS + field
}

/// Number of distinct policies, `(K * P * M)^(2 * 5)`.
pub fn policy_space_size(space: &SearchSpace) -> u128 {
    let per_op = space.ops.len() as u128 * space.probability_levels as u128 * space.magnitude_levels as u128;
    // at most 18 * 11 * 10 = 1980, and 1980^10 < 2^110
    per_op.pow((SUBPOLICIES_PER_POLICY * OPS_PER_SUBPOLICY) as u32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub logits: Vec<Vec<f64>>,
    /// Running mean of every reward seen so far.
    pub baseline: f64,
    /// Number of rewards folded into the baseline.
    pub steps: u64,
}

impl ControllerState {
    pub fn uniform(space: &SearchSpace) -> Self {
        Self { logits: (0..DECISIONS).map(|d| vec![0.0; space.arity(d % FIELDS)]).collect(), baseline: 0.0, steps: 0 }
    }

    pub fn probabilities(&self, decision: usize) -> Vec<f64> {
        softmax(&self.logits[decision])
    }

    pub fn is_finite(&self) -> bool {
        self.baseline.is_finite() && self.logits.iter().flatten().all(|v| v.is_finite())
    }

    /// Sum of log-probabilities of the given choices.
    pub fn log_prob(&self, choices: &[usize; DECISIONS]) -> f64 {
        choices.iter().enumerate().map(|(d, &c)| crate::math::ln(self.probabilities(d)[c])).sum()
    }

    fn check(&self, space: &SearchSpace) -> Result<()> {
        let shape_ok = self.logits.len() == DECISIONS
            && self.logits.iter().enumerate().all(|(d, l)| l.len() == space.arity(d % FIELDS));
        if !shape_ok {
            return Err(Error::Config("controller shape does not match the search space".into()));
        }
        Ok(())
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| exp(v - m)).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn sample_categorical<R: RngCore + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Draws one policy; consumes exactly 30 uniforms from `rng`.
pub fn sample_policy<R: RngCore + ?Sized>(state: &ControllerState, space: &SearchSpace, rng: &mut R) -> Result<Policy> {
    state.check(space)?;
    let mut c = [0usize; DECISIONS];
    for (d, slot) in c.iter_mut().enumerate() {
        *slot = sample_categorical(&state.probabilities(d), rng);
    }
    Ok(policy_from_choices(space, &c))
}

fn policy_from_choices(space: &SearchSpace, c: &[usize; DECISIONS]) -> Policy {
    let op = |s: usize, o: usize| {
        let b = decision_index(s, o, 0);
        PolicyOp { kind: space.ops[c[b]], probability_level: c[b + 1] as u8, magnitude_level: c[b + 2] as u8 }
    };
    let subs: [SubPolicy; SUBPOLICIES_PER_POLICY] = core::array::from_fn(|s| SubPolicy::new(op(s, 0), op(s, 1)));
    Policy { sub_policies: subs }
}

/// Score-function step on a batch of records.
///
/// Every record's advantage is measured against the baseline as it stood
/// before the batch; the logit step is the batch mean of
/// `advantage * (onehot(choice) - softmax)` scaled by `learning_rate`.
/// Afterwards each reward is folded into the running-mean baseline.
pub fn controller_update(
    state: &ControllerState,
    space: &SearchSpace,
    records: &[RewardRecord],
    learning_rate: f64,
) -> Result<ControllerState> {
    state.check(space)?;
    if records.is_empty() {
        return Err(Error::Config("controller update needs at least one record".into()));
    }
    let probs: Vec<Vec<f64>> = (0..DECISIONS).map(|d| state.probabilities(d)).collect();
    let mut delta: Vec<Vec<f64>> = state.logits.iter().map(|l| vec![0.0; l.len()]).collect();
    for r in records {
        let choices = space.choices(&r.policy).ok_or_else(|| {
            Error::InvalidPolicy(alloc::format!("policy outside the search space: {}", r.policy.to_line()))
        })?;
        let adv = r.reward - state.baseline;
        if adv == 0.0 {
            continue;
        }
        for (d, &c) in choices.iter().enumerate() {
            for (j, dv) in delta[d].iter_mut().enumerate() {
                let onehot = if j == c { 1.0 } else { 0.0 };
                *dv += adv * (onehot - probs[d][j]);
            }
        }
    }
    let mut next = state.clone();
    let scale = learning_rate / records.len() as f64;
    for (l, dl) in next.logits.iter_mut().zip(&delta) {
        for (v, dv) in l.iter_mut().zip(dl) {
            *v += scale * dv;
        }
    }
    for r in records {
        next.steps += 1;
        next.baseline += (r.reward - next.baseline) / next.steps as f64;
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardRecord {
    pub policy: Policy,
    pub reward: f64,
    /// Search round that produced this record.
    pub epoch: usize,
    /// The child diverged; `reward` was recorded as 0.
    pub diverged: bool,
}
