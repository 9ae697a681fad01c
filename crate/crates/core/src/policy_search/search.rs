use alloc::vec::Vec;

use rand::RngCore;

use super::{
    controller_update, evaluate_policy, sample_policy, ChildTrainer, ControllerState, RewardRecord, SearchSpace,
};
use crate::image::AnnotatedImage;
use crate::rng::substream;
use crate::{Error, Result};

pub const DEFAULT_BUDGET: usize = 15_000;
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Number of sample-evaluate-update rounds, one policy per round.
    pub budget: usize,
    pub top_k: usize,
    pub learning_rate: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { budget: DEFAULT_BUDGET, top_k: DEFAULT_TOP_K, learning_rate: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// The `top_k` best records, highest reward first; earlier rounds win ties.
    pub top: Vec<RewardRecord>,
    pub log: Vec<RewardRecord>,
    pub controller: ControllerState,
}

/// Runs `budget` rounds of sample, evaluate, update.
///
/// Round `r` samples its policy from stream `r` of `seed` and passes the
/// next draw of that stream to the child as its seed, so a round's outcome
/// depends only on the controller state and `(seed, r)`.
///
/// `resume` replays a previous log: each record must be the policy this
/// search would have sampled in that round, and its stored reward is used
/// instead of re-training. `on_record` sees every new record as it is made.
#[allow(clippy::too_many_arguments)]
pub fn search<C: ChildTrainer + ?Sized>(
    space: &SearchSpace,
    child: &C,
    train: &[AnnotatedImage],
    val: &[AnnotatedImage],
    config: &SearchConfig,
    seed: u64,
    resume: &[RewardRecord],
    mut on_record: impl FnMut(&RewardRecord),
) -> Result<SearchOutcome> {
    if config.budget == 0 {
        return Err(Error::Config("search budget must be at least 1".into()));
    }
    if resume.len() > config.budget {
        return Err(Error::Config(alloc::format!(
            "resume log has {} records but the budget is {}",
            resume.len(),
            config.budget
        )));
    }
    let mut state = ControllerState::uniform(space);
    let mut log: Vec<RewardRecord> = Vec::with_capacity(config.budget);
    for round in 0..config.budget {
        let mut rng = substream(seed, round as u64);
        let policy = sample_policy(&state, space, &mut rng)?;
        let child_seed = rng.next_u64();
        let record = match resume.get(round) {
            Some(old) => {
                if old.policy != policy || old.epoch != round {
                    return Err(Error::Config(alloc::format!("resume log diverges from this search at round {round}")));
                }
                old.clone()
            }
            None => {
                let r = evaluate_policy(&policy, child, train, val, child_seed, round)?;
                on_record(&r);
                r
            }
        };
        state = controller_update(&state, space, core::slice::from_ref(&record), config.learning_rate)?;
        log.push(record);
    }
    let mut ranked: Vec<&RewardRecord> = log.iter().collect();
    ranked.sort_by(|a, b| b.reward.total_cmp(&a.reward));
    let top = ranked.into_iter().take(config.top_k).cloned().collect();
    Ok(SearchOutcome { top, log, controller: state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy_search::decision_index;
    use crate::rng::seeded;
    use crate::transforms::policy::{OpKind, Policy};

    /// Reward 1 iff the first op of the first sub-policy is `rotate`.
    struct Rigged;

    impl ChildTrainer for Rigged {
        fn reward(&self, p: &Policy, _: &[AnnotatedImage], _: &[AnnotatedImage], _: u64) -> Result<f64> {
            Ok(if p.sub_policies[0].ops[0].kind == OpKind::Rotate { 1.0 } else { 0.0 })
        }
    }

    fn dummy() -> Vec<AnnotatedImage> {
        crate::synth::day_corpus(&mut seeded(0), &Default::default(), 1, "x")
    }

    fn run(budget: usize, seed: u64, resume: &[RewardRecord]) -> SearchOutcome {
        let cfg = SearchConfig { budget, ..SearchConfig::default() };
        let d = dummy();
        search(&SearchSpace::extended(), &Rigged, &d, &d, &cfg, seed, resume, |_| {}).unwrap()
    }

    #[test]
    fn budget_one_gives_one_record() {
        let out = run(1, 0, &[]);
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.top.len(), 1);
    }

    #[test]
    fn top_k_are_the_maxima() {
        let out = run(60, 2, &[]);
        assert_eq!(out.log.len(), 60);
        let mut rewards: Vec<f64> = out.log.iter().map(|r| r.reward).collect();
        rewards.sort_by(|a, b| b.total_cmp(a));
        let top: Vec<f64> = out.top.iter().map(|r| r.reward).collect();
        assert_eq!(top, rewards[..5].to_vec());
    }

    #[test]
    fn reproducible_and_resumable() {
        let full = run(40, 9, &[]);
        assert_eq!(full, run(40, 9, &[]));
        let resumed = run(40, 9, &full.log[..17]);
        assert_eq!(resumed, full);
        let mut bad = full.log[..3].to_vec();
        bad[2].policy = Policy::identity();
        let d = dummy();
        let cfg = SearchConfig { budget: 10, ..SearchConfig::default() };
        assert!(search(&SearchSpace::extended(), &Rigged, &d, &d, &cfg, 9, &bad, |_| {}).is_err());
    }

    #[test]
    fn rigged_reward_is_learned() {
        let space = SearchSpace::extended();
        let rotate = space.ops().iter().position(|k| *k == OpKind::Rotate).unwrap();
        let mut good = 0;
        for seed in 0..5 {
            let out = run(300, seed, &[]);
            let p = out.controller.probabilities(decision_index(0, 0, 0))[rotate];
            good += usize::from(p > 0.9);
        }
        assert!(good >= 4, "{good} of 5 seeds converged");
    }
}
