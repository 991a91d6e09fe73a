//! Episode loop and learning curves.

use freshedge_core::env::{EnvConfig, Environment};
use freshedge_core::lyapunov::build_subproblem;
use freshedge_core::policy::{fixed_decide, Decided, Overflow, Policy};
use freshedge_core::rng::stream;

use crate::agent::LearnedPolicy;
use crate::LearnError;

/// Evaluation episodes use environment seeds from this offset upward, away
/// from the training seeds.
pub const EVAL_SEED_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub rounds: usize,
    /// Evaluate after every `eval_every` rounds; 0 disables evaluation.
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            rounds: 100,
            eval_every: 1,
            eval_episodes: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub slots: usize,
    /// Mean `-P2` per slot, unscaled.
    pub mean_reward: f64,
    pub mean_utility: f64,
    /// Slots decided by the fallback after the policy failed.
    pub fallbacks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Update round index, from zero.
    pub round: usize,
    /// Training episodes completed so far.
    pub episodes: usize,
    pub train_reward: f64,
    pub eval_reward: Option<f64>,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub lr: f64,
    pub fallbacks: usize,
}

/// Decision for a slot the policy could not decide: the default fixed set
/// with overflow dropping.
pub fn fallback_decision(sub: &freshedge_core::lyapunov::SlotSubproblem) -> Result<Decided, freshedge_core::Error> {
    let b = fixed_decide(sub, &[0, 1], Overflow::DropLargest)?;
    Decided::from_binary(sub, &b, None)
}

/// Runs one full episode on a fresh environment. A failed decision is
/// replaced by [`fallback_decision`] and is not recorded for learning.
pub fn run_episode(policy: &mut dyn Policy, cfg: &EnvConfig) -> Result<EpisodeSummary, LearnError> {
    let mut env = Environment::new(cfg.clone())?;
    let mut rng = stream(cfg.rng_seed, "agent");
    let (mut reward, mut utility, mut fallbacks) = (0.0, 0.0, 0);
    while !env.is_done() {
        let sub = build_subproblem(&env);
        let d = match policy.decide(&sub, &mut rng) {
            Ok(d) => d,
            Err(e) => {
                log::warn!(
                    "slot {}: {} failed ({e}), using the fallback",
                    env.slot(),
                    policy.name()
                );
                fallbacks += 1;
                fallback_decision(&sub)?
            }
        };
        reward -= d.value;
        utility += env.step(&d.decision)?.utility;
    }
    let slots = cfg.horizon;
    Ok(EpisodeSummary {
        slots,
        mean_reward: reward / slots as f64,
        mean_utility: utility / slots as f64,
        fallbacks,
    })
}

/// Mean per-slot reward of the evaluation-mode policy over the held-out
/// seeds.
pub fn evaluate(agent: &mut dyn LearnedPolicy, cfg: &EnvConfig, episodes: usize) -> Result<f64, LearnError> {
    agent.set_training(false);
    let mut total = 0.0;
    for e in 0..episodes {
        let c = EnvConfig {
            rng_seed: cfg.rng_seed.wrapping_add(EVAL_SEED_OFFSET + e as u64),
            ..cfg.clone()
        };
        total += run_episode(agent, &c)?.mean_reward;
    }
    Ok(total / episodes.max(1) as f64)
}

/// Collects training episodes (environment seed `cfg.rng_seed + episode`)
/// until `schedule.rounds` update rounds have run, calling `on_round` after
/// each.
pub fn train(
    agent: &mut dyn LearnedPolicy,
    cfg: &EnvConfig,
    schedule: &TrainSchedule,
    mut on_round: impl FnMut(&CurvePoint),
) -> Result<Vec<CurvePoint>, LearnError> {
    let mut curve = Vec::with_capacity(schedule.rounds);
    let mut episode = 0u64;
    let (mut reward_sum, mut episodes_in_round, mut fallbacks) = (0.0, 0usize, 0usize);
    while curve.len() < schedule.rounds {
        agent.set_training(true);
        let c = EnvConfig {
            rng_seed: cfg.rng_seed.wrapping_add(episode),
            ..cfg.clone()
        };
        let s = run_episode(agent, &c)?;
        episode += 1;
        reward_sum += s.mean_reward;
        episodes_in_round += 1;
        fallbacks += s.fallbacks;
        let Some(stats) = agent.learner_mut().end_episode()? else {
            continue;
        };
        let round = stats.round;
        let eval_reward = if schedule.eval_every > 0 && (round + 1) % schedule.eval_every == 0 {
            Some(evaluate(agent, cfg, schedule.eval_episodes)?)
        } else {
            None
        };
        let point = CurvePoint {
            round,
            episodes: episode as usize,
            train_reward: reward_sum / episodes_in_round as f64,
            eval_reward,
            actor_loss: stats.actor_loss,
            critic_loss: stats.critic_loss,
            entropy: stats.entropy,
            lr: stats.lr,
            fallbacks,
        };
        on_round(&point);
        curve.push(point);
        reward_sum = 0.0;
        episodes_in_round = 0;
        fallbacks = 0;
    }
    agent.set_training(false);
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::OiodrlAgent;
    use crate::features::FeatureLayout;
    use crate::hyper::Hyperparams;
    use freshedge_sdp::SolverOptions;

    #[test]
    fn rounds_follow_the_update_period() {
        let cfg = EnvConfig {
            num_users: 2,
            num_services: 3,
            horizon: 12,
            ..EnvConfig::default()
        };
        let hp = Hyperparams {
            hidden: vec![8],
            groups: 3,
            batch_size: 12,
            update_period: 2,
            ..Hyperparams::default()
        };
        let layout = FeatureLayout {
            users: 2,
            services: 3,
            task_scale: cfg.task_size_range.1,
        };
        let mut agent = OiodrlAgent::new(hp, layout, SolverOptions::default()).unwrap();
        let schedule = TrainSchedule {
            rounds: 3,
            eval_every: 2,
            eval_episodes: 1,
        };
        let mut seen = 0;
        let curve = train(&mut agent, &cfg, &schedule, |_| seen += 1).unwrap();
        assert_eq!(seen, 3);
        assert_eq!(curve.iter().map(|p| p.episodes).collect::<Vec<_>>(), vec![2, 4, 6]);
        assert_eq!(
            curve.iter().map(|p| p.eval_reward.is_some()).collect::<Vec<_>>(),
            vec![false, true, false]
        );
        assert!(curve[0].lr > curve[2].lr);
        assert!(!agent.training);
    }
}
