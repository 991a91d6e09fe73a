//! Learned policies: the two-stage agent that scores relaxation-sampled
//! caching groups with an offloading actor, and the single-stage agent
//! with separate caching and offloading actors.

use freshedge_core::lyapunov::SlotSubproblem;
use freshedge_core::policy::{Binary, Decided, Policy};
use freshedge_core::sdr::{relaxed_caching, repair, sample_and_repair, Sample};
use freshedge_core::Grid;
use freshedge_sdp::SolverOptions;
use nalgebra::DMatrix;
use rand::{Rng, RngCore};

use crate::features::FeatureLayout;
use crate::hyper::{Algorithm, Hyperparams};
use crate::learner::{ActorStep, Learner, QChoices, Transition};
use crate::loss::{bit_log_prob, q_max};
use crate::net::sigmoid;
use crate::LearnError;

/// Outcome of the best-of-K module.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub binary: Binary,
    /// `-P2` of the chosen group.
    pub reward: f64,
    /// `-P2` of every group.
    pub rewards: Vec<f64>,
}

/// Masks each group's per-user offloading bits with its caching vector
/// (a user keeps `x = 1` only if its requested service is cached), then
/// keeps the group with the largest reward. Ties go to the lower index.
pub fn mask_and_select(
    sub: &SlotSubproblem,
    groups: &[Sample],
    sampled_x: &[Vec<bool>],
) -> Result<Selection, LearnError> {
    if groups.is_empty() || groups.len() != sampled_x.len() {
        return Err(LearnError::Shape {
            what: "groups",
            expected: groups.len().max(1),
            got: sampled_x.len(),
        });
    }
    let (n, m) = (sub.num_users(), sub.num_services());
    let mut best: Option<(usize, Binary, f64)> = None;
    let mut rewards = Vec::with_capacity(groups.len());
    for (k, (g, bits)) in groups.iter().zip(sampled_x).enumerate() {
        if bits.len() != n {
            return Err(LearnError::Shape {
                what: "offloading bits",
                expected: n,
                got: bits.len(),
            });
        }
        let mut x = Grid::filled(n, m, false);
        for (i, &bit) in bits.iter().enumerate() {
            if let Some(j) = sub.tasks.requested(i) {
                x[(i, j)] = bit && g.z[j];
            }
        }
        let r = sub.reward(&g.z, &x)?;
        rewards.push(r);
        if best.as_ref().is_none_or(|b| r > b.2) {
            best = Some((k, Binary { z: g.z.clone(), x }, r));
        }
    }
    let (index, binary, reward) = best.expect("at least one group");
    Ok(Selection {
        index,
        binary,
        reward,
        rewards,
    })
}

/// Decisions a user may set to 1 in a group.
fn allowed(sub: &SlotSubproblem, z: &[bool]) -> Vec<bool> {
    (0..sub.num_users())
        .map(|i| sub.tasks.requested(i).is_some_and(|j| z[j]))
        .collect()
}

/// Bernoulli samples in training, the more likely value otherwise.
fn policy_bits(logits: &[f64], training: bool, rng: &mut dyn RngCore) -> Vec<bool> {
    logits
        .iter()
        .map(|&l| if training { rng.random_bool(sigmoid(l)) } else { l > 0.0 })
        .collect()
}

fn log_probs(logits: &[f64], bits: &[bool]) -> Vec<f64> {
    logits.iter().zip(bits).map(|(&l, &b)| bit_log_prob(l, b)).collect()
}

/// A policy that also learns from the slots it decides.
pub trait LearnedPolicy: Policy {
    fn learner(&self) -> &Learner;
    fn learner_mut(&mut self) -> &mut Learner;
    /// In training mode decisions are sampled and recorded.
    fn set_training(&mut self, on: bool);
    fn layout(&self) -> FeatureLayout;
}

pub struct OiodrlAgent {
    pub learner: Learner,
    pub layout: FeatureLayout,
    pub sdp: SolverOptions,
    pub training: bool,
    name: String,
}

impl OiodrlAgent {
    /// The actor emits one logit per user; the Q-learning ablation emits one
    /// value per user and bit value instead.
    pub fn new(hp: Hyperparams, layout: FeatureLayout, sdp: SolverOptions) -> Result<Self, LearnError> {
        let out = match hp.algorithm {
            Algorithm::Dqn => 2 * layout.users,
            _ => layout.users,
        };
        let name = match hp.algorithm {
            Algorithm::Ppo => "oiodrl".to_string(),
            other => format!("oiodrl-{other}"),
        };
        let learner = Learner::new(hp, &[(layout.group_dim(), out)], layout.group_dim())?;
        Ok(Self {
            learner,
            layout,
            sdp,
            training: false,
            name,
        })
    }

    /// Offloading bits for every group from the actor outputs.
    fn group_bits(&self, out: &DMatrix<f64>, allowed: &[Vec<bool>], rng: &mut dyn RngCore) -> Vec<Vec<bool>> {
        let hp = &self.learner.hp;
        (0..out.ncols())
            .map(|k| match hp.algorithm {
                Algorithm::Dqn => {
                    if self.training && rng.random_bool(hp.epsilon_at(self.learner.rounds)) {
                        allowed[k].iter().map(|&ok| ok && rng.random_bool(0.5)).collect()
                    } else {
                        q_max(out, k, &allowed[k]).1
                    }
                }
                _ => {
                    let logits: Vec<f64> = out.column(k).iter().copied().collect();
                    policy_bits(&logits, self.training, rng)
                }
            })
            .collect()
    }

    pub fn act(&mut self, sub: &SlotSubproblem, rng: &mut dyn RngCore) -> Result<Decided, LearnError> {
        self.layout.check(sub)?;
        let (rel, sol) = relaxed_caching(sub, &self.sdp)?;
        let groups = sample_and_repair(
            &rel.z_prob,
            self.learner.hp.groups,
            rng,
            &sub.sizes,
            sub.storage,
            &sub.case,
        )
        .samples;
        let task = self.layout.task_features(sub);
        let inputs = self.layout.group_inputs(sub, &task, &groups);
        let out = self.learner.actors[0].params.forward(&inputs)?;
        let allowed: Vec<Vec<bool>> = groups.iter().map(|g| allowed(sub, &g.z)).collect();
        let bits = self.group_bits(&out, &allowed, rng);
        let sel = mask_and_select(sub, &groups, &bits)?;
        if self.training {
            let k = sel.index;
            let hp = &self.learner.hp;
            let steps = match hp.algorithm {
                Algorithm::Dqn => vec![ActorStep {
                    input: inputs.column(k).into_owned(),
                    bits: bits[k].iter().zip(&allowed[k]).map(|(&b, &ok)| b && ok).collect(),
                    old_log_probs: vec![0.0; self.layout.users],
                    active: allowed[k].clone(),
                    reward_offset: 0.0,
                }],
                // every group's bits were sampled and scored, so each is
                // credited with its own reward; the executed group comes first
                _ => std::iter::once(k)
                    .chain((0..groups.len()).filter(|&g| g != k))
                    .map(|g| {
                        let logits: Vec<f64> = out.column(g).iter().copied().collect();
                        ActorStep {
                            input: inputs.column(g).into_owned(),
                            old_log_probs: log_probs(&logits, &bits[g]),
                            bits: bits[g].clone(),
                            active: allowed[g].clone(),
                            reward_offset: (sel.rewards[g] - sel.reward) * hp.reward_scale,
                        }
                    })
                    .collect(),
            };
            let choices = (hp.algorithm == Algorithm::Dqn).then(|| QChoices {
                inputs: inputs.clone(),
                allowed,
            });
            let t = Transition {
                steps: vec![steps],
                critic_input: self.layout.mean_group_input(&inputs),
                reward: sel.reward * hp.reward_scale,
                done: false,
                choices,
            };
            self.learner.push(t);
        }
        Ok(Decided::from_binary(sub, &sel.binary, sol.certificate)?)
    }
}

impl Policy for OiodrlAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, sub: &SlotSubproblem, rng: &mut dyn RngCore) -> Result<Decided, freshedge_core::Error> {
        Ok(self.act(sub, rng)?)
    }
}

impl LearnedPolicy for OiodrlAgent {
    fn learner(&self) -> &Learner {
        &self.learner
    }

    fn learner_mut(&mut self) -> &mut Learner {
        &mut self.learner
    }

    fn set_training(&mut self, on: bool) {
        self.training = on;
    }

    fn layout(&self) -> FeatureLayout {
        self.layout
    }
}

/// Caching actor followed by an offloading actor, no relaxation and no
/// group search. Oversized caching samples are repaired by random removal.
pub struct PpoOnlyAgent {
    pub learner: Learner,
    pub layout: FeatureLayout,
    pub training: bool,
}

impl PpoOnlyAgent {
    pub fn new(hp: Hyperparams, layout: FeatureLayout) -> Result<Self, LearnError> {
        if hp.algorithm == Algorithm::Dqn {
            return Err(LearnError::Hyperparams {
                key: "algorithm",
                message: "the single-stage agent is actor-critic only".into(),
            });
        }
        let actors = [
            (layout.cache_dim(), layout.services),
            (layout.group_dim(), layout.users),
        ];
        let learner = Learner::new(hp, &actors, layout.cache_dim())?;
        Ok(Self {
            learner,
            layout,
            training: false,
        })
    }

    pub fn act(&mut self, sub: &SlotSubproblem, rng: &mut dyn RngCore) -> Result<Decided, LearnError> {
        self.layout.check(sub)?;
        let task = self.layout.task_features(sub);
        let cache_in = self.layout.cache_input(sub, &task);
        let z_logits: Vec<f64> = self.learner.actors[0]
            .params
            .forward_one(&cache_in)?
            .iter()
            .copied()
            .collect();
        let z_bits = policy_bits(&z_logits, self.training, rng);
        let mut z = z_bits.clone();
        repair(&mut z, rng, &sub.sizes, sub.storage);
        let y = sub.download(&z);
        let group_in = self.layout.group_input(sub, &task, &z, &y);
        let x_logits: Vec<f64> = self.learner.actors[1]
            .params
            .forward_one(&group_in)?
            .iter()
            .copied()
            .collect();
        let x_bits = policy_bits(&x_logits, self.training, rng);
        let x_active = allowed(sub, &z);
        let sel = mask_and_select(sub, &[Sample { z, y }], std::slice::from_ref(&x_bits))?;
        if self.training {
            let t = Transition {
                steps: vec![
                    vec![ActorStep {
                        input: cache_in.clone(),
                        old_log_probs: log_probs(&z_logits, &z_bits),
                        active: vec![true; z_bits.len()],
                        bits: z_bits,
                        reward_offset: 0.0,
                    }],
                    vec![ActorStep {
                        input: group_in,
                        old_log_probs: log_probs(&x_logits, &x_bits),
                        bits: x_bits,
                        active: x_active,
                        reward_offset: 0.0,
                    }],
                ],
                critic_input: cache_in,
                reward: sel.reward * self.learner.hp.reward_scale,
                done: false,
                choices: None,
            };
            self.learner.push(t);
        }
        Ok(Decided::from_binary(sub, &sel.binary, None)?)
    }
}

impl Policy for PpoOnlyAgent {
    fn name(&self) -> &str {
        "ppo-only"
    }

    fn decide(&mut self, sub: &SlotSubproblem, rng: &mut dyn RngCore) -> Result<Decided, freshedge_core::Error> {
        Ok(self.act(sub, rng)?)
    }
}

impl LearnedPolicy for PpoOnlyAgent {
    fn learner(&self) -> &Learner {
        &self.learner
    }

    fn learner_mut(&mut self) -> &mut Learner {
        &mut self.learner
    }

    fn set_training(&mut self, on: bool) {
        self.training = on;
    }

    fn layout(&self) -> FeatureLayout {
        self.layout
    }
}

/// Actor probabilities of every group, evaluation mode.
pub fn offload_probs(agent: &OiodrlAgent, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>, LearnError> {
    Ok(agent.learner.actors[0].params.forward(inputs)?.map(sigmoid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use freshedge_core::env::{EnvConfig, Environment};
    use freshedge_core::lyapunov::build_subproblem;
    use freshedge_core::rng::stream;

    fn env(seed: u64) -> Environment {
        Environment::new(EnvConfig {
            num_users: 3,
            num_services: 4,
            storage_capacity: 9e9,
            horizon: 16,
            rng_seed: seed,
            ..EnvConfig::default()
        })
        .unwrap()
    }

    fn layout() -> FeatureLayout {
        FeatureLayout {
            users: 3,
            services: 4,
            task_scale: 2e9,
        }
    }

    fn small(algorithm: Algorithm) -> Hyperparams {
        Hyperparams {
            algorithm,
            hidden: vec![16],
            groups: 4,
            batch_size: 8,
            update_period: 1,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn mask_forces_uncached_requests_to_the_cloud() {
        let sub = build_subproblem(&env(1));
        let j = sub.tasks.requested(0).unwrap();
        let mut z = vec![false; 4];
        let y = sub.download(&z);
        let sel = mask_and_select(&sub, &[Sample { z: z.clone(), y }], &[vec![true; 3]]).unwrap();
        assert!(!sel.binary.x[(0, j)]);
        z[j] = true;
        let y = sub.download(&z);
        let sel = mask_and_select(&sub, &[Sample { z, y }], &[vec![true; 3]]).unwrap();
        assert!(sel.binary.x[(0, j)]);
        sub.check(&sel.binary.z, &sel.binary.x).unwrap();
    }

    #[test]
    fn selection_is_an_argmax_with_low_index_ties() {
        let sub = build_subproblem(&env(2));
        let mut rng = stream(2, "sel");
        let groups: Vec<Sample> = (0..6)
            .map(|k| {
                let z: Vec<bool> = (0..4).map(|j| (k + j) % 3 == 0 || rng.random_bool(0.3)).collect();
                let mut z = z;
                repair(&mut z, &mut rng, &sub.sizes, sub.storage);
                let y = sub.download(&z);
                Sample { z, y }
            })
            .collect();
        let bits: Vec<Vec<bool>> = (0..6).map(|_| (0..3).map(|_| rng.random_bool(0.5)).collect()).collect();
        let sel = mask_and_select(&sub, &groups, &bits).unwrap();
        assert!(sel.rewards.iter().all(|&r| r <= sel.reward));
        assert!(sel.rewards[..sel.index].iter().all(|&r| r < sel.reward));
        let dup = vec![groups[0].clone(), groups[0].clone()];
        let sel = mask_and_select(&sub, &dup, &[bits[0].clone(), bits[0].clone()]).unwrap();
        assert_eq!(sel.index, 0);
        let one = mask_and_select(&sub, &groups[3..4], &bits[3..4]).unwrap();
        assert_eq!(one.index, 0);
        assert_eq!(one.reward, one.rewards[0]);
    }

    #[test]
    fn zero_actor_gives_even_odds() {
        let mut agent = OiodrlAgent::new(small(Algorithm::Ppo), layout(), SolverOptions::default()).unwrap();
        for w in agent.learner.actors[0].params.weights.iter_mut() {
            w.fill(0.0);
        }
        let x = DMatrix::from_element(layout().group_dim(), 2, 0.7);
        let p = offload_probs(&agent, &x).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
        let p2 = offload_probs(&agent, &x).unwrap();
        assert_eq!(p, p2);
        assert_eq!(p.nrows(), 3);
    }

    #[test]
    fn every_executed_action_is_feasible_while_training() {
        for algo in [Algorithm::Ppo, Algorithm::A2c, Algorithm::Dqn] {
            let mut agent = OiodrlAgent::new(small(algo), layout(), SolverOptions::default()).unwrap();
            agent.set_training(true);
            let mut e = env(3);
            let mut rng = stream(3, "act");
            while !e.is_done() {
                let sub = build_subproblem(&e);
                let d = agent.decide(&sub, &mut rng).unwrap();
                e.validate(&d.decision).unwrap();
                e.step(&d.decision).unwrap();
            }
            assert_eq!(agent.learner.buffer.len(), 16);
            let stats = agent.learner.end_episode().unwrap().unwrap();
            assert_eq!(stats.transitions, 16);
            assert!(agent.learner.buffer.is_empty());
        }
    }

    #[test]
    fn every_group_is_recorded_against_the_executed_reward() {
        let mut agent = OiodrlAgent::new(small(Algorithm::Ppo), layout(), SolverOptions::default()).unwrap();
        agent.set_training(true);
        let sub = build_subproblem(&env(5));
        agent.decide(&sub, &mut stream(5, "rec")).unwrap();
        let steps = &agent.learner.buffer[0].steps[0];
        assert_eq!(steps.len(), 4);
        assert_eq!(steps[0].reward_offset, 0.0);
        assert!(steps.iter().all(|s| s.reward_offset <= 0.0));
        for s in steps {
            // a user whose requested service is not cached has no say
            for (i, &a) in s.active.iter().enumerate() {
                assert!(a || sub.tasks.requested(i).is_some());
            }
        }
    }

    #[test]
    fn single_stage_agent_is_feasible_and_deterministic_in_evaluation() {
        let mut agent = PpoOnlyAgent::new(small(Algorithm::Ppo), layout()).unwrap();
        let sub = build_subproblem(&env(4));
        agent.set_training(true);
        for seed in 0..20 {
            let d = agent.decide(&sub, &mut stream(seed, "p")).unwrap();
            sub.check(&d.decision.cache, &d.decision.offload).unwrap();
        }
        assert_eq!(agent.learner.buffer.len(), 20);
        agent.set_training(false);
        let a = agent.decide(&sub, &mut stream(0, "e")).unwrap();
        let b = agent.decide(&sub, &mut stream(0, "e")).unwrap();
        assert_eq!(a.decision, b.decision);
        assert!(PpoOnlyAgent::new(small(Algorithm::Dqn), layout()).is_err());
    }
}
