//! Rollout buffer and update rounds shared by every learned policy.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::adam::Adam;
use crate::gae::gae_advantages;
use crate::hyper::{Algorithm, Hyperparams};
use crate::loss::{
    a2c_actor_head, dqn_head, mse_critic_head, ppo_actor_head, ppo_critic_head, q_max, through, PolicyTargets,
    ValueTargets,
};
use crate::net::Mlp;
use crate::LearnError;

/// What one actor emitted in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorStep {
    pub input: DVector<f64>,
    /// Sampled decisions.
    pub bits: Vec<bool>,
    /// Their log-probabilities at sampling time, dropout off.
    pub old_log_probs: Vec<f64>,
    /// Decisions that could change the executed action.
    pub active: Vec<bool>,
    /// Scaled slot reward this decision vector would have earned minus the
    /// reward actually earned; zero for the executed one.
    pub reward_offset: f64,
}

/// Candidate inputs of a state for the Q-learning target, with the
/// decisions the action mask leaves free in each.
#[derive(Debug, Clone, PartialEq)]
pub struct QChoices {
    pub inputs: DMatrix<f64>,
    pub allowed: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// One entry per actor network, each holding every decision vector that
    /// actor sampled in the slot. All of them share the slot's advantage.
    pub steps: Vec<Vec<ActorStep>>,
    pub critic_input: DVector<f64>,
    /// Scaled reward.
    pub reward: f64,
    pub done: bool,
    pub choices: Option<QChoices>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub params: Mlp,
    pub opt: Adam,
}

impl Net {
    fn new(params: Mlp) -> Self {
        let opt = Adam::new(&params);
        Self { params, opt }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    /// Index of the completed round, from zero.
    pub round: usize,
    pub transitions: usize,
    /// Mean over minibatches, summed over actors.
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub lr: f64,
    pub mean_reward: f64,
}

pub struct Learner {
    pub hp: Hyperparams,
    pub actors: Vec<Net>,
    /// Absent for the Q-learning ablation.
    pub critic: Option<Net>,
    pub buffer: Vec<Transition>,
    /// Episodes collected since the last round.
    pub episodes: usize,
    /// Completed update rounds.
    pub rounds: usize,
    rng: ChaCha8Rng,
}

const ACTOR_GAIN: f64 = 0.01;
const CRITIC_GAIN: f64 = 1.0;

impl Learner {
    /// `actors` lists `(input, output)` sizes; the critic is built unless the
    /// algorithm is Q-learning.
    pub fn new(hp: Hyperparams, actors: &[(usize, usize)], critic_input: usize) -> Result<Self, LearnError> {
        hp.validate()?;
        let mut rng = freshedge_core::rng::stream(hp.rng_seed, "learner-init");
        let sizes = |inp: usize, out: usize| {
            let mut s = vec![inp];
            s.extend(&hp.hidden);
            s.push(out);
            s
        };
        let actors = actors
            .iter()
            .map(|&(i, o)| Net::new(Mlp::new(&sizes(i, o), ACTOR_GAIN, &mut rng)))
            .collect();
        let critic = (hp.algorithm != Algorithm::Dqn)
            .then(|| Net::new(Mlp::new(&sizes(critic_input, 1), CRITIC_GAIN, &mut rng)));
        Ok(Self {
            rng: freshedge_core::rng::stream(hp.rng_seed, "learner"),
            hp,
            actors,
            critic,
            buffer: Vec::new(),
            episodes: 0,
            rounds: 0,
        })
    }

    pub fn push(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// Closes the current episode and runs an update round once
    /// `update_period` episodes are buffered.
    pub fn end_episode(&mut self) -> Result<Option<UpdateStats>, LearnError> {
        if let Some(last) = self.buffer.last_mut() {
            last.done = true;
        }
        self.episodes += 1;
        if self.episodes < self.hp.update_period {
            return Ok(None);
        }
        self.update().map(Some)
    }

    /// Drops buffered transitions without learning from them.
    pub fn clear(&mut self) {
        self.buffer.clear();
        self.episodes = 0;
    }

    pub fn update(&mut self) -> Result<UpdateStats, LearnError> {
        let have = self.buffer.len();
        if have < self.hp.batch_size {
            return Err(LearnError::BufferTooSmall {
                have,
                need: self.hp.batch_size,
            });
        }
        let mean_reward = self.buffer.iter().map(|t| t.reward).sum::<f64>() / have as f64;
        let lr = self.hp.lr.at(self.rounds);
        let (actor_loss, critic_loss, entropy) = match self.hp.algorithm {
            Algorithm::Dqn => self.update_q(lr)?,
            Algorithm::Ppo | Algorithm::A2c => self.update_actor_critic(lr)?,
        };
        let stats = UpdateStats {
            round: self.rounds,
            transitions: have,
            actor_loss,
            critic_loss,
            entropy,
            lr,
            mean_reward,
        };
        self.clear();
        self.rounds += 1;
        Ok(stats)
    }

    fn minibatches(&mut self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.buffer.len()).collect();
        order.shuffle(&mut self.rng);
        order.chunks(self.hp.batch_size).map(|c| c.to_vec()).collect()
    }

    fn update_actor_critic(&mut self, lr: f64) -> Result<(f64, f64, f64), LearnError> {
        let critic = self.critic.as_mut().expect("actor-critic learner has a critic");
        let inputs = DMatrix::from_columns(&self.buffer.iter().map(|t| t.critic_input.clone()).collect::<Vec<_>>());
        let old_values: Vec<f64> = critic.params.forward(&inputs)?.row(0).iter().copied().collect();
        let rewards: Vec<f64> = self.buffer.iter().map(|t| t.reward).collect();
        let dones: Vec<bool> = self.buffer.iter().map(|t| t.done).collect();
        let adv = gae_advantages(&rewards, &old_values, &dones, self.hp.gamma, self.hp.gae_lambda);
        let (mut actor_sum, mut critic_sum, mut ent_sum, mut count) = (0.0, 0.0, 0.0, 0usize);
        for _ in 0..self.hp.epochs {
            for batch in self.minibatches() {
                for a in 0..self.actors.len() {
                    let steps: Vec<&ActorStep> = batch.iter().flat_map(|&k| &self.buffer[k].steps[a]).collect();
                    let mut step_adv: Vec<f64> = batch
                        .iter()
                        .flat_map(|&k| {
                            let base = adv[k];
                            self.buffer[k].steps[a].iter().map(move |s| base + s.reward_offset)
                        })
                        .collect();
                    if self.hp.normalize_advantages && step_adv.len() > 1 {
                        standardize(&mut step_adv);
                    }
                    let cols: Vec<DVector<f64>> = steps.iter().map(|s| s.input.clone()).collect();
                    let targets = PolicyTargets {
                        bits: steps.iter().map(|s| s.bits.clone()).collect(),
                        old_log_probs: steps.iter().map(|s| s.old_log_probs.clone()).collect(),
                        advantages: step_adv,
                        active: steps.iter().map(|s| s.active.clone()).collect(),
                    };
                    let (hp, actor) = (&self.hp, &mut self.actors[a]);
                    let (h, g) = through(
                        &actor.params,
                        &DMatrix::from_columns(&cols),
                        hp.dropout,
                        &mut self.rng,
                        |out| match hp.algorithm {
                            Algorithm::A2c => a2c_actor_head(out, &targets, hp.entropy_coef),
                            _ => ppo_actor_head(out, &targets, hp.clip_pi, hp.entropy_coef),
                        },
                    )?;
                    actor.opt.update(&mut actor.params, &g, lr);
                    actor_sum += h.loss;
                    ent_sum += h.entropy;
                }
                let cols: Vec<DVector<f64>> = batch.iter().map(|&k| self.buffer[k].critic_input.clone()).collect();
                let targets = ValueTargets {
                    old_values: batch.iter().map(|&k| old_values[k]).collect(),
                    targets: batch.iter().map(|&k| old_values[k] + adv[k]).collect(),
                };
                let critic = self.critic.as_mut().expect("actor-critic learner has a critic");
                let hp = &self.hp;
                let (h, g) = through(
                    &critic.params,
                    &DMatrix::from_columns(&cols),
                    hp.dropout,
                    &mut self.rng,
                    |out| match hp.algorithm {
                        Algorithm::A2c => mse_critic_head(out, &targets),
                        _ => ppo_critic_head(out, &targets, hp.clip_v),
                    },
                )?;
                critic.opt.update(&mut critic.params, &g, lr);
                critic_sum += h.loss;
                count += 1;
            }
        }
        self.check_finite()?;
        let n = count as f64;
        Ok((actor_sum / n, critic_sum / n, ent_sum / n / self.actors.len() as f64))
    }

    /// Targets use the parameters frozen at the start of the round.
    fn update_q(&mut self, lr: f64) -> Result<(f64, f64, f64), LearnError> {
        let frozen = self.actors[0].params.clone();
        let n = self.buffer.len();
        let mut targets = Vec::with_capacity(n);
        for t in 0..n {
            let tr = &self.buffer[t];
            let mut y = tr.reward;
            if !(tr.done || t + 1 == n) && self.hp.gamma > 0.0 {
                let next = self.buffer[t + 1].choices.as_ref().ok_or(LearnError::Shape {
                    what: "Q-learning choices",
                    expected: 1,
                    got: 0,
                })?;
                let q = frozen.forward(&next.inputs)?;
                let best = (0..q.ncols())
                    .map(|c| q_max(&q, c, &next.allowed[c]).0)
                    .fold(f64::NEG_INFINITY, f64::max);
                y += self.hp.gamma * best;
            }
            targets.push(y);
        }
        let (mut sum, mut count) = (0.0, 0usize);
        for _ in 0..self.hp.epochs {
            for batch in self.minibatches() {
                // the executed decision vector comes first
                let cols: Vec<DVector<f64>> = batch
                    .iter()
                    .map(|&k| self.buffer[k].steps[0][0].input.clone())
                    .collect();
                let actions: Vec<Vec<bool>> = batch.iter().map(|&k| self.buffer[k].steps[0][0].bits.clone()).collect();
                let ys: Vec<f64> = batch.iter().map(|&k| targets[k]).collect();
                let net = &mut self.actors[0];
                let (h, g) = through(
                    &net.params,
                    &DMatrix::from_columns(&cols),
                    self.hp.dropout,
                    &mut self.rng,
                    |out| dqn_head(out, &actions, &ys),
                )?;
                net.opt.update(&mut net.params, &g, lr);
                sum += h.loss;
                count += 1;
            }
        }
        self.check_finite()?;
        Ok((sum / count as f64, 0.0, 0.0))
    }

    fn check_finite(&self) -> Result<(), LearnError> {
        let ok = self.actors.iter().chain(&self.critic).all(|n| n.params.is_finite());
        if ok {
            Ok(())
        } else {
            Err(LearnError::NonFinite { what: "parameters" })
        }
    }

    pub fn value(&self, input: &DVector<f64>) -> Result<Option<f64>, LearnError> {
        match &self.critic {
            Some(c) => Ok(Some(c.params.forward_one(input)?[0])),
            None => Ok(None),
        }
    }

    /// Versioned little-endian dump: algorithm, round counter, then every
    /// network as layer sizes, row-major weights with biases, and the Adam
    /// step counter with both moments in the same layout.
    pub fn save(&self, mut w: impl Write) -> Result<(), LearnError> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
        w.write_u8(self.hp.algorithm.tag())?;
        w.write_u64::<LittleEndian>(self.rounds as u64)?;
        w.write_u32::<LittleEndian>(self.actors.len() as u32)?;
        w.write_u8(u8::from(self.critic.is_some()))?;
        for net in self.actors.iter().chain(&self.critic) {
            let sizes = net.params.sizes();
            w.write_u32::<LittleEndian>(sizes.len() as u32)?;
            for s in sizes {
                w.write_u32::<LittleEndian>(s as u32)?;
            }
            for v in net
                .params
                .flat()
                .into_iter()
                .chain(net.opt.m.flat())
                .chain(net.opt.v.flat())
            {
                w.write_f64::<LittleEndian>(v)?;
            }
            w.write_u64::<LittleEndian>(net.opt.step)?;
        }
        Ok(())
    }

    /// Restores a [`Learner::save`] dump into a learner built with the same
    /// shapes; the buffer starts empty.
    pub fn load(&mut self, mut r: impl Read) -> Result<(), LearnError> {
        let bad = |m: String| LearnError::Checkpoint(m);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("version {version}, expected {CHECKPOINT_VERSION}")));
        }
        let algo = Algorithm::from_tag(r.read_u8()?).ok_or_else(|| bad("unknown algorithm".into()))?;
        if algo != self.hp.algorithm {
            return Err(bad(format!("trained with {algo}, loading into {}", self.hp.algorithm)));
        }
        let rounds = r.read_u64::<LittleEndian>()? as usize;
        let actors = r.read_u32::<LittleEndian>()? as usize;
        let has_critic = r.read_u8()? == 1;
        if actors != self.actors.len() || has_critic != self.critic.is_some() {
            return Err(bad("network count differs".into()));
        }
        let mut loaded = Vec::new();
        for net in self.actors.iter().chain(&self.critic) {
            let layers = r.read_u32::<LittleEndian>()? as usize;
            let sizes = (0..layers)
                .map(|_| r.read_u32::<LittleEndian>().map(|s| s as usize))
                .collect::<Result<Vec<_>, _>>()?;
            if sizes != net.params.sizes() {
                return Err(bad(format!("layer sizes {sizes:?}, expected {:?}", net.params.sizes())));
            }
            let n = net.params.num_params();
            let read = |r: &mut dyn Read| -> Result<Mlp, LearnError> {
                let v = (0..n)
                    .map(|_| r.read_f64::<LittleEndian>())
                    .collect::<Result<Vec<_>, _>>()?;
                let mut m = net.params.zeros_like();
                m.set_flat(&v)?;
                Ok(m)
            };
            let params = read(&mut r)?;
            let m = read(&mut r)?;
            let v = read(&mut r)?;
            let step = r.read_u64::<LittleEndian>()?;
            let mut opt = Adam::new(&params);
            opt.m = m;
            opt.v = v;
            opt.step = step;
            loaded.push(Net { params, opt });
        }
        let critic = if has_critic { loaded.pop() } else { None };
        self.actors = loaded;
        self.critic = critic;
        self.rounds = rounds;
        self.clear();
        Ok(())
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"FEDG";
const CHECKPOINT_VERSION: u32 = 1;

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    for x in v.iter_mut() {
        *x = (*x - mean) / sd;
    }
}
