use std::fmt;
use std::str::FromStr;

use crate::adam::LrSchedule;
use crate::LearnError;

/// Update rule of the learning stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    #[default]
    Ppo,
    A2c,
    Dqn,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Self::Ppo => "ppo",
            Self::A2c => "a2c",
            Self::Dqn => "dqn",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Self::Ppo => 0,
            Self::A2c => 1,
            Self::Dqn => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        [Self::Ppo, Self::A2c, Self::Dqn].into_iter().find(|a| a.tag() == tag)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, LearnError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ppo" => Ok(Self::Ppo),
            "a2c" => Ok(Self::A2c),
            "dqn" => Ok(Self::Dqn),
            other => Err(LearnError::Hyperparams {
                key: "algorithm",
                message: format!("unknown algorithm `{other}`"),
            }),
        }
    }
}

/// Names accepted by [`Hyperparams::set`].
pub const KEYS: &[&str] = &[
    "algorithm",
    "gamma",
    "gae_lambda",
    "clip_pi",
    "clip_v",
    "entropy_coef",
    "batch_size",
    "lr_initial",
    "lr_final",
    "lr_decay_rounds",
    "update_period",
    "epochs",
    "hidden",
    "dropout",
    "groups",
    "reward_scale",
    "normalize_advantages",
    "epsilon_start",
    "epsilon_end",
    "epsilon_decay_rounds",
    "rng_seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_pi: f64,
    pub clip_v: f64,
    pub entropy_coef: f64,
    pub batch_size: usize,
    pub lr: LrSchedule,
    /// Episodes collected between update rounds.
    pub update_period: usize,
    /// Passes over the buffer per update round.
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    /// Caching/downloading groups sampled per slot.
    pub groups: usize,
    /// Multiplies the slot reward before it reaches the learner.
    pub reward_scale: f64,
    /// Standardize advantages within each minibatch.
    pub normalize_advantages: bool,
    /// Exploration rate of the Q-learning ablation, decayed linearly over
    /// `epsilon_decay_rounds` update rounds.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_rounds: usize,
    pub rng_seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ppo,
            gamma: 0.8,
            gae_lambda: 0.95,
            clip_pi: 0.2,
            clip_v: 0.2,
            entropy_coef: 0.01,
            batch_size: 256,
            lr: LrSchedule::default(),
            update_period: 4,
            epochs: 4,
            hidden: vec![256; 4],
            dropout: 0.0,
            groups: freshedge_core::sdr::DEFAULT_SAMPLES,
            reward_scale: 1e-10,
            normalize_advantages: true,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_rounds: 20,
            rng_seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |key: &'static str, message: &str| {
            Err(LearnError::Hyperparams {
                key,
                message: message.into(),
            })
        };
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) {
            return bad("gamma", "must lie in [0, 1]");
        }
        if !unit(self.gae_lambda) {
            return bad("gae_lambda", "must lie in [0, 1]");
        }
        if !unit(self.clip_pi) {
            return bad("clip_pi", "must lie in [0, 1]");
        }
        if self.clip_v.is_nan() || self.clip_v <= 0.0 {
            return bad("clip_v", "must be positive");
        }
        if self.entropy_coef.is_nan() || self.entropy_coef < 0.0 {
            return bad("entropy_coef", "must be nonnegative");
        }
        if self.batch_size == 0 || self.update_period == 0 || self.epochs == 0 || self.groups == 0 {
            return bad(
                "batch_size",
                "batch size, update period, epochs and groups must be positive",
            );
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", "needs at least one nonempty hidden layer");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", "must lie in [0, 1)");
        }
        if !(self.lr.initial > 0.0 && self.lr.final_ > 0.0) {
            return bad("lr", "learning rates must be positive");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale", "must be positive");
        }
        if !unit(self.epsilon_start) || !unit(self.epsilon_end) {
            return bad("epsilon", "must lie in [0, 1]");
        }
        Ok(())
    }

    /// Sets one field from its textual value. Keys are listed in [`KEYS`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), LearnError> {
        fn parse<T: FromStr>(key: &'static str, v: &str) -> Result<T, LearnError> {
            v.trim().parse().map_err(|_| LearnError::Hyperparams {
                key,
                message: format!("cannot parse {v:?}"),
            })
        }
        let key: &'static str = KEYS
            .iter()
            .find(|k| **k == key)
            .copied()
            .ok_or_else(|| LearnError::Hyperparams {
                key: "key",
                message: format!("unknown hyperparameter `{key}`"),
            })?;
        match key {
            "algorithm" => self.algorithm = value.parse()?,
            "gamma" => self.gamma = parse(key, value)?,
            "gae_lambda" => self.gae_lambda = parse(key, value)?,
            "clip_pi" => self.clip_pi = parse(key, value)?,
            "clip_v" => self.clip_v = parse(key, value)?,
            "entropy_coef" => self.entropy_coef = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr_initial" => self.lr.initial = parse(key, value)?,
            "lr_final" => self.lr.final_ = parse(key, value)?,
            "lr_decay_rounds" => self.lr.decay_rounds = parse(key, value)?,
            "update_period" => self.update_period = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "hidden" => {
                self.hidden = value
                    .split(',')
                    .map(|v| parse(key, v))
                    .collect::<Result<Vec<usize>, _>>()?
            }
            "dropout" => self.dropout = parse(key, value)?,
            "groups" => self.groups = parse(key, value)?,
            "reward_scale" => self.reward_scale = parse(key, value)?,
            "normalize_advantages" => self.normalize_advantages = parse(key, value)?,
            "epsilon_start" => self.epsilon_start = parse(key, value)?,
            "epsilon_end" => self.epsilon_end = parse(key, value)?,
            "epsilon_decay_rounds" => self.epsilon_decay_rounds = parse(key, value)?,
            _ => self.rng_seed = parse(key, value)?,
        }
        Ok(())
    }

    pub fn epsilon_at(&self, round: usize) -> f64 {
        if self.epsilon_decay_rounds == 0 {
            return self.epsilon_end;
        }
        let frac = (round as f64 / self.epsilon_decay_rounds as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}
