//! Environment and learning settings from a `key = value` file and
//! `FRESHEDGE_*` environment variables.
//!
//! Environment keys are written as they are (`lyapunov_v = 10`); learning
//! keys carry a `learn.` prefix (`learn.gamma = 0.8`). The variable for a key
//! is `FRESHEDGE_` followed by the key in upper case with dots replaced by
//! underscores, so `FRESHEDGE_LEARN_GAMMA` sets `learn.gamma`.

use std::fmt::Write as _;
use std::path::Path;

use freshedge_core::env::{parse_kv, EnvConfig, KEYS as ENV_KEYS};
use freshedge_learn::hyper::KEYS as LEARN_KEYS;
use freshedge_learn::Hyperparams;

use crate::HarnessError;

pub const ENV_PREFIX: &str = "FRESHEDGE_";
pub const LEARN_PREFIX: &str = "learn.";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    pub env: EnvConfig,
    pub hp: Hyperparams,
}

/// Every key [`Settings::set`] accepts.
pub fn all_keys() -> Vec<String> {
    ENV_KEYS
        .iter()
        .map(|k| k.to_string())
        .chain(LEARN_KEYS.iter().map(|k| format!("{LEARN_PREFIX}{k}")))
        .collect()
}

pub fn env_var_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "_").to_ascii_uppercase())
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        match key.strip_prefix(LEARN_PREFIX) {
            Some(k) => self.hp.set(k, value)?,
            None => self.env.set(key, value)?,
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env.validate()?;
        self.hp.validate()?;
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self, HarnessError> {
        let mut s = Self::default();
        for (k, v) in parse_kv(text)? {
            s.set(&k, &v)?;
        }
        Ok(s)
    }

    /// Defaults, then the file if given, then the environment variables.
    pub fn load(path: Option<&Path>, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self, HarnessError> {
        let mut s = match path {
            Some(p) => Self::from_kv_str(&std::fs::read_to_string(p)?)?,
            None => Self::default(),
        };
        s.apply_overrides(vars)?;
        s.validate()?;
        Ok(s)
    }

    /// Applies every `FRESHEDGE_*` variable; an unknown name is an error.
    /// Returns the keys that were set.
    pub fn apply_overrides(
        &mut self,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Vec<String>, HarnessError> {
        let keys = all_keys();
        let mut set = Vec::new();
        for (var, value) in vars {
            if !var.starts_with(ENV_PREFIX) {
                continue;
            }
            let key = keys
                .iter()
                .find(|k| env_var_name(k) == var)
                .ok_or_else(|| HarnessError::EnvVar {
                    var: var.clone(),
                    message: "does not name a setting".into(),
                })?;
            self.set(key, &value).map_err(|e| HarnessError::EnvVar {
                var: var.clone(),
                message: e.to_string(),
            })?;
            set.push(key.clone());
        }
        Ok(set)
    }

    /// Canonical text accepted by [`Settings::from_kv_str`].
    pub fn to_kv_string(&self) -> String {
        let mut s = self.env.to_kv_string();
        let h = &self.hp;
        let hidden: Vec<String> = h.hidden.iter().map(|v| v.to_string()).collect();
        let lines: [(&str, String); 21] = [
            ("algorithm", h.algorithm.to_string()),
            ("gamma", h.gamma.to_string()),
            ("gae_lambda", h.gae_lambda.to_string()),
            ("clip_pi", h.clip_pi.to_string()),
            ("clip_v", h.clip_v.to_string()),
            ("entropy_coef", h.entropy_coef.to_string()),
            ("batch_size", h.batch_size.to_string()),
            ("lr_initial", h.lr.initial.to_string()),
            ("lr_final", h.lr.final_.to_string()),
            ("lr_decay_rounds", h.lr.decay_rounds.to_string()),
            ("update_period", h.update_period.to_string()),
            ("epochs", h.epochs.to_string()),
            ("hidden", hidden.join(",")),
            ("dropout", h.dropout.to_string()),
            ("groups", h.groups.to_string()),
            ("reward_scale", h.reward_scale.to_string()),
            ("normalize_advantages", h.normalize_advantages.to_string()),
            ("epsilon_start", h.epsilon_start.to_string()),
            ("epsilon_end", h.epsilon_end.to_string()),
            ("epsilon_decay_rounds", h.epsilon_decay_rounds.to_string()),
            ("rng_seed", h.rng_seed.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{LEARN_PREFIX}{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn text_round_trip_covers_every_key() {
        let mut s = Settings::default();
        s.set("lyapunov_v", "10").unwrap();
        s.set("learn.hidden", "8,8").unwrap();
        s.set("learn.algorithm", "dqn").unwrap();
        let text = s.to_kv_string();
        assert_eq!(Settings::from_kv_str(&text).unwrap(), s);
        for key in all_keys() {
            assert!(text.contains(&format!("{key} = ")), "{key}");
        }
    }

    #[test]
    fn variables_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.conf");
        std::fs::write(&path, "horizon = 10\nlearn.gamma = 0.5\n").unwrap();
        let s = Settings::load(
            Some(&path),
            vars(&[
                ("FRESHEDGE_HORIZON", "20"),
                ("FRESHEDGE_LEARN_GAMMA", "0.9"),
                ("PATH", "/bin"),
            ]),
        )
        .unwrap();
        assert_eq!(s.env.horizon, 20);
        assert_eq!(s.hp.gamma, 0.9);
        assert_eq!(env_var_name("learn.clip_pi"), "FRESHEDGE_LEARN_CLIP_PI");
    }

    #[test]
    fn unknown_or_bad_settings_are_errors() {
        assert!(Settings::from_kv_str("colour = red").is_err());
        assert!(Settings::from_kv_str("learn.momentum = 1").is_err());
        assert!(Settings::load(None, vars(&[("FRESHEDGE_HORIZONN", "3")])).is_err());
        assert!(Settings::load(None, vars(&[("FRESHEDGE_LEARN_GAMMA", "2")])).is_err());
    }
}
