use std::fmt::Write as _;

use crate::Error;

/// Static system parameters. Sizes are in bytes, rates in bytes/s or
/// cycles/s, bandwidths in Hz. Spectral efficiencies are given in
/// bits/s/Hz and converted to bytes once by [`EnvConfig::eta_up_bytes`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub num_users: usize,
    pub num_services: usize,
    pub horizon: usize,
    /// seconds
    pub slot_length: f64,
    pub storage_capacity: f64,
    pub compute_capacity: f64,
    pub uplink_bw: f64,
    pub downlink_bw: f64,
    pub es_cs_rate: f64,
    pub cloud_rate_per_task: f64,
    /// One value per user, or a single value shared by all.
    pub spectral_eff_up: Vec<f64>,
    pub spectral_eff_down: Vec<f64>,
    pub lambda_d: f64,
    pub lambda_c: f64,
    pub lambda_p: f64,
    pub lambda_s: f64,
    pub lyapunov_v: f64,
    /// Explicit per-service thresholds; drawn from `aoi_threshold_range` when empty.
    pub aoi_thresholds: Vec<f64>,
    pub aoi_threshold_range: (f64, f64),
    pub service_size_range: (f64, f64),
    pub purchase_price_range: (f64, f64),
    pub refresh_price_ratio: f64,
    pub task_size_mean: f64,
    pub task_size_std: f64,
    pub task_size_range: (f64, f64),
    pub download_ratio: f64,
    pub cycles_per_byte: f64,
    pub cs_update_prob: f64,
    pub rng_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_users: 5,
            num_services: 10,
            horizon: 1152,
            slot_length: 900.0,
            storage_capacity: 16e9,
            compute_capacity: 5.4e9,
            uplink_bw: 100e6,
            downlink_bw: 100e6,
            es_cs_rate: 25e6,
            cloud_rate_per_task: 2e9,
            spectral_eff_up: vec![3.0],
            spectral_eff_down: vec![4.0],
            lambda_d: 0.1,
            lambda_c: 1.0,
            lambda_p: 1.0,
            lambda_s: 10.0,
            lyapunov_v: 1.0,
            aoi_thresholds: Vec::new(),
            aoi_threshold_range: (5.0, 10.0),
            service_size_range: (2e9, 6e9),
            purchase_price_range: (1.0, 50.0),
            refresh_price_ratio: 0.1,
            task_size_mean: 1.25e9,
            task_size_std: 0.375e9,
            task_size_range: (5e8, 2e9),
            download_ratio: 0.1,
            cycles_per_byte: 330.0,
            cs_update_prob: 0.25,
            rng_seed: 1,
        }
    }
}

pub const KEYS: &[&str] = &[
    "num_users",
    "num_services",
    "horizon",
    "slot_length",
    "storage_capacity",
    "compute_capacity",
    "uplink_bw",
    "downlink_bw",
    "es_cs_rate",
    "cloud_rate_per_task",
    "spectral_eff_up",
    "spectral_eff_down",
    "lambda_d",
    "lambda_c",
    "lambda_p",
    "lambda_s",
    "lyapunov_v",
    "aoi_thresholds",
    "aoi_threshold_range",
    "service_size_range",
    "purchase_price_range",
    "refresh_price_ratio",
    "task_size_mean",
    "task_size_std",
    "task_size_range",
    "download_ratio",
    "cycles_per_byte",
    "cs_update_prob",
    "rng_seed",
];

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn float(key: &str, v: &str) -> Result<f64, Error> {
    v.trim()
        .parse::<f64>()
        .map_err(|e| bad(key, format!("{v:?} is not a number ({e})")))
}

fn count(key: &str, v: &str) -> Result<usize, Error> {
    v.trim()
        .parse::<usize>()
        .map_err(|e| bad(key, format!("{v:?} is not a count ({e})")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>, Error> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| float(key, s)).collect()
}

fn pair(key: &str, v: &str) -> Result<(f64, f64), Error> {
    match list(key, v)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(bad(key, "expected `low,high`")),
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl EnvConfig {
    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        match key {
            "num_users" => self.num_users = count(key, value)?,
            "num_services" => self.num_services = count(key, value)?,
            "horizon" => self.horizon = count(key, value)?,
            "slot_length" => self.slot_length = float(key, value)?,
            "storage_capacity" => self.storage_capacity = float(key, value)?,
            "compute_capacity" => self.compute_capacity = float(key, value)?,
            "uplink_bw" => self.uplink_bw = float(key, value)?,
            "downlink_bw" => self.downlink_bw = float(key, value)?,
            "es_cs_rate" => self.es_cs_rate = float(key, value)?,
            "cloud_rate_per_task" => self.cloud_rate_per_task = float(key, value)?,
            "spectral_eff_up" => self.spectral_eff_up = list(key, value)?,
            "spectral_eff_down" => self.spectral_eff_down = list(key, value)?,
            "lambda_d" => self.lambda_d = float(key, value)?,
            "lambda_c" => self.lambda_c = float(key, value)?,
            "lambda_p" => self.lambda_p = float(key, value)?,
            "lambda_s" => self.lambda_s = float(key, value)?,
            "lyapunov_v" => self.lyapunov_v = float(key, value)?,
            "aoi_thresholds" => self.aoi_thresholds = list(key, value)?,
            "aoi_threshold_range" => self.aoi_threshold_range = pair(key, value)?,
            "service_size_range" => self.service_size_range = pair(key, value)?,
            "purchase_price_range" => self.purchase_price_range = pair(key, value)?,
            "refresh_price_ratio" => self.refresh_price_ratio = float(key, value)?,
            "task_size_mean" => self.task_size_mean = float(key, value)?,
            "task_size_std" => self.task_size_std = float(key, value)?,
            "task_size_range" => self.task_size_range = pair(key, value)?,
            "download_ratio" => self.download_ratio = float(key, value)?,
            "cycles_per_byte" => self.cycles_per_byte = float(key, value)?,
            "cs_update_prob" => self.cs_update_prob = float(key, value)?,
            "rng_seed" => {
                self.rng_seed = value
                    .trim()
                    .parse()
                    .map_err(|e| bad(key, format!("{value:?} is not a seed ({e})")))?
            }
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    /// Parses a `key = value` file on top of the defaults. Blank lines and
    /// `#` comments are ignored; unknown keys are errors.
    pub fn from_kv_str(text: &str) -> Result<Self, Error> {
        let mut cfg = Self::default();
        for (key, value) in parse_kv(text)? {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical `key = value` form accepted by [`EnvConfig::from_kv_str`].
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let r = |p: (f64, f64)| format!("{},{}", p.0, p.1);
        let _ = writeln!(s, "num_users = {}", self.num_users);
        let _ = writeln!(s, "num_services = {}", self.num_services);
        let _ = writeln!(s, "horizon = {}", self.horizon);
        let _ = writeln!(s, "slot_length = {}", self.slot_length);
        let _ = writeln!(s, "storage_capacity = {}", self.storage_capacity);
        let _ = writeln!(s, "compute_capacity = {}", self.compute_capacity);
        let _ = writeln!(s, "uplink_bw = {}", self.uplink_bw);
        let _ = writeln!(s, "downlink_bw = {}", self.downlink_bw);
        let _ = writeln!(s, "es_cs_rate = {}", self.es_cs_rate);
        let _ = writeln!(s, "cloud_rate_per_task = {}", self.cloud_rate_per_task);
        let _ = writeln!(s, "spectral_eff_up = {}", fmt_list(&self.spectral_eff_up));
        let _ = writeln!(s, "spectral_eff_down = {}", fmt_list(&self.spectral_eff_down));
        let _ = writeln!(s, "lambda_d = {}", self.lambda_d);
        let _ = writeln!(s, "lambda_c = {}", self.lambda_c);
        let _ = writeln!(s, "lambda_p = {}", self.lambda_p);
        let _ = writeln!(s, "lambda_s = {}", self.lambda_s);
        let _ = writeln!(s, "lyapunov_v = {}", self.lyapunov_v);
        let _ = writeln!(s, "aoi_thresholds = {}", fmt_list(&self.aoi_thresholds));
        let _ = writeln!(s, "aoi_threshold_range = {}", r(self.aoi_threshold_range));
        let _ = writeln!(s, "service_size_range = {}", r(self.service_size_range));
        let _ = writeln!(s, "purchase_price_range = {}", r(self.purchase_price_range));
        let _ = writeln!(s, "refresh_price_ratio = {}", self.refresh_price_ratio);
        let _ = writeln!(s, "task_size_mean = {}", self.task_size_mean);
        let _ = writeln!(s, "task_size_std = {}", self.task_size_std);
        let _ = writeln!(s, "task_size_range = {}", r(self.task_size_range));
        let _ = writeln!(s, "download_ratio = {}", self.download_ratio);
        let _ = writeln!(s, "cycles_per_byte = {}", self.cycles_per_byte);
        let _ = writeln!(s, "cs_update_prob = {}", self.cs_update_prob);
        let _ = writeln!(s, "rng_seed = {}", self.rng_seed);
        s
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.num_users == 0 {
            return Err(bad("num_users", "must be at least 1"));
        }
        if self.num_services == 0 {
            return Err(bad("num_services", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(bad("horizon", "must be at least 1"));
        }
        let positive = [
            ("slot_length", self.slot_length),
            ("storage_capacity", self.storage_capacity),
            ("compute_capacity", self.compute_capacity),
            ("uplink_bw", self.uplink_bw),
            ("downlink_bw", self.downlink_bw),
            ("es_cs_rate", self.es_cs_rate),
            ("cloud_rate_per_task", self.cloud_rate_per_task),
            ("task_size_mean", self.task_size_mean),
            ("task_size_std", self.task_size_std),
            ("cycles_per_byte", self.cycles_per_byte),
            ("download_ratio", self.download_ratio),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(k, format!("must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("lambda_d", self.lambda_d),
            ("lambda_c", self.lambda_c),
            ("lambda_p", self.lambda_p),
            ("lambda_s", self.lambda_s),
            ("lyapunov_v", self.lyapunov_v),
        ];
        for (k, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(k, format!("must be nonnegative, got {v}")));
            }
        }
        for (k, (lo, hi)) in [
            ("service_size_range", self.service_size_range),
            ("purchase_price_range", self.purchase_price_range),
            ("task_size_range", self.task_size_range),
            ("aoi_threshold_range", self.aoi_threshold_range),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(bad(k, format!("need 0 < low <= high, got ({lo}, {hi})")));
            }
        }
        if self.aoi_threshold_range.0 < 1.0 {
            return Err(bad("aoi_threshold_range", "thresholds must be at least 1 slot"));
        }
        if !(0.0..=1.0).contains(&self.refresh_price_ratio) {
            return Err(bad("refresh_price_ratio", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.cs_update_prob) {
            return Err(bad("cs_update_prob", "must lie in [0, 1]"));
        }
        for (k, v) in [
            ("spectral_eff_up", &self.spectral_eff_up),
            ("spectral_eff_down", &self.spectral_eff_down),
        ] {
            if v.len() != 1 && v.len() != self.num_users {
                return Err(bad(k, "give one value or one per user"));
            }
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(bad(k, "must be positive"));
            }
        }
        if !self.aoi_thresholds.is_empty() {
            if self.aoi_thresholds.len() != self.num_services {
                return Err(bad("aoi_thresholds", "need one value per service"));
            }
            if self.aoi_thresholds.iter().any(|a| a.is_nan() || *a < 1.0) {
                return Err(bad("aoi_thresholds", "thresholds must be at least 1 slot"));
            }
        }
        Ok(())
    }

    fn per_user(v: &[f64], i: usize) -> f64 {
        if v.len() == 1 {
            v[0]
        } else {
            v[i]
        }
    }

    /// Uplink spectral efficiency of user `i` in bytes/s/Hz.
    pub fn eta_up_bytes(&self, i: usize) -> f64 {
        Self::per_user(&self.spectral_eff_up, i) / 8.0
    }

    pub fn eta_down_bytes(&self, i: usize) -> f64 {
        Self::per_user(&self.spectral_eff_down, i) / 8.0
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(&format!("line {}", n + 1), "expected `key = value`"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_text() {
        let cfg = EnvConfig {
            aoi_thresholds: (0..10).map(|j| 5.0 + j as f64 / 2.0).collect(),
            spectral_eff_up: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            ..EnvConfig::default()
        };
        let back = EnvConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = EnvConfig::from_kv_str("num_users = 3\nstorage = 5\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "storage"));
    }

    #[test]
    fn invariants_are_checked() {
        assert!(EnvConfig::from_kv_str("num_users = 0").is_err());
        assert!(EnvConfig::from_kv_str("cs_update_prob = 1.5").is_err());
        assert!(EnvConfig::from_kv_str("compute_capacity = -1").is_err());
        assert!(EnvConfig::from_kv_str("spectral_eff_up = 1,2").is_err());
        assert!(EnvConfig::from_kv_str("aoi_thresholds = 0.5,6,6,6,6,6,6,6,6,6").is_err());
    }

    #[test]
    fn spectral_efficiency_is_converted_to_bytes() {
        let cfg = EnvConfig::default();
        assert_eq!(cfg.eta_up_bytes(3), 3.0 / 8.0);
        assert_eq!(cfg.eta_down_bytes(0), 0.5);
    }
}
