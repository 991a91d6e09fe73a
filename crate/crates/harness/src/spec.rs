//! What to run: settings, policies, one sweep axis and seeds.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use freshedge_core::env::EnvConfig;
use freshedge_core::policy::PolicyKind;
use freshedge_learn::Hyperparams;

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepAxis {
    #[default]
    None,
    /// Lyapunov weight.
    V,
    /// Edge computing capacity, cycles/s.
    F,
    /// Edge storage capacity, bytes.
    S,
    /// Storage in bytes, with computing capacity scaled by the same factor
    /// relative to the base configuration.
    SWithProportionalF,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::V => "V",
            Self::F => "F",
            Self::S => "S",
            Self::SWithProportionalF => "S_with_proportional_F",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &EnvConfig, value: f64) -> EnvConfig {
        let mut c = base.clone();
        match self {
            Self::None => {}
            Self::V => c.lyapunov_v = value,
            Self::F => c.compute_capacity = value,
            Self::S => c.storage_capacity = value,
            Self::SWithProportionalF => {
                c.compute_capacity = base.compute_capacity * value / base.storage_capacity;
                c.storage_capacity = value;
            }
        }
        c
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "v" => Ok(Self::V),
            "f" => Ok(Self::F),
            "s" => Ok(Self::S),
            "s_with_proportional_f" | "sf" => Ok(Self::SWithProportionalF),
            other => Err(HarnessError::Spec(format!(
                "unknown sweep axis `{other}`, expected none, V, F, S or S_with_proportional_F"
            ))),
        }
    }
}

/// `axis=v1,v2,...`
pub fn parse_sweep(s: &str) -> Result<(SweepAxis, Vec<f64>), HarnessError> {
    let (axis, values) = s
        .split_once('=')
        .ok_or_else(|| HarnessError::Spec(format!("sweep `{s}` is not `axis=v1,v2,...`")))?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| HarnessError::Spec(format!("sweep value `{v}` is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((axis.parse()?, values))
}

/// Source of the parameters of learned policies.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnedSource {
    Checkpoint(PathBuf),
    /// Train before running, on training seeds disjoint from the run seeds.
    Train(TrainPlan),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    pub rounds: usize,
    /// Episode length during training; the run horizon when absent.
    pub horizon: Option<usize>,
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            rounds: 100,
            horizon: None,
            eval_every: 1,
            eval_episodes: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub env: EnvConfig,
    pub policies: Vec<PolicyKind>,
    pub hp: Hyperparams,
    pub sweep: SweepAxis,
    /// Ignored when `sweep` is `None`.
    pub values: Vec<f64>,
    pub replications: usize,
    pub out: PathBuf,
    pub learned: LearnedSource,
}

impl ExperimentSpec {
    pub fn new(env: EnvConfig, policies: Vec<PolicyKind>, out: impl Into<PathBuf>) -> Self {
        Self {
            env,
            policies,
            hp: Hyperparams::default(),
            sweep: SweepAxis::None,
            values: Vec::new(),
            replications: 1,
            out: out.into(),
            learned: LearnedSource::Train(TrainPlan::default()),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Spec(m.into()));
        if self.policies.is_empty() {
            return bad("no policies");
        }
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.sweep != SweepAxis::None {
            if self.values.is_empty() {
                return bad("sweep has no values");
            }
            if self.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return bad("sweep values must be positive");
            }
        }
        for c in self.configs() {
            c.validate()?;
        }
        if self.policies.iter().any(|p| p.is_learned()) {
            self.hp.validate()?;
        }
        Ok(())
    }

    /// Sweep values in order; a single `None` without a sweep.
    pub fn sweep_points(&self) -> Vec<Option<f64>> {
        match self.sweep {
            SweepAxis::None => vec![None],
            _ => self.values.iter().copied().map(Some).collect(),
        }
    }

    fn configs(&self) -> Vec<EnvConfig> {
        self.sweep_points()
            .into_iter()
            .map(|v| v.map_or_else(|| self.env.clone(), |v| self.sweep.apply(&self.env, v)))
            .collect()
    }

    /// Base seed plus replication index.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replications as u64)
            .map(|r| self.env.rng_seed.wrapping_add(r))
            .collect()
    }

    /// Every (policy, sweep value, seed) combination in output order.
    pub fn runs(&self) -> Vec<RunId> {
        let mut out = Vec::new();
        for policy in &self.policies {
            for sweep in self.sweep_points() {
                for seed in self.seeds() {
                    out.push(RunId {
                        policy: policy.clone(),
                        axis: self.sweep,
                        sweep,
                        seed,
                    });
                }
            }
        }
        out
    }

    pub fn run_config(&self, run: &RunId) -> EnvConfig {
        let mut c = match run.sweep {
            Some(v) => self.sweep.apply(&self.env, v),
            None => self.env.clone(),
        };
        c.rng_seed = run.seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunId {
    pub policy: PolicyKind,
    pub axis: SweepAxis,
    pub sweep: Option<f64>,
    pub seed: u64,
}

impl RunId {
    /// File stem, e.g. `optimal__V-0.1__seed3`.
    pub fn stem(&self) -> String {
        let policy: String = self
            .policy
            .to_string()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' })
            .collect();
        match self.sweep {
            Some(v) => format!("{policy}__{}-{v}__seed{}", self.axis, self.seed),
            None => format!("{policy}__seed{}", self.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweeps_parse_and_apply() {
        let (axis, values) = parse_sweep("V=0.1,1,10").unwrap();
        assert_eq!(axis, SweepAxis::V);
        assert_eq!(values, vec![0.1, 1.0, 10.0]);
        assert!(parse_sweep("W=1").is_err());
        assert!(parse_sweep("V").is_err());
        assert!(parse_sweep("F=fast").is_err());
        let base = EnvConfig::default();
        let c = SweepAxis::SWithProportionalF.apply(&base, 2.0 * base.storage_capacity);
        assert_eq!(c.storage_capacity, 2.0 * base.storage_capacity);
        assert!((c.compute_capacity - 2.0 * base.compute_capacity).abs() < 1e-6);
        assert_eq!(SweepAxis::F.apply(&base, 1e9).compute_capacity, 1e9);
        for a in [
            SweepAxis::None,
            SweepAxis::V,
            SweepAxis::F,
            SweepAxis::S,
            SweepAxis::SWithProportionalF,
        ] {
            assert_eq!(a.label().parse::<SweepAxis>().unwrap(), a);
        }
    }

    #[test]
    fn runs_cover_every_combination_with_consecutive_seeds() {
        let mut spec = ExperimentSpec::new(
            EnvConfig {
                rng_seed: 7,
                ..EnvConfig::default()
            },
            vec![PolicyKind::Optimal, PolicyKind::Fixed(vec![0, 1])],
            "out",
        );
        spec.sweep = SweepAxis::V;
        spec.values = vec![0.1, 10.0];
        spec.replications = 3;
        spec.validate().unwrap();
        let runs = spec.runs();
        assert_eq!(runs.len(), 12);
        assert_eq!(runs[..3].iter().map(|r| r.seed).collect::<Vec<_>>(), vec![7, 8, 9]);
        assert_eq!(runs[1].stem(), "optimal__V-0.1__seed8");
        assert_eq!(runs[11].stem(), "fixed-0-1__V-10__seed9");
        assert_eq!(spec.run_config(&runs[1]).lyapunov_v, 0.1);
        assert_eq!(spec.run_config(&runs[1]).rng_seed, 8);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = ExperimentSpec::new(EnvConfig::default(), vec![PolicyKind::Optimal], "out");
        spec.replications = 0;
        assert!(spec.validate().is_err());
        spec.replications = 1;
        spec.sweep = SweepAxis::F;
        spec.values = vec![1e9, -1.0];
        assert!(spec.validate().is_err());
        spec.values = vec![];
        assert!(spec.validate().is_err());
        spec.policies.clear();
        assert!(spec.validate().is_err());
    }
}
