//! Decision policies over a slot subproblem.

mod fixed;
mod jscr;
mod oracle;
mod sdp_only;

use std::fmt;
use std::str::FromStr;

use freshedge_sdp::SolveCertificate;
use rand::RngCore;

use crate::env::SlotDecision;
use crate::lyapunov::SlotSubproblem;
use crate::{Error, Grid};

pub use fixed::{fixed_decide, FixedPolicy, Overflow};
pub use jscr::{jscr_decide, jscr_improve, JscrPolicy, MAX_ROUNDS};
pub use oracle::{oracle_solve_p2, OraclePolicy, ENUMERATION_LIMIT};
pub use sdp_only::{round_relaxed, sdp_only_decide, SdpOnlyPolicy};

/// Binary part of a slot decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binary {
    pub z: Vec<bool>,
    pub x: Grid<bool>,
}

#[derive(Debug, Clone)]
pub struct Decided {
    pub decision: SlotDecision,
    /// Slot objective of the decision.
    pub value: f64,
    /// Certificate of the relaxation solved on the way, if any.
    pub diagnostics: Option<SolveCertificate>,
}

impl Decided {
    pub fn from_binary(sub: &SlotSubproblem, b: &Binary, diagnostics: Option<SolveCertificate>) -> Result<Self, Error> {
        Ok(Self {
            value: sub.p2_value(&b.z, &b.x)?,
            decision: sub.decision(&b.z, &b.x),
            diagnostics,
        })
    }
}

pub trait Policy {
    fn name(&self) -> &str;
    fn decide(&mut self, sub: &SlotSubproblem, rng: &mut dyn RngCore) -> Result<Decided, Error>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyKind {
    Oiodrl,
    Optimal,
    PpoOnly,
    SdpOnly,
    Jscr,
    Fixed(Vec<usize>),
}

impl PolicyKind {
    pub const ALL: [&'static str; 6] = ["oiodrl", "optimal", "ppo-only", "sdp-only", "jscr", "fixed"];

    pub fn label(&self) -> &'static str {
        match self {
            Self::Oiodrl => "oiodrl",
            Self::Optimal => "optimal",
            Self::PpoOnly => "ppo-only",
            Self::SdpOnly => "sdp-only",
            Self::Jscr => "jscr",
            Self::Fixed(_) => "fixed",
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, Self::Oiodrl | Self::PpoOnly)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(set) => {
                let s: Vec<String> = set.iter().map(|j| j.to_string()).collect();
                write!(f, "fixed:{}", s.join(","))
            }
            other => f.write_str(other.label()),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    /// `fixed` alone caches services 0 and 1; `fixed:3,4` names the set.
    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = |message: String| Error::Config {
            key: "policy".into(),
            message,
        };
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        let kind = match head.trim().to_ascii_lowercase().as_str() {
            "oiodrl" => Self::Oiodrl,
            "optimal" => Self::Optimal,
            "ppo-only" | "ppo_only" => Self::PpoOnly,
            "sdp-only" | "sdp_only" => Self::SdpOnly,
            "jscr" => Self::Jscr,
            "fixed" => {
                let set = match tail {
                    None => vec![0, 1],
                    Some(t) => t
                        .split(',')
                        .map(|v| {
                            v.trim()
                                .parse::<usize>()
                                .map_err(|_| bad(format!("bad service index `{v}`")))
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                };
                if set.is_empty() {
                    return Err(bad("fixed service set is empty".into()));
                }
                return Ok(Self::Fixed(set));
            }
            other => {
                return Err(bad(format!(
                    "unknown policy `{other}`, expected one of {:?}",
                    Self::ALL
                )))
            }
        };
        if tail.is_some() {
            return Err(bad(format!("policy `{head}` takes no arguments")));
        }
        Ok(kind)
    }
}

pub(crate) fn storage_used(sub: &SlotSubproblem, z: &[bool]) -> f64 {
    z.iter().zip(&sub.sizes).filter(|(z, _)| **z).map(|(_, s)| s).sum()
}


#[cfg(test)]
mod tests {
    use super::testing::random_env;
    use super::*;
    use crate::lyapunov::build_subproblem;
    use crate::rng::stream;
    use freshedge_sdp::SolverOptions;
    use rand::Rng;

    #[test]
    fn kinds_parse_and_print() {
        for name in PolicyKind::ALL {
            let k: PolicyKind = name.parse().unwrap();
            assert_eq!(k.label(), name);
        }
        assert_eq!("fixed".parse::<PolicyKind>().unwrap(), PolicyKind::Fixed(vec![0, 1]));
        let k: PolicyKind = "fixed:2,5".parse().unwrap();
        assert_eq!(k.to_string(), "fixed:2,5");
        assert!("greedy".parse::<PolicyKind>().is_err());
        assert!("fixed:".parse::<PolicyKind>().is_err());
        assert!("jscr:1".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn every_policy_output_is_feasible_and_dominated_by_the_oracle() {
        let mut rng = stream(21, "dominance");
        let opts = SolverOptions::default();
        for case in 0..200u64 {
            let users = rng.random_range(1..=4);
            let services = rng.random_range(2..=5);
            let storage = rng.random_range(6e9..20e9);
            let v = if case % 5 == 0 { 0.0 } else { 1.0 };
            let env = random_env(case, users, services, storage, v);
            let sub = build_subproblem(&env);
            let mut policies: Vec<Box<dyn Policy>> = vec![
                Box::new(OraclePolicy),
                Box::new(SdpOnlyPolicy::new(opts)),
                Box::new(JscrPolicy::new(opts)),
                Box::new(FixedPolicy::new(vec![0, 1], Overflow::DropLargest)),
            ];
            let mut values = Vec::new();
            for p in policies.iter_mut() {
                let out = p
                    .decide(&sub, &mut rng)
                    .unwrap_or_else(|e| panic!("case {case} {}: {e}", p.name()));
                env.validate(&out.decision)
                    .unwrap_or_else(|e| panic!("case {case} {}: {e}", p.name()));
                let direct = sub
                    .p2_objective(&out.decision.cache, &out.decision.offload, &out.decision.compute)
                    .unwrap();
                assert!((direct - out.value).abs() <= 1e-9 * direct.abs().max(1.0));
                values.push(out.value);
            }
            for (k, v) in values.iter().enumerate().skip(1) {
                assert!(
                    values[0] <= v + 1e-9 * v.abs().max(1.0),
                    "case {case} policy {k}: {} > {v}",
                    values[0]
                );
            }
        }
    }
}
