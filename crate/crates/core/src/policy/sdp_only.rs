//! Relaxation followed by threshold rounding.

use freshedge_sdp::SolverOptions;
use rand::{Rng, RngCore};

use super::{Binary, Decided, Policy};
use crate::lyapunov::SlotSubproblem;
use crate::sdr::{relaxed_caching, repair, RelaxedDecisions};
use crate::{Error, Grid};

/// Rounds relaxed values at `threshold` (a value equal to it rounds up),
/// repairs storage by random removal and clears `x` wherever `z = 0` or the
/// user did not request the service.
pub fn round_relaxed(
    sub: &SlotSubproblem,
    rel: &RelaxedDecisions,
    threshold: f64,
    rng: &mut (impl Rng + ?Sized),
) -> Binary {
    let mut z: Vec<bool> = rel.z_prob.iter().map(|&p| p >= threshold).collect();
    repair(&mut z, rng, &sub.sizes, sub.storage);
    let x = Grid::from_fn(sub.num_users(), sub.num_services(), |i, j| {
        rel.x_prob[(i, j)] >= threshold && z[j] && sub.tasks.is_present(i, j)
    });
    Binary { z, x }
}

pub fn sdp_only_decide(
    sub: &SlotSubproblem,
    opts: &SolverOptions,
    rng: &mut (impl Rng + ?Sized),
) -> Result<Decided, Error> {
    let (rel, sol) = relaxed_caching(sub, opts)?;
    let b = round_relaxed(sub, &rel, 0.5, rng);
    Decided::from_binary(sub, &b, sol.certificate)
}

#[derive(Debug, Clone)]
pub struct SdpOnlyPolicy {
    pub opts: SolverOptions,
}

impl SdpOnlyPolicy {
    pub fn new(opts: SolverOptions) -> Self {
        Self { opts }
    }
}

impl Policy for SdpOnlyPolicy {
    fn name(&self) -> &str {
        "sdp-only"
    }

    fn decide(&mut self, sub: &SlotSubproblem, rng: &mut dyn RngCore) -> Result<Decided, Error> {
        sdp_only_decide(sub, &self.opts, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::build_subproblem;
    use crate::policy::oracle_solve_p2;
    use crate::policy::testing::random_env;
    use crate::rng::stream;

    #[test]
    fn threshold_semantics() {
        let env = random_env(2, 2, 3, 100e9, 1.0);
        let sub = build_subproblem(&env);
        let rel = RelaxedDecisions {
            z_prob: vec![0.49, 0.5, 1.0],
            x_prob: Grid::filled(2, 3, 1.0),
        };
        let b = round_relaxed(&sub, &rel, 0.5, &mut stream(0, "r"));
        assert_eq!(b.z, vec![false, true, true]);
        for (i, j, &x) in b.x.iter() {
            assert_eq!(x, b.z[j] && sub.tasks.is_present(i, j));
        }
    }

    #[test]
    fn rounding_repairs_storage() {
        let env = random_env(3, 3, 4, 7e9, 1.0);
        let sub = build_subproblem(&env);
        let rel = RelaxedDecisions {
            z_prob: vec![1.0; 4],
            x_prob: Grid::filled(3, 4, 1.0),
        };
        let mut rng = stream(1, "r");
        for _ in 0..20 {
            let b = round_relaxed(&sub, &rel, 0.5, &mut rng);
            sub.check(&b.z, &b.x).unwrap();
        }
    }

    #[test]
    fn tight_relaxation_reproduces_the_oracle() {
        // with ample storage the relaxation is exact: cache and serve every request
        let mut hits = 0;
        for seed in 0..20 {
            let env = random_env(seed, 2, 3, 100e9, 1.0);
            let sub = build_subproblem(&env);
            let out = sdp_only_decide(&sub, &SolverOptions::default(), &mut stream(seed, "s")).unwrap();
            let (b, v) = oracle_solve_p2(&sub).unwrap();
            if out.decision.cache == b.z && out.decision.offload == b.x {
                hits += 1;
            }
            assert!(out.value >= v - 1e-9 * v.abs());
        }
        assert_eq!(hits, 20);
    }
}
