//! JSCR-style alternating local search started from the rounded-down
//! relaxation.

use freshedge_sdp::SolverOptions;
use rand::{Rng, RngCore};

use super::{round_relaxed, storage_used, Binary, Decided, Policy};
use crate::lyapunov::SlotSubproblem;
use crate::sdr::relaxed_caching;
use crate::Error;

pub const MAX_ROUNDS: usize = 50;

/// Values within this distance of one round down to one.
const FLOOR_TOL: f64 = 1e-6;

fn value(sub: &SlotSubproblem, b: &Binary) -> f64 {
    sub.p2_value(&b.z, &b.x).expect("local search keeps decisions feasible")
}

fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate < incumbent - 1e-12 * incumbent.abs().max(1.0)
}

/// Best caching move: a single flip or a swap of one cached service for
/// an uncached one. Each candidate is scored after the offloading
/// decisions respond to it, since with `G >= 0` adding a service without
/// serving from it never helps.
fn best_z_move(sub: &SlotSubproblem, b: &Binary) -> Option<(Binary, f64)> {
    let m = sub.num_services();
    let mut best: Option<(Binary, f64)> = None;
    let current = value(sub, b);
    let mut consider = |flips: &[usize]| {
        let mut cand = b.clone();
        for &j in flips {
            cand.z[j] = !cand.z[j];
            if !cand.z[j] {
                for i in 0..sub.num_users() {
                    cand.x[(i, j)] = false;
                }
            }
        }
        if storage_used(sub, &cand.z) > sub.storage {
            return;
        }
        let (cand, _) = x_descent(sub, cand);
        let v = value(sub, &cand);
        if improves(v, best.as_ref().map_or(current, |b| b.1)) {
            best = Some((cand, v));
        }
    };
    for j in 0..m {
        consider(&[j]);
    }
    for out in (0..m).filter(|&k| b.z[k]) {
        for into in (0..m).filter(|&k| !b.z[k]) {
            consider(&[out, into]);
        }
    }
    best
}

/// Repeated best single offloading flip with caching held.
fn x_descent(sub: &SlotSubproblem, mut b: Binary) -> (Binary, bool) {
    let mut moved = false;
    loop {
        let current = value(sub, &b);
        let mut best: Option<(Binary, f64)> = None;
        for i in 0..sub.num_users() {
            let Some(j) = sub.tasks.requested(i) else { continue };
            if !b.z[j] {
                continue;
            }
            let mut cand = b.clone();
            cand.x[(i, j)] = !cand.x[(i, j)];
            let v = value(sub, &cand);
            if improves(v, best.as_ref().map_or(current, |b| b.1)) {
                best = Some((cand, v));
            }
        }
        match best {
            Some((next, _)) => {
                b = next;
                moved = true;
            }
            None => return (b, moved),
        }
    }
}

/// Alternates caching and offloading moves until neither improves or the
/// round cap is hit. Returns the objective after every round.
pub fn jscr_improve(sub: &SlotSubproblem, start: Binary) -> (Binary, Vec<f64>) {
    let mut b = start;
    let mut history = vec![value(sub, &b)];
    for _ in 0..MAX_ROUNDS {
        let mut moved = false;
        if let Some((next, _)) = best_z_move(sub, &b) {
            b = next;
            moved = true;
        }
        let (next, x_moved) = x_descent(sub, b);
        b = next;
        history.push(value(sub, &b));
        if !(moved || x_moved) {
            break;
        }
    }
    (b, history)
}

pub fn jscr_decide(
    sub: &SlotSubproblem,
    opts: &SolverOptions,
    rng: &mut (impl Rng + ?Sized),
) -> Result<Decided, Error> {
    let (rel, sol) = relaxed_caching(sub, opts)?;
    let start = round_relaxed(sub, &rel, 1.0 - FLOOR_TOL, rng);
    let (b, _) = jscr_improve(sub, start);
    Decided::from_binary(sub, &b, sol.certificate)
}

#[derive(Debug, Clone)]
pub struct JscrPolicy {
    pub opts: SolverOptions,
}

impl JscrPolicy {
    pub fn new(opts: SolverOptions) -> Self {
        Self { opts }
    }
}

impl Policy for JscrPolicy {
    fn name(&self) -> &str {
        "jscr"
    }

    fn decide(&mut self, sub: &SlotSubproblem, rng: &mut dyn RngCore) -> Result<Decided, Error> {
        jscr_decide(sub, &self.opts, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::build_subproblem;
    use crate::policy::testing::random_env;
    use crate::policy::{oracle_solve_p2, sdp_only_decide};
    use crate::rng::stream;
    use crate::Grid;

    #[test]
    fn global_optimum_is_a_fixed_point() {
        for seed in 0..30 {
            let env = random_env(seed, 3, 4, 9e9, 1.0);
            let sub = build_subproblem(&env);
            let (b, _) = oracle_solve_p2(&sub).unwrap();
            let (out, history) = jscr_improve(&sub, b.clone());
            assert_eq!(out, b);
            assert_eq!(history.len(), 2);
        }
    }

    #[test]
    fn objective_never_increases() {
        for seed in 0..30 {
            let env = random_env(seed, 4, 5, 9e9, 1.0);
            let sub = build_subproblem(&env);
            let start = Binary {
                z: vec![false; 5],
                x: Grid::filled(4, 5, false),
            };
            let (out, history) = jscr_improve(&sub, start);
            sub.check(&out.z, &out.x).unwrap();
            for w in history.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn no_worse_than_threshold_rounding() {
        let opts = SolverOptions::default();
        let mut rng = stream(5, "paired");
        let mut better = 0;
        for seed in 0..100 {
            let env = random_env(seed, 3, 5, rng.random_range(5e9..14e9), 1.0);
            let sub = build_subproblem(&env);
            let j = jscr_decide(&sub, &opts, &mut rng).unwrap();
            let s = sdp_only_decide(&sub, &opts, &mut rng).unwrap();
            assert!(
                j.value <= s.value + 1e-9 * s.value.abs().max(1.0),
                "seed {seed}: {} > {}",
                j.value,
                s.value
            );
            if j.value < s.value {
                better += 1;
            }
        }
        eprintln!("jscr strictly better on {better} of 100");
    }
}
