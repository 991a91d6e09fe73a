//! Exhaustive minimization of the slot objective.

use rand::RngCore;

use super::{Binary, Decided, Policy};
use crate::delay_alloc::optimal_compute_delay;
use crate::lyapunov::SlotSubproblem;
use crate::{Error, Grid};

/// Largest `J + I` the enumeration accepts.
pub const ENUMERATION_LIMIT: usize = 22;

/// Global minimizer over storage-feasible `z` and `x <= z`, with the
/// closed-form compute split. Caching vectors and user subsets are visited
/// in ascending bitmask order and only a strictly better value replaces
/// the incumbent, so ties go to the smaller mask.
pub fn oracle_solve_p2(sub: &SlotSubproblem) -> Result<(Binary, f64), Error> {
    let (n, m) = (sub.num_users(), sub.num_services());
    if n + m > ENUMERATION_LIMIT {
        return Err(Error::SizeGuard {
            bits: n + m,
            limit: ENUMERATION_LIMIT,
        });
    }
    let request: Vec<Option<usize>> = (0..n).map(|i| sub.tasks.requested(i)).collect();
    // objective contribution of processing exactly the users in `mask` locally
    let local_value = |mask: usize| -> f64 {
        let mut gain = 0.0;
        let mut cycles = Vec::new();
        for (i, r) in request.iter().enumerate() {
            if mask >> i & 1 == 1 {
                let j = r.expect("only requesting users are eligible");
                gain += sub.lambda[(i, j)];
                cycles.push(sub.tasks.cycles[(i, j)]);
            }
        }
        -sub.v * gain + sub.v * sub.lambda_d * optimal_compute_delay(cycles, sub.compute)
    };
    // best subset of each eligible set, filled lazily
    let mut best_subset: Vec<Option<(usize, f64)>> = vec![None; 1 << n];
    let mut best: Option<(usize, usize, f64)> = None;
    for zmask in 0usize..1 << m {
        let used: f64 = (0..m).filter(|&j| zmask >> j & 1 == 1).map(|j| sub.sizes[j]).sum();
        if used > sub.storage {
            continue;
        }
        let eligible = request
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_some_and(|j| zmask >> j & 1 == 1))
            .fold(0usize, |acc, (i, _)| acc | 1 << i);
        let (xmask, xval) = *best_subset[eligible].get_or_insert_with(|| {
            let mut incumbent = (0, 0.0);
            // ascending submasks of `eligible`
            let mut sub_mask = 0usize;
            loop {
                sub_mask = (sub_mask.wrapping_sub(eligible)) & eligible;
                if sub_mask == 0 {
                    break;
                }
                let v = local_value(sub_mask);
                if v < incumbent.1 {
                    incumbent = (sub_mask, v);
                }
            }
            incumbent
        });
        let cache: f64 = (0..m).filter(|&j| zmask >> j & 1 == 1).map(|j| sub.g[j]).sum();
        let value = cache + xval;
        if best.is_none_or(|(_, _, b)| value < b) {
            best = Some((zmask, xmask, value));
        }
    }
    let (zmask, xmask, _) = best.expect("the empty cache is always feasible");
    let z: Vec<bool> = (0..m).map(|j| zmask >> j & 1 == 1).collect();
    let mut x = Grid::filled(n, m, false);
    for (i, r) in request.iter().enumerate() {
        if xmask >> i & 1 == 1 {
            x[(i, r.expect("eligible user has a request"))] = true;
        }
    }
    let value = sub.p2_value(&z, &x)?;
    Ok((Binary { z, x }, value))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn name(&self) -> &str {
        "optimal"
    }

    fn decide(&mut self, sub: &SlotSubproblem, _rng: &mut dyn RngCore) -> Result<Decided, Error> {
        let (b, _) = oracle_solve_p2(sub)?;
        Decided::from_binary(sub, &b, None)
    }
}
