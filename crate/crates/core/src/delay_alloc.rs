//! Delay model and the closed-form bandwidth and compute allocations.
//!
//! Minimizing `sum_k a_k / r_k` over `sum_k r_k <= R` gives
//! `r_k = R sqrt(a_k) / sum_l sqrt(a_l)`. Bandwidth uses
//! `a = S_u / eta_u` (resp. `S_d / eta_d`), compute uses `a = Y x`.

use crate::env::{EnvConfig, SlotDecision, TaskBatch};
use crate::{Error, Grid};

/// Rates and weights entering delays and costs. Spectral efficiencies are
/// in bytes/s/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayParams {
    pub eta_up: Vec<f64>,
    pub eta_down: Vec<f64>,
    pub es_cs_rate: f64,
    pub cloud_rate: f64,
    pub lambda_d: f64,
    pub lambda_c: f64,
    pub lambda_p: f64,
    pub lambda_s: f64,
}

impl DelayParams {
    pub fn from_config(cfg: &EnvConfig) -> Self {
        Self {
            eta_up: (0..cfg.num_users).map(|i| cfg.eta_up_bytes(i)).collect(),
            eta_down: (0..cfg.num_users).map(|i| cfg.eta_down_bytes(i)).collect(),
            es_cs_rate: cfg.es_cs_rate,
            cloud_rate: cfg.cloud_rate_per_task,
            lambda_d: cfg.lambda_d,
            lambda_c: cfg.lambda_c,
            lambda_p: cfg.lambda_p,
            lambda_s: cfg.lambda_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Task {
    pub up: f64,
    pub down: f64,
    pub cycles: f64,
}

impl TaskBatch {
    pub fn task(&self, i: usize, j: usize) -> Task {
        Task {
            up: self.up[(i, j)],
            down: self.down[(i, j)],
            cycles: self.cycles[(i, j)],
        }
    }
}

/// Square-root proportional split of `budget` over the positive weights.
fn sqrt_split(weights: &Grid<f64>, budget: f64) -> Grid<f64> {
    let total: f64 = weights.values().iter().filter(|&&a| a > 0.0).map(|a| a.sqrt()).sum();
    if total == 0.0 {
        return weights.map(|_| 0.0);
    }
    weights.map(|&a| if a > 0.0 { budget * a.sqrt() / total } else { 0.0 })
}

/// Uplink and downlink bandwidth for every present task.
pub fn allocate_bandwidth(
    tasks: &TaskBatch,
    eta_up: &[f64],
    eta_down: &[f64],
    w_up: f64,
    w_down: f64,
) -> (Grid<f64>, Grid<f64>) {
    let (n, m) = (tasks.num_users(), tasks.num_services());
    let up = Grid::from_fn(n, m, |i, j| {
        if tasks.is_present(i, j) {
            tasks.up[(i, j)] / eta_up[i]
        } else {
            0.0
        }
    });
    let down = Grid::from_fn(n, m, |i, j| {
        if tasks.is_present(i, j) {
            tasks.down[(i, j)] / eta_down[i]
        } else {
            0.0
        }
    });
    (sqrt_split(&up, w_up), sqrt_split(&down, w_down))
}

/// Edge computing rate for every task processed locally.
pub fn allocate_compute(tasks: &TaskBatch, x: &Grid<bool>, capacity: f64) -> Grid<f64> {
    let a = Grid::from_fn(tasks.num_users(), tasks.num_services(), |i, j| {
        if x[(i, j)] && tasks.is_present(i, j) {
            tasks.cycles[(i, j)]
        } else {
            0.0
        }
    });
    sqrt_split(&a, capacity)
}

/// `sum_k Y_k x_k / f_k` under the closed-form compute split, which equals
/// `(sum_k sqrt(Y_k x_k))^2 / F`.
pub fn optimal_compute_delay(cycles: impl IntoIterator<Item = f64>, capacity: f64) -> f64 {
    let s: f64 = cycles.into_iter().filter(|&y| y > 0.0).map(f64::sqrt).sum();
    s * s / capacity
}

fn guard(v: f64, resource: &'static str) -> Result<f64, Error> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::DivisionGuard { resource })
    }
}

/// Uplink + edge processing + downlink, in seconds.
pub fn local_delay(task: Task, w_up: f64, w_down: f64, f_edge: f64, eta_up: f64, eta_down: f64) -> Result<f64, Error> {
    let r_up = guard(eta_up * w_up, "uplink bandwidth")?;
    let r_down = guard(eta_down * w_down, "downlink bandwidth")?;
    let f = guard(f_edge, "edge compute")?;
    Ok(task.up / r_up + task.cycles / f + task.down / r_down)
}

/// Uplink + backhaul + cloud processing + downlink, in seconds.
pub fn offload_delay(
    task: Task,
    w_up: f64,
    w_down: f64,
    es_cs_rate: f64,
    cloud_rate: f64,
    eta_up: f64,
    eta_down: f64,
) -> Result<f64, Error> {
    let r_up = guard(eta_up * w_up, "uplink bandwidth")?;
    let r_down = guard(eta_down * w_down, "downlink bandwidth")?;
    Ok(task.up / r_up + (task.up + task.down) / es_cs_rate + task.cycles / cloud_rate + task.down / r_down)
}

/// Backhaul plus cloud processing delay, the part of the offload delay that
/// local processing avoids.
pub fn cloud_extra_delay(task: Task, es_cs_rate: f64, cloud_rate: f64) -> f64 {
    (task.up + task.down) / es_cs_rate + task.cycles / cloud_rate
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    pub cost: f64,
    pub utility: f64,
    /// Cost if every task were offloaded and nothing downloaded.
    pub cost_prime: f64,
    pub computing_cost: f64,
    /// `sum_j lambda_p p_j y_j`
    pub price_cost: f64,
    pub delays: Grid<f64>,
}

/// Slot cost and utility of a decision. `prices[j]` is `(purchase, refresh)`.
///
/// The cost is summed term by term from delays, computing costs and prices;
/// the utility is evaluated from its own expansion, so `cost == cost_prime -
/// utility` is a genuine check.
pub fn slot_cost_and_utility(
    tasks: &TaskBatch,
    d: &SlotDecision,
    z_prev: &[bool],
    prices: &[(f64, f64)],
    p: &DelayParams,
) -> Result<CostBreakdown, Error> {
    let (n, m) = (tasks.num_users(), tasks.num_services());
    let mut delays = Grid::filled(n, m, 0.0);
    let (mut cost, mut utility, mut cost_prime, mut computing) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..m {
            if !tasks.is_present(i, j) {
                continue;
            }
            let task = tasks.task(i, j);
            let x = d.offload[(i, j)];
            let (wu, wd) = (d.bw_up[(i, j)], d.bw_down[(i, j)]);
            let d_off = offload_delay(task, wu, wd, p.es_cs_rate, p.cloud_rate, p.eta_up[i], p.eta_down[i])?;
            let delay = if x {
                local_delay(task, wu, wd, d.compute[(i, j)], p.eta_up[i], p.eta_down[i])?
            } else {
                d_off
            };
            delays[(i, j)] = delay;
            let c = if x { 0.0 } else { p.lambda_s * task.up };
            computing += p.lambda_c * c;
            cost += p.lambda_d * delay + p.lambda_c * c;
            cost_prime += p.lambda_d * d_off + p.lambda_c * p.lambda_s * task.up;
            if x {
                let gain = cloud_extra_delay(task, p.es_cs_rate, p.cloud_rate) - task.cycles / d.compute[(i, j)];
                utility += p.lambda_d * gain + p.lambda_c * p.lambda_s * task.up;
            }
        }
    }
    let mut price_cost = 0.0;
    for j in 0..m {
        if d.download[j] {
            let (pp, pr) = prices[j];
            let price = if z_prev[j] { pr } else { pp };
            price_cost += p.lambda_p * price;
        }
    }
    cost += price_cost;
    utility -= price_cost;
    Ok(CostBreakdown {
        cost,
        utility,
        cost_prime,
        computing_cost: computing,
        price_cost,
        delays,
    })
}
