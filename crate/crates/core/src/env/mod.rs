//! System state, stochastic arrivals, age-of-information and virtual-queue
//! dynamics.
//!
//! Slot `t` proceeds as follows. The environment exposes the observation
//! (tasks, service attributes, `Q(t)`, `A_c(t)`, `A_e(t-1)`, `z(t-1)`); the
//! caller submits a [`SlotDecision`]; [`Environment::step`] charges the slot,
//! applies the age update and the queue update, then advances services and
//! draws the tasks of slot `t + 1`.

mod config;
mod trace;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use config::{parse_kv, EnvConfig, KEYS};
pub use trace::{ServiceRecord, Trace};

use crate::delay_alloc::{self, CostBreakdown, DelayParams};
use crate::rng::stream;
use crate::{ConstraintViolation, Error, Grid};

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceState {
    /// bytes
    pub size: f64,
    pub purchase_price: f64,
    pub refresh_price: f64,
    /// Age at the cloud server at the start of the current slot, in slots.
    pub aoi_cs: f64,
    /// Age of the edge copy at the end of the previous slot.
    pub aoi_es: f64,
    /// Cached at the end of the previous slot.
    pub cached: bool,
}

/// Task data of one slot. Row `i` holds at most one nonzero entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBatch {
    /// bytes
    pub up: Grid<f64>,
    /// bytes
    pub down: Grid<f64>,
    /// CPU cycles
    pub cycles: Grid<f64>,
}

impl TaskBatch {
    pub fn empty(users: usize, services: usize) -> Self {
        Self {
            up: Grid::filled(users, services, 0.0),
            down: Grid::filled(users, services, 0.0),
            cycles: Grid::filled(users, services, 0.0),
        }
    }

    pub fn num_users(&self) -> usize {
        self.up.rows()
    }

    pub fn num_services(&self) -> usize {
        self.up.cols()
    }

    pub fn is_present(&self, i: usize, j: usize) -> bool {
        self.up[(i, j)] > 0.0
    }

    /// Service requested by user `i`, if any.
    pub fn requested(&self, i: usize) -> Option<usize> {
        self.up.row(i).iter().position(|&s| s > 0.0)
    }

    pub fn check(&self) -> Result<(), ConstraintViolation> {
        let (n, m) = (self.num_users(), self.num_services());
        if self.down.rows() != n || self.down.cols() != m || self.cycles.rows() != n || self.cycles.cols() != m {
            return Err(ConstraintViolation::Shape("task grids differ in shape".into()));
        }
        for i in 0..n {
            let present = self.up.row(i).iter().filter(|&&s| s > 0.0).count();
            if present > 1 {
                return Err(ConstraintViolation::Shape(format!(
                    "user {i} requests {present} services"
                )));
            }
            for j in 0..m {
                if self.up[(i, j)] <= 0.0 && (self.down[(i, j)] != 0.0 || self.cycles[(i, j)] != 0.0) {
                    return Err(ConstraintViolation::Shape(format!(
                        "user {i}, service {j}: result size or cycles without upload"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Binary decisions and continuous allocations for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    /// `true` processes the task at the edge.
    pub offload: Grid<bool>,
    pub download: Vec<bool>,
    pub cache: Vec<bool>,
    /// Hz
    pub bw_up: Grid<f64>,
    pub bw_down: Grid<f64>,
    /// cycles/s
    pub compute: Grid<f64>,
}

impl SlotDecision {
    pub fn idle(users: usize, services: usize) -> Self {
        Self {
            offload: Grid::filled(users, services, false),
            download: vec![false; services],
            cache: vec![false; services],
            bw_up: Grid::filled(users, services, 0.0),
            bw_down: Grid::filled(users, services, 0.0),
            compute: Grid::filled(users, services, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub cost: f64,
    pub utility: f64,
    /// Decision-independent part of the cost.
    pub cost_prime: f64,
    /// seconds
    pub delays: Grid<f64>,
    pub aoi_es: Vec<f64>,
    /// Backlogs `Q(t + 1)`.
    pub queue: Vec<f64>,
}

/// Per service: with probability `cs_update_prob` the cloud copy is renewed
/// at the start of the slot, otherwise its age grows by one. Sizes are
/// redrawn every slot.
pub fn advance_services(services: &mut [ServiceState], cfg: &EnvConfig, rng: &mut impl Rng) {
    let (lo, hi) = cfg.service_size_range;
    for s in services.iter_mut() {
        if rng.random_bool(cfg.cs_update_prob) {
            s.aoi_cs = 0.0;
        } else {
            s.aoi_cs += 1.0;
        }
        s.size = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    }
}

/// Truncated Gaussian by rejection.
fn truncated_normal(rng: &mut impl Rng, mean: f64, std: f64, lo: f64, hi: f64) -> f64 {
    let normal = Normal::new(mean, std).expect("validated std");
    for _ in 0..10_000 {
        let v = normal.sample(rng);
        if (lo..=hi).contains(&v) {
            return v;
        }
    }
    rng.random_range(lo..=hi)
}

/// Every user requests one service drawn uniformly.
pub fn generate_tasks(cfg: &EnvConfig, rng: &mut impl Rng) -> TaskBatch {
    let mut b = TaskBatch::empty(cfg.num_users, cfg.num_services);
    let (lo, hi) = cfg.task_size_range;
    for i in 0..cfg.num_users {
        let j = rng.random_range(0..cfg.num_services);
        let up = truncated_normal(rng, cfg.task_size_mean, cfg.task_size_std, lo, hi);
        b.up[(i, j)] = up;
        b.down[(i, j)] = cfg.download_ratio * up;
        b.cycles[(i, j)] = cfg.cycles_per_byte * up;
    }
    b
}

/// Age of the edge copy after the slot's decision.
pub fn update_aoi(z: bool, y: bool, aoi_cs: f64, aoi_es_prev: f64) -> Result<f64, Error> {
    match (z, y) {
        (true, true) => Ok(aoi_cs),
        (true, false) => Ok(aoi_es_prev + 1.0),
        (false, false) => Ok(aoi_cs),
        (false, true) => Err(Error::AoiBranch { service: usize::MAX }),
    }
}

pub fn update_queue(q: f64, aoi_es: f64, aoi_max: f64) -> f64 {
    (q - aoi_max + aoi_es).max(0.0)
}

/// Checks every decision constraint against the current state.
pub fn validate_decision(
    cfg: &EnvConfig,
    services: &[ServiceState],
    tasks: &TaskBatch,
    d: &SlotDecision,
) -> Result<(), ConstraintViolation> {
    let (n, m) = (cfg.num_users, cfg.num_services);
    let shapes_ok = [&d.bw_up, &d.bw_down, &d.compute]
        .iter()
        .all(|g| g.rows() == n && g.cols() == m)
        && d.offload.rows() == n
        && d.offload.cols() == m
        && d.cache.len() == m
        && d.download.len() == m
        && services.len() == m
        && tasks.num_users() == n
        && tasks.num_services() == m;
    if !shapes_ok {
        return Err(ConstraintViolation::Shape(format!(
            "expected {n} users and {m} services"
        )));
    }
    let rel = 1e-9;
    let used: f64 = (0..m).filter(|&j| d.cache[j]).map(|j| services[j].size).sum();
    if used > cfg.storage_capacity * (1.0 + rel) {
        return Err(ConstraintViolation::Storage {
            used,
            capacity: cfg.storage_capacity,
        });
    }
    for j in 0..m {
        let (zp, y, z) = (services[j].cached, d.download[j], d.cache[j]);
        let ok = if zp { !y || z } else { y == z };
        if !ok {
            return Err(ConstraintViolation::Coupling {
                service: j,
                z_prev: zp,
                y,
                z,
            });
        }
    }
    for i in 0..n {
        for j in 0..m {
            if d.offload[(i, j)] {
                if !tasks.is_present(i, j) {
                    return Err(ConstraintViolation::AbsentTask { user: i, service: j });
                }
                if !d.cache[j] {
                    return Err(ConstraintViolation::OffloadWithoutCache { user: i, service: j });
                }
            }
            for v in [d.bw_up[(i, j)], d.bw_down[(i, j)], d.compute[(i, j)]] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ConstraintViolation::Allocation { user: i, service: j });
                }
            }
        }
    }
    let f = d.compute.sum();
    if f > cfg.compute_capacity * (1.0 + rel) {
        return Err(ConstraintViolation::Compute {
            used: f,
            capacity: cfg.compute_capacity,
        });
    }
    for (link, g, cap) in [
        ("uplink", &d.bw_up, cfg.uplink_bw),
        ("downlink", &d.bw_down, cfg.downlink_bw),
    ] {
        let used = g.sum();
        if used > cap * (1.0 + rel) {
            return Err(ConstraintViolation::Bandwidth {
                link,
                used,
                capacity: cap,
            });
        }
    }
    Ok(())
}

enum Source {
    Random {
        services: Box<ChaCha8Rng>,
        tasks: Box<ChaCha8Rng>,
    },
    Replay(Trace),
}

pub struct Environment {
    cfg: EnvConfig,
    params: DelayParams,
    aoi_max: Vec<f64>,
    services: Vec<ServiceState>,
    queues: Vec<f64>,
    tasks: TaskBatch,
    t: usize,
    source: Source,
    trace: Trace,
}

impl Environment {
    /// Fresh run: thresholds (unless configured), prices and the slot-0 sizes
    /// and tasks are drawn from streams keyed by `rng_seed`.
    pub fn new(cfg: EnvConfig) -> Result<Self, Error> {
        cfg.validate()?;
        let seed = cfg.rng_seed;
        let aoi_max = if cfg.aoi_thresholds.is_empty() {
            let mut r = stream(seed, "aoi_max");
            let (lo, hi) = cfg.aoi_threshold_range;
            (0..cfg.num_services)
                .map(|_| if hi > lo { r.random_range(lo..=hi) } else { lo })
                .collect()
        } else {
            cfg.aoi_thresholds.clone()
        };
        let mut srng = stream(seed, "services");
        let (plo, phi) = cfg.purchase_price_range;
        let (slo, shi) = cfg.service_size_range;
        let services: Vec<ServiceState> = (0..cfg.num_services)
            .map(|_| {
                let p = if phi > plo { srng.random_range(plo..=phi) } else { plo };
                let size = if shi > slo { srng.random_range(slo..=shi) } else { slo };
                ServiceState {
                    size,
                    purchase_price: p,
                    refresh_price: cfg.refresh_price_ratio * p,
                    aoi_cs: 0.0,
                    aoi_es: 0.0,
                    cached: false,
                }
            })
            .collect();
        let mut trng = stream(seed, "tasks");
        let tasks = generate_tasks(&cfg, &mut trng);
        let mut env = Self {
            params: DelayParams::from_config(&cfg),
            queues: vec![0.0; cfg.num_services],
            aoi_max,
            services,
            tasks,
            t: 0,
            source: Source::Random {
                services: Box::new(srng),
                tasks: Box::new(trng),
            },
            trace: Trace::default(),
            cfg,
        };
        env.record();
        Ok(env)
    }

    /// Re-runs a recorded trace. Decisions may differ from the recorded run;
    /// only the exogenous inputs are replayed.
    pub fn replay(cfg: EnvConfig, trace: Trace) -> Result<Self, Error> {
        cfg.validate()?;
        trace.check(&cfg)?;
        let first = &trace.services[0];
        let services = first
            .iter()
            .map(|r| ServiceState {
                size: r.size,
                purchase_price: r.purchase_price,
                refresh_price: r.refresh_price,
                aoi_cs: r.aoi_cs,
                aoi_es: 0.0,
                cached: false,
            })
            .collect();
        let mut env = Self {
            params: DelayParams::from_config(&cfg),
            queues: vec![0.0; cfg.num_services],
            aoi_max: trace.aoi_max.clone(),
            services,
            tasks: trace.tasks[0].clone(),
            t: 0,
            source: Source::Replay(trace),
            trace: Trace::default(),
            cfg,
        };
        env.record();
        Ok(env)
    }

    fn record(&mut self) {
        if self.trace.aoi_max.is_empty() {
            self.trace.aoi_max = self.aoi_max.clone();
        }
        self.trace.tasks.push(self.tasks.clone());
        self.trace.services.push(
            self.services
                .iter()
                .map(|s| ServiceRecord {
                    size: s.size,
                    purchase_price: s.purchase_price,
                    refresh_price: s.refresh_price,
                    aoi_cs: s.aoi_cs,
                })
                .collect(),
        );
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn delay_params(&self) -> &DelayParams {
        &self.params
    }

    pub fn slot(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.cfg.horizon
    }

    pub fn services(&self) -> &[ServiceState] {
        &self.services
    }

    pub fn tasks(&self) -> &TaskBatch {
        &self.tasks
    }

    pub fn queues(&self) -> &[f64] {
        &self.queues
    }

    pub fn aoi_max(&self) -> &[f64] {
        &self.aoi_max
    }

    /// Exogenous inputs seen so far, including the current slot.
    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn validate(&self, d: &SlotDecision) -> Result<(), ConstraintViolation> {
        validate_decision(&self.cfg, &self.services, &self.tasks, d)
    }

    /// Cost and utility of `d` in the current slot without changing state.
    pub fn evaluate(&self, d: &SlotDecision) -> Result<CostBreakdown, Error> {
        self.validate(d)?;
        let z_prev: Vec<bool> = self.services.iter().map(|s| s.cached).collect();
        let prices: Vec<(f64, f64)> = self
            .services
            .iter()
            .map(|s| (s.purchase_price, s.refresh_price))
            .collect();
        delay_alloc::slot_cost_and_utility(&self.tasks, d, &z_prev, &prices, &self.params)
    }

    pub fn step(&mut self, d: &SlotDecision) -> Result<SlotOutcome, Error> {
        if self.is_done() {
            return Err(Error::HorizonExhausted(self.cfg.horizon));
        }
        let costs = self.evaluate(d)?;
        let mut aoi = Vec::with_capacity(self.services.len());
        for (j, s) in self.services.iter().enumerate() {
            let a = update_aoi(d.cache[j], d.download[j], s.aoi_cs, s.aoi_es)
                .map_err(|_| Error::AoiBranch { service: j })?;
            aoi.push(a);
        }
        for (j, s) in self.services.iter_mut().enumerate() {
            self.queues[j] = update_queue(self.queues[j], aoi[j], self.aoi_max[j]);
            s.aoi_es = aoi[j];
            s.cached = d.cache[j];
        }
        let outcome = SlotOutcome {
            cost: costs.cost,
            utility: costs.utility,
            cost_prime: costs.cost_prime,
            delays: costs.delays,
            aoi_es: aoi,
            queue: self.queues.clone(),
        };
        self.t += 1;
        if !self.is_done() {
            self.advance()?;
            self.record();
        }
        Ok(outcome)
    }

    fn advance(&mut self) -> Result<(), Error> {
        match &mut self.source {
            Source::Random { services, tasks } => {
                advance_services(&mut self.services, &self.cfg, services.as_mut());
                self.tasks = generate_tasks(&self.cfg, tasks.as_mut());
            }
            Source::Replay(trace) => {
                let t = self.t;
                let recs = trace
                    .services
                    .get(t)
                    .ok_or_else(|| Error::Trace(format!("trace ends before slot {t}")))?;
                for (s, r) in self.services.iter_mut().zip(recs) {
                    s.size = r.size;
                    s.purchase_price = r.purchase_price;
                    s.refresh_price = r.refresh_price;
                    s.aoi_cs = r.aoi_cs;
                }
                self.tasks = trace.tasks[t].clone();
            }
        }
        Ok(())
    }
}
