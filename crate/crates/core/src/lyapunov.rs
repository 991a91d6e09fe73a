//! Per-slot drift-plus-penalty subproblem.
//!
//! With `a = A_e(t-1)` and `A_c = A_c(t)`:
//! `H = ((a+1)^2 - A_c^2)/2 + Q (a+1-A_c)` and
//! `I = (A_max^2 + A_c^2)/2 - Q (A_max - A_c)`.
//! After eliminating `y`, the slot objective is
//! `sum_j G_j z_j - V sum_ij Lambda_ij x_ij + V lambda_D sum_ij Y_ij x_ij / f_ij`.

use crate::delay_alloc::{allocate_bandwidth, allocate_compute, optimal_compute_delay};
use crate::env::{Environment, SlotDecision, TaskBatch};
use crate::{ConstraintViolation, Error, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseTag {
    /// Not cached before: caching means buying, `y = z`.
    FreshNeeded,
    /// Cached and refreshing pays off: `y = z`.
    RefreshWorthwhile,
    /// Cached and refreshing does not pay off: `y = 0`.
    KeepStale,
}

pub fn drift_coefficients(q: f64, aoi_cs: f64, aoi_es_prev: f64, aoi_max: f64) -> (f64, f64) {
    let next = aoi_es_prev + 1.0;
    let h = (next * next - aoi_cs * aoi_cs) / 2.0 + q * (next - aoi_cs);
    let i = (aoi_max * aoi_max + aoi_cs * aoi_cs) / 2.0 - q * (aoi_max - aoi_cs);
    (h, i)
}

/// Returns the case, the gain `G` and the price paid if `y = 1`.
pub fn classify_and_gain(
    z_prev: bool,
    purchase: f64,
    refresh: f64,
    h: f64,
    v: f64,
    lambda_p: f64,
) -> (CaseTag, f64, f64) {
    if !z_prev {
        (CaseTag::FreshNeeded, v * lambda_p * purchase, purchase)
    } else if v * lambda_p * refresh - h < 0.0 {
        (CaseTag::RefreshWorthwhile, v * lambda_p * refresh, refresh)
    } else {
        (CaseTag::KeepStale, h, refresh)
    }
}

pub fn derive_download(case: CaseTag, z: bool) -> bool {
    match case {
        CaseTag::FreshNeeded | CaseTag::RefreshWorthwhile => z,
        CaseTag::KeepStale => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotSubproblem {
    pub h: Vec<f64>,
    pub i_const: Vec<f64>,
    pub g: Vec<f64>,
    pub case: Vec<CaseTag>,
    /// Price charged when the service is downloaded this slot.
    pub price: Vec<f64>,
    /// `lambda_D (D_ec + D_c) + lambda_c lambda_s S_u`, zero for absent tasks.
    pub lambda: Grid<f64>,
    pub v: f64,
    pub lambda_d: f64,
    pub lambda_p: f64,
    pub sizes: Vec<f64>,
    pub storage: f64,
    pub compute: f64,
    pub tasks: TaskBatch,
    pub z_prev: Vec<bool>,
    pub bw_up: Grid<f64>,
    pub bw_down: Grid<f64>,
}

pub fn build_subproblem(env: &Environment) -> SlotSubproblem {
    let cfg = env.config();
    let p = env.delay_params();
    let tasks = env.tasks();
    let v = cfg.lyapunov_v;
    let m = cfg.num_services;
    let (mut h, mut i_const, mut g, mut case, mut price) = (
        Vec::with_capacity(m),
        Vec::with_capacity(m),
        Vec::with_capacity(m),
        Vec::with_capacity(m),
        Vec::with_capacity(m),
    );
    for (j, s) in env.services().iter().enumerate() {
        let (hj, ij) = drift_coefficients(env.queues()[j], s.aoi_cs, s.aoi_es, env.aoi_max()[j]);
        let (c, gj, pj) = classify_and_gain(s.cached, s.purchase_price, s.refresh_price, hj, v, p.lambda_p);
        h.push(hj);
        i_const.push(ij);
        g.push(gj);
        case.push(c);
        price.push(pj);
    }
    let lambda = Grid::from_fn(cfg.num_users, m, |i, j| {
        if !tasks.is_present(i, j) {
            return 0.0;
        }
        let t = tasks.task(i, j);
        p.lambda_d * ((t.up + t.down) / p.es_cs_rate + t.cycles / p.cloud_rate) + p.lambda_c * p.lambda_s * t.up
    });
    let (bw_up, bw_down) = allocate_bandwidth(tasks, &p.eta_up, &p.eta_down, cfg.uplink_bw, cfg.downlink_bw);
    SlotSubproblem {
        h,
        i_const,
        g,
        case,
        price,
        lambda,
        v,
        lambda_d: p.lambda_d,
        lambda_p: p.lambda_p,
        sizes: env.services().iter().map(|s| s.size).collect(),
        storage: cfg.storage_capacity,
        compute: cfg.compute_capacity,
        tasks: tasks.clone(),
        z_prev: env.services().iter().map(|s| s.cached).collect(),
        bw_up,
        bw_down,
    }
}

impl SlotSubproblem {
    pub fn num_users(&self) -> usize {
        self.tasks.num_users()
    }

    pub fn num_services(&self) -> usize {
        self.g.len()
    }

    /// Storage, `x <= z` and task presence.
    pub fn check(&self, z: &[bool], x: &Grid<bool>) -> Result<(), ConstraintViolation> {
        let m = self.num_services();
        if z.len() != m || x.rows() != self.num_users() || x.cols() != m {
            return Err(ConstraintViolation::Shape(
                "decision shape differs from subproblem".into(),
            ));
        }
        let used: f64 = z.iter().zip(&self.sizes).filter(|(z, _)| **z).map(|(_, s)| s).sum();
        if used > self.storage * (1.0 + 1e-12) {
            return Err(ConstraintViolation::Storage {
                used,
                capacity: self.storage,
            });
        }
        for (i, j, &xij) in x.iter() {
            if xij && !self.tasks.is_present(i, j) {
                return Err(ConstraintViolation::AbsentTask { user: i, service: j });
            }
            if xij && !z[j] {
                return Err(ConstraintViolation::OffloadWithoutCache { user: i, service: j });
            }
        }
        Ok(())
    }

    fn linear_part(&self, z: &[bool], x: &Grid<bool>) -> f64 {
        let cache: f64 = z.iter().zip(&self.g).filter(|(z, _)| **z).map(|(_, g)| g).sum();
        let gain: f64 = x
            .iter()
            .filter(|(_, _, x)| **x)
            .map(|(i, j, _)| self.lambda[(i, j)])
            .sum();
        cache - self.v * gain
    }

    /// Slot objective for an explicit compute split. Smaller is better.
    pub fn p2_objective(&self, z: &[bool], x: &Grid<bool>, f: &Grid<f64>) -> Result<f64, Error> {
        self.check(z, x)?;
        let mut used = 0.0;
        let mut delay = 0.0;
        for (i, j, &xij) in x.iter() {
            let fij = f[(i, j)];
            if !(fij >= 0.0 && fij.is_finite()) {
                return Err(ConstraintViolation::Allocation { user: i, service: j }.into());
            }
            used += fij;
            if xij {
                if fij == 0.0 {
                    return Err(Error::DivisionGuard {
                        resource: "edge compute",
                    });
                }
                delay += self.tasks.cycles[(i, j)] / fij;
            }
        }
        if used > self.compute * (1.0 + 1e-9) {
            return Err(ConstraintViolation::Compute {
                used,
                capacity: self.compute,
            }
            .into());
        }
        Ok(self.linear_part(z, x) + self.v * self.lambda_d * delay)
    }

    /// Slot objective with the optimal compute split.
    pub fn p2_value(&self, z: &[bool], x: &Grid<bool>) -> Result<f64, Error> {
        self.check(z, x)?;
        let cycles = x
            .iter()
            .filter(|(_, _, x)| **x)
            .map(|(i, j, _)| self.tasks.cycles[(i, j)]);
        let delay = optimal_compute_delay(cycles, self.compute);
        Ok(self.linear_part(z, x) + self.v * self.lambda_d * delay)
    }

    /// Learning reward of a decision.
    pub fn reward(&self, z: &[bool], x: &Grid<bool>) -> Result<f64, Error> {
        Ok(-self.p2_value(z, x)?)
    }

    pub fn download(&self, z: &[bool]) -> Vec<bool> {
        z.iter().zip(&self.case).map(|(&z, &c)| derive_download(c, z)).collect()
    }

    /// Full slot decision with closed-form allocations.
    pub fn decision(&self, z: &[bool], x: &Grid<bool>) -> SlotDecision {
        SlotDecision {
            offload: x.clone(),
            download: self.download(z),
            cache: z.to_vec(),
            bw_up: self.bw_up.clone(),
            bw_down: self.bw_down.clone(),
            compute: allocate_compute(&self.tasks, x, self.compute),
        }
    }
}
