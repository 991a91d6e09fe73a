//! Quadratic program over lifted per-service vectors, its semidefinite
//! relaxation, and Bernoulli sampling of caching decisions.
//!
//! Each service `j` has `u_j = [z, x_1..x_I, f_1..f_I, D_1..D_I, 1]` of
//! length `3I + 2`, where `D_i` bounds the edge processing delay
//! `Y_ij x_ij / f_ij`. Every constraint is a symmetric matrix `F` with
//! `u' F u` (resp. `Tr(F U)` after relaxation) compared against a budget.
//!
//! Before solving, the relaxation is tightened with constraints that every
//! lift of an optimal decision satisfies: nonnegative `f` and `D`,
//! `U(f_i, f_i) <= F^2` and `U(D_i, D_i) <= Dmax_i^2`. Users without a task
//! for a service are removed from its block, services without tasks and
//! with nonnegative gain are fixed to `z = 0`, and the remaining coordinates
//! are rescaled to order one.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use freshedge_sdp::{solve_sdp, Entry, SdpError, SdpInstance, Sense, SolveCertificate, SolverOptions};

use crate::delay_alloc::allocate_compute;
use crate::lyapunov::{derive_download, CaseTag, SlotSubproblem};
use crate::{ConstraintViolation, Error, Grid};

/// Coordinates of the lifted vector for `I` users.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub users: usize,
}

impl Layout {
    pub fn dim(self) -> usize {
        3 * self.users + 2
    }
    pub fn z(self) -> usize {
        0
    }
    pub fn x(self, i: usize) -> usize {
        1 + i
    }
    pub fn f(self, i: usize) -> usize {
        1 + self.users + i
    }
    pub fn d(self, i: usize) -> usize {
        1 + 2 * self.users + i
    }
    pub fn last(self) -> usize {
        3 * self.users + 1
    }
}

/// Matrices of one service.
#[derive(Debug, Clone, PartialEq)]
pub struct QcqpBlock {
    pub objective: DMatrix<f64>,
    /// `x_i - z <= 0`
    pub xz: Vec<DMatrix<f64>>,
    /// `S_j z`, summed over services against the storage capacity.
    pub storage: DMatrix<f64>,
    /// `sum_i f_i`, summed over services against the compute capacity.
    pub compute: DMatrix<f64>,
    /// `x_i - x_i^2 = 0`
    pub binary_x: Vec<DMatrix<f64>>,
    /// `z - z^2 = 0`
    pub binary_z: DMatrix<f64>,
    /// `Y_i x_i - f_i D_i <= 0`
    pub aux: Vec<DMatrix<f64>>,
    /// `z <= 1`
    pub z_bound: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpInstance {
    pub layout: Layout,
    pub blocks: Vec<QcqpBlock>,
    pub storage_capacity: f64,
    pub compute_capacity: f64,
    pub cycles: Grid<f64>,
    pub gains: Vec<f64>,
}

/// Symmetric matrix with `b / 2` in the last row and column.
fn border(n: usize, b: &[(usize, f64)]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let last = n - 1;
    for &(k, v) in b {
        m[(k, last)] += v / 2.0;
        m[(last, k)] += v / 2.0;
    }
    m
}

pub fn build_qcqp(sub: &SlotSubproblem) -> Result<QcqpInstance, Error> {
    let (n_users, m) = (sub.num_users(), sub.num_services());
    if sub.lambda.rows() != n_users || sub.lambda.cols() != m || sub.sizes.len() != m || sub.tasks.num_services() != m {
        return Err(ConstraintViolation::Shape("subproblem dimensions disagree".into()).into());
    }
    let l = Layout { users: n_users };
    let n = l.dim();
    let blocks = (0..m)
        .map(|j| {
            let mut obj = vec![(l.z(), sub.g[j])];
            for i in 0..n_users {
                obj.push((l.x(i), -sub.v * sub.lambda[(i, j)]));
                obj.push((l.d(i), sub.v * sub.lambda_d));
            }
            let xz = (0..n_users)
                .map(|i| border(n, &[(l.z(), -1.0), (l.x(i), 1.0)]))
                .collect();
            let binary_x = (0..n_users)
                .map(|i| {
                    let mut f = border(n, &[(l.x(i), 1.0)]);
                    f[(l.x(i), l.x(i))] -= 1.0;
                    f
                })
                .collect();
            let mut binary_z = border(n, &[(l.z(), 1.0)]);
            binary_z[(l.z(), l.z())] -= 1.0;
            let aux = (0..n_users)
                .map(|i| {
                    let mut f = border(n, &[(l.x(i), sub.tasks.cycles[(i, j)])]);
                    f[(l.f(i), l.d(i))] -= 0.5;
                    f[(l.d(i), l.f(i))] -= 0.5;
                    f
                })
                .collect();
            QcqpBlock {
                objective: border(n, &obj),
                xz,
                storage: border(n, &[(l.z(), sub.sizes[j])]),
                compute: border(n, &(0..n_users).map(|i| (l.f(i), 1.0)).collect::<Vec<_>>()),
                binary_x,
                binary_z,
                aux,
                z_bound: border(n, &[(l.z(), 1.0)]),
            }
        })
        .collect();
    Ok(QcqpInstance {
        layout: l,
        blocks,
        storage_capacity: sub.storage,
        compute_capacity: sub.compute,
        cycles: sub.tasks.cycles.clone(),
        gains: sub.g.clone(),
    })
}

impl QcqpInstance {
    pub fn num_services(&self) -> usize {
        self.blocks.len()
    }

    /// Lifted vectors of a binary decision, with `D = Y x / f`.
    pub fn lift_decision(&self, z: &[bool], x: &Grid<bool>, f: &Grid<f64>) -> Vec<DVector<f64>> {
        let l = self.layout;
        (0..self.num_services())
            .map(|j| {
                let mut u = DVector::zeros(l.dim());
                u[l.z()] = f64::from(z[j]);
                u[l.last()] = 1.0;
                for i in 0..l.users {
                    if x[(i, j)] {
                        u[l.x(i)] = 1.0;
                        u[l.f(i)] = f[(i, j)];
                        u[l.d(i)] = self.cycles[(i, j)] / f[(i, j)];
                    }
                }
                u
            })
            .collect()
    }

    /// `sum_j u_j' F^P_j u_j`
    pub fn objective_value(&self, us: &[DVector<f64>]) -> f64 {
        self.blocks.iter().zip(us).map(|(b, u)| quad(&b.objective, u)).sum()
    }

    /// Largest violation over all constraints at the given vectors.
    pub fn max_violation(&self, us: &[DVector<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        let mut storage = -self.storage_capacity;
        let mut compute = -self.compute_capacity;
        for (b, u) in self.blocks.iter().zip(us) {
            storage += quad(&b.storage, u);
            compute += quad(&b.compute, u);
            for f in b.xz.iter().chain(&b.aux) {
                worst = worst.max(quad(f, u));
            }
            for f in b.binary_x.iter().chain(std::iter::once(&b.binary_z)) {
                worst = worst.max(quad(f, u).abs());
            }
            worst = worst.max(quad(&b.z_bound, u) - 1.0);
        }
        worst.max(storage).max(compute)
    }
}

fn quad(f: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    u.dot(&(f * u))
}

/// Which full coordinates a relaxed block keeps, and their scale factors.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMap {
    pub service: usize,
    pub users: Vec<usize>,
    /// Full coordinate of each reduced coordinate.
    pub index: Vec<usize>,
    /// `u_full[index[k]] = scale[k] * u_reduced[k]`
    pub scale: Vec<f64>,
}

impl BlockMap {
    fn dim(&self) -> usize {
        self.index.len()
    }

    /// Reduced, rescaled entries of a full symmetric matrix.
    pub fn restrict(&self, block: usize, f: &DMatrix<f64>) -> Vec<Entry> {
        let mut out = Vec::new();
        for r in 0..self.dim() {
            for c in r..self.dim() {
                let v = f[(self.index[r], self.index[c])] * self.scale[r] * self.scale[c];
                if v != 0.0 {
                    out.push(Entry::new(block, r, c, v));
                }
            }
        }
        out
    }

    /// Full matrix `D U D` placed on the kept coordinates.
    pub fn embed(&self, reduced: &DMatrix<f64>, full_dim: usize) -> DMatrix<f64> {
        let mut u = DMatrix::zeros(full_dim, full_dim);
        for r in 0..self.dim() {
            for c in 0..self.dim() {
                u[(self.index[r], self.index[c])] = reduced[(r, c)] * self.scale[r] * self.scale[c];
            }
        }
        u
    }

    /// Reduced vector of a full lifted vector.
    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |k, _| u[self.index[k]] / self.scale[k])
    }
}

#[derive(Debug, Clone)]
pub struct SdrProblem {
    pub instance: SdpInstance,
    pub blocks: Vec<BlockMap>,
    pub layout: Layout,
    pub num_services: usize,
}

/// Valid upper bound on `Y_ij / f_ij` at the optimal compute split.
fn delay_bounds(q: &QcqpInstance) -> Grid<f64> {
    let total: f64 = q.cycles.values().iter().filter(|&&y| y > 0.0).map(|y| y.sqrt()).sum();
    q.cycles.map(|&y| {
        if y > 0.0 {
            2.0 * y.sqrt() * total / q.compute_capacity
        } else {
            0.0
        }
    })
}

pub fn relax_to_sdp(q: &QcqpInstance) -> SdrProblem {
    let l = q.layout;
    let dmax = delay_bounds(q);
    let mut maps = Vec::new();
    for j in 0..q.num_services() {
        let users: Vec<usize> = (0..l.users).filter(|&i| q.cycles[(i, j)] > 0.0).collect();
        if users.is_empty() && q.gains[j] >= 0.0 {
            continue;
        }
        let mut index = vec![l.z()];
        let mut scale = vec![1.0];
        for &i in &users {
            index.push(l.x(i));
            scale.push(1.0);
        }
        for &i in &users {
            index.push(l.f(i));
            scale.push(q.compute_capacity);
        }
        for &i in &users {
            index.push(l.d(i));
            scale.push(dmax[(i, j)]);
        }
        index.push(l.last());
        scale.push(1.0);
        maps.push(BlockMap {
            service: j,
            users,
            index,
            scale,
        });
    }

    let mut inst = SdpInstance::new(maps.iter().map(BlockMap::dim).collect());
    let mut storage = Vec::new();
    let mut compute = Vec::new();
    for (b, map) in maps.iter().enumerate() {
        let blk = &q.blocks[map.service];
        let k = map.users.len();
        let last = map.dim() - 1;
        inst.objective.extend(map.restrict(b, &blk.objective));
        storage.extend(map.restrict(b, &blk.storage));
        compute.extend(map.restrict(b, &blk.compute));
        for &i in &map.users {
            inst.add_constraint(map.restrict(b, &blk.xz[i]), Sense::Le, 0.0);
            inst.add_constraint(map.restrict(b, &blk.binary_x[i]), Sense::Eq, 0.0);
            inst.add_constraint(map.restrict(b, &blk.aux[i]), Sense::Le, 0.0);
        }
        inst.add_constraint(map.restrict(b, &blk.binary_z), Sense::Eq, 0.0);
        inst.add_constraint(map.restrict(b, &blk.z_bound), Sense::Le, 1.0);
        inst.add_constraint(vec![Entry::new(b, last, last, 1.0)], Sense::Eq, 1.0);
        // reduced coordinates 1+k.. are f then D, already divided by their bounds
        for r in 1 + k..1 + 3 * k {
            inst.add_constraint(vec![Entry::new(b, r, last, 0.5)], Sense::Ge, 0.0);
            inst.add_constraint(vec![Entry::new(b, r, r, 1.0)], Sense::Le, 1.0);
        }
    }
    if !storage.is_empty() {
        inst.add_constraint(storage, Sense::Le, q.storage_capacity);
    }
    if !compute.is_empty() {
        inst.add_constraint(compute, Sense::Le, q.compute_capacity);
    }
    SdrProblem {
        instance: inst,
        blocks: maps,
        layout: l,
        num_services: q.num_services(),
    }
}

#[derive(Debug, Clone)]
pub struct RelaxedSolution {
    /// One full `(3I+2)`-square matrix per service.
    pub matrices: Vec<DMatrix<f64>>,
    /// `sum_j Tr(F^P_j U_j)` in the original units.
    pub objective: f64,
    /// `None` when every service was fixed without solving.
    pub certificate: Option<SolveCertificate>,
}

/// Certificate tolerance for accepting an iterate when the budget runs out.
pub const ACCEPT_TOL: f64 = 1e-6;

pub fn solve_relaxation(q: &QcqpInstance, p: &SdrProblem, opts: &SolverOptions) -> Result<RelaxedSolution, Error> {
    let l = p.layout;
    let n = l.dim();
    let mut idle = DMatrix::zeros(n, n);
    idle[(l.last(), l.last())] = 1.0;
    let mut matrices = vec![idle; p.num_services];
    let mut certificate = None;
    if !p.blocks.is_empty() {
        let (solution, cert) = match solve_sdp(&p.instance, opts) {
            Ok(out) => (out.solution, out.certificate),
            Err(SdpError::MaxIterations { solution, certificate }) if certificate.meets(ACCEPT_TOL) => {
                (*solution, certificate)
            }
            Err(e) => return Err(e.into()),
        };
        for (map, u) in p.blocks.iter().zip(&solution.primal) {
            matrices[map.service] = map.embed(u, n);
        }
        certificate = Some(cert);
    }
    let objective = q
        .blocks
        .iter()
        .zip(&matrices)
        .map(|(b, u)| b.objective.component_mul(u).sum())
        .sum();
    Ok(RelaxedSolution {
        matrices,
        objective,
        certificate,
    })
}

/// Relaxed caching and offloading values read from the last row.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedDecisions {
    pub z_prob: Vec<f64>,
    pub x_prob: Grid<f64>,
}

pub const EXTRACT_TOL: f64 = 1e-6;

pub fn extract_relaxed_decisions(sol: &RelaxedSolution, layout: Layout) -> Result<RelaxedDecisions, Error> {
    let last = layout.last();
    let read = |u: &DMatrix<f64>, k: usize, what: &'static str| -> Result<f64, Error> {
        let v = u[(last, k)];
        if !(-EXTRACT_TOL..=1.0 + EXTRACT_TOL).contains(&v) {
            return Err(Error::Extraction { what, value: v });
        }
        Ok(v.clamp(0.0, 1.0))
    };
    let mut z_prob = Vec::with_capacity(sol.matrices.len());
    let mut x_prob = Grid::filled(layout.users, sol.matrices.len(), 0.0);
    for (j, u) in sol.matrices.iter().enumerate() {
        let corner = u[(last, last)];
        if (corner - 1.0).abs() > EXTRACT_TOL {
            return Err(Error::Extraction {
                what: "corner entry",
                value: corner,
            });
        }
        z_prob.push(read(u, layout.z(), "caching value")?);
        for i in 0..layout.users {
            x_prob[(i, j)] = read(u, layout.x(i), "offloading value")?;
        }
    }
    Ok(RelaxedDecisions { z_prob, x_prob })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub z: Vec<bool>,
    pub y: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
}

pub const DEFAULT_SAMPLES: usize = 16;

/// `k` Bernoulli draws of the caching vector, each repaired by removing
/// uniformly chosen cached services until it fits in storage.
pub fn sample_and_repair(
    z_prob: &[f64],
    k: usize,
    rng: &mut (impl Rng + ?Sized),
    sizes: &[f64],
    storage: f64,
    cases: &[CaseTag],
) -> SampleSet {
    let samples = (0..k)
        .map(|_| {
            let mut z: Vec<bool> = z_prob.iter().map(|&p| rng.random_bool(p.clamp(0.0, 1.0))).collect();
            repair(&mut z, rng, sizes, storage);
            let y = z.iter().zip(cases).map(|(&z, &c)| derive_download(c, z)).collect();
            Sample { z, y }
        })
        .collect();
    SampleSet { samples }
}

/// Removes uniformly chosen cached services until the rest fits in storage.
pub fn repair(z: &mut [bool], rng: &mut (impl Rng + ?Sized), sizes: &[f64], storage: f64) {
    loop {
        let used: f64 = z.iter().zip(sizes).filter(|(z, _)| **z).map(|(_, s)| s).sum();
        if used <= storage {
            return;
        }
        let cached: Vec<usize> = (0..z.len()).filter(|&j| z[j]).collect();
        z[cached[rng.random_range(0..cached.len())]] = false;
    }
}

/// Relaxed caching values of a slot, from subproblem to extraction.
pub fn relaxed_caching(
    sub: &SlotSubproblem,
    opts: &SolverOptions,
) -> Result<(RelaxedDecisions, RelaxedSolution), Error> {
    let q = build_qcqp(sub)?;
    let p = relax_to_sdp(&q);
    let sol = solve_relaxation(&q, &p, opts)?;
    Ok((extract_relaxed_decisions(&sol, q.layout)?, sol))
}

/// Labelled plain-text dump of every QCQP matrix.
pub fn write_qcqp(q: &QcqpInstance) -> String {
    use freshedge_sdp::text::write_matrix;
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# qcqp users {} services {} storage {:e} compute {:e}",
        q.layout.users,
        q.num_services(),
        q.storage_capacity,
        q.compute_capacity
    );
    for (j, b) in q.blocks.iter().enumerate() {
        write_matrix(&mut out, &format!("{j}/objective"), &b.objective);
        write_matrix(&mut out, &format!("{j}/storage"), &b.storage);
        write_matrix(&mut out, &format!("{j}/compute"), &b.compute);
        write_matrix(&mut out, &format!("{j}/binary_z"), &b.binary_z);
        write_matrix(&mut out, &format!("{j}/z_bound"), &b.z_bound);
        for i in 0..q.layout.users {
            write_matrix(&mut out, &format!("{j}/xz/{i}"), &b.xz[i]);
            write_matrix(&mut out, &format!("{j}/binary_x/{i}"), &b.binary_x[i]);
            write_matrix(&mut out, &format!("{j}/aux/{i}"), &b.aux[i]);
        }
    }
    out
}

/// Closed-form compute split for a binary decision, for lifting.
pub fn closed_form_compute(sub: &SlotSubproblem, x: &Grid<bool>) -> Grid<f64> {
    allocate_compute(&sub.tasks, x, sub.compute)
}
