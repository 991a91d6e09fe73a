use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::certificate::{check_certificates, SolveCertificate};
use crate::instance::{SdpInstance, Sense};
use crate::SdpError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target for relative gap, primal and dual infeasibility.
    pub tol: f64,
    pub max_iters: usize,
    /// Fraction-to-boundary factor applied to the longest feasible step.
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iters: 100,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub primal: Vec<DMatrix<f64>>,
    /// One multiplier per constraint, in the original constraint order and scaling.
    pub dual: Vec<f64>,
    pub dual_slack: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub gap: f64,
    pub mu: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub solution: SdpSolution,
    pub certificate: SolveCertificate,
    pub history: Vec<IterationRecord>,
}

/// Full-matrix coefficient list of one constraint restricted to one block.
/// Off-diagonal entries appear at both positions.
type Part = Vec<(usize, usize, f64)>;

struct Row {
    parts: Vec<(usize, Part)>,
    slack: Option<(usize, f64)>,
    rhs: f64,
    /// original row = scale * normalized row
    scale: f64,
    original: usize,
}

struct Scaled {
    sizes: Vec<usize>,
    c: Vec<DMatrix<f64>>,
    c_scale: f64,
    rows: Vec<Row>,
    n_lp: usize,
    /// For every block, `(row index, part index)` of the rows touching it.
    touching: Vec<Vec<(usize, usize)>>,
    n_total: usize,
}

struct Iterate {
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    zl: DVector<f64>,
    y: DVector<f64>,
}

/// Solves a block-diagonal SDP with a primal-dual predictor-corrector method.
///
/// Rows are normalized and the objective rescaled before iterating, so the
/// result does not depend on how the caller scaled its constraints.
pub fn solve_sdp(instance: &SdpInstance, opts: &SolverOptions) -> Result<SolveOutput, SdpError> {
    instance.validate()?;
    let p = presolve(instance)?;
    let m = p.rows.len();

    let n_max = *p.sizes.iter().max().unwrap_or(&1) as f64;
    let b_max = p.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
    let c_norm = p.c.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt();
    let xi = 10f64.max(n_max.sqrt()).max(n_max * (1.0 + b_max) / 2.0);
    let eta = 10f64.max(n_max.sqrt()).max(c_norm);

    let mut it = Iterate {
        x: p.sizes.iter().map(|&n| DMatrix::identity(n, n) * xi).collect(),
        z: p.sizes.iter().map(|&n| DMatrix::identity(n, n) * eta).collect(),
        xl: DVector::from_element(p.n_lp, xi),
        zl: DVector::from_element(p.n_lp, eta),
        y: DVector::zeros(m),
    };
    let b = DVector::from_iterator(m, p.rows.iter().map(|r| r.rhs));

    let mut history = Vec::new();
    let mut best: Option<(f64, SdpSolution)> = None;
    let mut stalled = 0usize;

    for iter in 0..=opts.max_iters {
        let ax = p.apply(&it.x, &it.xl);
        let rp = &b - &ax;
        let (aty, atyl) = p.adjoint(&it.y);
        let rd: Vec<DMatrix<f64>> = (0..p.sizes.len()).map(|k| &p.c[k] - &aty[k] - &it.z[k]).collect();
        let rdl = -&atyl - &it.zl;

        let xz: f64 = it.x.iter().zip(&it.z).map(|(x, z)| x.dot(z)).sum::<f64>() + it.xl.dot(&it.zl);
        let mu = xz / p.n_total as f64;

        let pobj_n: f64 = p.c.iter().zip(&it.x).map(|(c, x)| c.dot(x)).sum();
        let dobj_n = b.dot(&it.y);
        let pobj = p.c_scale * pobj_n;
        let dobj = p.c_scale * dobj_n;
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
        let pinf = rp.amax();
        let rd_norm = (rd.iter().map(|r| r.norm_squared()).sum::<f64>() + rdl.norm_squared()).sqrt();
        let dinf = rd_norm / (1.0 / p.c_scale + c_norm);

        let merit = gap.max(pinf).max(dinf);
        if best.as_ref().is_none_or(|(m0, _)| merit < *m0) {
            best = Some((merit, p.unscale(&it, iter, pobj, dobj)));
        }

        let record = IterationRecord {
            iteration: iter,
            primal_objective: pobj,
            dual_objective: dobj,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            gap,
            mu,
            step_primal: f64::NAN,
            step_dual: f64::NAN,
        };
        history.push(record);

        if gap <= opts.tol && pinf <= opts.tol && dinf <= opts.tol {
            let solution = p.unscale(&it, iter, pobj, dobj);
            let certificate = check_certificates(&solution, instance);
            return Ok(SolveOutput {
                solution,
                certificate,
                history,
            });
        }
        if iter == opts.max_iters || stalled >= 3 {
            break;
        }

        if dobj_n > 1e6 && p.dual_ray(&it.y, dobj_n) {
            return Err(SdpError::Infeasible(format!(
                "dual objective diverges ({dobj:.3e}) along a certificate direction"
            )));
        }
        if pobj_n < -1e6 {
            let homogeneous = ax.amax() / pobj_n.abs();
            if homogeneous < 1e-6 {
                return Err(SdpError::Unbounded(format!("primal objective diverges ({pobj:.3e})")));
            }
        }

        // Z^{-1} per block
        let mut w = Vec::with_capacity(p.sizes.len());
        for (k, z) in it.z.iter().enumerate() {
            let ch = Cholesky::new(z.clone())
                .ok_or_else(|| SdpError::NumericalFailure(format!("dual slack block {k} lost definiteness")))?;
            w.push(ch.inverse());
        }
        let wl = it.zl.map(|v| 1.0 / v);

        let schur = p.schur(&it.x, &w, &it.xl, &wl);
        let factor = factorize(schur)?;

        // predictor
        let dir_aff = p.direction(&it, &rd, &rdl, &w, &wl, &b, &factor, 0.0, None);
        let ap = opts.step_fraction * max_step(&it.x, &dir_aff.dx, &it.xl, &dir_aff.dxl)?;
        let ad = opts.step_fraction * max_step(&it.z, &dir_aff.dz, &it.zl, &dir_aff.dzl)?;
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let xz_aff: f64 =
            it.x.iter()
                .zip(&dir_aff.dx)
                .zip(it.z.iter().zip(&dir_aff.dz))
                .map(|((x, dx), (z, dz))| (x + dx * ap).dot(&(z + dz * ad)))
                .sum::<f64>()
                + (&it.xl + &dir_aff.dxl * ap).dot(&(&it.zl + &dir_aff.dzl * ad));
        let sigma = (xz_aff / xz).clamp(0.0, 1.0).powi(3);

        // corrector
        let dir = p.direction(&it, &rd, &rdl, &w, &wl, &b, &factor, sigma * mu, Some(&dir_aff));
        let ap = (opts.step_fraction * max_step(&it.x, &dir.dx, &it.xl, &dir.dxl)?).min(1.0);
        let ad = (opts.step_fraction * max_step(&it.z, &dir.dz, &it.zl, &dir.dzl)?).min(1.0);

        for (x, dx) in it.x.iter_mut().zip(&dir.dx) {
            *x += dx * ap;
        }
        it.xl += &dir.dxl * ap;
        for (z, dz) in it.z.iter_mut().zip(&dir.dz) {
            *z += dz * ad;
        }
        it.zl += &dir.dzl * ad;
        it.y += &dir.dy * ad;

        if let Some(last) = history.last_mut() {
            last.step_primal = ap;
            last.step_dual = ad;
        }
        if ap < 1e-10 && ad < 1e-10 {
            stalled += 1;
        } else {
            stalled = 0;
        }
    }

    let (_, solution) = best.expect("at least one iterate");
    let certificate = check_certificates(&solution, instance);
    Err(SdpError::MaxIterations {
        solution: Box::new(solution),
        certificate,
    })
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    dxl: DVector<f64>,
    dzl: DVector<f64>,
    dy: DVector<f64>,
}

fn factorize(mut schur: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>, SdpError> {
    let scale = schur.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut shift = 0.0;
    for _ in 0..4 {
        if let Some(ch) = Cholesky::new(schur.clone()) {
            return Ok(ch);
        }
        let bump = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
        for i in 0..schur.nrows() {
            schur[(i, i)] += bump - shift;
        }
        shift = bump;
    }
    Err(SdpError::NumericalFailure(
        "Schur complement is not positive definite".into(),
    ))
}

/// Longest `alpha` with `X + alpha dX` PSD and `x + alpha dx >= 0`.
fn max_step(x: &[DMatrix<f64>], dx: &[DMatrix<f64>], xl: &DVector<f64>, dxl: &DVector<f64>) -> Result<f64, SdpError> {
    let mut alpha = f64::INFINITY;
    for (xb, dxb) in x.iter().zip(dx) {
        let ch =
            Cholesky::new(xb.clone()).ok_or_else(|| SdpError::NumericalFailure("iterate left the PSD cone".into()))?;
        let l = ch.l();
        let left = l
            .solve_lower_triangular(dxb)
            .ok_or_else(|| SdpError::NumericalFailure("singular factor".into()))?;
        let s = l
            .solve_lower_triangular(&left.transpose())
            .ok_or_else(|| SdpError::NumericalFailure("singular factor".into()))?;
        let s = (&s + s.transpose()) * 0.5;
        let lmin = s.symmetric_eigenvalues().min();
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    for (v, dv) in xl.iter().zip(dxl.iter()) {
        if *dv < 0.0 {
            alpha = alpha.min(-v / dv);
        }
    }
    Ok(alpha)
}

fn presolve(instance: &SdpInstance) -> Result<Scaled, SdpError> {
    let nb = instance.block_sizes.len();

    // upper-triangle maps per constraint for norms and Gram products
    let uppers: Vec<BTreeMap<(usize, usize, usize), f64>> = instance
        .constraints
        .iter()
        .map(|c| {
            let mut map = BTreeMap::new();
            for e in &c.entries {
                let key = (e.block, e.row.min(e.col), e.row.max(e.col));
                *map.entry(key).or_insert(0.0) += e.value;
            }
            map.retain(|_, v| *v != 0.0);
            map
        })
        .collect();
    let inner = |a: &BTreeMap<(usize, usize, usize), f64>, b: &BTreeMap<(usize, usize, usize), f64>| {
        let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        small
            .iter()
            .filter_map(|(k, v)| large.get(k).map(|w| v * w * if k.1 == k.2 { 1.0 } else { 2.0 }))
            .sum::<f64>()
    };
    let norms: Vec<f64> = uppers.iter().map(|u| inner(u, u).sqrt()).collect();

    for (k, con) in instance.constraints.iter().enumerate() {
        if norms[k] == 0.0 {
            let ok = match con.sense {
                Sense::Eq => con.rhs == 0.0,
                Sense::Le => con.rhs >= 0.0,
                Sense::Ge => con.rhs <= 0.0,
            };
            if !ok {
                return Err(SdpError::Infeasible(format!(
                    "constraint {k} has no coefficients and right-hand side {}",
                    con.rhs
                )));
            }
        }
    }

    // linearly dependent equality rows
    let eq: Vec<usize> = (0..instance.constraints.len())
        .filter(|&k| norms[k] > 0.0 && instance.constraints[k].sense == Sense::Eq)
        .collect();
    let mut dropped = vec![false; instance.constraints.len()];
    if eq.len() > 1 {
        let g = DMatrix::from_fn(eq.len(), eq.len(), |a, b| {
            inner(&uppers[eq[a]], &uppers[eq[b]]) / (norms[eq[a]] * norms[eq[b]])
        });
        let rhs: Vec<f64> = eq.iter().map(|&k| instance.constraints[k].rhs / norms[k]).collect();
        let independent = pivoted_independent(&g, 1e-10);
        if independent.len() < eq.len() {
            let gi = DMatrix::from_fn(independent.len(), independent.len(), |a, b| {
                g[(independent[a], independent[b])]
            });
            let ch = Cholesky::new(gi)
                .ok_or_else(|| SdpError::NumericalFailure("Gram matrix of equality rows is singular".into()))?;
            for d in 0..eq.len() {
                if independent.contains(&d) {
                    continue;
                }
                let gd = DVector::from_fn(independent.len(), |a, _| g[(independent[a], d)]);
                let coef = ch.solve(&gd);
                let predicted: f64 = independent.iter().zip(coef.iter()).map(|(&a, c)| c * rhs[a]).sum();
                let scale = 1.0 + rhs[d].abs() + coef.amax() * rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if (predicted - rhs[d]).abs() > 1e-8 * scale {
                    return Err(SdpError::Infeasible(format!(
                        "equality constraint {} contradicts a combination of the others",
                        eq[d]
                    )));
                }
                dropped[eq[d]] = true;
            }
        }
    }

    let mut rows = Vec::new();
    let mut n_lp = 0;
    for (k, con) in instance.constraints.iter().enumerate() {
        if dropped[k] || norms[k] == 0.0 {
            continue;
        }
        let s = norms[k];
        let mut parts: BTreeMap<usize, Part> = BTreeMap::new();
        for (&(blk, r, c), &v) in &uppers[k] {
            let part = parts.entry(blk).or_default();
            part.push((r, c, v / s));
            if r != c {
                part.push((c, r, v / s));
            }
        }
        let slack = match con.sense {
            Sense::Eq => None,
            Sense::Le => {
                n_lp += 1;
                Some((n_lp - 1, 1.0))
            }
            Sense::Ge => {
                n_lp += 1;
                Some((n_lp - 1, -1.0))
            }
        };
        rows.push(Row {
            parts: parts.into_iter().collect(),
            slack,
            rhs: con.rhs / s,
            scale: s,
            original: k,
        });
    }

    let c_raw: Vec<DMatrix<f64>> = (0..nb)
        .map(|blk| instance.block_matrix(&instance.objective, blk))
        .collect();
    let c_norm = c_raw.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt();
    let c_scale = if c_norm > 0.0 { c_norm } else { 1.0 };
    let c = c_raw.into_iter().map(|m| m / c_scale).collect();

    let mut touching = vec![Vec::new(); nb];
    for (k, row) in rows.iter().enumerate() {
        for (pi, (blk, _)) in row.parts.iter().enumerate() {
            touching[*blk].push((k, pi));
        }
    }
    let n_total = instance.block_sizes.iter().sum::<usize>() + n_lp;

    Ok(Scaled {
        sizes: instance.block_sizes.clone(),
        c,
        c_scale,
        rows,
        n_lp,
        touching,
        n_total,
    })
}

/// Indices kept by a diagonally pivoted Cholesky of a Gram matrix.
fn pivoted_independent(g: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let n = g.nrows();
    let mut a = g.clone();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut kept = Vec::new();
    let threshold = rel_tol * g.diagonal().amax().max(f64::MIN_POSITIVE);
    while !remaining.is_empty() {
        let (pos, &piv) = remaining
            .iter()
            .enumerate()
            .max_by(|x, y| a[(*x.1, *x.1)].total_cmp(&a[(*y.1, *y.1)]))
            .expect("nonempty");
        let d = a[(piv, piv)];
        if d <= threshold {
            break;
        }
        remaining.swap_remove(pos);
        kept.push(piv);
        let col: Vec<f64> = (0..n).map(|i| a[(i, piv)]).collect();
        for &i in &remaining {
            for &j in &remaining {
                a[(i, j)] -= col[i] * col[j] / d;
            }
        }
    }
    kept.sort_unstable();
    kept
}

impl Scaled {
    fn apply(&self, x: &[DMatrix<f64>], xl: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|row| {
                let mut v = 0.0;
                for (blk, part) in &row.parts {
                    let xb = &x[*blk];
                    v += part.iter().map(|&(r, c, a)| a * xb[(c, r)]).sum::<f64>();
                }
                if let Some((i, coef)) = row.slack {
                    v += coef * xl[i];
                }
                v
            }),
        )
    }

    fn adjoint(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let mut out: Vec<DMatrix<f64>> = self.sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        let mut lp = DVector::zeros(self.n_lp);
        for (row, &yk) in self.rows.iter().zip(y.iter()) {
            if yk == 0.0 {
                continue;
            }
            for (blk, part) in &row.parts {
                let m = &mut out[*blk];
                for &(r, c, a) in part {
                    m[(r, c)] += yk * a;
                }
            }
            if let Some((i, coef)) = row.slack {
                lp[i] += yk * coef;
            }
        }
        (out, lp)
    }

    /// `M[k][l] = <A_k, X A_l Z^{-1}>` plus the slack diagonal.
    fn schur(&self, x: &[DMatrix<f64>], w: &[DMatrix<f64>], xl: &DVector<f64>, wl: &DVector<f64>) -> DMatrix<f64> {
        let m = self.rows.len();
        let mut out = DMatrix::zeros(m, m);
        for (blk, list) in self.touching.iter().enumerate() {
            let n = self.sizes[blk];
            let (xb, wb) = (&x[blk], &w[blk]);
            for &(l, pl) in list {
                let part = &self.rows[l].parts[pl].1;
                let g = if part.len() <= n {
                    let mut g = DMatrix::zeros(n, n);
                    for &(r, c, a) in part {
                        // a * X[:, r] * W[c, :]
                        for j in 0..n {
                            let wcj = a * wb[(c, j)];
                            if wcj == 0.0 {
                                continue;
                            }
                            for i in 0..n {
                                g[(i, j)] += xb[(i, r)] * wcj;
                            }
                        }
                    }
                    g
                } else {
                    let mut am = DMatrix::zeros(n, n);
                    for &(r, c, a) in part {
                        am[(r, c)] += a;
                    }
                    xb * am * wb
                };
                for &(k, pk) in list {
                    let pk_part = &self.rows[k].parts[pk].1;
                    out[(k, l)] += pk_part.iter().map(|&(r, c, a)| a * g[(c, r)]).sum::<f64>();
                }
            }
        }
        for (k, row) in self.rows.iter().enumerate() {
            if let Some((i, coef)) = row.slack {
                out[(k, k)] += coef * coef * xl[i] * wl[i];
            }
        }
        (&out + out.transpose()) * 0.5
    }

    /// Newton direction for target `sigma_mu`, with the second-order term of
    /// `corr` when given.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        rd: &[DMatrix<f64>],
        rdl: &DVector<f64>,
        w: &[DMatrix<f64>],
        wl: &DVector<f64>,
        b: &DVector<f64>,
        factor: &Cholesky<f64, nalgebra::Dyn>,
        sigma_mu: f64,
        corr: Option<&Direction>,
    ) -> Direction {
        let nb = self.sizes.len();
        // T = sigma_mu W - X Rd W - dXp dZp W
        let t: Vec<DMatrix<f64>> = (0..nb)
            .map(|k| {
                let mut t = &w[k] * sigma_mu - &it.x[k] * &rd[k] * &w[k];
                if let Some(c) = corr {
                    t -= &c.dx[k] * &c.dz[k] * &w[k];
                }
                t
            })
            .collect();
        let mut tl = DVector::from_fn(self.n_lp, |i, _| sigma_mu * wl[i] - it.xl[i] * rdl[i] * wl[i]);
        if let Some(c) = corr {
            for i in 0..self.n_lp {
                tl[i] -= c.dxl[i] * c.dzl[i] * wl[i];
            }
        }
        let h = b - self.apply(&t, &tl);
        let dy = factor.solve(&h);
        let (atdy, atdyl) = self.adjoint(&dy);
        let dz: Vec<DMatrix<f64>> = (0..nb).map(|k| &rd[k] - &atdy[k]).collect();
        let dzl = rdl - atdyl;
        let dx: Vec<DMatrix<f64>> = (0..nb)
            .map(|k| {
                let mut d = &w[k] * sigma_mu - &it.x[k] - &it.x[k] * &dz[k] * &w[k];
                if let Some(c) = corr {
                    d -= &c.dx[k] * &c.dz[k] * &w[k];
                }
                (&d + d.transpose()) * 0.5
            })
            .collect();
        let dxl = DVector::from_fn(self.n_lp, |i, _| {
            let mut d = sigma_mu * wl[i] - it.xl[i] - it.xl[i] * dzl[i] * wl[i];
            if let Some(c) = corr {
                d -= c.dxl[i] * c.dzl[i] * wl[i];
            }
            d
        });
        Direction { dx, dz, dxl, dzl, dy }
    }

    /// True when `-A^T y` is PSD up to a small multiple of `b^T y`.
    fn dual_ray(&self, y: &DVector<f64>, dobj: f64) -> bool {
        let (aty, atyl) = self.adjoint(y);
        let floor = -1e-6 * dobj;
        aty.iter().all(|m| (-m).symmetric_eigenvalues().min() >= floor) && atyl.iter().all(|v| -v >= floor)
    }

    fn unscale(&self, it: &Iterate, iterations: usize, pobj: f64, dobj: f64) -> SdpSolution {
        let total = self.rows.iter().map(|r| r.original + 1).max().unwrap_or(0);
        let mut dual = vec![0.0; total];
        for (row, yk) in self.rows.iter().zip(it.y.iter()) {
            dual[row.original] = yk * self.c_scale / row.scale;
        }
        SdpSolution {
            primal: it.x.iter().map(|x| (x + x.transpose()) * 0.5).collect(),
            dual,
            dual_slack: it
                .z
                .iter()
                .map(|z| (z + z.transpose()) * (0.5 * self.c_scale))
                .collect(),
            primal_objective: pobj,
            dual_objective: dobj,
            iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Entry;

    fn unit_trace() -> SdpInstance {
        let mut inst = SdpInstance::new(vec![2]);
        inst.add_objective(0, 0, 0, 1.0);
        inst.add_objective(0, 1, 1, 1.0);
        inst.add_constraint(vec![Entry::new(0, 0, 0, 1.0)], Sense::Eq, 1.0);
        inst
    }

    fn max_correlation() -> SdpInstance {
        let mut inst = SdpInstance::new(vec![2]);
        inst.add_objective(0, 0, 1, -1.0);
        inst.add_constraint(vec![Entry::new(0, 0, 0, 1.0)], Sense::Eq, 1.0);
        inst.add_constraint(vec![Entry::new(0, 1, 1, 1.0)], Sense::Eq, 1.0);
        inst
    }

    #[test]
    fn trace_with_unit_corner() {
        let out = solve_sdp(&unit_trace(), &SolverOptions::default()).unwrap();
        let u = &out.solution.primal[0];
        assert!((out.solution.primal_objective - 1.0).abs() < 1e-7);
        assert!((u[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(u[(1, 1)].abs() < 1e-6 && u[(0, 1)].abs() < 1e-6);
        assert!(out.certificate.meets(1e-6), "{:?}", out.certificate);
    }

    #[test]
    fn max_correlation_gives_all_ones() {
        let out = solve_sdp(&max_correlation(), &SolverOptions::default()).unwrap();
        assert!((out.solution.primal_objective + 2.0).abs() < 1e-7);
        for v in out.solution.primal[0].iter() {
            assert!((v - 1.0).abs() < 1e-6);
        }
        assert!(out.certificate.meets(1e-6));
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        let mut inst = SdpInstance::new(vec![2]);
        inst.add_objective(0, 0, 0, 1.0);
        inst.add_constraint(vec![Entry::new(0, 0, 0, 1.0)], Sense::Eq, 1.0);
        inst.add_constraint(vec![Entry::new(0, 0, 0, 1.0)], Sense::Eq, 2.0);
        assert!(matches!(
            solve_sdp(&inst, &SolverOptions::default()),
            Err(SdpError::Infeasible(_))
        ));
    }

    #[test]
    fn negative_definite_inequality_is_infeasible() {
        // U11 + U22 <= -1 has no PSD solution
        let mut inst = SdpInstance::new(vec![2]);
        inst.add_objective(0, 0, 0, 1.0);
        inst.add_constraint(
            vec![Entry::new(0, 0, 0, 1.0), Entry::new(0, 1, 1, 1.0)],
            Sense::Le,
            -1.0,
        );
        assert!(matches!(
            solve_sdp(&inst, &SolverOptions::default()),
            Err(SdpError::Infeasible(_))
        ));
    }

    #[test]
    fn inequalities_with_both_senses() {
        // min U11 - U22 s.t. U11 >= 0.5, U22 <= 2, U12 = 0.75
        let mut inst = SdpInstance::new(vec![2]);
        inst.add_objective(0, 0, 0, 1.0);
        inst.add_objective(0, 1, 1, -1.0);
        inst.add_constraint(vec![Entry::new(0, 0, 0, 1.0)], Sense::Ge, 0.5);
        inst.add_constraint(vec![Entry::new(0, 1, 1, 1.0)], Sense::Le, 2.0);
        inst.add_constraint(vec![Entry::new(0, 0, 1, 0.5)], Sense::Eq, 0.75);
        let out = solve_sdp(&inst, &SolverOptions::default()).unwrap();
        // U12 = 0.75, U22 = 2 forces U11 >= 0.28125; U11 >= 0.5 binds
        assert!((out.solution.primal_objective - (0.5 - 2.0)).abs() < 1e-6);
        assert!(out.certificate.meets(1e-6), "{:?}", out.certificate);
        assert!(out.solution.dual[0] > 0.0 && out.solution.dual[1] < 0.0);
    }

    #[test]
    fn weak_duality_along_the_path() {
        for inst in [unit_trace(), max_correlation()] {
            let out = solve_sdp(&inst, &SolverOptions::default()).unwrap();
            for rec in &out.history {
                assert!(rec.dual_objective <= rec.primal_objective + 1e-7, "{rec:?}");
            }
        }
    }

    #[test]
    fn row_scaling_does_not_change_the_answer() {
        let base = solve_sdp(&max_correlation(), &SolverOptions::default()).unwrap();
        let mut scaled = max_correlation();
        for (con, s) in scaled.constraints.iter_mut().zip([1e4, 3e-3]) {
            for e in &mut con.entries {
                e.value *= s;
            }
            con.rhs *= s;
        }
        let out = solve_sdp(&scaled, &SolverOptions::default()).unwrap();
        assert!((out.solution.primal_objective - base.solution.primal_objective).abs() < 1e-7);
        assert!((&out.solution.primal[0] - &base.solution.primal[0]).amax() < 1e-6);
        assert!((out.solution.dual[0] * 1e4 - base.solution.dual[0]).abs() < 1e-5);
    }

    #[test]
    fn pivoting_finds_duplicate_rows() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(pivoted_independent(&g, 1e-10).len(), 2);
    }

    #[test]
    fn redundant_consistent_rows_are_dropped() {
        let mut inst = SdpInstance::new(vec![2]);
        inst.add_objective(0, 0, 0, 1.0);
        inst.add_objective(0, 1, 1, 1.0);
        inst.add_constraint(vec![Entry::new(0, 0, 0, 1.0)], Sense::Eq, 1.0);
        inst.add_constraint(vec![Entry::new(0, 0, 0, 2.0)], Sense::Eq, 2.0);
        let out = solve_sdp(&inst, &SolverOptions::default()).unwrap();
        assert!((out.solution.primal_objective - 1.0).abs() < 1e-6);
        assert_eq!(out.solution.dual.len(), 2);
    }
}
