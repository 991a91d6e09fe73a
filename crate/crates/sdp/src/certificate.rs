use nalgebra::DMatrix;

use crate::instance::{SdpInstance, Sense};
use crate::solver::SdpSolution;

/// Optimality and feasibility measures of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveCertificate {
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|primal - dual| / (1 + |primal|)`
    pub duality_gap: f64,
    /// Largest constraint violation, each divided by the Frobenius norm of its matrix.
    pub primal_infeasibility: f64,
    /// `||C - sum_k y_k A_k - Z||_F / (1 + ||C||_F)`, plus any sign violation of inequality duals.
    pub dual_infeasibility: f64,
    /// Smallest eigenvalue over all primal blocks. Not clamped.
    pub min_eigenvalue: f64,
    pub iterations: usize,
}

impl SolveCertificate {
    pub fn meets(&self, tol: f64) -> bool {
        self.duality_gap <= tol
            && self.primal_infeasibility <= tol
            && self.dual_infeasibility <= tol
            && self.min_eigenvalue >= -tol
    }
}

/// Recomputes every certificate quantity from the instance data and the
/// returned matrices alone.
pub fn check_certificates(solution: &SdpSolution, instance: &SdpInstance) -> SolveCertificate {
    let x = &solution.primal;
    let primal_objective = SdpInstance::apply(&instance.objective, x);
    let dual_objective: f64 = instance
        .constraints
        .iter()
        .zip(&solution.dual)
        .map(|(c, y)| c.rhs * y)
        .sum();

    let mut primal_infeasibility: f64 = 0.0;
    let mut sign_violation: f64 = 0.0;
    for (k, con) in instance.constraints.iter().enumerate() {
        let norm = entries_norm(instance, k);
        if norm == 0.0 {
            continue;
        }
        let value = SdpInstance::apply(&con.entries, x);
        let violation = match con.sense {
            Sense::Eq => (value - con.rhs).abs(),
            Sense::Le => (value - con.rhs).max(0.0),
            Sense::Ge => (con.rhs - value).max(0.0),
        };
        primal_infeasibility = primal_infeasibility.max(violation / norm);
        let y = solution.dual.get(k).copied().unwrap_or(0.0);
        let wrong_sign = match con.sense {
            Sense::Eq => 0.0,
            Sense::Le => y.max(0.0),
            Sense::Ge => (-y).max(0.0),
        };
        sign_violation = sign_violation.max(wrong_sign * norm);
    }

    let mut residual_sq = 0.0;
    let mut c_norm_sq = 0.0;
    let mut min_eigenvalue = f64::INFINITY;
    for (b, &n) in instance.block_sizes.iter().enumerate() {
        let c = instance.block_matrix(&instance.objective, b);
        c_norm_sq += c.norm_squared();
        let mut r = c;
        for (con, &y) in instance.constraints.iter().zip(&solution.dual) {
            if y != 0.0 {
                r -= instance.block_matrix(&con.entries, b) * y;
            }
        }
        let z = solution
            .dual_slack
            .get(b)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(n, n));
        r -= z;
        residual_sq += r.norm_squared();
        let ev = x[b].clone().symmetric_eigenvalues().min();
        min_eigenvalue = min_eigenvalue.min(ev);
    }
    let c_norm = c_norm_sq.sqrt();
    let dual_infeasibility = residual_sq.sqrt() / (1.0 + c_norm) + sign_violation / (1.0 + c_norm);

    SolveCertificate {
        primal_objective,
        dual_objective,
        duality_gap: (primal_objective - dual_objective).abs() / (1.0 + primal_objective.abs()),
        primal_infeasibility,
        dual_infeasibility,
        min_eigenvalue,
        iterations: solution.iterations,
    }
}

fn entries_norm(instance: &SdpInstance, k: usize) -> f64 {
    let con = &instance.constraints[k];
    let mut blocks: Vec<usize> = con.entries.iter().map(|e| e.block).collect();
    blocks.sort_unstable();
    blocks.dedup();
    blocks
        .into_iter()
        .map(|b| instance.block_matrix(&con.entries, b).norm_squared())
        .sum::<f64>()
        .sqrt()
}
