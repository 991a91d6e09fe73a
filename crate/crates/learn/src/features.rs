//! Network inputs built from a slot subproblem.
//!
//! Task features are the upload sizes of the user-by-service grid divided by
//! `task_scale`. A group input appends the group's caching and downloading
//! vectors and, per user, whether the requested service is cached in the
//! group.

use freshedge_core::lyapunov::SlotSubproblem;
use freshedge_core::sdr::Sample;
use nalgebra::{DMatrix, DVector};

use crate::LearnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureLayout {
    pub users: usize,
    pub services: usize,
    /// bytes
    pub task_scale: f64,
}

impl FeatureLayout {
    pub fn task_dim(&self) -> usize {
        self.users * self.services
    }

    pub fn group_dim(&self) -> usize {
        self.task_dim() + 2 * self.services + self.users
    }

    /// Input of a caching actor: task features, previous caching vector and
    /// service sizes relative to storage.
    pub fn cache_dim(&self) -> usize {
        self.task_dim() + 2 * self.services
    }

    pub fn check(&self, sub: &SlotSubproblem) -> Result<(), LearnError> {
        if sub.num_users() != self.users {
            return Err(LearnError::Shape {
                what: "users",
                expected: self.users,
                got: sub.num_users(),
            });
        }
        if sub.num_services() != self.services {
            return Err(LearnError::Shape {
                what: "services",
                expected: self.services,
                got: sub.num_services(),
            });
        }
        Ok(())
    }

    pub fn task_features(&self, sub: &SlotSubproblem) -> Vec<f64> {
        sub.tasks.up.values().iter().map(|s| s / self.task_scale).collect()
    }

    fn push_group(&self, out: &mut Vec<f64>, sub: &SlotSubproblem, z: &[bool], y: &[bool]) {
        out.extend(z.iter().map(|&b| f64::from(u8::from(b))));
        out.extend(y.iter().map(|&b| f64::from(u8::from(b))));
        for i in 0..self.users {
            let cached = sub.tasks.requested(i).is_some_and(|j| z[j]);
            out.push(f64::from(u8::from(cached)));
        }
    }

    pub fn group_input(&self, sub: &SlotSubproblem, task: &[f64], z: &[bool], y: &[bool]) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.group_dim());
        v.extend_from_slice(task);
        self.push_group(&mut v, sub, z, y);
        DVector::from_vec(v)
    }

    /// One column per group.
    pub fn group_inputs(&self, sub: &SlotSubproblem, task: &[f64], groups: &[Sample]) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = groups.iter().map(|g| self.group_input(sub, task, &g.z, &g.y)).collect();
        DMatrix::from_columns(&cols)
    }

    /// Critic input: the group layout filled with the average over groups.
    pub fn mean_group_input(&self, groups: &DMatrix<f64>) -> DVector<f64> {
        groups.column_mean()
    }

    pub fn cache_input(&self, sub: &SlotSubproblem, task: &[f64]) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.cache_dim());
        v.extend_from_slice(task);
        v.extend(sub.z_prev.iter().map(|&b| f64::from(u8::from(b))));
        v.extend(sub.sizes.iter().map(|s| s / sub.storage));
        DVector::from_vec(v)
    }
}
