//! Always cache the same services and serve every request for them locally.

use rand::RngCore;

use super::{storage_used, Binary, Decided, Policy};
use crate::lyapunov::SlotSubproblem;
use crate::{Error, Grid};

/// What to do when the fixed set outgrows storage as sizes change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Overflow {
    /// Drop the currently largest member until the rest fits.
    #[default]
    DropLargest,
    Reject,
}

pub fn fixed_decide(sub: &SlotSubproblem, set: &[usize], overflow: Overflow) -> Result<Binary, Error> {
    let (n, m) = (sub.num_users(), sub.num_services());
    let mut z = vec![false; m];
    for &j in set {
        if j >= m {
            return Err(Error::Config {
                key: "fixed_services".into(),
                message: format!("service {j} out of range for {m} services"),
            });
        }
        z[j] = true;
    }
    while storage_used(sub, &z) > sub.storage {
        if overflow == Overflow::Reject {
            return Err(Error::FixedSetOverflow);
        }
        let largest = (0..m)
            .filter(|&j| z[j])
            .max_by(|&a, &b| sub.sizes[a].total_cmp(&sub.sizes[b]))
            .expect("an empty set always fits");
        z[largest] = false;
    }
    let x = Grid::from_fn(n, m, |i, j| z[j] && sub.tasks.is_present(i, j));
    Ok(Binary { z, x })
}

#[derive(Debug, Clone)]
pub struct FixedPolicy {
    pub services: Vec<usize>,
    pub overflow: Overflow,
}

impl FixedPolicy {
    pub fn new(services: Vec<usize>, overflow: Overflow) -> Self {
        Self { services, overflow }
    }
}

impl Policy for FixedPolicy {
    fn name(&self) -> &str {
        "fixed"
    }

    fn decide(&mut self, sub: &SlotSubproblem, _rng: &mut dyn RngCore) -> Result<Decided, Error> {
        let b = fixed_decide(sub, &self.services, self.overflow)?;
        Decided::from_binary(sub, &b, None)
    }
}
