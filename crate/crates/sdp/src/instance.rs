use nalgebra::DMatrix;

use crate::SdpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn as_str(self) -> &'static str {
        match self {
            Sense::Le => "le",
            Sense::Eq => "eq",
            Sense::Ge => "ge",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "le" | "<=" => Some(Sense::Le),
            "eq" | "=" => Some(Sense::Eq),
            "ge" | ">=" => Some(Sense::Ge),
            _ => None,
        }
    }
}

/// One entry of a symmetric coefficient matrix.
///
/// An off-diagonal entry stands for both `(row, col)` and `(col, row)`.
/// Repeated entries at the same position are summed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Entry {
    pub fn new(block: usize, row: usize, col: usize, value: f64) -> Self {
        Self { block, row, col, value }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub entries: Vec<Entry>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SdpInstance {
    pub block_sizes: Vec<usize>,
    pub objective: Vec<Entry>,
    pub constraints: Vec<LinearConstraint>,
}

impl SdpInstance {
    pub fn new(block_sizes: Vec<usize>) -> Self {
        Self {
            block_sizes,
            objective: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_objective(&mut self, block: usize, row: usize, col: usize, value: f64) {
        self.objective.push(Entry::new(block, row, col, value));
    }

    pub fn add_constraint(&mut self, entries: Vec<Entry>, sense: Sense, rhs: f64) -> usize {
        self.constraints.push(LinearConstraint { entries, sense, rhs });
        self.constraints.len() - 1
    }

    /// Adds `<A, X_block> sense rhs` for a dense symmetric `A`.
    pub fn add_dense_constraint(&mut self, block: usize, a: &DMatrix<f64>, sense: Sense, rhs: f64) -> usize {
        self.add_constraint(dense_entries(block, a), sense, rhs)
    }

    pub fn set_dense_objective(&mut self, block: usize, c: &DMatrix<f64>) {
        self.objective.retain(|e| e.block != block);
        self.objective.extend(dense_entries(block, c));
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.block_sizes.is_empty() {
            return Err(SdpError::InvalidInstance("no blocks".into()));
        }
        if let Some(b) = self.block_sizes.iter().position(|&n| n == 0) {
            return Err(SdpError::InvalidInstance(format!("block {b} has size 0")));
        }
        let check = |e: &Entry, what: &str| -> Result<(), SdpError> {
            let n = *self
                .block_sizes
                .get(e.block)
                .ok_or_else(|| SdpError::InvalidInstance(format!("{what}: block {} out of range", e.block)))?;
            if e.row >= n || e.col >= n {
                return Err(SdpError::InvalidInstance(format!(
                    "{what}: entry ({}, {}) outside block {} of size {n}",
                    e.row, e.col, e.block
                )));
            }
            if !e.value.is_finite() {
                return Err(SdpError::InvalidInstance(format!("{what}: non-finite entry")));
            }
            Ok(())
        };
        for e in &self.objective {
            check(e, "objective")?;
        }
        for (k, c) in self.constraints.iter().enumerate() {
            for e in &c.entries {
                check(e, &format!("constraint {k}"))?;
            }
            if !c.rhs.is_finite() {
                return Err(SdpError::InvalidInstance(format!(
                    "constraint {k}: non-finite right-hand side"
                )));
            }
        }
        Ok(())
    }

    /// Dense symmetric form of a list of entries for one block.
    pub fn block_matrix(&self, entries: &[Entry], block: usize) -> DMatrix<f64> {
        let n = self.block_sizes[block];
        let mut m = DMatrix::zeros(n, n);
        for e in entries.iter().filter(|e| e.block == block) {
            m[(e.row, e.col)] += e.value;
            if e.row != e.col {
                m[(e.col, e.row)] += e.value;
            }
        }
        m
    }

    /// `sum_b <A_b, X_b>` for the given entries.
    pub fn apply(entries: &[Entry], blocks: &[DMatrix<f64>]) -> f64 {
        entries
            .iter()
            .map(|e| {
                let x = &blocks[e.block];
                if e.row == e.col {
                    e.value * x[(e.row, e.row)]
                } else {
                    e.value * (x[(e.row, e.col)] + x[(e.col, e.row)])
                }
            })
            .sum()
    }
}

/// Upper-triangle nonzeros of a dense symmetric matrix.
pub fn dense_entries(block: usize, a: &DMatrix<f64>) -> Vec<Entry> {
    let n = a.nrows();
    let mut out = Vec::new();
    for r in 0..n {
        for c in r..n {
            let v = if r == c {
                a[(r, c)]
            } else {
                0.5 * (a[(r, c)] + a[(c, r)])
            };
            if v != 0.0 {
                out.push(Entry::new(block, r, c, v));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_counts_off_diagonal_twice() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
        let entries = [Entry::new(0, 0, 1, 0.5), Entry::new(0, 1, 1, 1.0)];
        assert_eq!(SdpInstance::apply(&entries, &[x]), 0.5 * 4.0 + 5.0);
    }

    #[test]
    fn dense_round_trip() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 0.0, -1.0, 0.0, -1.0, 4.0]);
        let inst = SdpInstance::new(vec![3]);
        let entries = dense_entries(0, &a);
        assert_eq!(entries.len(), 4);
        assert_eq!(inst.block_matrix(&entries, 0), a);
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let mut inst = SdpInstance::new(vec![2]);
        inst.add_constraint(vec![Entry::new(0, 2, 0, 1.0)], Sense::Eq, 1.0);
        assert!(matches!(inst.validate(), Err(SdpError::InvalidInstance(_))));
        let inst = SdpInstance::new(vec![2, 0]);
        assert!(inst.validate().is_err());
    }
}
