//! Hit-cell sets on the detection lattice.
//!
//! A `CellSet` is the deduplicated set of lattice cells whose center-balls
//! a path hit, tagged with the spacing they were produced at so consumers
//! can reject mismatched configurations. Cells are kept in sorted order,
//! which makes every downstream count independent of insertion order.

use crate::geometry::{GridIndex, Point, MAX_DIM};
use std::collections::HashSet;

#[derive(Debug, Clone)]
pub struct CellSet {
    spacing: f64,
    dim: usize,
    domain_radius: f64,
    cells: Vec<GridIndex>,
    index: HashSet<GridIndex>,
}

impl CellSet {
    pub fn new(spacing: f64, dim: usize, domain_radius: f64) -> Self {
        assert!(spacing > 0.0 && dim >= 1 && dim <= MAX_DIM);
        Self {
            spacing,
            dim,
            domain_radius,
            cells: Vec::new(),
            index: HashSet::new(),
        }
    }

    pub fn from_cells<I: IntoIterator<Item = GridIndex>>(
        spacing: f64,
        dim: usize,
        domain_radius: f64,
        cells: I,
    ) -> Self {
        let mut set = Self::new(spacing, dim, domain_radius);
        for c in cells {
            set.insert(c);
        }
        set.finish();
        set
    }

    pub fn insert(&mut self, cell: GridIndex) -> bool {
        debug_assert_eq!(cell.dim(), self.dim);
        if self.index.insert(cell) {
            self.cells.push(cell);
            true
        } else {
            false
        }
    }

    /// Sort cells into canonical order. Call after bulk insertion.
    pub fn finish(&mut self) {
        self.cells.sort_unstable_by(|a, b| a.cell().cmp(b.cell()));
    }

    pub fn contains(&self, cell: &GridIndex) -> bool {
        self.index.contains(cell)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    /// Cells in canonical (sorted) order.
    pub fn cells(&self) -> &[GridIndex] {
        &self.cells
    }

    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        self.cells.iter().map(|c| c.center(self.spacing))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_and_order_independent() {
        let a = GridIndex::new(&[0, 0, 0]).unwrap();
        let b = GridIndex::new(&[1, -1, 2]).unwrap();
        let s1 = CellSet::from_cells(0.1, 3, 1.0, vec![a, b, a]);
        let s2 = CellSet::from_cells(0.1, 3, 1.0, vec![b, a]);
        assert_eq!(s1.len(), 2);
        assert_eq!(s1.cells(), s2.cells());
        assert!(s1.contains(&a));
    }
}
