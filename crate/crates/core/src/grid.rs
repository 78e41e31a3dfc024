//! Uniform cell-centered grids on an interval or rectangle, and scalar fields on them.
//!
//! Storage is row-major: in two dimensions cell `(i0, i1)` lives at `i0 * n1 + i1`,
//! so axis 0 is the slow index. Cell centers sit at `(i + 1/2) * h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of cells along an axis.
pub const MIN_CELLS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    ndims: usize,
    cells: [usize; 2],
    length: [f64; 2],
}

impl Grid {
    pub fn new(cells: &[usize], length: &[f64]) -> Result<Self> {
        let ndims = cells.len();
        if !(1..=2).contains(&ndims) {
            return Err(Error::InvalidGrid(format!("{ndims} dimensions (expected 1 or 2)")));
        }
        if length.len() != ndims {
            return Err(Error::InvalidGrid(format!(
                "{} lengths given for {ndims} axes",
                length.len()
            )));
        }
        let mut grid = Grid {
            ndims,
            cells: [1, 1],
            length: [1.0, 1.0],
        };
        for axis in 0..ndims {
            if cells[axis] < MIN_CELLS {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} has {} cells (minimum {MIN_CELLS})",
                    cells[axis]
                )));
            }
            if !(length[axis].is_finite() && length[axis] > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} has length {}",
                    length[axis]
                )));
            }
            grid.cells[axis] = cells[axis];
            grid.length[axis] = length[axis];
        }
        Ok(grid)
    }

    pub fn interval(cells: usize, length: f64) -> Result<Self> {
        Grid::new(&[cells], &[length])
    }

    pub fn rectangle(cells: [usize; 2], length: [f64; 2]) -> Result<Self> {
        Grid::new(&cells, &length)
    }

    pub fn ndims(&self) -> usize {
        self.ndims
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.ndims]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.length[..self.ndims]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.length[axis] / self.cells[axis] as f64
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.ndims).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    /// Offset between neighbouring cells along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        if self.ndims == 2 && axis == 0 {
            self.cells[1]
        } else {
            1
        }
    }

    pub fn index_of(&self, multi: [usize; 2]) -> usize {
        if self.ndims == 1 {
            multi[0]
        } else {
            multi[0] * self.cells[1] + multi[1]
        }
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.ndims == 1 {
            [idx, 0]
        } else {
            [idx / self.cells[1], idx % self.cells[1]]
        }
    }

    /// Physical coordinates of a cell center (unused axes are zero).
    pub fn cell_center(&self, idx: usize) -> [f64; 2] {
        let m = self.multi_index(idx);
        let mut x = [0.0; 2];
        for (axis, xa) in x.iter_mut().enumerate().take(self.ndims) {
            *xa = (m[axis] as f64 + 0.5) * self.spacing(axis);
        }
        x
    }

    /// Calls `visit(lo, hi, spacing)` for every interior face, axis by axis.
    /// Boundary faces carry no flux and are never visited.
    pub fn for_each_face<F: FnMut(usize, usize, f64)>(&self, mut visit: F) {
        for axis in 0..self.ndims {
            let h = self.spacing(axis);
            let stride = self.stride(axis);
            if self.ndims == 1 {
                for lo in 0..self.cells[0] - 1 {
                    visit(lo, lo + 1, h);
                }
            } else if axis == 0 {
                for lo in 0..(self.cells[0] - 1) * self.cells[1] {
                    visit(lo, lo + stride, h);
                }
            } else {
                for i0 in 0..self.cells[0] {
                    let row = i0 * self.cells[1];
                    for i1 in 0..self.cells[1] - 1 {
                        visit(row + i1, row + i1 + 1, h);
                    }
                }
            }
        }
    }
}

/// Scalar values on a [`Grid`], one per cell, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { cell, value });
        }
        Ok(Field { grid, values })
    }

    /// Builds a field without the finiteness scan. Callers guarantee the invariant.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field::from_raw(grid, vec![value; grid.len()])
    }

    pub fn zeros(grid: Grid) -> Self {
        Field::constant(grid, 0.0)
    }

    /// Samples `f` at every cell center.
    pub fn from_fn<F: Fn([f64; 2]) -> f64>(grid: Grid, f: F) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.cell_center(i))).collect();
        Field::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<Field> {
        Field::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn try_map<F: Fn(f64) -> Result<f64>>(&self, f: F) -> Result<Field> {
        let values = self.values.iter().map(|&v| f(v)).collect::<Result<Vec<_>>>()?;
        Field::new(self.grid, values)
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &Field, f: F) -> Result<Field> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Field::new(self.grid, values)
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index and value of the entry with the largest magnitude.
    pub fn argmax_abs(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |(bi, bv), (i, v)| {
                if v.abs() > bv.abs() {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
    }

    /// Errors unless every entry satisfies `|u| <= bound`.
    pub fn check_separated(&self, bound: f64) -> Result<()> {
        match self.values.iter().position(|v| v.abs() > bound) {
            Some(cell) => Err(Error::Separation {
                cell,
                value: self.values[cell],
                bound,
            }),
            None => Ok(()),
        }
    }
}
