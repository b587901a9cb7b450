//! Problem parameters and the cell-centered grid on the interval.
//!
//! The grid is uniform and cell-centered: unknowns live at the cell centers and
//! everything outside `(x_left, x_right)` is identically zero, so the exterior
//! Dirichlet condition needs no ghost cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The exponent pair `(p, s)` of the operator. The kernel constant is fixed to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    p: f64,
    s: f64,
}

impl Params {
    pub fn new(p: f64, s: f64) -> Result<Self> {
        if !p.is_finite() || p <= 1.0 {
            return Err(Error::param(format!("p must satisfy p > 1, got {p}")));
        }
        if !s.is_finite() || s <= 0.0 || s >= 1.0 {
            return Err(Error::param(format!("s must satisfy 0 < s < 1, got {s}")));
        }
        Ok(Self { p, s })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Constant in front of the nonlinearity; always one.
    pub fn c(&self) -> f64 {
        1.0
    }

    /// Kernel exponent `s * p`; the kernel is `|x - y|^(-(1 + sp))`.
    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    /// Time-decay exponent `1 / (p - 2)` of the separate-variable solution.
    pub fn mu(&self) -> Result<f64> {
        self.require_slow()?;
        Ok(1.0 / (self.p - 2.0))
    }

    /// Rejects `p <= 2`.
    pub fn require_slow(&self) -> Result<()> {
        if self.p > 2.0 {
            Ok(())
        } else {
            Err(Error::param(format!("this operation requires p > 2, got p = {}", self.p)))
        }
    }

    /// Rejects `p >= 2`.
    pub fn require_fast(&self) -> Result<()> {
        if self.p < 2.0 {
            Ok(())
        } else {
            Err(Error::param(format!("this operation requires 1 < p < 2, got p = {}", self.p)))
        }
    }
}

/// Identity of a grid: two fields are compatible iff their grid ids compare equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridId {
    x_left_bits: u64,
    x_right_bits: u64,
    n_cells: usize,
}

impl GridId {
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn cell_width(&self) -> f64 {
        (f64::from_bits(self.x_right_bits) - f64::from_bits(self.x_left_bits)) / self.n_cells as f64
    }
}

/// Uniform partition of `(x_left, x_right)` into `n_cells` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_left: f64,
    x_right: f64,
    n_cells: usize,
    cell_width: f64,
    centers: Vec<f64>,
}

impl Grid {
    pub fn new(x_left: f64, x_right: f64, n_cells: usize) -> Result<Self> {
        if !x_left.is_finite() || !x_right.is_finite() || x_left >= x_right {
            return Err(Error::param(format!(
                "domain endpoints must satisfy x_left < x_right, got ({x_left}, {x_right})"
            )));
        }
        if n_cells < 3 {
            return Err(Error::param(format!("n_cells must be at least 3, got {n_cells}")));
        }
        let cell_width = (x_right - x_left) / n_cells as f64;
        let centers = (0..n_cells)
            .map(|i| x_left + (i as f64 + 0.5) * cell_width)
            .collect();
        Ok(Self {
            x_left,
            x_right,
            n_cells,
            cell_width,
            centers,
        })
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn length(&self) -> f64 {
        self.x_right - self.x_left
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn id(&self) -> GridId {
        GridId {
            x_left_bits: self.x_left.to_bits(),
            x_right_bits: self.x_right.to_bits(),
            n_cells: self.n_cells,
        }
    }

    /// Distance from center `i` to the left endpoint, computed as `(i + 1/2) h`
    /// so that mirrored cells get bitwise identical distances.
    pub(crate) fn left_distance(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.cell_width
    }

    pub(crate) fn right_distance(&self, i: usize) -> f64 {
        ((self.n_cells - 1 - i) as f64 + 0.5) * self.cell_width
    }

    /// `dist(x_i, boundary)`.
    pub fn boundary_distance(&self, i: usize) -> f64 {
        self.left_distance(i).min(self.right_distance(i))
    }

    /// Index of the cell mirrored through the domain midpoint.
    pub fn mirror(&self, i: usize) -> usize {
        self.n_cells - 1 - i
    }

    /// True when the domain is `(-R, R)` up to rounding.
    pub fn is_symmetric(&self) -> bool {
        (self.x_left + self.x_right).abs() <= 1e-12 * self.length()
    }
}

pub fn make_grid(x_left: f64, x_right: f64, n_cells: usize) -> Result<Grid> {
    Grid::new(x_left, x_right, n_cells)
}

/// The homothetic image `lambda * Omega`, with the same number of cells.
pub fn scale_grid(g: &Grid, lambda: f64) -> Result<Grid> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::param(format!("scale factor must be positive, got {lambda}")));
    }
    Grid::new(lambda * g.x_left, lambda * g.x_right, g.n_cells)
}
