use serde::{Deserialize, Serialize};

use crate::domain::{Grid, GridId};
use crate::error::{Error, Result};

/// Discrete norm selector. All integral norms carry the cell width as weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
    LInf,
    Lq(f64),
}

/// Cell values of a function on a grid, extended by zero outside the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    values: Vec<f64>,
    grid: GridId,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.n_cells()],
            grid: grid.id(),
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        Self::with_id(grid.id(), values)
    }

    pub(crate) fn with_id(grid: GridId, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::param(format!(
                "field has {} values but the grid has {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at cell {i}")));
        }
        Ok(Self { values, grid })
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_values(grid, grid.centers().iter().map(|&x| f(x)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            values: self.values.iter().map(|&v| f(v)).collect(),
            grid: self.grid,
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.same_grid(other)?;
        Ok(Field {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            grid: self.grid,
        })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `sum_i u_i h`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_width()
    }

    pub fn norm(&self, q: Norm) -> f64 {
        norm_of(&self.values, self.grid.cell_width(), q)
    }
}

pub(crate) fn norm_of(values: &[f64], h: f64, q: Norm) -> f64 {
    match q {
        Norm::L1 => values.iter().map(|v| v.abs()).sum::<f64>() * h,
        Norm::L2 => (values.iter().map(|v| v * v).sum::<f64>() * h).sqrt(),
        Norm::LInf => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        Norm::Lq(q) if q.is_infinite() => norm_of(values, h, Norm::LInf),
        Norm::Lq(q) => (values.iter().map(|v| v.abs().powf(q)).sum::<f64>() * h).powf(1.0 / q),
    }
}
