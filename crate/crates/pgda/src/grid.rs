//! Equispaced grids on the unit interval and unit square, and functions
//! sampled on them.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Spatial dimensionality of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridDims {
    One,
    Two,
}

/// An equispaced grid with endpoints included: `x_i = i/(n-1)`, `i = 0..n`.
/// 2D grids are `n x n` over the unit square, row-major with the first
/// coordinate outermost: point `(ix, iy)` lives at flat index `ix*n + iy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: GridDims,
    pub n: usize,
}

impl GridSpec {
    pub fn new(dims: GridDims, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("grid needs n >= 2, got {n}")));
        }
        Ok(GridSpec { dims, n })
    }

    pub fn one_d(n: usize) -> Result<Self> {
        Self::new(GridDims::One, n)
    }

    pub fn two_d(n: usize) -> Result<Self> {
        Self::new(GridDims::Two, n)
    }

    /// Total number of grid points (`n` or `n^2`).
    pub fn point_count(&self) -> usize {
        match self.dims {
            GridDims::One => self.n,
            GridDims::Two => self.n * self.n,
        }
    }

    /// Grid spacing `1/(n-1)`.
    pub fn spacing(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    /// Coordinate of index `i` along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 / (self.n - 1) as f64
    }

    /// All grid points as an `[point_count x dim]` coordinate matrix.
    pub fn coords(&self) -> Tensor {
        let n = self.n;
        match self.dims {
            GridDims::One => Tensor::from_fn(vec![n, 1], |i| self.coord(i)),
            GridDims::Two => {
                let mut data = Vec::with_capacity(n * n * 2);
                for ix in 0..n {
                    for iy in 0..n {
                        data.push(self.coord(ix));
                        data.push(self.coord(iy));
                    }
                }
                Tensor::new(vec![n * n, 2], data).expect("coords shape")
            }
        }
    }

    pub fn dim_count(&self) -> usize {
        match self.dims {
            GridDims::One => 1,
            GridDims::Two => 2,
        }
    }
}

/// A real-valued function sampled on a grid: the universal currency for
/// inputs and solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: GridSpec,
    pub values: Tensor,
}

impl GridFunction {
    pub fn new(grid: GridSpec, values: Tensor) -> Result<Self> {
        if values.len() != grid.point_count() {
            return Err(Error::Shape(format!(
                "grid has {} points, values has {}",
                grid.point_count(),
                values.len()
            )));
        }
        Ok(GridFunction { grid, values })
    }

    /// Samples a closure `f(x)` on a 1D grid.
    pub fn sample_1d(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        if grid.dims != GridDims::One {
            return Err(Error::Shape("sample_1d on a 2D grid".into()));
        }
        let vals = Tensor::from_fn(vec![grid.n], |i| f(grid.coord(i)));
        GridFunction::new(grid, vals)
    }

    /// Samples a closure `f(x, y)` on a 2D grid.
    pub fn sample_2d(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if grid.dims != GridDims::Two {
            return Err(Error::Shape("sample_2d on a 1D grid".into()));
        }
        let n = grid.n;
        let vals = Tensor::from_fn(vec![n * n], |i| f(grid.coord(i / n), grid.coord(i % n)));
        GridFunction::new(grid, vals)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        GridFunction {
            grid,
            values: Tensor::filled(vec![grid.point_count()], value),
        }
    }

    pub fn zero(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `c1 * self + c2 * other`; grids must match.
    pub fn linear_combination(&self, c1: f64, other: &GridFunction, c2: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Shape(format!(
                "grid mismatch: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(GridFunction {
            grid: self.grid,
            values: Tensor::linear_combination(&[(c1, &self.values), (c2, &other.values)])?,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        GridFunction {
            grid: self.grid,
            values: self.values.scale(c),
        }
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values.max_abs_diff(&other.values)
    }
}
