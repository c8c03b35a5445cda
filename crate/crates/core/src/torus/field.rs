use serde::{Deserialize, Serialize};

use super::grid::TorusGrid;
use crate::error::{LabError, Result};

/// Scalar or vector values attached to every node of a [`TorusGrid`].
///
/// Vector fields are stored node-major: component `a` of node `i` is `values[i * arity + a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    grid: TorusGrid,
    arity: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: TorusGrid, arity: usize, values: Vec<f64>) -> Result<Self> {
        if arity == 0 {
            return Err(LabError::Config("field arity must be positive".into()));
        }
        if values.len() != arity * grid.len() {
            return Err(LabError::Config(format!(
                "field has {} values, grid of {} nodes with arity {} needs {}",
                values.len(),
                grid.len(),
                arity,
                arity * grid.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::Domain(format!("non-finite field value at slot {pos}")));
        }
        Ok(GridField { grid, arity, values })
    }

    pub fn scalar(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, values)
    }

    pub fn constant(grid: &TorusGrid, value: f64) -> Self {
        GridField { values: vec![value; grid.len()], grid: grid.clone(), arity: 1 }
    }

    pub fn zeros(grid: &TorusGrid, arity: usize) -> Self {
        GridField { values: vec![0.0; arity * grid.len()], grid: grid.clone(), arity }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        GridField { grid: grid.clone(), arity: 1, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_scalar(&self) -> bool {
        self.arity == 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Components of node `i`.
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.arity..(i + 1) * self.arity]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest Euclidean norm over nodes.
    pub fn max_norm_per_node(&self) -> f64 {
        self.values.chunks(self.arity).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField { grid: self.grid.clone(), arity: self.arity, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, factor: f64) -> GridField {
        self.map(|v| v * factor)
    }

    pub(crate) fn from_parts_unchecked(grid: TorusGrid, arity: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), arity * grid.len());
        GridField { grid, arity, values }
    }

    pub(crate) fn same_grid(&self, other: &GridField) -> Result<()> {
        if self.grid.sizes() != other.grid.sizes() {
            return Err(LabError::Config("fields live on different grids".into()));
        }
        Ok(())
    }
}
