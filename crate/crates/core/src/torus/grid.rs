use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Minimum number of nodes per axis.
pub const MIN_POINTS_PER_AXIS: usize = 8;

/// Central finite-difference stencil family used for every discrete derivative on a grid.
///
/// Both stencils are antisymmetric (first derivative) and symmetric (second
/// derivative), so the transpose of an assembled operator is its exact discrete
/// adjoint for either choice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    /// `(f[i+1] - f[i-1]) / 2h` and `(f[i+1] - 2 f[i] + f[i-1]) / h^2`.
    #[default]
    Central2,
    /// Five-point fourth-order central differences.
    Central4,
}

const D1_CENTRAL2: [(isize, f64); 2] = [(-1, -0.5), (1, 0.5)];
const D2_CENTRAL2: [(isize, f64); 3] = [(-1, 1.0), (0, -2.0), (1, 1.0)];
// Antisymmetric pairs are adjacent so constants cancel exactly in left-to-right sums.
const D1_CENTRAL4: [(isize, f64); 4] = [(-1, -8.0 / 12.0), (1, 8.0 / 12.0), (-2, 1.0 / 12.0), (2, -1.0 / 12.0)];
const D2_CENTRAL4: [(isize, f64); 5] =
    [(-2, -1.0 / 12.0), (-1, 16.0 / 12.0), (0, -30.0 / 12.0), (1, 16.0 / 12.0), (2, -1.0 / 12.0)];

impl Stencil {
    /// Number of neighbours reached on each side along an axis.
    pub fn half_width(self) -> usize {
        match self {
            Stencil::Central2 => 1,
            Stencil::Central4 => 2,
        }
    }

    /// First-derivative weights; multiply by `1/h`.
    pub fn first_derivative(self) -> &'static [(isize, f64)] {
        match self {
            Stencil::Central2 => &D1_CENTRAL2,
            Stencil::Central4 => &D1_CENTRAL4,
        }
    }

    /// Second-derivative weights; multiply by `1/h^2`.
    pub fn second_derivative(self) -> &'static [(isize, f64)] {
        match self {
            Stencil::Central2 => &D2_CENTRAL2,
            Stencil::Central4 => &D2_CENTRAL4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stencil::Central2 => "central2",
            Stencil::Central4 => "central4",
        }
    }
}

/// Uniform periodic grid on `[0,1)^n`, nodes `x_i = i h_k`, row-major with axis 0 slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    sizes: Vec<usize>,
    #[serde(default)]
    stencil: Stencil,
}

impl TorusGrid {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        Self::with_stencil(sizes, Stencil::Central2)
    }

    pub fn with_stencil(sizes: &[usize], stencil: Stencil) -> Result<Self> {
        if sizes.is_empty() {
            return Err(LabError::Config("grid needs at least one axis".into()));
        }
        if let Some(&n) = sizes.iter().find(|&&n| n < MIN_POINTS_PER_AXIS) {
            return Err(LabError::Config(format!("grid axis has {n} points, at least {MIN_POINTS_PER_AXIS} required")));
        }
        Ok(TorusGrid { sizes: sizes.to_vec(), stencil })
    }

    /// 1-D grid shortcut.
    pub fn line(n: usize, stencil: Stencil) -> Result<Self> {
        Self::with_stencil(&[n], stencil)
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        1.0 / self.sizes[axis] as f64
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one node, `prod h_k`.
    pub fn cell_volume(&self) -> f64 {
        self.sizes.iter().map(|&n| 1.0 / n as f64).product()
    }

    fn stride(&self, axis: usize) -> usize {
        self.sizes[axis + 1..].iter().product()
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            out[axis] = idx % self.sizes[axis];
            idx /= self.sizes[axis];
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.sizes).fold(0, |acc, (&i, &n)| acc * n + (i % n))
    }

    /// Coordinates of node `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).iter().zip(&self.sizes).map(|(&i, &n)| i as f64 / n as f64).collect()
    }

    /// Index of the node `offset` steps away from `idx` along `axis`, wrapping around.
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let n = self.sizes[axis] as isize;
        let stride = self.stride(axis);
        let i = ((idx / stride) % self.sizes[axis]) as isize;
        let j = (i + offset).rem_euclid(n);
        (idx as isize + (j - i) * stride as isize) as usize
    }

    /// Stencil of `d/dx_axis` at node `idx`: `(neighbour, weight)` pairs.
    pub fn first_derivative_entries(&self, idx: usize, axis: usize) -> Vec<(usize, f64)> {
        let inv_h = self.sizes[axis] as f64;
        self.stencil.first_derivative().iter().map(|&(off, w)| (self.shift(idx, axis, off), w * inv_h)).collect()
    }

    /// Stencil of `d^2/dx_axis^2` at node `idx`.
    pub fn second_derivative_entries(&self, idx: usize, axis: usize) -> Vec<(usize, f64)> {
        let n = self.sizes[axis] as f64;
        let inv_h2 = n * n;
        self.stencil.second_derivative().iter().map(|&(off, w)| (self.shift(idx, axis, off), w * inv_h2)).collect()
    }

    /// Stencil of the Laplacian at node `idx` with the diagonal merged.
    pub fn laplacian_entries(&self, idx: usize) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(1 + 2 * self.dim() * 2);
        for axis in 0..self.dim() {
            for (j, w) in self.second_derivative_entries(idx, axis) {
                match out.iter_mut().find(|(k, _)| *k == j) {
                    Some(entry) => entry.1 += w,
                    None => out.push((j, w)),
                }
            }
        }
        out
    }

    /// Nodes in the last `half_width` hyperplanes along axis 0.
    ///
    /// Removing these (plus any pinned node) from a periodic stencil operator
    /// leaves a banded matrix in row-major order.
    pub fn wrap_border(&self) -> Vec<usize> {
        let k = self.stencil.half_width();
        let stride = self.stride(0);
        let n0 = self.sizes[0];
        ((n0 - k) * stride..n0 * stride).collect()
    }

    /// Mesh Péclet number `max_k h_k max|b_k| / (2 eps)` for a drift field sampled at the nodes.
    pub fn peclet(&self, drift: &[f64], eps: f64) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for chunk in drift.chunks(n) {
            for (axis, b) in chunk.iter().enumerate() {
                worst = worst.max(self.spacing(axis) * b.abs() / (2.0 * eps));
            }
        }
        worst
    }
}
