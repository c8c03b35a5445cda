//! Uniform periodic grids on `[0,1)^n`, grid fields, and the discrete calculus on them.

mod field;
mod grid;
pub mod io;
pub mod ops;

pub use field::GridField;
pub use grid::{Stencil, TorusGrid, MIN_POINTS_PER_AXIS};
pub use ops::{divergence, gradient, hessian, inner, integrate, laplacian, pairwise_sum};
