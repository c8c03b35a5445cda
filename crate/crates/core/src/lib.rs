pub mod acceptance;
pub mod cell;
pub mod derivative;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod lp;
pub mod mather;
pub mod torus;
