//! Minimizers of `∫_Ω g(∇u + X*)` on planar grids, where `X*(x, y) = 2(−y, x)`,
//! with convex-analytic tooling for `g` and numerical checks of the
//! structural properties of these functionals.

pub mod bsc;
pub mod cli;
pub mod convex;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
