//! Matrix-free hp-multigrid solvers for the stationary Stokes, transient
//! (space-time) Stokes, and stabilized incompressible Navier-Stokes equations
//! on locally h- and p-refined 2D quadrilateral meshes.

pub mod disc;
pub mod error;
pub mod la;
pub mod manufactured;
pub mod mesh;
pub mod mg;
pub mod num;
pub mod op;
pub mod poly;
pub mod transfer;
pub mod quad;
pub mod solver;
pub mod spacetime;

pub use num::{Real, Scalar};
