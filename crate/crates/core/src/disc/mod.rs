//! hp discretization: tensor-product Lagrange elements with per-cell degree,
//! dof enumeration, hanging-node and Dirichlet constraints, solution fields,
//! and the hp-adaptivity estimators.

mod constraints;
mod estimate;
mod field;
mod space;
pub mod tables;

pub use constraints::{BoundaryCondition, ConstraintSet, DirichletSpec};
pub use estimate::{kelly_estimate, legendre_smoothness, mark_hp, Component, HpFlags};
pub use field::{l2_error, FieldLayout, SolutionField};
pub use space::{EdgeRef, ScalarSpace};
pub use tables::Tables1d;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// How the pressure space relates to the velocity space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PressureRule {
    /// Taylor-Hood Q_p / Q_{p-1}; requires velocity degree p >= 2.
    TaylorHood,
    /// Equal-order Q_p Q_p (stabilized formulations).
    EqualOrder,
}

/// Velocity + pressure spaces over one mesh, with the per-component global
/// layout `[u_x | u_y | p]`.
#[derive(Clone)]
pub struct BlockSpace {
    pub velocity: Arc<ScalarSpace>,
    pub pressure: Arc<ScalarSpace>,
}

impl BlockSpace {
    /// Build the velocity/pressure dof enumeration for per-cell velocity
    /// degrees. Face dofs of unequal-degree neighbors belong to the
    /// higher-degree side; the lower side is constrained later.
    pub fn distribute_dofs(
        mesh: &Arc<Mesh>,
        degrees: &[u8],
        rule: PressureRule,
    ) -> Result<BlockSpace> {
        if degrees.len() != mesh.n_active() {
            return Err(Error::SizeMismatch {
                expected: mesh.n_active(),
                got: degrees.len(),
            });
        }
        if degrees.iter().any(|&p| p < 1) {
            return Err(Error::InvalidDegree("degrees must be >= 1".into()));
        }
        let pressure_degrees: Vec<u8> = match rule {
            PressureRule::TaylorHood => {
                if degrees.iter().any(|&p| p < 2) {
                    return Err(Error::InvalidDegree(
                        "Taylor-Hood requires velocity degree >= 2".into(),
                    ));
                }
                degrees.iter().map(|&p| p - 1).collect()
            }
            PressureRule::EqualOrder => degrees.to_vec(),
        };
        let velocity = Arc::new(ScalarSpace::new(mesh.clone(), degrees.to_vec()));
        let pressure = if pressure_degrees == *degrees {
            velocity.clone()
        } else {
            Arc::new(ScalarSpace::new(mesh.clone(), pressure_degrees))
        };
        Ok(BlockSpace { velocity, pressure })
    }

    pub fn n_scalar_u(&self) -> usize {
        self.velocity.n_dofs()
    }

    pub fn n_dofs_u(&self) -> usize {
        2 * self.velocity.n_dofs()
    }

    pub fn n_dofs_p(&self) -> usize {
        self.pressure.n_dofs()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs_u() + self.n_dofs_p()
    }

    /// Global system indices of a cell: velocity block first, then pressure.
    pub fn cell_dofs(&self, pos: usize) -> Vec<usize> {
        let ns = self.n_scalar_u();
        let mut out = Vec::new();
        for d in self.velocity.cell_dofs(pos) {
            out.push(*d);
        }
        for d in self.velocity.cell_dofs(pos) {
            out.push(ns + d);
        }
        for d in self.pressure.cell_dofs(pos) {
            out.push(2 * ns + d);
        }
        out
    }
}
