//! Domain descriptors and their reference-to-physical maps.

use crate::error::{Error, Result};
use crate::num::Scalar;

use super::CellKey;

/// Supported 2D domains. All cells are bilinear quads; the annulus places
/// vertices on the exact polar grid, so its boundary is a polygon whose
/// geometric error is second order in the cell size.
#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    /// Axis-aligned rectangle [x0, x1] x [y0, y1].
    Rectangle {
        x0: Scalar,
        y0: Scalar,
        x1: Scalar,
        y1: Scalar,
    },
    /// Channel [0, length] x [0, height]; base cells whose center falls in
    /// the obstacle box [ox0, oy0, ox1, oy1] are removed.
    Channel {
        length: Scalar,
        height: Scalar,
        obstacle: Option<[Scalar; 4]>,
    },
    /// T-junction: horizontal channel [0,3] x [0,1] with a vertical arm
    /// [1,2] x [1,2]. Subdivisions multiply the (3, 2) base grid.
    TJunction,
    /// Annulus r in [r_inner, r_outer]; the x subdivision is radial, the
    /// y subdivision angular (wrapping).
    Annulus { r_inner: Scalar, r_outer: Scalar },
}

impl Geometry {
    pub fn unit_square() -> Geometry {
        Geometry::Rectangle {
            x0: 0.0,
            y0: 0.0,
            x1: 1.0,
            y1: 1.0,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            Geometry::Rectangle { x0, y0, x1, y1 } => {
                if x1 <= x0 || y1 <= y0 {
                    return Err(Error::DegenerateGeometry(format!(
                        "rectangle extent ({}, {}) x ({}, {})",
                        x0, x1, y0, y1
                    )));
                }
            }
            Geometry::Channel { length, height, .. } => {
                if *length <= 0.0 || *height <= 0.0 {
                    return Err(Error::DegenerateGeometry(format!(
                        "channel {length} x {height}"
                    )));
                }
            }
            Geometry::TJunction => {}
            Geometry::Annulus { r_inner, r_outer } => {
                if *r_inner <= 0.0 || r_outer <= r_inner {
                    return Err(Error::DegenerateGeometry(format!(
                        "annulus radii [{r_inner}, {r_outer}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn base_dims(&self, subdivisions: (u32, u32)) -> (u32, u32) {
        match self {
            Geometry::TJunction => (3 * subdivisions.0, 2 * subdivisions.1),
            _ => subdivisions,
        }
    }

    pub(crate) fn base_cell_exists(&self, base: (u32, u32), bx: u32, by: u32) -> bool {
        match self {
            Geometry::Channel {
                length,
                height,
                obstacle: Some(ob),
            } => {
                let cx = (bx as Scalar + 0.5) / base.0 as Scalar * length;
                let cy = (by as Scalar + 0.5) / base.1 as Scalar * height;
                !(cx > ob[0] && cx < ob[2] && cy > ob[1] && cy < ob[3])
            }
            Geometry::TJunction => {
                let mx = base.0 / 3;
                let my = base.1 / 2;
                by < my || (bx >= mx && bx < 2 * mx)
            }
            _ => true,
        }
    }

    pub(crate) fn wraps(&self) -> (bool, bool) {
        match self {
            Geometry::Annulus { .. } => (false, true),
            _ => (false, false),
        }
    }

    /// Map parameters in base-cell units (s in [0, nbx], t in [0, nby]).
    pub(crate) fn map(&self, base: (u32, u32), s: Scalar, t: Scalar) -> [Scalar; 2] {
        let fx = s / base.0 as Scalar;
        let fy = t / base.1 as Scalar;
        match self {
            Geometry::Rectangle { x0, y0, x1, y1 } => {
                [x0 + (x1 - x0) * fx, y0 + (y1 - y0) * fy]
            }
            Geometry::Channel { length, height, .. } => [length * fx, height * fy],
            Geometry::TJunction => [3.0 * fx, 2.0 * fy],
            Geometry::Annulus { r_inner, r_outer } => {
                let r = r_inner + (r_outer - r_inner) * fx;
                let theta = 2.0 * std::f64::consts::PI * fy;
                [r * theta.cos(), r * theta.sin()]
            }
        }
    }

    pub(crate) fn cell_vertices(&self, base: (u32, u32), key: CellKey) -> [[Scalar; 2]; 4] {
        let scale = (1u64 << key.level) as Scalar;
        let s0 = key.gx as Scalar / scale;
        let s1 = (key.gx + 1) as Scalar / scale;
        let t0 = key.gy as Scalar / scale;
        let t1 = (key.gy + 1) as Scalar / scale;
        [
            self.map(base, s0, t0),
            self.map(base, s1, t0),
            self.map(base, s1, t1),
            self.map(base, s0, t1),
        ]
    }
}
