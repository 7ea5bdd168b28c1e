//! Scalar hp dof enumeration over a mesh.
//!
//! Dofs are attached to topological entities. Vertices are shared between all
//! touching active cells; a full edge shared by two equal-level cells of
//! equal degree carries one shared interior-dof pool; every other edge
//! (hanging, degree-mismatched, or boundary) carries its own pool keyed by
//! `(edge endpoints, degree)`. Cell interiors are private. Constraints tie
//! the non-conforming sites together afterwards.

use std::collections::HashMap;
use std::sync::Arc;

use crate::mesh::{bilinear_map, CellId, Face, Mesh, Neighbor, FACES};
use crate::num::Scalar;
use crate::quad::gauss_lobatto_points;

/// Reference fine level for vertex lattice keys.
const KEY_LEVEL: u8 = 24;

type VertexKey = (u64, u64);

/// One edge of one active cell, with what is on the other side.
#[derive(Clone, Debug)]
pub struct EdgeRef {
    pub cell_pos: usize,
    pub face: Face,
    pub neighbor: Neighbor,
}

pub struct ScalarSpace {
    mesh: Arc<Mesh>,
    degrees: Vec<u8>,
    n_dofs: usize,
    /// Per active position: local lexicographic node -> global dof.
    cell_dofs: Vec<Vec<usize>>,
    /// Per active position: local node reference coordinates.
    node_coords: HashMap<u8, Vec<[Scalar; 2]>>,
    vertex_dofs: HashMap<VertexKey, usize>,
}

impl ScalarSpace {
    pub fn new(mesh: Arc<Mesh>, degrees: Vec<u8>) -> ScalarSpace {
        assert_eq!(degrees.len(), mesh.n_active());
        assert!(degrees.iter().all(|&p| p >= 1));
        let mut vertex_dofs: HashMap<VertexKey, usize> = HashMap::new();
        let mut edge_pools: HashMap<(VertexKey, VertexKey, u8), usize> = HashMap::new();
        let mut n_dofs = 0usize;

        // vertices first, in canonical cell order
        let actives: Vec<CellId> = mesh.active_ids().to_vec();
        for (pos, &id) in actives.iter().enumerate() {
            let _ = pos;
            let key = mesh.cell(id).key;
            for corner in 0..4 {
                let vk = vertex_key(&mesh, key, corner);
                vertex_dofs.entry(vk).or_insert_with(|| {
                    let d = n_dofs;
                    n_dofs += 1;
                    d
                });
            }
        }
        // edge pools: allocated on first touch, keyed by (endpoints, degree)
        for (pos, &id) in actives.iter().enumerate() {
            let p = degrees[pos];
            if p < 2 {
                continue;
            }
            let key = mesh.cell(id).key;
            for face in FACES {
                let (va, vb) = edge_endpoints(&mesh, key, face);
                let ek = canonical_edge(va, vb);
                edge_pools.entry((ek.0, ek.1, p)).or_insert_with(|| {
                    let start = n_dofs;
                    n_dofs += (p - 1) as usize;
                    start
                });
            }
        }
        // interiors + per-cell dof lists
        let mut cell_dofs = Vec::with_capacity(actives.len());
        for (pos, &id) in actives.iter().enumerate() {
            let p = degrees[pos] as usize;
            let key = mesh.cell(id).key;
            let interior_start = n_dofs;
            n_dofs += (p - 1) * (p - 1);
            let n1 = p + 1;
            let mut dofs = vec![usize::MAX; n1 * n1];
            // corners: local (a,b) with a,b in {0,p}
            let corner_of = |a: usize, b: usize| -> usize {
                match (a == p, b == p) {
                    (false, false) => 0,
                    (true, false) => 1,
                    (true, true) => 2,
                    (false, true) => 3,
                }
            };
            for &(a, b) in &[(0, 0), (p, 0), (0, p), (p, p)] {
                let vk = vertex_key(&mesh, key, corner_of(a, b));
                dofs[b * n1 + a] = vertex_dofs[&vk];
            }
            // edges
            if p >= 2 {
                for face in FACES {
                    let (va, vb) = edge_endpoints(&mesh, key, face);
                    let ek = canonical_edge(va, vb);
                    let start = edge_pools[&(ek.0, ek.1, p as u8)];
                    let forward = va <= vb;
                    for k in 1..p {
                        let pool_idx = if forward { k - 1 } else { p - 1 - k };
                        let (a, b) = match face {
                            Face::YMinus => (k, 0),
                            Face::YPlus => (k, p),
                            Face::XMinus => (0, k),
                            Face::XPlus => (p, k),
                        };
                        dofs[b * n1 + a] = start + pool_idx;
                    }
                }
            }
            // interior
            for b in 1..p {
                for a in 1..p {
                    dofs[b * n1 + a] = interior_start + (b - 1) * (p - 1) + (a - 1);
                }
            }
            debug_assert!(dofs.iter().all(|&d| d != usize::MAX));
            cell_dofs.push(dofs);
        }
        // reference node coordinates per degree
        let mut node_coords = HashMap::new();
        for &p in degrees.iter() {
            node_coords.entry(p).or_insert_with(|| {
                let pts = gauss_lobatto_points::<Scalar>(p as usize + 1);
                let n1 = p as usize + 1;
                let mut coords = Vec::with_capacity(n1 * n1);
                for b in 0..n1 {
                    for a in 0..n1 {
                        coords.push([pts[a], pts[b]]);
                    }
                }
                coords
            });
        }
        ScalarSpace {
            mesh,
            degrees,
            n_dofs,
            cell_dofs,
            node_coords,
            vertex_dofs,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn degree(&self, pos: usize) -> u8 {
        self.degrees[pos]
    }

    pub fn degrees(&self) -> &[u8] {
        &self.degrees
    }

    pub fn max_degree(&self) -> u8 {
        self.degrees.iter().copied().max().unwrap_or(1)
    }

    pub fn cell_dofs(&self, pos: usize) -> &[usize] {
        &self.cell_dofs[pos]
    }

    /// Reference coordinates of the local nodes of a cell.
    pub fn cell_node_coords(&self, pos: usize) -> &[[Scalar; 2]] {
        &self.node_coords[&self.degrees[pos]]
    }

    /// Physical coordinates of a cell's local node.
    pub fn node_position(&self, pos: usize, local: usize) -> [Scalar; 2] {
        let id = self.mesh.active_ids()[pos];
        let c = self.mesh.cell(id);
        let r = self.cell_node_coords(pos)[local];
        bilinear_map(&c.vertices, r[0], r[1])
    }

    /// Global dofs along one edge of a cell, ordered along the local lattice
    /// direction (+x for y-faces, +y for x-faces), endpoints included.
    pub fn edge_dofs(&self, pos: usize, face: Face) -> Vec<usize> {
        let p = self.degrees[pos] as usize;
        let n1 = p + 1;
        let dofs = &self.cell_dofs[pos];
        (0..=p)
            .map(|k| {
                let (a, b) = match face {
                    Face::YMinus => (k, 0),
                    Face::YPlus => (k, p),
                    Face::XMinus => (0, k),
                    Face::XPlus => (p, k),
                };
                dofs[b * n1 + a]
            })
            .collect()
    }

    /// 1D node parameters along an edge (Gauss-Lobatto points of the degree).
    pub fn edge_params(&self, pos: usize) -> Vec<Scalar> {
        gauss_lobatto_points(self.degrees[pos] as usize + 1)
    }

    /// Vertex dof at a cell corner (0..4, counterclockwise).
    pub fn vertex_dof(&self, pos: usize, corner: usize) -> usize {
        let id = self.mesh.active_ids()[pos];
        let vk = vertex_key(&self.mesh, self.mesh.cell(id).key, corner);
        self.vertex_dofs[&vk]
    }

    /// All edges of the mesh from the perspective of each active cell.
    pub fn edges(&self) -> Vec<EdgeRef> {
        let mut out = Vec::new();
        for (pos, &id) in self.mesh.active_ids().iter().enumerate() {
            for face in FACES {
                out.push(EdgeRef {
                    cell_pos: pos,
                    face,
                    neighbor: self.mesh.neighbor(id, face),
                });
            }
        }
        out
    }
}

/// Lattice vertex key of a cell corner at the common reference level,
/// wrapped on periodic directions.
fn vertex_key(mesh: &Mesh, key: crate::mesh::CellKey, corner: usize) -> VertexKey {
    let (da, db) = match corner {
        0 => (0u64, 0u64),
        1 => (1, 0),
        2 => (1, 1),
        _ => (0, 1),
    };
    let shift = KEY_LEVEL - key.level;
    let mut x = ((key.gx as u64) + da) << shift;
    let mut y = ((key.gy as u64) + db) << shift;
    let (wrap_x, wrap_y) = mesh.wraps();
    let (bx, by) = mesh.base_dims();
    if wrap_x {
        x %= (bx as u64) << KEY_LEVEL;
    }
    if wrap_y {
        y %= (by as u64) << KEY_LEVEL;
    }
    (x, y)
}

fn edge_endpoints(mesh: &Mesh, key: crate::mesh::CellKey, face: Face) -> (VertexKey, VertexKey) {
    // endpoints in local direction order (+x or +y)
    let (ca, cb) = match face {
        Face::YMinus => (0, 1),
        Face::YPlus => (3, 2),
        Face::XMinus => (0, 3),
        Face::XPlus => (1, 2),
    };
    (vertex_key(mesh, key, ca), vertex_key(mesh, key, cb))
}

fn canonical_edge(a: VertexKey, b: VertexKey) -> (VertexKey, VertexKey) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
