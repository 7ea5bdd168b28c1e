//! Forest-of-quadtrees meshes on 2D quadrilateral domains.
//!
//! Cells are addressed by integer keys `(level, gx, gy)` on a global lattice
//! refined from the base grid, which makes neighbor lookup, 2:1 balancing,
//! and hanging-face detection exact integer arithmetic. Meshes are immutable;
//! refinement and coarsening return new meshes with a canonical (Morton)
//! active-cell ordering, so two meshes with the same active set are
//! structurally identical regardless of how they were produced.

mod geometry;
mod vtk;

pub use geometry::Geometry;
pub use vtk::write_vtk;

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::num::Scalar;

pub type CellId = usize;

/// Integer address of a cell: lattice position `(gx, gy)` at `level`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub level: u8,
    pub gx: u32,
    pub gy: u32,
}

impl CellKey {
    pub fn child(&self, dx: u32, dy: u32) -> CellKey {
        CellKey {
            level: self.level + 1,
            gx: 2 * self.gx + dx,
            gy: 2 * self.gy + dy,
        }
    }

    pub fn children(&self) -> [CellKey; 4] {
        [
            self.child(0, 0),
            self.child(1, 0),
            self.child(0, 1),
            self.child(1, 1),
        ]
    }

    pub fn parent(&self) -> Option<CellKey> {
        if self.level == 0 {
            None
        } else {
            Some(CellKey {
                level: self.level - 1,
                gx: self.gx / 2,
                gy: self.gy / 2,
            })
        }
    }

    /// Ancestor at `level <= self.level`.
    pub fn ancestor(&self, level: u8) -> CellKey {
        let shift = self.level - level;
        CellKey {
            level,
            gx: self.gx >> shift,
            gy: self.gy >> shift,
        }
    }
}

/// Face directions in lattice axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Face {
    XMinus,
    XPlus,
    YMinus,
    YPlus,
}

pub const FACES: [Face; 4] = [Face::XMinus, Face::XPlus, Face::YMinus, Face::YPlus];

impl Face {
    pub fn axis(&self) -> usize {
        match self {
            Face::XMinus | Face::XPlus => 0,
            _ => 1,
        }
    }

    pub fn opposite(&self) -> Face {
        match self {
            Face::XMinus => Face::XPlus,
            Face::XPlus => Face::XMinus,
            Face::YMinus => Face::YPlus,
            Face::YPlus => Face::YMinus,
        }
    }

    pub fn index(&self) -> usize {
        match self {
            Face::XMinus => 0,
            Face::XPlus => 1,
            Face::YMinus => 2,
            Face::YPlus => 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub id: CellId,
    pub key: CellKey,
    pub parent: Option<CellId>,
    pub children: Option<[CellId; 4]>,
    active: bool,
    /// Physical corners in counterclockwise order
    /// (param corners (0,0), (1,0), (1,1), (0,1)).
    pub vertices: [[Scalar; 2]; 4],
    /// Simulated owning rank; 0 unless a partition has been applied.
    pub owner_rank: usize,
}

impl Cell {
    pub fn level(&self) -> usize {
        self.key.level as usize
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn center(&self) -> [Scalar; 2] {
        let mut c = [0.0; 2];
        for v in &self.vertices {
            c[0] += v[0] / 4.0;
            c[1] += v[1] / 4.0;
        }
        c
    }

    /// Cell diameter (max diagonal length).
    pub fn diameter(&self) -> Scalar {
        let d1 = dist(self.vertices[0], self.vertices[2]);
        let d2 = dist(self.vertices[1], self.vertices[3]);
        d1.max(d2)
    }
}

fn dist(a: [Scalar; 2], b: [Scalar; 2]) -> Scalar {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// What lies across a face of an active cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Neighbor {
    Boundary,
    /// Same refinement level.
    Equal(CellId),
    /// One level coarser; the active cell covering the face.
    Coarser(CellId),
    /// One level finer; the two children touching the face, in lattice order.
    Finer([CellId; 2]),
}

#[derive(Clone, Debug)]
pub struct Mesh {
    geometry: Geometry,
    base: (u32, u32),
    cells: Vec<Cell>,
    index: HashMap<CellKey, CellId>,
    active: Vec<CellId>,
    max_level: u8,
}

/// Simulated P-way ownership of a mesh's active cells.
#[derive(Clone, Debug)]
pub struct PartitionMap {
    /// Rank per active-cell position (parallel to `Mesh::active_cells()`).
    pub ranks: Vec<usize>,
    pub num_ranks: usize,
}

impl Mesh {
    /// Tensor-product base mesh for the geometry.
    pub fn create(geometry: Geometry, subdivisions: (u32, u32)) -> Result<Mesh> {
        geometry.validate()?;
        if subdivisions.0 < 1 || subdivisions.1 < 1 {
            return Err(Error::Invalid("subdivisions must be at least (1,1)".into()));
        }
        let base = geometry.base_dims(subdivisions);
        let (wrap_x, wrap_y) = geometry.wraps();
        // a wrapping direction needs >= 3 cells or edge topology degenerates
        if (wrap_x && base.0 < 3) || (wrap_y && base.1 < 3) {
            return Err(Error::DegenerateGeometry(
                "periodic direction needs at least 3 subdivisions".into(),
            ));
        }
        let mut keys = BTreeSet::new();
        for by in 0..base.1 {
            for bx in 0..base.0 {
                if geometry.base_cell_exists(base, bx, by) {
                    keys.insert(CellKey {
                        level: 0,
                        gx: bx,
                        gy: by,
                    });
                }
            }
        }
        if keys.is_empty() {
            return Err(Error::DegenerateGeometry("no base cells".into()));
        }
        Ok(Mesh::from_active_set(geometry, base, &keys))
    }

    /// Canonical construction from an explicit leaf set. All ancestors are
    /// materialized; active cells get Morton order.
    pub(crate) fn from_active_set(
        geometry: Geometry,
        base: (u32, u32),
        active_keys: &BTreeSet<CellKey>,
    ) -> Mesh {
        let mut mesh = Mesh {
            geometry,
            base,
            cells: Vec::new(),
            index: HashMap::new(),
            active: Vec::new(),
            max_level: 0,
        };
        // create ancestor roots first (BTreeSet iterates level-major)
        for key in active_keys {
            let id = mesh.ensure_cell(*key);
            mesh.cells[id].active = true;
        }
        let mut active: Vec<CellId> = mesh
            .cells
            .iter()
            .filter(|c| c.is_active())
            .map(|c| c.id)
            .collect();
        debug_assert_eq!(active.len(), active_keys.len(), "leaf set mismatch");
        active.sort_by_key(|&id| mesh.morton_key(mesh.cells[id].key));
        mesh.active = active;
        mesh.max_level = mesh
            .active
            .iter()
            .map(|&id| mesh.cells[id].key.level)
            .max()
            .unwrap_or(0);
        mesh
    }

    fn ensure_cell(&mut self, key: CellKey) -> CellId {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let parent = key.parent().map(|p| self.ensure_cell(p));
        let id = self.cells.len();
        let vertices = self.geometry.cell_vertices(self.base, key);
        self.cells.push(Cell {
            id,
            key,
            parent,
            children: None,
            active: false,
            vertices,
            owner_rank: 0,
        });
        self.index.insert(key, id);
        if let Some(pid) = parent {
            // register as child in lattice order once all four exist
            let pkey = self.cells[pid].key;
            let kids = pkey.children();
            if kids.iter().all(|k| self.index.contains_key(k)) {
                let ids = [
                    self.index[&kids[0]],
                    self.index[&kids[1]],
                    self.index[&kids[2]],
                    self.index[&kids[3]],
                ];
                self.cells[pid].children = Some(ids);
            }
        }
        id
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn base_dims(&self) -> (u32, u32) {
        self.base
    }

    pub fn cell(&self, id: CellId) -> &Cell {
        &self.cells[id]
    }

    pub fn find(&self, key: CellKey) -> Option<CellId> {
        self.index.get(&key).copied()
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    pub fn active_cells(&self) -> impl Iterator<Item = &Cell> + '_ {
        self.active.iter().map(move |&id| &self.cells[id])
    }

    pub fn active_ids(&self) -> &[CellId] {
        &self.active
    }

    pub fn max_level(&self) -> usize {
        self.max_level as usize
    }

    /// Position of an active cell in the canonical active ordering.
    pub fn active_position(&self, id: CellId) -> Option<usize> {
        self.active.iter().position(|&a| a == id)
    }

    /// Periodic wrap flags per lattice axis.
    pub fn wraps(&self) -> (bool, bool) {
        self.geometry.wraps()
    }

    /// Lattice extent at a level.
    fn extent(&self, level: u8) -> (u32, u32) {
        (self.base.0 << level, self.base.1 << level)
    }

    /// Key of the same-level neighbor across `face`, honoring wrap-around.
    pub fn neighbor_key(&self, key: CellKey, face: Face) -> Option<CellKey> {
        let (nx, ny) = self.extent(key.level);
        let (wrap_x, wrap_y) = self.wraps();
        let mut gx = key.gx as i64;
        let mut gy = key.gy as i64;
        match face {
            Face::XMinus => gx -= 1,
            Face::XPlus => gx += 1,
            Face::YMinus => gy -= 1,
            Face::YPlus => gy += 1,
        }
        if gx < 0 || gx >= nx as i64 {
            if wrap_x {
                gx = gx.rem_euclid(nx as i64);
            } else {
                return None;
            }
        }
        if gy < 0 || gy >= ny as i64 {
            if wrap_y {
                gy = gy.rem_euclid(ny as i64);
            } else {
                return None;
            }
        }
        Some(CellKey {
            level: key.level,
            gx: gx as u32,
            gy: gy as u32,
        })
    }

    /// Neighbor of an ACTIVE cell across a face. Requires 2:1 balance.
    pub fn neighbor(&self, id: CellId, face: Face) -> Neighbor {
        let key = self.cells[id].key;
        let Some(nkey) = self.neighbor_key(key, face) else {
            return Neighbor::Boundary;
        };
        if let Some(nid) = self.find(nkey) {
            let n = &self.cells[nid];
            if n.is_active() {
                return Neighbor::Equal(nid);
            }
            // refined once: the two children on the shared face are active
            let kids = n.children.expect("non-active cell has children");
            let pair = match face {
                // children of the neighbor adjacent to *our* cell
                Face::XMinus => [kids[1], kids[3]], // neighbor's x-plus side
                Face::XPlus => [kids[0], kids[2]],
                Face::YMinus => [kids[2], kids[3]],
                Face::YPlus => [kids[0], kids[1]],
            };
            debug_assert!(pair.iter().all(|&c| self.cells[c].is_active()));
            return Neighbor::Finer(pair);
        }
        // coarser neighbor: walk up until a cell exists
        let mut probe = nkey;
        while let Some(p) = probe.parent() {
            if let Some(pid) = self.find(p) {
                if self.cells[pid].is_active() {
                    return Neighbor::Coarser(pid);
                }
                // exists but refined without containing nkey's level: impossible
                break;
            }
            probe = p;
        }
        Neighbor::Boundary
    }

    /// Morton (Z-order) key of a cell center on the common finest lattice.
    pub fn morton_key(&self, key: CellKey) -> u64 {
        const CAP: u8 = 24;
        debug_assert!(key.level < CAP);
        let shift = CAP - key.level - 1;
        let cx = ((2 * key.gx as u64 + 1) << shift) as u32;
        let cy = ((2 * key.gy as u64 + 1) << shift) as u32;
        interleave(cx) | (interleave(cy) << 1)
    }

    /// Refine the flagged active cells, then restore 2:1 balance.
    pub fn refine(&self, flags: &BTreeSet<CellId>) -> Result<Mesh> {
        for &id in flags {
            if id >= self.cells.len() || !self.cells[id].is_active() {
                return Err(Error::Invalid(format!("flag {id} is not an active cell")));
            }
        }
        let mut keys: BTreeSet<CellKey> = self
            .active_cells()
            .filter(|c| !flags.contains(&c.id))
            .map(|c| c.key)
            .collect();
        for &id in flags {
            for k in self.cells[id].key.children() {
                keys.insert(k);
            }
        }
        let keys = self.balance_closure(keys);
        Ok(Mesh::from_active_set(self.geometry.clone(), self.base, &keys))
    }

    /// Replace every complete sibling group of active cells by its parent.
    /// A no-op on the base mesh.
    pub fn coarsen_globally(&self) -> Mesh {
        let mut groups: HashMap<CellKey, usize> = HashMap::new();
        for c in self.active_cells() {
            if let Some(p) = c.key.parent() {
                *groups.entry(p).or_insert(0) += 1;
            }
        }
        let mut keys = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for c in self.active_cells() {
            match c.key.parent() {
                Some(p) if groups[&p] == 4 => {
                    if seen.insert(p) {
                        keys.insert(p);
                    }
                }
                _ => {
                    keys.insert(c.key);
                }
            }
        }
        let keys = self.balance_closure(keys);
        Mesh::from_active_set(self.geometry.clone(), self.base, &keys)
    }

    /// 2:1 balance closure over faces on a prospective leaf set.
    fn balance_closure(&self, mut keys: BTreeSet<CellKey>) -> BTreeSet<CellKey> {
        loop {
            let mut to_refine: BTreeSet<CellKey> = BTreeSet::new();
            for &key in &keys {
                if key.level < 2 {
                    continue;
                }
                for face in FACES {
                    let Some(nkey) = self.neighbor_key(key, face) else {
                        continue;
                    };
                    // active cell covering the neighbor position
                    let mut lvl = nkey.level;
                    loop {
                        let probe = nkey.ancestor(lvl);
                        if keys.contains(&probe) {
                            if (key.level - lvl) >= 2 {
                                to_refine.insert(probe);
                            }
                            break;
                        }
                        if lvl == 0 {
                            break; // outside the masked domain
                        }
                        lvl -= 1;
                    }
                }
            }
            if to_refine.is_empty() {
                return keys;
            }
            for k in to_refine {
                keys.remove(&k);
                for c in k.children() {
                    keys.insert(c);
                }
            }
        }
    }

    /// Brute-force 2:1 balance check over all active face pairs.
    pub fn is_balanced(&self) -> bool {
        for a in self.active_cells() {
            for b in self.active_cells() {
                if a.id == b.id {
                    continue;
                }
                if self.faces_touch(a.key, b.key)
                    && (a.key.level as i32 - b.key.level as i32).abs() > 1
                {
                    return false;
                }
            }
        }
        true
    }

    /// Do two cells share a face segment of positive length (in lattice space)?
    fn faces_touch(&self, a: CellKey, b: CellKey) -> bool {
        // promote both to the finer level's lattice
        let lvl = a.level.max(b.level);
        let (sa, sb) = (1u64 << (lvl - a.level), 1u64 << (lvl - b.level));
        let ax0 = a.gx as u64 * sa;
        let ax1 = ax0 + sa;
        let ay0 = a.gy as u64 * sa;
        let ay1 = ay0 + sa;
        let bx0 = b.gx as u64 * sb;
        let bx1 = bx0 + sb;
        let by0 = b.gy as u64 * sb;
        let by1 = by0 + sb;
        let (nx, ny) = self.extent(lvl);
        let (wrap_x, wrap_y) = self.wraps();
        let touch_x = seg_touch(ax0, ax1, bx0, bx1, nx as u64, wrap_x);
        let touch_y = seg_touch(ay0, ay1, by0, by1, ny as u64, wrap_y);
        let overlap_x = seg_overlap(ax0, ax1, bx0, bx1);
        let overlap_y = seg_overlap(ay0, ay1, by0, by1);
        (touch_x && overlap_y) || (touch_y && overlap_x)
    }

    /// Sub-mesh of all cells at refinement level exactly `l`, together with
    /// the faces where that region meets coarser active cells of `self`.
    /// Those faces are the internal Dirichlet boundary for local smoothing.
    pub fn level_submesh(&self, l: usize) -> Result<(Mesh, Vec<(CellId, Face)>)> {
        if l > self.max_level() {
            return Err(Error::LevelOutOfRange {
                level: l,
                max: self.max_level(),
            });
        }
        let keys: BTreeSet<CellKey> = self
            .cells
            .iter()
            .filter(|c| c.level() == l)
            .map(|c| c.key)
            .collect();
        let view = Mesh::from_active_set(self.geometry.clone(), self.base, &keys);
        let mut boundary = Vec::new();
        for c in view.active_cells() {
            for face in FACES {
                let Some(nkey) = view.neighbor_key(c.key, face) else {
                    continue;
                };
                if keys.contains(&nkey) {
                    continue; // interior to the view
                }
                // coarser active cell of the parent mesh on the other side
                let mut lvl = nkey.level;
                let mut hit = false;
                loop {
                    let probe = nkey.ancestor(lvl);
                    if let Some(id) = self.find(probe) {
                        if self.cells[id].is_active() {
                            hit = lvl < l as u8;
                        }
                        break;
                    }
                    if lvl == 0 {
                        break;
                    }
                    lvl -= 1;
                }
                if hit {
                    boundary.push((c.id, face));
                }
            }
        }
        boundary.sort_by_key(|&(id, f)| (id, f.index()));
        Ok((view, boundary))
    }

    /// Morton-ordered split of the active cells into P contiguous chunks.
    pub fn partition_morton(&self, num_ranks: usize) -> PartitionMap {
        assert!(num_ranks >= 1);
        let n = self.n_active();
        let ranks = (0..n).map(|i| i * num_ranks / n.max(1)).collect();
        PartitionMap { ranks, num_ranks }
    }

    /// Copy of the mesh with `owner_rank` filled in from a partition.
    pub fn with_partition(&self, pm: &PartitionMap) -> Mesh {
        assert_eq!(pm.ranks.len(), self.n_active());
        let mut mesh = self.clone();
        for (pos, &id) in self.active.iter().enumerate() {
            mesh.cells[id].owner_rank = pm.ranks[pos];
        }
        mesh
    }

    /// Sum of mapped cell areas by Gauss quadrature.
    pub fn total_area(&self, n_gauss: usize) -> Scalar {
        let rule = crate::quad::gauss_legendre::<Scalar>(n_gauss);
        let mut area = 0.0;
        for c in self.active_cells() {
            for (i, &xi) in rule.points.iter().enumerate() {
                for (j, &eta) in rule.points.iter().enumerate() {
                    let det = bilinear_jacobian(&c.vertices, xi, eta).det();
                    area += rule.weights[i] * rule.weights[j] * det;
                }
            }
        }
        area
    }

    /// Minimum bilinear Jacobian determinant over an n x n Gauss grid per cell.
    pub fn min_jacobian(&self, n_gauss: usize) -> Scalar {
        let rule = crate::quad::gauss_legendre::<Scalar>(n_gauss);
        let mut min = Scalar::INFINITY;
        for c in self.active_cells() {
            for &xi in &rule.points {
                for &eta in &rule.points {
                    min = min.min(bilinear_jacobian(&c.vertices, xi, eta).det());
                }
            }
        }
        min
    }
}

fn seg_touch(a0: u64, a1: u64, b0: u64, b1: u64, n: u64, wrap: bool) -> bool {
    a1 == b0 || b1 == a0 || (wrap && (a1 % n == b0 || b1 % n == a0))
}

fn seg_overlap(a0: u64, a1: u64, b0: u64, b1: u64) -> bool {
    a0 < b1 && b0 < a1
}

fn interleave(x: u32) -> u64 {
    let mut v = x as u64;
    v = (v | (v << 16)) & 0x0000_ffff_0000_ffff;
    v = (v | (v << 8)) & 0x00ff_00ff_00ff_00ff;
    v = (v | (v << 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    v = (v | (v << 2)) & 0x3333_3333_3333_3333;
    v = (v | (v << 1)) & 0x5555_5555_5555_5555;
    v
}

/// Jacobian of the bilinear map of a quad at reference point (xi, eta).
pub struct Jacobian2 {
    pub j: [[Scalar; 2]; 2],
}

impl Jacobian2 {
    pub fn det(&self) -> Scalar {
        self.j[0][0] * self.j[1][1] - self.j[0][1] * self.j[1][0]
    }

    /// Inverse transpose, for pushing reference gradients to physical space.
    pub fn inv_t(&self) -> [[Scalar; 2]; 2] {
        let d = self.det();
        [
            [self.j[1][1] / d, -self.j[1][0] / d],
            [-self.j[0][1] / d, self.j[0][0] / d],
        ]
    }

    pub fn inv(&self) -> [[Scalar; 2]; 2] {
        let d = self.det();
        [
            [self.j[1][1] / d, -self.j[0][1] / d],
            [-self.j[1][0] / d, self.j[0][0] / d],
        ]
    }
}

/// dx/d(xi,eta) of the bilinear quad map.
pub fn bilinear_jacobian(v: &[[Scalar; 2]; 4], xi: Scalar, eta: Scalar) -> Jacobian2 {
    let mut j = [[0.0; 2]; 2];
    for d in 0..2 {
        // x(xi,eta) = v0 (1-xi)(1-eta) + v1 xi(1-eta) + v2 xi eta + v3 (1-xi) eta
        j[d][0] = (v[1][d] - v[0][d]) * (1.0 - eta) + (v[2][d] - v[3][d]) * eta;
        j[d][1] = (v[3][d] - v[0][d]) * (1.0 - xi) + (v[2][d] - v[1][d]) * xi;
    }
    Jacobian2 { j }
}

/// Physical point of the bilinear quad map.
pub fn bilinear_map(v: &[[Scalar; 2]; 4], xi: Scalar, eta: Scalar) -> [Scalar; 2] {
    let mut x = [0.0; 2];
    for d in 0..2 {
        x[d] = v[0][d] * (1.0 - xi) * (1.0 - eta)
            + v[1][d] * xi * (1.0 - eta)
            + v[2][d] * xi * eta
            + v[3][d] * (1.0 - xi) * eta;
    }
    x
}

/// Constant mixed second derivative d^2 x / (dxi deta) of the bilinear map.
pub fn bilinear_mixed_second(v: &[[Scalar; 2]; 4]) -> [Scalar; 2] {
    [
        v[0][0] - v[1][0] + v[2][0] - v[3][0],
        v[0][1] - v[1][1] + v[2][1] - v[3][1],
    ]
}

#[cfg(test)]
mod tests;
