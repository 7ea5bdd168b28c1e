//! Affine constraints x_i = sum_j c_ij x_j + b_i for hanging nodes,
//! p-nonconforming faces, and Dirichlet boundaries.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::mesh::{Face, Neighbor};
use crate::num::Scalar;
use crate::poly::LagrangeBasis;

use super::space::ScalarSpace;

const DROP_TOL: Scalar = 1e-14;

#[derive(Clone, Debug, Default)]
pub struct Constraint {
    pub terms: Vec<(usize, Scalar)>,
    pub inhomogeneity: Scalar,
}

/// One Dirichlet region: a predicate on boundary-face midpoints and the
/// boundary value as a function of position and time.
#[derive(Clone)]
pub struct BoundaryCondition {
    pub region: Arc<dyn Fn([Scalar; 2]) -> bool + Send + Sync>,
    pub value: Arc<dyn Fn([Scalar; 2], Scalar) -> Scalar + Send + Sync>,
}

impl BoundaryCondition {
    pub fn zero(region: impl Fn([Scalar; 2]) -> bool + Send + Sync + 'static) -> Self {
        BoundaryCondition {
            region: Arc::new(region),
            value: Arc::new(|_, _| 0.0),
        }
    }

    pub fn new(
        region: impl Fn([Scalar; 2]) -> bool + Send + Sync + 'static,
        value: impl Fn([Scalar; 2], Scalar) -> Scalar + Send + Sync + 'static,
    ) -> Self {
        BoundaryCondition {
            region: Arc::new(region),
            value: Arc::new(value),
        }
    }

    /// Same region with zero value (multigrid level corrections).
    pub fn homogeneous(&self) -> BoundaryCondition {
        BoundaryCondition {
            region: self.region.clone(),
            value: Arc::new(|_, _| 0.0),
        }
    }
}

/// Ordered list of Dirichlet regions; at a dof claimed by several regions the
/// first listed wins.
#[derive(Clone, Default)]
pub struct DirichletSpec {
    pub conditions: Vec<BoundaryCondition>,
}

impl DirichletSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn all_zero() -> Self {
        DirichletSpec {
            conditions: vec![BoundaryCondition::zero(|_| true)],
        }
    }

    pub fn homogeneous(&self) -> DirichletSpec {
        DirichletSpec {
            conditions: self.conditions.iter().map(|c| c.homogeneous()).collect(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ConstraintSet {
    /// Closed constraints sorted by dof.
    list: Vec<(usize, Constraint)>,
    /// O(1) lookup: dof -> index into `list`, -1 if unconstrained.
    slots: Vec<i32>,
    /// Dirichlet dofs with their node positions, for value refresh at a new time.
    dirichlet_nodes: Vec<(usize, [Scalar; 2], usize)>,
}

impl ConstraintSet {
    pub fn empty() -> Self {
        Self::default()
    }

    fn from_entries(
        entries: BTreeMap<usize, Constraint>,
        n_dofs: usize,
        dirichlet_nodes: Vec<(usize, [Scalar; 2], usize)>,
    ) -> ConstraintSet {
        let list: Vec<(usize, Constraint)> = entries.into_iter().collect();
        let mut slots = vec![-1; n_dofs];
        for (k, (dof, _)) in list.iter().enumerate() {
            slots[*dof] = k as i32;
        }
        ConstraintSet {
            list,
            slots,
            dirichlet_nodes,
        }
    }

    /// Hanging-node, p-interface, and Dirichlet constraints for one scalar
    /// component on the space, closed so no constrained dof appears on any
    /// right-hand side. `time` seeds the initial Dirichlet values.
    pub fn build(space: &ScalarSpace, dirichlet: &DirichletSpec, time: Scalar) -> ConstraintSet {
        let mesh = space.mesh();
        let mut entries: BTreeMap<usize, Constraint> = BTreeMap::new();

        for edge in space.edges() {
            match edge.neighbor {
                Neighbor::Coarser(coarse_id) => {
                    // fine side of a hanging face: constrain all our edge dofs
                    // to the coarse trace at our node parameters
                    let cpos = mesh.active_position(coarse_id).unwrap();
                    let coarse_dofs = space.edge_dofs(cpos, edge.face.opposite());
                    let basis = LagrangeBasis::new(space.edge_params(cpos));
                    let fine_dofs = space.edge_dofs(edge.cell_pos, edge.face);
                    let fine_params = space.edge_params(edge.cell_pos);
                    let offset = subedge_offset(space, edge.cell_pos, coarse_id, edge.face);
                    for (k, &d) in fine_dofs.iter().enumerate() {
                        if coarse_dofs.contains(&d) {
                            continue; // shared corner vertex
                        }
                        let s = (offset + fine_params[k]) / 2.0;
                        let mut terms = Vec::new();
                        for (j, &cd) in coarse_dofs.iter().enumerate() {
                            let c = basis.value(j, s);
                            if c.abs() > DROP_TOL {
                                terms.push((cd, c));
                            }
                        }
                        entries.insert(
                            d,
                            Constraint {
                                terms,
                                inhomogeneity: 0.0,
                            },
                        );
                    }
                }
                Neighbor::Equal(nid) => {
                    // p-nonconforming conforming face: the lower-degree side's
                    // interior edge dofs follow the higher-degree trace
                    let npos = mesh.active_position(nid).unwrap();
                    let p_lo = space.degree(edge.cell_pos);
                    let p_hi = space.degree(npos);
                    if p_lo >= p_hi {
                        continue;
                    }
                    let hi_dofs = space.edge_dofs(npos, edge.face.opposite());
                    let basis = LagrangeBasis::new(space.edge_params(npos));
                    let lo_dofs = space.edge_dofs(edge.cell_pos, edge.face);
                    let lo_params = space.edge_params(edge.cell_pos);
                    for k in 1..lo_dofs.len() - 1 {
                        let t = lo_params[k];
                        let mut terms = Vec::new();
                        for (j, &hd) in hi_dofs.iter().enumerate() {
                            let c = basis.value(j, t);
                            if c.abs() > DROP_TOL {
                                terms.push((hd, c));
                            }
                        }
                        entries.insert(
                            lo_dofs[k],
                            Constraint {
                                terms,
                                inhomogeneity: 0.0,
                            },
                        );
                    }
                }
                _ => {}
            }
        }

        // Dirichlet rows replace any hanging rows; first matching region wins
        let mut claimed: BTreeMap<usize, (usize, [Scalar; 2])> = BTreeMap::new();
        for edge in space.edges() {
            if edge.neighbor != Neighbor::Boundary {
                continue;
            }
            let mid = edge_midpoint(space, edge.cell_pos, edge.face);
            for (ci, cond) in dirichlet.conditions.iter().enumerate() {
                if !(cond.region)(mid) {
                    continue;
                }
                let p = space.degree(edge.cell_pos) as usize;
                let n1 = p + 1;
                for k in 0..=p {
                    let (a, b) = match edge.face {
                        Face::YMinus => (k, 0),
                        Face::YPlus => (k, p),
                        Face::XMinus => (0, k),
                        Face::XPlus => (p, k),
                    };
                    let local = b * n1 + a;
                    let dof = space.cell_dofs(edge.cell_pos)[local];
                    let keep = match claimed.get(&dof) {
                        Some(&(prev, _)) => ci < prev,
                        None => true,
                    };
                    if keep {
                        claimed.insert(dof, (ci, space.node_position(edge.cell_pos, local)));
                    }
                }
                break; // first matching region claims the face
            }
        }
        let mut dirichlet_nodes = Vec::new();
        for (&dof, &(ci, x)) in &claimed {
            let value = (dirichlet.conditions[ci].value)(x, time);
            entries.insert(
                dof,
                Constraint {
                    terms: Vec::new(),
                    inhomogeneity: value,
                },
            );
            dirichlet_nodes.push((dof, x, ci));
        }

        close(&mut entries);
        ConstraintSet::from_entries(entries, space.n_dofs(), dirichlet_nodes)
    }

    /// Constrain one dof to a fixed value (pressure pinning on enclosed
    /// domains) and re-close so the pinned dof disappears from every
    /// right-hand side.
    pub fn pin_dof_value(&self, dof: usize, n_dofs: usize, value: Scalar) -> ConstraintSet {
        let mut entries: BTreeMap<usize, Constraint> =
            self.list.iter().cloned().collect();
        entries.insert(
            dof,
            Constraint {
                terms: Vec::new(),
                inhomogeneity: value,
            },
        );
        close(&mut entries);
        ConstraintSet::from_entries(entries, n_dofs, self.dirichlet_nodes.clone())
    }

    pub fn pin_dof(&self, dof: usize, n_dofs: usize) -> ConstraintSet {
        self.pin_dof_value(dof, n_dofs, 0.0)
    }

    /// Re-evaluate Dirichlet inhomogeneities at a new time.
    pub fn refresh_time(&mut self, dirichlet: &DirichletSpec, time: Scalar) {
        for &(dof, x, ci) in &self.dirichlet_nodes {
            let v = (dirichlet.conditions[ci].value)(x, time);
            if let Some(&slot) = self.slots.get(dof) {
                if slot >= 0 {
                    self.list[slot as usize].1.inhomogeneity = v;
                }
            }
        }
    }

    pub fn n_constraints(&self) -> usize {
        self.list.len()
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        matches!(self.slots.get(dof), Some(&s) if s >= 0)
    }

    pub fn get(&self, dof: usize) -> Option<&Constraint> {
        match self.slots.get(dof) {
            Some(&s) if s >= 0 => Some(&self.list[s as usize].1),
            _ => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&usize, &Constraint)> {
        self.list.iter().map(|(d, c)| (d, c))
    }

    /// x_i = sum_j c_ij x_j + b_i for all constrained dofs.
    pub fn distribute(&self, x: &mut [Scalar]) {
        for (i, c) in &self.list {
            let mut v = c.inhomogeneity;
            for &(j, cj) in &c.terms {
                v += cj * x[j];
            }
            x[*i] = v;
        }
    }

    /// Homogeneous variant, used on correction/Krylov vectors.
    pub fn distribute_homogeneous(&self, x: &mut [Scalar]) {
        for (i, c) in &self.list {
            let mut v = 0.0;
            for &(j, cj) in &c.terms {
                v += cj * x[j];
            }
            x[*i] = v;
        }
    }

    /// Set constrained entries to zero (project onto the constrained subspace
    /// complement for residuals).
    pub fn zero_constrained(&self, x: &mut [Scalar]) {
        for (i, _) in &self.list {
            x[*i] = 0.0;
        }
    }
}

/// Substitute constrained dofs out of all right-hand sides.
fn close(entries: &mut BTreeMap<usize, Constraint>) {
    let max_rounds = entries.len() + 1;
    for _ in 0..max_rounds {
        let mut changed = false;
        let keys: Vec<usize> = entries.keys().copied().collect();
        for dof in keys {
            let cons = entries[&dof].clone();
            if cons.terms.iter().all(|(j, _)| !entries.contains_key(j)) {
                continue;
            }
            changed = true;
            let mut terms: BTreeMap<usize, Scalar> = BTreeMap::new();
            let mut inhom = cons.inhomogeneity;
            for (j, c) in cons.terms {
                if let Some(sub) = entries.get(&j) {
                    inhom += c * sub.inhomogeneity;
                    for &(k, ck) in &sub.terms {
                        *terms.entry(k).or_insert(0.0) += c * ck;
                    }
                } else {
                    *terms.entry(j).or_insert(0.0) += c;
                }
            }
            let terms: Vec<(usize, Scalar)> = terms
                .into_iter()
                .filter(|(_, c)| c.abs() > DROP_TOL)
                .collect();
            entries.insert(
                dof,
                Constraint {
                    terms,
                    inhomogeneity: inhom,
                },
            );
        }
        if !changed {
            return;
        }
    }
    panic!("constraint closure did not terminate (cyclic constraints)");
}

/// Which half of the coarse edge the fine cell's edge covers: 0.0 or 1.0.
fn subedge_offset(
    space: &ScalarSpace,
    fine_pos: usize,
    coarse_id: usize,
    face: Face,
) -> Scalar {
    let mesh = space.mesh();
    let fine = mesh.cell(mesh.active_ids()[fine_pos]);
    let coarse = mesh.cell(coarse_id);
    debug_assert_eq!(fine.key.level, coarse.key.level + 1);
    let along_y = matches!(face, Face::XMinus | Face::XPlus);
    let (f, c) = if along_y {
        (fine.key.gy, coarse.key.gy)
    } else {
        (fine.key.gx, coarse.key.gx)
    };
    if f == 2 * c {
        0.0
    } else {
        debug_assert_eq!(f, 2 * c + 1);
        1.0
    }
}

fn edge_midpoint(space: &ScalarSpace, pos: usize, face: Face) -> [Scalar; 2] {
    let mesh = space.mesh();
    let c = mesh.cell(mesh.active_ids()[pos]);
    let (a, b) = match face {
        Face::YMinus => (0, 1),
        Face::YPlus => (3, 2),
        Face::XMinus => (0, 3),
        Face::XPlus => (1, 2),
    };
    [
        0.5 * (c.vertices[a][0] + c.vertices[b][0]),
        0.5 * (c.vertices[a][1] + c.vertices[b][1]),
    ]
}
