//! Level-chain construction for the three hierarchy families:
//! global coarsening (GC), local smoothing (LS), and polynomial/hp chains.
//!
//! A chain holds per-level spaces/layouts with homogeneous constraints, the
//! inter-level transfers, simulated partitions, and the injection map that
//! ties the outer system's dofs to the level stack. Operators and smoothers
//! are attached afterwards (they change per linearization), the geometry
//! here does not.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::disc::{
    BlockSpace, BoundaryCondition, ConstraintSet, DirichletSpec, FieldLayout, PressureRule,
    ScalarSpace,
};
use crate::error::Result;
use crate::mesh::{CellKey, Face, Mesh, PartitionMap};
use crate::num::Scalar;
use crate::transfer::{BlockTransfer, ScalarTransfer};

use super::smoother::{AsmPatches, Smoother, SmootherConfig};
use super::{Injection, MgLevel, MgOperator, Multigrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HierarchyKind {
    GlobalCoarsening,
    LocalSmoothing,
    Hp,
    SpaceTime,
}

/// Boundary treatment shared by all levels (values are homogenized).
#[derive(Clone)]
pub struct SystemBc {
    pub velocity: DirichletSpec,
    pub pressure: DirichletSpec,
    /// pin the pressure dof nearest this point on every level (enclosed flows)
    pub pin_pressure: Option<[Scalar; 2]>,
}

impl SystemBc {
    pub fn velocity_only(velocity: DirichletSpec) -> SystemBc {
        SystemBc {
            velocity,
            pressure: DirichletSpec::none(),
            pin_pressure: None,
        }
    }
}

/// Spaces and layout of one level.
#[derive(Clone)]
pub struct LevelSpaces {
    pub mesh: Arc<Mesh>,
    pub layout: FieldLayout,
    pub vel_degrees: Vec<u8>,
    /// true where the layout has a pressure component (index 2)
    pub has_pressure: bool,
}

impl LevelSpaces {
    pub fn n_dofs(&self) -> usize {
        self.layout.n_dofs()
    }

    pub fn constrained_dofs(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for c in 0..self.layout.n_components() {
            let off = self.layout.offset(c);
            for (&d, _) in self.layout.constraints(c).iter() {
                out.push(off + d);
            }
        }
        out
    }
}

pub struct LevelChain {
    pub kind: HierarchyKind,
    /// coarse -> fine
    pub levels: Vec<LevelSpaces>,
    pub transfers: Vec<Arc<BlockTransfer>>,
    pub injection: Injection,
    pub n_system: usize,
    pub partitions: Vec<PartitionMap>,
    /// the outer (active-mesh) spaces the preconditioner acts on; equals the
    /// finest level for global-coarsening/hp chains
    pub outer: LevelSpaces,
    /// per level: (outer dof, level dof) value-copy pairs for nonlinear
    /// level states; identity at the finest level of nested chains
    pub state_copy: Vec<Vec<(usize, usize)>>,
}

/// Per-component constraint build with optional pressure handling.
fn build_layout(
    mesh: &Arc<Mesh>,
    vel_degrees: &[u8],
    rule: Option<PressureRule>,
    bc: &SystemBc,
    extra_edge_dirichlet: Option<&Arc<dyn Fn([Scalar; 2]) -> bool + Send + Sync>>,
) -> Result<(LevelSpaces, Arc<ScalarSpace>, Option<Arc<ScalarSpace>>)> {
    let mut vspec = bc.velocity.homogeneous();
    let mut pspec = bc.pressure.homogeneous();
    if let Some(region) = extra_edge_dirichlet {
        let r = region.clone();
        vspec
            .conditions
            .insert(0, BoundaryCondition::zero(move |x| r(x)));
        let r = region.clone();
        pspec
            .conditions
            .insert(0, BoundaryCondition::zero(move |x| r(x)));
    }
    match rule {
        Some(rule) => {
            let bs = BlockSpace::distribute_dofs(mesh, vel_degrees, rule)?;
            let cons_u = Arc::new(ConstraintSet::build(&bs.velocity, &vspec, 0.0));
            let mut cons_p = ConstraintSet::build(&bs.pressure, &pspec, 0.0);
            if let Some(pt) = bc.pin_pressure {
                let dof = nearest_dof(&bs.pressure, pt);
                cons_p = cons_p.pin_dof(dof, bs.pressure.n_dofs());
            }
            let cons_p = Arc::new(cons_p);
            let layout = FieldLayout::new(vec![
                (bs.velocity.clone(), cons_u.clone()),
                (bs.velocity.clone(), cons_u),
                (bs.pressure.clone(), cons_p),
            ]);
            Ok((
                LevelSpaces {
                    mesh: mesh.clone(),
                    layout,
                    vel_degrees: vel_degrees.to_vec(),
                    has_pressure: true,
                },
                bs.velocity.clone(),
                Some(bs.pressure),
            ))
        }
        None => {
            let space = Arc::new(ScalarSpace::new(mesh.clone(), vel_degrees.to_vec()));
            let cons_u = Arc::new(ConstraintSet::build(&space, &vspec, 0.0));
            let layout = FieldLayout::new(vec![
                (space.clone(), cons_u.clone()),
                (space.clone(), cons_u),
            ]);
            Ok((
                LevelSpaces {
                    mesh: mesh.clone(),
                    layout,
                    vel_degrees: vel_degrees.to_vec(),
                    has_pressure: false,
                },
                space,
                None,
            ))
        }
    }
}

fn nearest_dof(space: &Arc<ScalarSpace>, point: [Scalar; 2]) -> usize {
    let mut best = (Scalar::INFINITY, 0usize);
    for pos in 0..space.mesh().n_active() {
        for (local, &d) in space.cell_dofs(pos).iter().enumerate() {
            let x = space.node_position(pos, local);
            let dist = (x[0] - point[0]).powi(2) + (x[1] - point[1]).powi(2);
            if dist < best.0 {
                best = (dist, d);
            }
        }
    }
    best.1
}

fn block_transfer(
    coarse_v: &Arc<ScalarSpace>,
    fine_v: &Arc<ScalarSpace>,
    coarse_p: Option<(&Arc<ScalarSpace>, &Arc<ScalarSpace>)>,
    coarse_layout: &FieldLayout,
    geometric: bool,
) -> Result<Arc<BlockTransfer>> {
    let tv = Arc::new(if geometric {
        ScalarTransfer::geometric(coarse_v, fine_v)?
    } else {
        ScalarTransfer::polynomial(coarse_v, fine_v)?
    });
    let mut parts = vec![
        (tv.clone(), coarse_layout.constraints(0).clone()),
        (tv, coarse_layout.constraints(1).clone()),
    ];
    if let Some((cp, fp)) = coarse_p {
        let tp = Arc::new(if geometric {
            ScalarTransfer::geometric(cp, fp)?
        } else {
            ScalarTransfer::polynomial(cp, fp)?
        });
        parts.push((tp, coarse_layout.constraints(2).clone()));
    }
    Ok(Arc::new(BlockTransfer::new(parts)))
}

/// Identity injection of all unconstrained finest-level dofs.
fn identity_injection(finest: &LevelSpaces, level: usize) -> Injection {
    let mut entries = Vec::new();
    let layout = &finest.layout;
    for c in 0..layout.n_components() {
        let off = layout.offset(c);
        let cons = layout.constraints(c);
        for d in 0..layout.space(c).n_dofs() {
            if !cons.is_constrained(d) {
                entries.push((off + d, level, off + d));
            }
        }
    }
    Injection { entries }
}

/// Coarsened per-cell degree map: a coarse cell takes the maximum degree of
/// the fine cells it covers.
fn coarsen_degrees(fine_mesh: &Mesh, fine_deg: &[u8], coarse_mesh: &Mesh) -> Vec<u8> {
    let by_key: BTreeMap<CellKey, u8> = fine_mesh
        .active_cells()
        .enumerate()
        .map(|(pos, c)| (c.key, fine_deg[pos]))
        .collect();
    coarse_mesh
        .active_cells()
        .map(|c| {
            if let Some(&d) = by_key.get(&c.key) {
                d
            } else {
                c.key
                    .children()
                    .iter()
                    .filter_map(|k| by_key.get(k))
                    .copied()
                    .max()
                    .unwrap_or(1)
            }
        })
        .collect()
}

impl LevelChain {
    /// Global coarsening: every level spans the whole domain; the mesh chain
    /// comes from repeated global coarsening down to the base mesh.
    pub fn global_coarsening(
        mesh: &Arc<Mesh>,
        vel_degrees: &[u8],
        rule: Option<PressureRule>,
        bc: &SystemBc,
        n_ranks: usize,
    ) -> Result<LevelChain> {
        let mut meshes = vec![mesh.clone()];
        loop {
            let coarser = meshes.last().unwrap().coarsen_globally();
            if coarser.n_active() == meshes.last().unwrap().n_active() {
                break;
            }
            meshes.push(Arc::new(coarser));
        }
        meshes.reverse(); // coarse -> fine
        let mut degree_maps = vec![vel_degrees.to_vec()];
        for k in (1..meshes.len()).rev() {
            let coarser = coarsen_degrees(&meshes[k], degree_maps.last().unwrap(), &meshes[k - 1]);
            degree_maps.push(coarser);
        }
        degree_maps.reverse();

        let mut levels = Vec::new();
        let mut vspaces = Vec::new();
        let mut pspaces = Vec::new();
        for (m, deg) in meshes.iter().zip(&degree_maps) {
            let (lvl, vs, ps) = build_layout(m, deg, rule, bc, None)?;
            levels.push(lvl);
            vspaces.push(vs);
            pspaces.push(ps);
        }
        let mut transfers = Vec::new();
        for l in 0..levels.len() - 1 {
            let cp = pspaces[l]
                .as_ref()
                .map(|c| (c, pspaces[l + 1].as_ref().unwrap()));
            transfers.push(block_transfer(
                &vspaces[l],
                &vspaces[l + 1],
                cp,
                &levels[l].layout,
                true,
            )?);
        }
        let injection = identity_injection(levels.last().unwrap(), levels.len() - 1);
        let n_system = levels.last().unwrap().n_dofs();
        let partitions = meshes.iter().map(|m| m.partition_morton(n_ranks)).collect();
        let outer = levels.last().unwrap().clone();
        let mut state_copy = vec![Vec::new(); levels.len()];
        state_copy[levels.len() - 1] = (0..n_system).map(|i| (i, i)).collect();
        Ok(LevelChain {
            kind: HierarchyKind::GlobalCoarsening,
            levels,
            transfers,
            injection,
            n_system,
            partitions,
            outer,
            state_copy,
        })
    }

    /// Local smoothing: level l holds exactly the level-l cells, with
    /// homogeneous Dirichlet rows (velocity and pressure) on refinement
    /// edges. Residuals are injected at the finest level owning each dof;
    /// level partitions inherit the active-mesh partition.
    pub fn local_smoothing(
        mesh: &Arc<Mesh>,
        vel_degrees: &[u8],
        rule: Option<PressureRule>,
        bc: &SystemBc,
        n_ranks: usize,
    ) -> Result<LevelChain> {
        let max_level = mesh.max_level();
        let mut levels = Vec::new();
        let mut vspaces = Vec::new();
        let mut pspaces = Vec::new();
        let mut view_meshes = Vec::new();
        for l in 0..=max_level {
            let (view, boundary) = mesh.level_submesh(l)?;
            let view = Arc::new(view);
            // per-cell degrees: from the matching original cell or its finest
            // descendants
            let deg: Vec<u8> = view
                .active_cells()
                .map(|c| degree_of_key(mesh, vel_degrees, c.key))
                .collect();
            let edge_region: Option<Arc<dyn Fn([Scalar; 2]) -> bool + Send + Sync>> =
                if boundary.is_empty() {
                    None
                } else {
                    let midpoints: Vec<[Scalar; 2]> = boundary
                        .iter()
                        .map(|&(id, face)| face_midpoint(&view, id, face))
                        .collect();
                    Some(Arc::new(move |x: [Scalar; 2]| {
                        midpoints
                            .iter()
                            .any(|m| (m[0] - x[0]).abs() < 1e-10 && (m[1] - x[1]).abs() < 1e-10)
                    }))
                };
            let (lvl, vs, ps) = build_layout(&view, &deg, rule, bc, edge_region.as_ref())?;
            levels.push(lvl);
            vspaces.push(vs);
            pspaces.push(ps);
            view_meshes.push(view);
        }
        let mut transfers = Vec::new();
        for l in 0..levels.len() - 1 {
            let cp = pspaces[l]
                .as_ref()
                .map(|c| (c, pspaces[l + 1].as_ref().unwrap()));
            transfers.push(block_transfer(
                &vspaces[l],
                &vspaces[l + 1],
                cp,
                &levels[l].layout,
                true,
            )?);
        }
        // injection: build the outer system layout (for sizes) from the
        // active mesh, then assign each outer dof to the finest level where
        // its copy exists and is unconstrained
        let (outer, _, _) = build_layout(mesh, vel_degrees, rule, bc, None)?;
        let n_system = outer.n_dofs();
        let mut owner: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        let mut copy_maps: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); levels.len()];
        for (pos, cell) in mesh.active_cells().enumerate() {
            let l = cell.level();
            let view = &view_meshes[l];
            let vpos = view
                .find(cell.key)
                .and_then(|id| view.active_position(id))
                .expect("active cell present in its level view");
            for comp in 0..outer.layout.n_components() {
                let (osp, lsp) = (outer.layout.space(comp), levels[l].layout.space(comp));
                let (ooff, loff) = (outer.layout.offset(comp), levels[l].layout.offset(comp));
                let ocons = outer.layout.constraints(comp);
                let lcons = levels[l].layout.constraints(comp);
                let odofs = osp.cell_dofs(pos);
                let ldofs = lsp.cell_dofs(vpos);
                debug_assert_eq!(odofs.len(), ldofs.len());
                for (&od, &ld) in odofs.iter().zip(ldofs) {
                    copy_maps[l].insert(loff + ld, ooff + od);
                    if ocons.is_constrained(od) || lcons.is_constrained(ld) {
                        continue;
                    }
                    let sys = ooff + od;
                    let entry = (l, loff + ld);
                    match owner.get(&sys) {
                        Some(&(prev_l, _)) if prev_l >= l => {}
                        _ => {
                            owner.insert(sys, entry);
                        }
                    }
                }
            }
        }
        let injection = Injection {
            entries: owner.into_iter().map(|(s, (l, d))| (s, l, d)).collect(),
        };
        let state_copy: Vec<Vec<(usize, usize)>> = copy_maps
            .into_iter()
            .map(|m| m.into_iter().map(|(ld, od)| (od, ld)).collect())
            .collect();
        // inherited partitions: active rank for active cells, Morton-first
        // active descendant's rank otherwise
        let active_pm = mesh.partition_morton(n_ranks);
        let rank_of_active: BTreeMap<CellKey, usize> = mesh
            .active_cells()
            .enumerate()
            .map(|(pos, c)| (c.key, active_pm.ranks[pos]))
            .collect();
        let mut partitions = Vec::new();
        for view in &view_meshes {
            let ranks: Vec<usize> = view
                .active_cells()
                .map(|c| inherited_rank(mesh, &rank_of_active, c.key))
                .collect();
            partitions.push(PartitionMap {
                ranks,
                num_ranks: n_ranks,
            });
        }
        Ok(LevelChain {
            kind: HierarchyKind::LocalSmoothing,
            levels,
            transfers,
            injection,
            n_system,
            partitions,
            outer,
            state_copy,
        })
    }

    /// hp chain: polynomial degrees drop towards 1 on the input mesh, then
    /// geometric global coarsening to the base mesh. `bisect_p` selects the
    /// p -> ceil(p/2) sequence (space-time rule R2) instead of p -> p-1.
    pub fn hp(
        mesh: &Arc<Mesh>,
        vel_degrees: &[u8],
        rule: Option<PressureRule>,
        bc: &SystemBc,
        n_ranks: usize,
        bisect_p: bool,
    ) -> Result<LevelChain> {
        // minimum admissible velocity degree: Taylor-Hood pairs need p >= 2
        let p_floor: u8 = match rule {
            Some(PressureRule::TaylorHood) => 2,
            _ => 1,
        };
        // p-chain maps, finest first
        let mut p_maps = vec![vel_degrees.to_vec()];
        loop {
            let prev = p_maps.last().unwrap();
            let next: Vec<u8> = prev
                .iter()
                .map(|&p| {
                    if bisect_p {
                        p.div_ceil(2).max(p_floor)
                    } else {
                        p.saturating_sub(1).max(p_floor)
                    }
                })
                .collect();
            if next == *prev {
                break;
            }
            p_maps.push(next);
        }
        p_maps.reverse(); // coarse (all p_floor) -> fine
        // geometric chain at the lowest degree map
        let gc = LevelChain::global_coarsening(mesh, &p_maps[0], rule, bc, n_ranks)?;
        let mut levels = gc.levels;
        let mut transfers = gc.transfers;
        let mut partitions = gc.partitions;
        // polynomial levels above the finest geometric level
        let mut vspaces: Vec<Arc<ScalarSpace>> = Vec::new();
        let mut pspaces: Vec<Option<Arc<ScalarSpace>>> = Vec::new();
        {
            // rebuild the finest-gc spaces to chain polynomial transfers from
            let (_, vs, ps) = build_layout(mesh, &p_maps[0], rule, bc, None)?;
            vspaces.push(vs);
            pspaces.push(ps);
        }
        for pm in p_maps.iter().skip(1) {
            let (lvl, vs, ps) = build_layout(mesh, pm, rule, bc, None)?;
            let cp = pspaces
                .last()
                .unwrap()
                .as_ref()
                .map(|c| (c, ps.as_ref().unwrap()));
            let t = block_transfer(
                vspaces.last().unwrap(),
                &vs,
                cp,
                &levels.last().unwrap().layout,
                false,
            )?;
            levels.push(lvl);
            transfers.push(t);
            partitions.push(mesh.partition_morton(n_ranks));
            vspaces.push(vs);
            pspaces.push(ps);
        }
        let injection = identity_injection(levels.last().unwrap(), levels.len() - 1);
        let n_system = levels.last().unwrap().n_dofs();
        let outer = levels.last().unwrap().clone();
        let mut state_copy = vec![Vec::new(); levels.len()];
        state_copy[levels.len() - 1] = (0..n_system).map(|i| (i, i)).collect();
        Ok(LevelChain {
            kind: HierarchyKind::Hp,
            levels,
            transfers,
            injection,
            n_system,
            partitions,
            outer,
            state_copy,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> &LevelSpaces {
        self.levels.last().unwrap()
    }
}

fn degree_of_key(mesh: &Mesh, degrees: &[u8], key: CellKey) -> u8 {
    if let Some(id) = mesh.find(key) {
        if mesh.cell(id).is_active() {
            return degrees[mesh.active_position(id).unwrap()];
        }
        return key
            .children()
            .iter()
            .map(|&k| degree_of_key(mesh, degrees, k))
            .max()
            .unwrap_or(1);
    }
    1
}

fn face_midpoint(mesh: &Mesh, id: usize, face: Face) -> [Scalar; 2] {
    let c = mesh.cell(id);
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

fn inherited_rank(mesh: &Mesh, active_ranks: &BTreeMap<CellKey, usize>, key: CellKey) -> usize {
    if let Some(&r) = active_ranks.get(&key) {
        return r;
    }
    // Morton-first active descendant
    let mut frontier = vec![key];
    loop {
        let mut next = Vec::new();
        for k in &frontier {
            if let Some(&r) = active_ranks.get(k) {
                return r;
            }
            if mesh.find(*k).is_some() {
                next.extend_from_slice(&k.children());
            }
        }
        if next.is_empty() {
            // ancestors own the region instead (coarser-than-base impossible)
            let mut k = key;
            while let Some(p) = k.parent() {
                if let Some(&r) = active_ranks.get(&p) {
                    return r;
                }
                k = p;
            }
            return 0;
        }
        next.sort();
        frontier = next;
    }
}

/// Patch selection rules for additive-Schwarz smoothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchRule {
    /// All system dofs of each active cell.
    Cells,
    /// Dofs on faces whose two sides differ in both refinement level and
    /// polynomial degree (the problematic hp interfaces).
    HpInterfaceFaces,
}

/// Unconstrained system dof sets per patch, with the originating cell ids.
pub fn build_patch_dofs(level: &LevelSpaces, rule: PatchRule) -> (Vec<Vec<usize>>, Vec<usize>) {
    let layout = &level.layout;
    let mesh = layout.space(0).mesh().clone();
    let mut patches = Vec::new();
    let mut cells = Vec::new();
    match rule {
        PatchRule::Cells => {
            for pos in 0..mesh.n_active() {
                let mut dofs = std::collections::BTreeSet::new();
                for c in 0..layout.n_components() {
                    let sp = layout.space(c);
                    let cons = layout.constraints(c);
                    let off = layout.offset(c);
                    for &d in sp.cell_dofs(pos) {
                        if !cons.is_constrained(d) {
                            dofs.insert(off + d);
                        }
                    }
                }
                patches.push(dofs.into_iter().collect());
                cells.push(mesh.active_ids()[pos]);
            }
        }
        PatchRule::HpInterfaceFaces => {
            for pos in 0..mesh.n_active() {
                let id = mesh.active_ids()[pos];
                for face in crate::mesh::FACES {
                    let crate::mesh::Neighbor::Coarser(nid) = mesh.neighbor(id, face) else {
                        continue;
                    };
                    let npos = mesh.active_position(nid).unwrap();
                    // require a polynomial-degree mismatch on top of the
                    // refinement-level difference
                    let sp0 = layout.space(0);
                    if sp0.degree(pos) == sp0.degree(npos) {
                        continue;
                    }
                    let mut dofs = std::collections::BTreeSet::new();
                    for c in 0..layout.n_components() {
                        let sp = layout.space(c);
                        let cons = layout.constraints(c);
                        let off = layout.offset(c);
                        for d in sp.edge_dofs(pos, face) {
                            if !cons.is_constrained(d) {
                                dofs.insert(off + d);
                            }
                        }
                        for d in sp.edge_dofs(npos, face.opposite()) {
                            if !cons.is_constrained(d) {
                                dofs.insert(off + d);
                            }
                        }
                    }
                    if !dofs.is_empty() {
                        patches.push(dofs.into_iter().collect());
                        cells.push(id);
                    }
                }
            }
        }
    }
    (patches, cells)
}

/// Attach operators and smoothers to a chain and assemble the preconditioner.
pub fn build_multigrid(
    chain: &LevelChain,
    op_factory: &mut dyn FnMut(usize, &LevelSpaces) -> Result<Box<dyn MgOperator>>,
    smoother_cfg: &SmootherConfig,
    patch_rule: Option<PatchRule>,
) -> Result<Multigrid> {
    let mut levels = Vec::with_capacity(chain.levels.len());
    for (l, spaces) in chain.levels.iter().enumerate() {
        let op = op_factory(l, spaces)?;
        let diag = op.diagonal();
        let patches = match (patch_rule, smoother_cfg.inner) {
            (Some(rule), super::smoother::InnerKind::AsmBlend) => {
                let (dofs, cells) = build_patch_dofs(spaces, rule);
                let matrix = op.assemble();
                Some(Arc::new(AsmPatches::build(&matrix, dofs, &cells)?))
            }
            _ => None,
        };
        let smoother = Smoother::build(smoother_cfg, op.as_ref(), diag, patches)?;
        levels.push(MgLevel {
            n: op.n(),
            constrained: spaces.constrained_dofs(),
            op,
            smoother,
        });
    }
    let transfers = chain
        .transfers
        .iter()
        .map(|t| t.clone() as Arc<dyn crate::transfer::LevelTransfer>)
        .collect();
    Multigrid::assemble(levels, transfers, chain.injection.clone(), chain.n_system)
}
