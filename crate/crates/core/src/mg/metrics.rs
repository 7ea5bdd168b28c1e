//! Parallel workload efficiency eta_w and vertical communication efficiency
//! eta_v, computed from simulated per-level partitions.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::mesh::{CellKey, Mesh, PartitionMap};
use crate::num::Scalar;

pub struct LevelMeshInfo {
    pub mesh: Arc<Mesh>,
    pub partition: PartitionMap,
    /// per active cell: dof-count weight used for transfer-volume accounting
    pub cell_weight: Vec<usize>,
}

/// eta_w = [sum_l C_l / P] / [sum_l max_r C_{l,r}]  (cell counts),
/// eta_v = fraction of transferred per-cell dofs whose fine and coarse
/// owning ranks coincide. Levels are ordered coarse to fine.
pub fn hierarchy_metrics(levels: &[LevelMeshInfo]) -> (Scalar, Scalar) {
    assert!(!levels.is_empty());
    let p = levels[0].partition.num_ranks;
    // workload efficiency
    let mut ideal = 0.0;
    let mut actual = 0.0;
    for lvl in levels {
        let c = lvl.mesh.n_active();
        ideal += c as Scalar / p as Scalar;
        let mut per_rank = vec![0usize; p];
        for &r in &lvl.partition.ranks {
            per_rank[r] += 1;
        }
        actual += *per_rank.iter().max().unwrap() as Scalar;
    }
    let eta_w = if actual > 0.0 { ideal / actual } else { 1.0 };

    // vertical communication efficiency over consecutive level pairs
    let mut on_rank = 0.0;
    let mut total = 0.0;
    for w in levels.windows(2) {
        let (coarse, fine) = (&w[0], &w[1]);
        let coarse_rank: BTreeMap<CellKey, usize> = coarse
            .mesh
            .active_cells()
            .enumerate()
            .map(|(pos, c)| (c.key, coarse.partition.ranks[pos]))
            .collect();
        for (fpos, fcell) in fine.mesh.active_cells().enumerate() {
            // covering coarse cell: same key or the parent
            let cr = coarse_rank
                .get(&fcell.key)
                .or_else(|| fcell.key.parent().and_then(|pk| coarse_rank.get(&pk)));
            let Some(&cr) = cr else {
                continue; // uncovered region of a local-smoothing pair
            };
            let wgt = fine.cell_weight[fpos] as Scalar;
            total += wgt;
            if cr == fine.partition.ranks[fpos] {
                on_rank += wgt;
            }
        }
    }
    let eta_v = if total > 0.0 { on_rank / total } else { 1.0 };
    (eta_w, eta_v)
}

/// Metric inputs from a level chain (cell weight = velocity dofs per cell).
pub fn chain_metrics(chain: &super::hierarchy::LevelChain) -> (Scalar, Scalar) {
    let infos: Vec<LevelMeshInfo> = chain
        .levels
        .iter()
        .zip(&chain.partitions)
        .map(|(lvl, pm)| LevelMeshInfo {
            mesh: lvl.layout.space(0).mesh().clone(),
            partition: pm.clone(),
            cell_weight: lvl
                .vel_degrees
                .iter()
                .map(|&p| (p as usize + 1) * (p as usize + 1))
                .collect(),
        })
        .collect();
    hierarchy_metrics(&infos)
}
