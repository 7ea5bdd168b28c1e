//! A posteriori error estimation and hp marking.

use std::collections::{BTreeSet, HashMap};

use crate::mesh::{bilinear_jacobian, Face, Neighbor};
use crate::num::Scalar;
use crate::poly::LagrangeBasis;
use crate::quad::{gauss_legendre, gauss_lobatto_points, legendre_shifted};

use super::field::SolutionField;

/// Which physical component(s) an estimator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Velocity,
    Pressure,
}

impl Component {
    fn indices(&self, n_components: usize) -> Vec<usize> {
        match self {
            Component::Velocity => {
                if n_components >= 3 {
                    (0..n_components - 1).collect()
                } else {
                    (0..n_components).collect()
                }
            }
            Component::Pressure => vec![n_components - 1],
        }
    }
}

/// Kelly face-jump indicator per active cell:
/// eta_K^2 = sum over faces of (h_F / 24) * int_F [du/dn]^2 ds,
/// with boundary faces contributing zero. The field must be continuous
/// (constraints distributed); this routine distributes a copy first.
pub fn kelly_estimate(field: &SolutionField, component: Component) -> Vec<Scalar> {
    let layout = &field.layout;
    let comps = component.indices(layout.n_components());
    let mut values = field.values.clone();
    layout.distribute(&mut values);

    let space = layout.space(comps[0]);
    let mesh = space.mesh().clone();
    let n_cells = mesh.n_active();
    let mut eta2 = vec![0.0; n_cells];
    let mut bases: HashMap<u8, LagrangeBasis<Scalar>> = HashMap::new();

    for &comp in &comps {
        let space = layout.space(comp);
        let off = layout.offset(comp);
        for pos in 0..n_cells {
            let id = mesh.active_ids()[pos];
            for face in crate::mesh::FACES {
                let (npos, n_offset_half) = match mesh.neighbor(id, face) {
                    Neighbor::Equal(nid) => {
                        if nid < id {
                            continue; // processed from the lower id
                        }
                        (mesh.active_position(nid).unwrap(), None)
                    }
                    Neighbor::Coarser(nid) => {
                        // hanging faces are processed from the fine side
                        let cpos = mesh.active_position(nid).unwrap();
                        let half = subface_half(&mesh, pos, cpos, face);
                        (cpos, Some(half))
                    }
                    _ => continue, // boundary or finer (handled from fine side)
                };
                let p_me = space.degree(pos);
                let p_n = space.degree(npos);
                for b in [p_me, p_n] {
                    bases
                        .entry(b)
                        .or_insert_with(|| LagrangeBasis::new(gauss_lobatto_points(b as usize + 1)));
                }
                let contribution = face_jump_sq(
                    &mesh, space, &values[off..off + space.n_dofs()],
                    pos, npos, face, n_offset_half, &bases,
                );
                eta2[pos] += contribution;
                eta2[npos] += contribution;
            }
        }
    }
    eta2.iter().map(|e| e.sqrt()).collect()
}

/// (h_F/24) * integral of the squared normal-gradient jump over one face
/// (or subface, when `half` marks a hanging interface).
#[allow(clippy::too_many_arguments)]
fn face_jump_sq(
    mesh: &crate::mesh::Mesh,
    space: &super::space::ScalarSpace,
    values: &[Scalar],
    pos: usize,
    npos: usize,
    face: Face,
    half: Option<Scalar>,
    bases: &HashMap<u8, LagrangeBasis<Scalar>>,
) -> Scalar {
    let cell = mesh.cell(mesh.active_ids()[pos]);
    let ncell = mesh.cell(mesh.active_ids()[npos]);
    let p_me = space.degree(pos);
    let p_n = space.degree(npos);
    let rule = gauss_legendre::<Scalar>(p_me.max(p_n) as usize + 1);
    let my_basis = &bases[&p_me];
    let n_basis = &bases[&p_n];
    let my_local: Vec<Scalar> = space.cell_dofs(pos).iter().map(|&d| values[d]).collect();
    let n_local: Vec<Scalar> = space.cell_dofs(npos).iter().map(|&d| values[d]).collect();

    // face length of my (sub)face; bilinear edges are straight
    let (va, vb) = match face {
        Face::YMinus => (0, 1),
        Face::YPlus => (3, 2),
        Face::XMinus => (0, 3),
        Face::XPlus => (1, 2),
    };
    let h_f = ((cell.vertices[va][0] - cell.vertices[vb][0]).powi(2)
        + (cell.vertices[va][1] - cell.vertices[vb][1]).powi(2))
    .sqrt();

    let mut integral = 0.0;
    for (q, &t) in rule.points.iter().enumerate() {
        let my_ref = face_point(face, t);
        // neighbor-side parameter along the shared edge
        let s = match half {
            Some(h) => (h + t) / 2.0,
            None => t,
        };
        let n_ref = face_point(face.opposite(), s);
        let g_me = phys_gradient(&my_local, my_basis, &cell.vertices, my_ref);
        let g_n = phys_gradient(&n_local, n_basis, &ncell.vertices, n_ref);
        // tangent of my edge at t
        let jac = bilinear_jacobian(&cell.vertices, my_ref[0], my_ref[1]);
        let tangent = match face {
            Face::XMinus | Face::XPlus => [jac.j[0][1], jac.j[1][1]],
            _ => [jac.j[0][0], jac.j[1][0]],
        };
        let tl = (tangent[0].powi(2) + tangent[1].powi(2)).sqrt();
        let normal = [tangent[1] / tl, -tangent[0] / tl];
        let jump = (g_me[0] - g_n[0]) * normal[0] + (g_me[1] - g_n[1]) * normal[1];
        integral += rule.weights[q] * tl * jump * jump;
    }
    h_f / 24.0 * integral
}

fn face_point(face: Face, t: Scalar) -> [Scalar; 2] {
    match face {
        Face::XMinus => [0.0, t],
        Face::XPlus => [1.0, t],
        Face::YMinus => [t, 0.0],
        Face::YPlus => [t, 1.0],
    }
}

fn phys_gradient(
    local: &[Scalar],
    basis: &LagrangeBasis<Scalar>,
    vertices: &[[Scalar; 2]; 4],
    r: [Scalar; 2],
) -> [Scalar; 2] {
    let n = basis.len();
    let mut g_ref = [0.0, 0.0];
    for b in 0..n {
        for a in 0..n {
            let c = local[b * n + a];
            g_ref[0] += c * basis.derivative(a, r[0]) * basis.value(b, r[1]);
            g_ref[1] += c * basis.value(a, r[0]) * basis.derivative(b, r[1]);
        }
    }
    let inv_t = bilinear_jacobian(vertices, r[0], r[1]).inv_t();
    [
        inv_t[0][0] * g_ref[0] + inv_t[0][1] * g_ref[1],
        inv_t[1][0] * g_ref[0] + inv_t[1][1] * g_ref[1],
    ]
}

/// Which half (0.0 or 1.0) of the coarse face the fine subface covers.
fn subface_half(mesh: &crate::mesh::Mesh, fine_pos: usize, coarse_pos: usize, face: Face) -> Scalar {
    let fine = mesh.cell(mesh.active_ids()[fine_pos]);
    let coarse = mesh.cell(mesh.active_ids()[coarse_pos]);
    let along_y = matches!(face, Face::XMinus | Face::XPlus);
    let (f, c) = if along_y {
        (fine.key.gy, coarse.key.gy)
    } else {
        (fine.key.gx, coarse.key.gx)
    };
    if f == 2 * c {
        0.0
    } else {
        1.0
    }
}

/// Legendre-decay smoothness exponent sigma of one cell's local solution.
///
/// The cell-local field is projected onto tensor shifted-Legendre
/// polynomials; log |c_k| is fitted against the total degree k = 1..p using
/// the per-degree maxima. All coefficients below 1e-14 yield +inf (smooth).
pub fn legendre_smoothness(field: &SolutionField, comp: usize, pos: usize) -> Scalar {
    let layout = &field.layout;
    let space = layout.space(comp);
    let off = layout.offset(comp);
    let p = space.degree(pos) as usize;
    assert!(p >= 2, "smoothness estimation needs degree >= 2");
    let basis = LagrangeBasis::new(gauss_lobatto_points(p + 1));
    let local: Vec<Scalar> = space
        .cell_dofs(pos)
        .iter()
        .map(|&d| field.values[off + d])
        .collect();
    let rule = gauss_legendre::<Scalar>(p + 2);
    // c_ab = (2a+1)(2b+1) Int u(x,y) P_a(x) P_b(y) on the reference cell
    let nq = rule.len();
    let mut u = vec![0.0; nq * nq];
    for (qy, &y) in rule.points.iter().enumerate() {
        for (qx, &x) in rule.points.iter().enumerate() {
            let mut v = 0.0;
            for b in 0..=p {
                for a in 0..=p {
                    v += local[b * (p + 1) + a] * basis.value(a, x) * basis.value(b, y);
                }
            }
            u[qy * nq + qx] = v;
        }
    }
    let mut max_per_degree = vec![0.0 as Scalar; p + 1];
    for a in 0..=p {
        for b in 0..=p {
            if a + b > p || a + b == 0 {
                continue;
            }
            let mut c = 0.0;
            for (qy, &y) in rule.points.iter().enumerate() {
                for (qx, &x) in rule.points.iter().enumerate() {
                    c += rule.weights[qx]
                        * rule.weights[qy]
                        * u[qy * nq + qx]
                        * legendre_shifted(a, x)
                        * legendre_shifted(b, y);
                }
            }
            c *= (2 * a + 1) as Scalar * (2 * b + 1) as Scalar;
            let k = a + b;
            max_per_degree[k] = max_per_degree[k].max(c.abs());
        }
    }
    // least squares of log c_k = log C - sigma k over usable degrees
    let pts: Vec<(Scalar, Scalar)> = (1..=p)
        .filter(|&k| max_per_degree[k] > 1e-14)
        .map(|k| (k as Scalar, max_per_degree[k].ln()))
        .collect();
    if pts.len() < 2 {
        return Scalar::INFINITY;
    }
    let n = pts.len() as Scalar;
    let sx: Scalar = pts.iter().map(|p| p.0).sum();
    let sy: Scalar = pts.iter().map(|p| p.1).sum();
    let sxx: Scalar = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: Scalar = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    -slope
}

/// Result of hp marking: active positions flagged for h- or p-refinement.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HpFlags {
    pub h: BTreeSet<usize>,
    pub p: BTreeSet<usize>,
}

/// Select the top `refine_fraction` of cells by indicator; of those, cells
/// with smoothness above the threshold are p-refined (largest sigma first, up
/// to `p_fraction` of the selection) and the rest h-refined.
pub fn mark_hp(
    indicators: &[Scalar],
    smoothness: &[Scalar],
    refine_fraction: Scalar,
    p_fraction: Scalar,
    sigma_threshold: Scalar,
) -> HpFlags {
    assert_eq!(indicators.len(), smoothness.len());
    assert!((0.0..=1.0).contains(&refine_fraction));
    assert!((0.0..=1.0).contains(&p_fraction));
    let n = indicators.len();
    let n_sel = ((refine_fraction * n as Scalar) + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        indicators[b]
            .partial_cmp(&indicators[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let selected = &order[..n_sel.min(n)];
    let p_cap = ((p_fraction * selected.len() as Scalar) + 1e-9).floor() as usize;
    let mut by_sigma: Vec<usize> = selected
        .iter()
        .copied()
        .filter(|&i| smoothness[i] > sigma_threshold)
        .collect();
    by_sigma.sort_by(|&a, &b| {
        smoothness[b]
            .partial_cmp(&smoothness[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut flags = HpFlags::default();
    for &i in by_sigma.iter().take(p_cap) {
        flags.p.insert(i);
    }
    for &i in selected {
        if !flags.p.contains(&i) {
            flags.h.insert(i);
        }
    }
    flags
}
