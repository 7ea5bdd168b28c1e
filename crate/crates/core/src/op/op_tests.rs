use std::collections::BTreeSet;
use std::sync::Arc;

use super::*;
use crate::disc::{
    BlockSpace, BoundaryCondition, ConstraintSet, DirichletSpec, FieldLayout, PressureRule,
    ScalarSpace,
};
use crate::la::{norm2, SplitMix64};
use crate::mesh::{Geometry, Mesh};
use crate::num::Scalar;

fn square(n: u32) -> Arc<Mesh> {
    Arc::new(Mesh::create(Geometry::unit_square(), (n, n)).unwrap())
}

fn hanging_mesh() -> Arc<Mesh> {
    let m = square(2);
    let flags = BTreeSet::from([m.active_ids()[0]]);
    Arc::new(m.refine(&flags).unwrap())
}

/// Taylor-Hood [ux|uy|p] layout with no-slip velocity walls.
fn stokes_layout(mesh: &Arc<Mesh>, p: u8, dirichlet: bool) -> FieldLayout {
    let bs =
        BlockSpace::distribute_dofs(mesh, &vec![p; mesh.n_active()], PressureRule::TaylorHood)
            .unwrap();
    let vspec = if dirichlet {
        DirichletSpec::all_zero()
    } else {
        DirichletSpec::none()
    };
    let cons_u = Arc::new(ConstraintSet::build(&bs.velocity, &vspec, 0.0));
    let cons_p = Arc::new(ConstraintSet::build(&bs.pressure, &DirichletSpec::none(), 0.0));
    FieldLayout::new(vec![
        (bs.velocity.clone(), cons_u.clone()),
        (bs.velocity.clone(), cons_u),
        (bs.pressure.clone(), cons_p),
    ])
}

fn equal_order_layout(mesh: &Arc<Mesh>, p: u8) -> FieldLayout {
    let bs =
        BlockSpace::distribute_dofs(mesh, &vec![p; mesh.n_active()], PressureRule::EqualOrder)
            .unwrap();
    let cons_u = Arc::new(ConstraintSet::build(&bs.velocity, &DirichletSpec::all_zero(), 0.0));
    let cons_p = Arc::new(ConstraintSet::build(&bs.pressure, &DirichletSpec::none(), 0.0));
    FieldLayout::new(vec![
        (bs.velocity.clone(), cons_u.clone()),
        (bs.velocity.clone(), cons_u),
        (bs.pressure.clone(), cons_p),
    ])
}

fn rel_diff(a: &[Scalar], b: &[Scalar]) -> Scalar {
    let num: Scalar = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<Scalar>()
        .sqrt();
    let den = norm2(b).max(1e-30);
    num / den
}

fn check_matrix_free_matches_assembled<K: CellKernel + LinearOperator>(op: &K, seed: u64) {
    let a = assemble_sparse(op);
    let mut rng = SplitMix64::new(seed);
    for _ in 0..50 {
        let x: Vec<Scalar> = rng.vector(op.n());
        let mut y_mf = vec![0.0; op.n()];
        op.apply(&x, &mut y_mf);
        let mut y_sp = vec![0.0; op.n()];
        a.matvec(&x, &mut y_sp);
        assert!(rel_diff(&y_mf, &y_sp) < 1e-12, "{}", rel_diff(&y_mf, &y_sp));
    }
    // diagonal extraction must agree with the assembled diagonal
    let d_mf = compute_diagonal(op);
    let d_sp = a.diagonal();
    assert!(rel_diff(&d_mf, &d_sp) < 1e-12);
}

#[test]
fn laplace_zero_in_zero_out() {
    let mesh = square(2);
    let space = Arc::new(ScalarSpace::new(mesh.clone(), vec![2; 4]));
    let cons = Arc::new(ConstraintSet::build(&space, &DirichletSpec::all_zero(), 0.0));
    let layout = FieldLayout::new(vec![(space, cons)]);
    let op = LaplaceOperator::new(layout, 1.0);
    let y = op.apply_alloc(&vec![0.0; op.n()]);
    assert!(norm2(&y) == 0.0);
}

#[test]
fn laplace_matches_assembly_on_hanging_mesh() {
    let mesh = hanging_mesh();
    let mut degrees = vec![2u8; mesh.n_active()];
    degrees[1] = 3;
    let space = Arc::new(ScalarSpace::new(mesh.clone(), degrees));
    let cons = Arc::new(ConstraintSet::build(&space, &DirichletSpec::all_zero(), 0.0));
    let layout = FieldLayout::new(vec![(space.clone(), cons.clone()), (space, cons)]);
    let op = LaplaceOperator::new(layout, 0.7);
    check_matrix_free_matches_assembled(&op, 11);
}

#[test]
fn laplace_interior_rows_vanish_on_linear_field() {
    // A applied to a linear velocity field: interior rows are zero
    let mesh = square(3);
    let space = Arc::new(ScalarSpace::new(mesh.clone(), vec![2; 9]));
    let cons = Arc::new(ConstraintSet::build(&space, &DirichletSpec::none(), 0.0));
    let layout = FieldLayout::new(vec![(space.clone(), cons.clone()), (space.clone(), cons)]);
    let op = LaplaceOperator::new(layout.clone(), 1.0);
    let f0 = |x: [Scalar; 2]| 2.0 * x[0] - x[1] + 0.5;
    let f1 = |x: [Scalar; 2]| -x[0] + 3.0 * x[1];
    let field = crate::disc::SolutionField::interpolate(&layout, &[&f0, &f1]);
    let y = op.apply_alloc(&field.values);
    // rows not touching the boundary must vanish (integration by parts)
    let ns = layout.space(0).n_dofs();
    for c in 0..2 {
        for pos in 0..mesh.n_active() {
            let sp = layout.space(c);
            for (local, &d) in sp.cell_dofs(pos).iter().enumerate() {
                let x = sp.node_position(pos, local);
                let interior = x[0] > 1e-9 && x[0] < 1.0 - 1e-9 && x[1] > 1e-9 && x[1] < 1.0 - 1e-9;
                if interior {
                    assert!(y[c * ns + d].abs() < 1e-12, "row {d} comp {c}");
                }
            }
        }
    }
}

#[test]
fn stokes_matches_assembly_q2q1() {
    let mesh = square(2);
    let layout = stokes_layout(&mesh, 2, true);
    let op = StokesOperator::new(layout, 1.3).unwrap();
    check_matrix_free_matches_assembled(&op, 23);
}

#[test]
fn stokes_matches_assembly_hanging_hp() {
    let mesh = hanging_mesh();
    let mut degrees = vec![2u8; mesh.n_active()];
    degrees[0] = 3;
    let bs = BlockSpace::distribute_dofs(&mesh, &degrees, PressureRule::TaylorHood).unwrap();
    let cons_u = Arc::new(ConstraintSet::build(&bs.velocity, &DirichletSpec::all_zero(), 0.0));
    let cons_p = Arc::new(ConstraintSet::build(&bs.pressure, &DirichletSpec::none(), 0.0));
    let layout = FieldLayout::new(vec![
        (bs.velocity.clone(), cons_u.clone()),
        (bs.velocity.clone(), cons_u),
        (bs.pressure.clone(), cons_p),
    ]);
    let op = StokesOperator::new(layout, 1.0).unwrap();
    check_matrix_free_matches_assembled(&op, 31);
}

#[test]
fn stokes_symmetry_and_velocity_psd() {
    let mesh = hanging_mesh();
    let layout = stokes_layout(&mesh, 2, true);
    let op = StokesOperator::new(layout, 2.0).unwrap();
    let mut rng = SplitMix64::new(5);
    for _ in 0..20 {
        let x: Vec<Scalar> = rng.vector(op.n());
        let y: Vec<Scalar> = rng.vector(op.n());
        let kx = op.apply_alloc(&x);
        let ky = op.apply_alloc(&y);
        let a = crate::la::dot(&kx, &y);
        let b = crate::la::dot(&x, &ky);
        let scale = norm2(&x) * norm2(&y);
        assert!((a - b).abs() <= 1e-11 * scale, "{a} vs {b}");
        // velocity block PSD
        let xu = &x[..op.n_u()];
        let axu = op.apply_velocity_block(xu).unwrap();
        let quad = crate::la::dot(&axu, xu);
        assert!(quad >= -1e-11 * norm2(xu).powi(2));
    }
}

#[test]
fn gradient_divergence_transpose_identity() {
    let mesh = hanging_mesh();
    let layout = stokes_layout(&mesh, 3, true);
    let op = StokesOperator::new(layout, 1.0).unwrap();
    let mut rng = SplitMix64::new(77);
    for _ in 0..100 {
        let xp: Vec<Scalar> = rng.vector(op.n_p());
        let yu: Vec<Scalar> = rng.vector(op.n_u());
        let bx = op.apply_gradient(&xp).unwrap();
        let bty = op.apply_divergence(&yu).unwrap();
        let a = crate::la::dot(&bx, &yu);
        let b = crate::la::dot(&xp, &bty);
        assert!(
            (a - b).abs() <= 1e-12 * norm2(&xp) * norm2(&yu) + 1e-14,
            "{a} vs {b}"
        );
    }
    // size mismatch errors
    assert!(op.apply_gradient(&vec![0.0; 3]).is_err());
    assert!(op.apply_divergence(&vec![0.0; 3]).is_err());
}

#[test]
fn stokes_constant_velocity_zero_pressure_gives_zero_velocity_rows() {
    // pure-Neumann setup: gradient of a constant vanishes
    let mesh = square(2);
    let layout = stokes_layout(&mesh, 2, false);
    let op = StokesOperator::new(layout.clone(), 3.7).unwrap();
    let mut x = vec![0.0; op.n()];
    for i in 0..op.n_u() {
        x[i] = if i < op.n_u() / 2 { 1.0 } else { 2.0 };
    }
    let y = op.apply_alloc(&x);
    for i in 0..op.n_u() {
        assert!(y[i].abs() < 1e-12);
    }
}

#[test]
fn pressure_mass_row_sums_give_domain_area() {
    let mesh = square(2);
    let space = Arc::new(ScalarSpace::new(mesh.clone(), vec![1; 4]));
    let cons = Arc::new(ConstraintSet::build(&space, &DirichletSpec::none(), 0.0));
    let layout = FieldLayout::new(vec![(space, cons)]);
    let op = MassOperator::pressure_mass_scaled(layout, 1.0).unwrap();
    // sum of all entries = (1, M 1) = domain area for nu = 1
    let ones = vec![1.0; op.n()];
    let y = op.apply_alloc(&ones);
    let total: Scalar = y.iter().sum();
    assert!((total - 1.0).abs() < 1e-13);
    // nu = 2 halves the output
    let layout2 = {
        let space = Arc::new(ScalarSpace::new(mesh.clone(), vec![1; 4]));
        let cons = Arc::new(ConstraintSet::build(&space, &DirichletSpec::none(), 0.0));
        FieldLayout::new(vec![(space, cons)])
    };
    let op2 = MassOperator::pressure_mass_scaled(layout2, 2.0).unwrap();
    let y2 = op2.apply_alloc(&ones);
    for (a, b) in y.iter().zip(&y2) {
        assert!((a - 2.0 * b).abs() < 1e-14);
    }
    assert!(MassOperator::pressure_mass_scaled(
        {
            let space = Arc::new(ScalarSpace::new(mesh.clone(), vec![1; 4]));
            let cons = Arc::new(ConstraintSet::build(&space, &DirichletSpec::none(), 0.0));
            FieldLayout::new(vec![(space, cons)])
        },
        -1.0
    )
    .is_err());
}

#[test]
fn block_mass_pressure_block_is_zero() {
    let mesh = square(2);
    let layout = stokes_layout(&mesh, 2, true);
    let op = MassOperator::block_mass(layout.clone());
    let mut rng = SplitMix64::new(3);
    let x: Vec<Scalar> = rng.vector(op.n());
    let y = op.apply_alloc(&x);
    let nu_dofs = layout.offset(2);
    for i in nu_dofs..op.n() {
        assert_eq!(y[i], 0.0);
    }
    check_matrix_free_matches_assembled(&op, 41);
}

#[test]
fn mass_matches_assembly() {
    let mesh = hanging_mesh();
    let space = Arc::new(ScalarSpace::new(mesh.clone(), vec![2; mesh.n_active()]));
    let cons = Arc::new(ConstraintSet::build(&space, &DirichletSpec::none(), 0.0));
    let layout = FieldLayout::new(vec![(space, cons)]);
    let op = MassOperator::new(layout, 1.0);
    check_matrix_free_matches_assembled(&op, 13);
}

#[test]
fn delta1_limits() {
    // nu -> 0, steady, |u| = 1, h = 0.1: advective limit 2|u|/h dominates
    assert!((delta1(0.1, 1.0, 0.0, None) - 0.05).abs() < 1e-15);
    // u = 0, steady, nu = 1, h = 1: diffusive limit
    assert!((delta1(1.0, 0.0, 1.0, None) - 1.0 / 36.0).abs() < 1e-15);
    // dt -> 0: delta1 -> dt/2
    let dt = 1e-9;
    assert!((delta1(1.0, 1.0, 1.0, Some(dt)) - dt / 2.0).abs() < 1e-12 * dt);
    // all-zero arguments clamp to zero
    assert_eq!(delta1(1.0, 0.0, 0.0, None), 0.0);
}

#[test]
fn ns_zero_state_zero_residual() {
    let mesh = square(2);
    let layout = equal_order_layout(&mesh, 2);
    let op = NsOperator::new(
        layout.clone(),
        NsParameters::navier_stokes(0.1, true),
    )
    .unwrap();
    let r = op.residual(&vec![0.0; layout.n_dofs()], 0.0, None);
    assert!(norm2(&r) < 1e-14);
}

#[test]
fn ns_jacobian_matches_assembly() {
    let mesh = square(2);
    let layout = equal_order_layout(&mesh, 2);
    let op = NsOperator::new(
        layout.clone(),
        NsParameters::navier_stokes(0.05, true),
    )
    .unwrap();
    // nonzero linearization state
    let mut rng = SplitMix64::new(17);
    let mut state: Vec<Scalar> = rng.vector(layout.n_dofs());
    layout.distribute(&mut state);
    let old1 = vec![0.0; layout.n_dofs()];
    let transient = Transient {
        scheme: BdfScheme::bdf2(0.1).unwrap(),
        old1: &old1,
        old2: None,
    };
    let jac = op.linearize(&state, 0.0, Some(&transient));
    check_matrix_free_matches_assembled(&jac, 19);
}

#[test]
fn ns_jacobian_finite_difference_check() {
    let mesh = square(2);
    let layout = equal_order_layout(&mesh, 2);
    let n = layout.n_dofs();
    let op = NsOperator::new(
        layout.clone(),
        NsParameters::navier_stokes(0.1, true),
    )
    .unwrap();
    let mut rng = SplitMix64::new(29);
    let mut state: Vec<Scalar> = rng.vector(n);
    layout.distribute(&mut state);
    let scheme = BdfScheme::bdf2(0.05).unwrap();
    let old1 = vec![0.0; n];
    let transient0 = Transient { scheme, old1: &old1, old2: None };
    let jac = op.linearize(&state, 0.0, Some(&transient0));
    let mut d: Vec<Scalar> = rng.vector(n);
    layout.distribute_homogeneous(&mut d);
    let nd = norm2(&d);
    d.iter_mut().for_each(|v| *v /= nd);
    let eps = 1e-6;
    let transient = Transient {
        scheme,
        old1: &old1,
        old2: None,
    };
    // the Jacobian freezes delta1, so the finite-difference oracle must
    // evaluate both residuals with the delta1 of the linearization state
    let d1 = op.delta1_cells(&state, Some(scheme.dt));
    let r0 = op.residual_frozen(&state, 0.0, Some(&transient), Some(&d1));
    let state_eps: Vec<Scalar> = state.iter().zip(&d).map(|(s, di)| s + eps * di).collect();
    let r1 = op.residual_frozen(&state_eps, 0.0, Some(&transient), Some(&d1));
    let fd: Vec<Scalar> = r0.iter().zip(&r1).map(|(a, b)| (b - a) / eps).collect();
    let jd = jac.apply_alloc(&d);
    let err = rel_diff(&fd, &jd);
    assert!(err <= 1e-5, "finite-difference mismatch {err}");
}

#[test]
fn ns_reduces_to_stokes_without_convection() {
    // at zero state with stabilization off, the NS Jacobian equals the
    // symmetric Stokes operator
    let mesh = square(2);
    let layout = stokes_layout(&mesh, 2, true);
    let nu = 0.7;
    let ns = NsOperator::new(
        layout.clone(),
        NsParameters::navier_stokes(nu, false),
    )
    .unwrap();
    let stokes = StokesOperator::new(layout.clone(), nu).unwrap();
    let jac = ns.linearize(&vec![0.0; layout.n_dofs()], 0.0, None);
    let mut rng = SplitMix64::new(43);
    for _ in 0..10 {
        let x: Vec<Scalar> = rng.vector(layout.n_dofs());
        let a = jac.apply_alloc(&x);
        let b = stokes.apply_alloc(&x);
        assert!(rel_diff(&a, &b) < 1e-12, "{}", rel_diff(&a, &b));
    }
}

#[test]
fn ns_pressure_diagonal_nonzero_with_pspg() {
    let mesh = square(2);
    let layout = equal_order_layout(&mesh, 2);
    let op = NsOperator::new(
        layout.clone(),
        NsParameters::navier_stokes(0.01, true),
    )
    .unwrap();
    let mut state = vec![0.0; layout.n_dofs()];
    // unit horizontal flow so delta1 > 0
    for i in 0..layout.offset(1) {
        state[i] = 1.0;
    }
    layout.distribute(&mut state);
    let jac = op.linearize(&state, 0.0, None);
    let diag = compute_diagonal(&jac);
    let p_range = layout.range(2);
    let mut nonzero = 0;
    for i in p_range {
        if diag[i].abs() > 1e-14 {
            nonzero += 1;
        }
    }
    assert!(nonzero > 0, "PSPG must produce a nonzero pressure block");
}

#[test]
fn rhs_assembly_integrates_forcing() {
    // (1, phi_i) summed over all dofs = area when no constraints eat rows
    let mesh = square(2);
    let space = Arc::new(ScalarSpace::new(mesh.clone(), vec![2; 4]));
    let cons = Arc::new(ConstraintSet::build(&space, &DirichletSpec::none(), 0.0));
    let layout = FieldLayout::new(vec![(space, cons)]);
    let base = KernelBase::new(layout, 1);
    let one = |_: [Scalar; 2]| 1.0;
    let b = assemble_rhs(&base, &[Some(&one)]);
    let total: Scalar = b.iter().sum();
    assert!((total - 1.0).abs() < 1e-13);
}

#[test]
fn dirichlet_constrained_rows_are_identity() {
    let mesh = square(2);
    let space = Arc::new(ScalarSpace::new(mesh.clone(), vec![1; 4]));
    let cons = Arc::new(ConstraintSet::build(
        &space,
        &DirichletSpec {
            conditions: vec![BoundaryCondition::zero(|x| x[0] < 1e-12)],
        },
        0.0,
    ));
    let layout = FieldLayout::new(vec![(space.clone(), cons.clone())]);
    let op = LaplaceOperator::new(layout, 1.0);
    let d = compute_diagonal(&op);
    for (dof, _) in cons.iter() {
        assert_eq!(d[*dof], 1.0);
    }
}
