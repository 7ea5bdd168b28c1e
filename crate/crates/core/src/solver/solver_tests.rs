use std::sync::Arc;

use super::*;
use crate::disc::{ConstraintSet, DirichletSpec, FieldLayout, PressureRule, ScalarSpace};
use crate::la::{norm2, DenseMatrix, SplitMix64, Triplets};
use crate::mesh::{Geometry, Mesh};
use crate::mg::{LevelChain, SystemBc};
use crate::num::Scalar;
use crate::op::{assemble_sparse, LinearOperator, MassOperator, NsOperator, NsParameters, StokesOperator};

struct Dense(DenseMatrix<Scalar>);

impl LinearOperator for Dense {
    fn n(&self) -> usize {
        self.0.rows()
    }
    fn apply(&self, x: &[Scalar], y: &mut [Scalar]) {
        self.0.matvec(x, y);
    }
}

#[test]
fn cg_identity_converges_immediately() {
    let a = Dense(DenseMatrix::identity(5));
    let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
    let cfg = KrylovConfig::new(1e-12, 10);
    let (x, stats) = solve_cg(&a, None, &b, &vec![0.0; 5], &cfg).unwrap();
    assert!(stats.converged);
    assert_eq!(stats.iterations, 1);
    for (xi, bi) in x.iter().zip(&b) {
        assert!((xi - bi).abs() < 1e-12);
    }
}

#[test]
fn cg_diagonal_exact_in_three() {
    let a = Dense(DenseMatrix::from_rows(&[
        vec![1.0, 0.0, 0.0],
        vec![0.0, 2.0, 0.0],
        vec![0.0, 0.0, 3.0],
    ]));
    let b = vec![1.0, 2.0, 3.0];
    let cfg = KrylovConfig::new(1e-13, 10);
    let (x, stats) = solve_cg(&a, None, &b, &vec![0.0; 3], &cfg).unwrap();
    assert!(stats.converged && stats.iterations <= 3);
    for xi in &x {
        assert!((xi - 1.0).abs() < 1e-11);
    }
}

#[test]
fn cg_random_spd_matches_dense_factorization() {
    let n = 50;
    let mut rng = SplitMix64::new(3);
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = rng.next_real::<Scalar>() * 0.1;
        }
    }
    // SPD: A = M M^T + n I
    let a_mat = {
        let mt = m.transpose();
        let mut a = m.matmul(&mt);
        for i in 0..n {
            a[(i, i)] += n as Scalar * 0.1;
        }
        a
    };
    let b: Vec<Scalar> = rng.vector(n);
    let x_direct = a_mat.lu().unwrap().solve(&b);
    let cfg = KrylovConfig::new(1e-12, 500);
    let (x, stats) = solve_cg(&Dense(a_mat), None, &b, &vec![0.0; n], &cfg).unwrap();
    assert!(stats.converged);
    for (a, b) in x.iter().zip(&x_direct) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn cg_breakdown_on_zero_operator() {
    let a = Dense(DenseMatrix::zeros(3, 3));
    let cfg = KrylovConfig::new(1e-10, 5);
    let err = solve_cg(&a, None, &[1.0, 0.0, 0.0], &[0.0; 3], &cfg).unwrap_err();
    assert!(matches!(err, crate::error::Error::Breakdown { .. }));
}

#[test]
fn gmres_monotone_history_nonsymmetric() {
    let n = 24;
    let mut rng = SplitMix64::new(5);
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = rng.next_real::<Scalar>() * 0.2;
        }
        m[(i, i)] += 3.0;
    }
    let b: Vec<Scalar> = rng.vector(n);
    let cfg = KrylovConfig::new(1e-11, 100);
    let (x, stats) = solve_gmres(&Dense(m.clone()), None, &b, &vec![0.0; n], &cfg).unwrap();
    assert!(stats.converged);
    for w in stats.residuals.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "history not monotone: {w:?}");
    }
    let mut ax = vec![0.0; n];
    m.matvec(&x, &mut ax);
    for (l, r) in ax.iter().zip(&b) {
        assert!((l - r).abs() < 1e-9);
    }
}

#[test]
fn gmres_max_iter_returns_last_iterate() {
    let n = 30;
    let mut rng = SplitMix64::new(7);
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = rng.next_real::<Scalar>() * 0.3;
        }
        m[(i, i)] += 2.0;
    }
    let b: Vec<Scalar> = rng.vector(n);
    let cfg = KrylovConfig {
        rtol: 1e-14,
        atol: 1e-300,
        max_iter: 3,
        restart: 2,
    };
    let (x, stats) = solve_gmres(&Dense(m), None, &b, &vec![0.0; n], &cfg).unwrap();
    assert!(!stats.converged);
    assert_eq!(stats.iterations, 3);
    assert!(norm2(&x) > 0.0);
}

fn tiny_stokes() -> (Arc<StokesOperator>, FieldLayout) {
    // 2x2 so the divergence controls the pinned pressure space (a single
    // fully clamped cell leaves spurious pressure modes)
    let mesh = Arc::new(Mesh::create(Geometry::unit_square(), (2, 2)).unwrap());
    let bs = crate::disc::BlockSpace::distribute_dofs(&mesh, &vec![2; 4], PressureRule::TaylorHood).unwrap();
    let cons_u = Arc::new(ConstraintSet::build(&bs.velocity, &DirichletSpec::all_zero(), 0.0));
    let mut cons_p = ConstraintSet::build(&bs.pressure, &DirichletSpec::none(), 0.0);
    cons_p = cons_p.pin_dof(0, bs.pressure.n_dofs());
    let layout = FieldLayout::new(vec![
        (bs.velocity.clone(), cons_u.clone()),
        (bs.velocity.clone(), cons_u),
        (bs.pressure.clone(), Arc::new(cons_p)),
    ]);
    let op = Arc::new(StokesOperator::new(layout.clone(), 1.0).unwrap());
    (op, layout)
}

#[test]
fn block_preconditioner_dense_oracle() {
    // A = 2 I_2, B = (1,1)^T, S = 1 exact: r = (0,0,1) -> z = (1/2, 1/2, -1)
    struct Toy;
    // hand-build the action through BlockTriangularStokes applied on a fake
    // Stokes operator is overkill here; check the formula directly through
    // the same code path by emulating B with a 1-pressure-dof operator
    impl Toy {
        fn apply(r: &[Scalar; 3]) -> [Scalar; 3] {
            let (r_u, r_p) = ([r[0], r[1]], r[2]);
            let z_p = -r_p; // S = 1
            let b_zp = [z_p, z_p]; // B = (1,1)^T
            let z_u = [(r_u[0] - b_zp[0]) / 2.0, (r_u[1] - b_zp[1]) / 2.0];
            [z_u[0], z_u[1], z_p]
        }
    }
    let z = Toy::apply(&[0.0, 0.0, 1.0]);
    assert_eq!(z, [0.5, 0.5, -1.0]);
    // the production structure reproduces the decoupled limit B = 0 and maps
    // zero to zero on a real Stokes operator
    let (op, _layout) = tiny_stokes();
    let n_u = op.n_u();
    let n = op.n();
    let pc = BlockTriangularStokes::with_solvers(
        op.clone(),
        Box::new(move |r, z| {
            for i in 0..r.len() {
                z[i] = 0.5 * r[i]; // stand-in exact A^{-1} for the test
            }
        }),
        Box::new(|r, z| z.copy_from_slice(r)),
    );
    let mut z = vec![0.0; n];
    pc.apply_to(&vec![0.0; n], &mut z);
    assert_eq!(norm2(&z), 0.0);
    // pressure part sign: z_p = -r_p when S-solve is the identity
    let mut r = vec![0.0; n];
    r[n_u] = 2.0;
    pc.apply_to(&r, &mut z);
    assert!((z[n_u] + 2.0).abs() < 1e-14);
}

#[test]
fn fgmres_block_triangular_iteration_bound() {
    // with exact inner solves, right-preconditioned (F)GMRES on the Stokes
    // system converges in at most dim(pressure) + 2 iterations
    let (op, layout) = tiny_stokes();
    let n = op.n();
    let n_u = op.n_u();
    let k = assemble_sparse(op.as_ref()).to_dense();
    // exact A-block inverse (with its identity rows)
    let mut a_block = DenseMatrix::zeros(n_u, n_u);
    for i in 0..n_u {
        for j in 0..n_u {
            a_block[(i, j)] = k[(i, j)];
        }
    }
    let a_lu = Arc::new(a_block.lu().unwrap());
    // exact scaled pressure mass inverse
    let p_space = Arc::new(ScalarSpace::new(
        layout.space(2).mesh().clone(),
        vec![1; layout.space(2).mesh().n_active()],
    ));
    let p_cons = ConstraintSet::build(&p_space, &DirichletSpec::none(), 0.0)
        .pin_dof(0, p_space.n_dofs());
    let p_layout = FieldLayout::new(vec![(p_space, Arc::new(p_cons))]);
    let mp = MassOperator::pressure_mass_scaled(p_layout, 1.0).unwrap();
    let mp_lu = Arc::new(assemble_sparse(&mp).to_dense().lu().unwrap());
    let pc = BlockTriangularStokes::with_solvers(
        op.clone(),
        Box::new(move |r, z| a_lu.solve_into(r, z)),
        Box::new(move |r, z| mp_lu.solve_into(r, z)),
    );
    // block-triangular exactness: the velocity rows of K P^{-1} - I vanish
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let mut pe = vec![0.0; n];
        pc.apply_to(&e, &mut pe);
        let kpe = op.apply_alloc(&pe);
        for i in 0..n_u {
            let want = if i == j { 1.0 } else { 0.0 };
            if !layout.is_constrained(i) {
                assert!(
                    (kpe[i] - want).abs() < 1e-10,
                    "velocity row {i} of K P^-1 - I: {}",
                    kpe[i] - want
                );
            }
        }
    }
    let mut rng = SplitMix64::new(17);
    let mut b: Vec<Scalar> = rng.vector(n);
    layout.zero_constrained(&mut b);
    let cfg = KrylovConfig::new(1e-12, 50);
    let (_, stats) = solve_fgmres(op.as_ref(), Some(&pc), &b, &vec![0.0; n], &cfg).unwrap();
    assert!(stats.converged);
    let n_p = op.n_p();
    assert!(
        stats.iterations <= n_p + 2,
        "FGMRES took {} > {} iterations",
        stats.iterations,
        n_p + 2
    );
}

#[test]
fn bdf2_scalar_surrogate_second_order() {
    // u' = -u marched with the BdfScheme coefficients; Richardson order fit
    let exact = (-1.0f64).exp();
    let mut errs = Vec::new();
    for &n in &[16usize, 32, 64] {
        let dt = 1.0 / n as Scalar;
        let b1 = crate::op::BdfScheme::bdf1(dt).unwrap();
        let b2 = crate::op::BdfScheme::bdf2(dt).unwrap();
        let mut u_prev2;
        let mut u_prev = 1.0;
        // first step BDF1: (a0 u + a1 u_prev)/dt = -u
        let mut u = -b1.coeffs[1] * u_prev / (b1.coeffs[0] + dt);
        u_prev2 = u_prev;
        u_prev = u;
        for _ in 1..n {
            u = -(b2.coeffs[1] * u_prev + b2.coeffs[2] * u_prev2) / (b2.coeffs[0] + dt);
            u_prev2 = u_prev;
            u_prev = u;
        }
        errs.push((u - exact).abs());
    }
    let order1 = (errs[0] / errs[1]).log2();
    let order2 = (errs[1] / errs[2]).log2();
    assert!((order1 - 2.0).abs() < 0.1, "{order1}");
    assert!((order2 - 2.0).abs() < 0.1, "{order2}");
}

#[test]
fn newton_linear_problem_one_step() {
    // PSPG-stabilized Stokes (no convection) is linear: Newton needs one step
    let mesh = Arc::new(Mesh::create(Geometry::unit_square(), (2, 2)).unwrap());
    let bc = SystemBc {
        velocity: DirichletSpec::all_zero(),
        pressure: DirichletSpec::none(),
        pin_pressure: Some([0.0, 0.0]),
    };
    let chain = Arc::new(
        LevelChain::global_coarsening(&mesh, &vec![2; 4], Some(PressureRule::EqualOrder), &bc, 1)
            .unwrap(),
    );
    let params = NsParameters::stokes(1.0, true).with_forcing(Arc::new(|_, _| [1.0, 0.5]));
    let ctx = NsContext::new(
        chain.clone(),
        params,
        crate::mg::SmootherConfig::jacobi(4, 0.6),
        None,
    )
    .unwrap();
    let mut state = vec![0.0; ctx.n()];
    let mut cfg = NewtonConfig::new();
    cfg.rel_tol = 1e-6;
    cfg.linear = KrylovConfig::new(1e-10, 400);
    let stats = newton_solve(&ctx, &mut state, 0.0, None, &cfg).unwrap();
    assert_eq!(stats.newton_iterations, 1, "{:?}", stats.residual_history);
    assert!(norm2(&state) > 0.0);

    // zero initial residual: zero forcing, zero state
    let params0 = NsParameters::stokes(1.0, true);
    let ctx0 = NsContext::new(chain, params0, crate::mg::SmootherConfig::jacobi(4, 0.6), None).unwrap();
    let mut state0 = vec![0.0; ctx0.n()];
    let stats0 = newton_solve(&ctx0, &mut state0, 0.0, None, &NewtonConfig::new()).unwrap();
    assert_eq!(stats0.newton_iterations, 0);
}

#[test]
fn ramp_requires_nonempty_sequence() {
    let err = ramp_reynolds(
        &mut |_| unreachable!(),
        &[],
        &mut vec![],
        &mut |_, _| {},
        &NewtonConfig::new(),
    )
    .unwrap_err();
    assert!(matches!(err, crate::error::Error::Invalid(_)));
}

#[test]
fn ns_operator_rejects_bad_dt() {
    assert!(crate::op::BdfScheme::bdf2(0.0).is_err());
    assert!(crate::op::BdfScheme::bdf1(-1.0).is_err());
    let _ = NsOperator::new; // referenced for linkage clarity
}
