use std::collections::BTreeSet;
use std::sync::Arc;

use super::*;
use crate::disc::{DirichletSpec, FieldLayout, SolutionField};
use crate::la::{dot, norm2, SplitMix64};
use crate::mesh::{Geometry, Mesh};

fn square(n: u32) -> Arc<Mesh> {
    Arc::new(Mesh::create(Geometry::unit_square(), (n, n)).unwrap())
}

fn space(mesh: &Arc<Mesh>, p: u8) -> Arc<ScalarSpace> {
    Arc::new(ScalarSpace::new(mesh.clone(), vec![p; mesh.n_active()]))
}

fn cons_of(s: &Arc<ScalarSpace>) -> Arc<ConstraintSet> {
    Arc::new(ConstraintSet::build(s, &DirichletSpec::none(), 0.0))
}

fn check_transpose(t: &ScalarTransfer, cons: &ConstraintSet, pairs: usize, seed: u64) {
    let mut rng = SplitMix64::new(seed);
    for _ in 0..pairs {
        let v: Vec<Scalar> = rng.vector(t.n_coarse());
        let w: Vec<Scalar> = rng.vector(t.n_fine());
        let mut pv = vec![0.0; t.n_fine()];
        t.prolongate(cons, &v, &mut pv).unwrap();
        let mut rw = vec![0.0; t.n_coarse()];
        t.restrict(cons, &w, &mut rw).unwrap();
        let a = dot(&pv, &w);
        let b = dot(&v, &rw);
        assert!(
            (a - b).abs() <= 1e-12 * norm2(&v) * norm2(&w),
            "transpose identity violated: {a} vs {b}"
        );
    }
}

#[test]
fn geometric_q1_linear_embedding() {
    // coarse 1-cell, fine 4 children: coarse edge values (a, b) produce fine
    // values (a, (a+b)/2, b) along the edge
    let coarse = square(1);
    let fine = Arc::new(
        coarse
            .refine(&BTreeSet::from([coarse.active_ids()[0]]))
            .unwrap(),
    );
    let sc = space(&coarse, 1);
    let sf = space(&fine, 1);
    let t = ScalarTransfer::geometric(&sc, &sf).unwrap();
    let cons = cons_of(&sc);
    // coarse nodal values = x coordinate
    let mut x_c = vec![0.0; sc.n_dofs()];
    for (local, &d) in sc.cell_dofs(0).iter().enumerate() {
        x_c[d] = sc.node_position(0, local)[0];
    }
    let mut x_f = vec![0.0; sf.n_dofs()];
    t.prolongate(&cons, &x_c, &mut x_f).unwrap();
    for pos in 0..fine.n_active() {
        for (local, &d) in sf.cell_dofs(pos).iter().enumerate() {
            let p = sf.node_position(pos, local);
            assert!((x_f[d] - p[0]).abs() < 1e-13);
        }
    }
}

#[test]
fn polynomial_q1_to_q2_bilinear_values() {
    let mesh = square(1);
    let sc = space(&mesh, 1);
    let sf = space(&mesh, 2);
    let t = ScalarTransfer::polynomial(&sc, &sf).unwrap();
    let cons = cons_of(&sc);
    // corner values preserved, edge midpoints are averages, center is mean
    let bilin = |x: Scalar, y: Scalar| {
        1.0 * (1.0 - x) * (1.0 - y) + 2.0 * x * (1.0 - y) + 3.0 * (1.0 - x) * y + 4.0 * x * y
    };
    let mut x_c = vec![0.0; sc.n_dofs()];
    for (local, &d) in sc.cell_dofs(0).iter().enumerate() {
        let p = sc.node_position(0, local);
        x_c[d] = bilin(p[0], p[1]);
    }
    let mut x_f = vec![0.0; sf.n_dofs()];
    t.prolongate(&cons, &x_c, &mut x_f).unwrap();
    for (local, &d) in sf.cell_dofs(0).iter().enumerate() {
        let p = sf.node_position(0, local);
        assert!((x_f[d] - bilin(p[0], p[1])).abs() < 1e-13);
    }
    // degree mismatch rejected
    assert!(ScalarTransfer::polynomial(&sf, &sc).is_err());
}

#[test]
fn transpose_identity_on_randomized_configurations() {
    let mut cfg = 0;
    for n in [1u32, 2] {
        for (pc, pf) in [(1u8, 1u8), (2, 2), (2, 3), (3, 3)] {
            // h-transfer with local refinement and hanging nodes
            let coarse = {
                let m = square(n + 1);
                let flag = BTreeSet::from([m.active_ids()[0]]);
                Arc::new(m.refine(&flag).unwrap())
            };
            let fine = {
                let flag = BTreeSet::from([*coarse.active_ids().last().unwrap()]);
                Arc::new(coarse.refine(&flag).unwrap())
            };
            let sc = space(&coarse, pc);
            let sf_mesh_fine = space(&fine, pc);
            let t = ScalarTransfer::geometric(&sc, &sf_mesh_fine).unwrap();
            check_transpose(&t, &cons_of(&sc), 10, 100 + cfg);
            // p-transfer on the coarse mesh
            if pf > pc {
                let sf = space(&coarse, pf);
                let t = ScalarTransfer::polynomial(&sc, &sf).unwrap();
                check_transpose(&t, &cons_of(&sc), 10, 200 + cfg);
            }
            cfg += 1;
        }
    }
}

#[test]
fn zero_in_zero_out() {
    let coarse = square(2);
    let sc = space(&coarse, 2);
    let sf = space(&coarse, 3);
    let t = ScalarTransfer::polynomial(&sc, &sf).unwrap();
    let cons = cons_of(&sc);
    let mut y = vec![1.0; sf.n_dofs()];
    t.prolongate(&cons, &vec![0.0; sc.n_dofs()], &mut y).unwrap();
    assert!(norm2(&y) == 0.0);
}

#[test]
fn polynomial_reproduction_h_transfer_with_hanging_nodes() {
    // a degree-p global polynomial prolongates exactly on a balanced mesh
    let coarse = {
        let m = square(2);
        let flag = BTreeSet::from([m.active_ids()[3]]);
        Arc::new(m.refine(&flag).unwrap())
    };
    let fine = {
        let flag: BTreeSet<usize> = coarse.active_ids().iter().copied().collect();
        Arc::new(coarse.refine(&flag).unwrap())
    };
    for p in [1u8, 2, 3] {
        let sc = space(&coarse, p);
        let sf = space(&fine, p);
        let cons_c = cons_of(&sc);
        let cons_f = cons_of(&sf);
        let t = ScalarTransfer::geometric(&sc, &sf).unwrap();
        let poly = move |x: [Scalar; 2]| {
            let mut v = 0.0;
            for a in 0..=p as i32 {
                v += (x[0].powi(a) + x[1].powi(a)) * (a as Scalar + 0.5);
            }
            v
        };
        let lc = FieldLayout::new(vec![(sc.clone(), cons_c.clone())]);
        let lf = FieldLayout::new(vec![(sf.clone(), cons_f.clone())]);
        let coarse_field = SolutionField::interpolate(&lc, &[&poly]);
        let fine_exact = SolutionField::interpolate(&lf, &[&poly]);
        let mut x_c = coarse_field.values.clone();
        lc.distribute(&mut x_c);
        let mut x_f = vec![0.0; sf.n_dofs()];
        t.prolongate(&cons_c, &x_c, &mut x_f).unwrap();
        cons_f.distribute(&mut x_f);
        for (a, b) in x_f.iter().zip(&fine_exact.values) {
            assert!((a - b).abs() < 1e-12, "p={p}: {a} vs {b}");
        }
    }
}

#[test]
fn constant_reproduction_weighting() {
    // prolongating the constant-1 coarse vector yields constant-1 after
    // constraint distribution
    let coarse = {
        let m = square(2);
        let flag = BTreeSet::from([m.active_ids()[1]]);
        Arc::new(m.refine(&flag).unwrap())
    };
    let fine = {
        let flag = BTreeSet::from([*coarse.active_ids().last().unwrap()]);
        Arc::new(coarse.refine(&flag).unwrap())
    };
    let sc = space(&coarse, 2);
    let sf = space(&fine, 2);
    let cons_c = cons_of(&sc);
    let cons_f = cons_of(&sf);
    let t = ScalarTransfer::geometric(&sc, &sf).unwrap();
    let mut x_c = vec![1.0; sc.n_dofs()];
    cons_c.distribute(&mut x_c);
    let mut x_f = vec![0.0; sf.n_dofs()];
    t.prolongate(&cons_c, &x_c, &mut x_f).unwrap();
    cons_f.distribute(&mut x_f);
    for v in &x_f {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn galerkin_coarse_column_oracle() {
    // restrict(prolongate(e_i)) equals the i-th column of the dense P^T P
    let coarse = square(2);
    let sc = space(&coarse, 1);
    let sf = space(&coarse, 2);
    let t = ScalarTransfer::polynomial(&sc, &sf).unwrap();
    let cons = cons_of(&sc);
    let (nc, nf) = (t.n_coarse(), t.n_fine());
    assert!(nf <= 200);
    // dense P
    let mut p = DenseMatrix::zeros(nf, nc);
    for j in 0..nc {
        let mut e = vec![0.0; nc];
        e[j] = 1.0;
        let mut col = vec![0.0; nf];
        t.prolongate(&cons, &e, &mut col).unwrap();
        for i in 0..nf {
            p[(i, j)] = col[i];
        }
    }
    let ptp = p.transpose().matmul(&p);
    for i in 0..nc {
        let mut e = vec![0.0; nc];
        e[i] = 1.0;
        let mut pe = vec![0.0; nf];
        t.prolongate(&cons, &e, &mut pe).unwrap();
        let mut col = vec![0.0; nc];
        t.restrict(&cons, &pe, &mut col).unwrap();
        for k in 0..nc {
            assert!((col[k] - ptp[(k, i)]).abs() < 1e-12);
        }
    }
}

#[test]
fn temporal_embedding_known_cases() {
    // DG(0) -> DG(1): the constant reproduced at both Radau nodes
    let p = temporal_embedding(0, 1);
    assert_eq!(p.rows(), 2);
    assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
    assert!((p[(1, 0)] - 1.0).abs() < 1e-14);
    // equal degrees: identity
    let p = temporal_embedding(2, 2);
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((p[(i, j)] - want).abs() < 1e-13);
        }
    }
    // reproduces polynomials of degree k_c in time
    let p = temporal_embedding(1, 3);
    let cn = gauss_radau_right_points::<Scalar>(2);
    let fnodes = gauss_radau_right_points::<Scalar>(4);
    let f = |t: Scalar| 2.0 * t - 0.7;
    let x_c: Vec<Scalar> = cn.iter().map(|&t| f(t)).collect();
    let mut x_f = vec![0.0; 4];
    prolongate_temporal(&p, 1, &x_c, &mut x_f).unwrap();
    for (v, &t) in x_f.iter().zip(&fnodes) {
        assert!((v - f(t)).abs() < 1e-13);
    }
}

#[test]
fn temporal_transpose_identity() {
    let p = temporal_embedding(1, 2);
    let n_space = 7;
    let mut rng = SplitMix64::new(9);
    for _ in 0..100 {
        let v: Vec<Scalar> = rng.vector(2 * n_space);
        let w: Vec<Scalar> = rng.vector(3 * n_space);
        let mut pv = vec![0.0; 3 * n_space];
        prolongate_temporal(&p, n_space, &v, &mut pv).unwrap();
        let mut rw = vec![0.0; 2 * n_space];
        restrict_temporal(&p, n_space, &w, &mut rw).unwrap();
        assert!((dot(&pv, &w) - dot(&v, &rw)).abs() < 1e-12 * norm2(&v) * norm2(&w));
    }
}

#[test]
fn multivector_matches_dense_kron_and_commutes() {
    // fine/coarse spatial spaces on one mesh, Q = 2 stages
    let mesh = square(2);
    let sc = space(&mesh, 1);
    let sf = space(&mesh, 2);
    let cons_c = cons_of(&sc);
    let st = Arc::new(ScalarTransfer::polynomial(&sc, &sf).unwrap());
    let bt = BlockTransfer::new(vec![(st.clone(), cons_c.clone())]);
    let (nc, nf) = (st.n_coarse(), st.n_fine());
    // dense P for the kron oracle
    let mut p = DenseMatrix::zeros(nf, nc);
    for j in 0..nc {
        let mut e = vec![0.0; nc];
        e[j] = 1.0;
        let mut col = vec![0.0; nf];
        st.prolongate(&cons_c, &e, &mut col).unwrap();
        for i in 0..nf {
            p[(i, j)] = col[i];
        }
    }
    let id2 = DenseMatrix::identity(2);
    let kron = id2.kron(&p);
    let mut rng = SplitMix64::new(21);
    let x: Vec<Scalar> = rng.vector(2 * nc);
    let mut y = vec![0.0; 2 * nf];
    bt.prolongate_multivector(2, &x, &mut y).unwrap();
    let mut y_dense = vec![0.0; 2 * nf];
    kron.matvec(&x, &mut y_dense);
    for (a, b) in y.iter().zip(&y_dense) {
        assert!((a - b).abs() < 1e-12);
    }
    // Q = 1 reduces to plain prolongate
    let x1: Vec<Scalar> = rng.vector(nc);
    let mut y1 = vec![0.0; nf];
    bt.prolongate_multivector(1, &x1, &mut y1).unwrap();
    let mut y1p = vec![0.0; nf];
    st.prolongate(&cons_c, &x1, &mut y1p).unwrap();
    assert_eq!(y1, y1p);
    // stage-count mismatch is an error
    assert!(bt.prolongate_multivector(3, &x, &mut y).is_err());

    // Kronecker commutation: (P_tau x I)(I x P_h) == (I x P_h)(P_tau x I)
    let pt = temporal_embedding(1, 2);
    let xs: Vec<Scalar> = rng.vector(2 * nc);
    // route 1: spatial first on 2 stages, then temporal on fine space
    let mut s1 = vec![0.0; 2 * nf];
    bt.prolongate_multivector(2, &xs, &mut s1).unwrap();
    let mut r1 = vec![0.0; 3 * nf];
    prolongate_temporal(&pt, nf, &s1, &mut r1).unwrap();
    // route 2: temporal first on coarse space, then spatial on 3 stages
    let mut s2 = vec![0.0; 3 * nc];
    prolongate_temporal(&pt, nc, &xs, &mut s2).unwrap();
    let mut r2 = vec![0.0; 3 * nf];
    bt.prolongate_multivector(3, &s2, &mut r2).unwrap();
    for (a, b) in r1.iter().zip(&r2) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn interpolate_to_coarse_recovers_polynomials() {
    let coarse = square(2);
    let fine = {
        let flag: BTreeSet<usize> = coarse.active_ids().iter().copied().collect();
        Arc::new(coarse.refine(&flag).unwrap())
    };
    let sc = space(&coarse, 2);
    let sf = space(&fine, 2);
    let t = ScalarTransfer::geometric(&sc, &sf).unwrap();
    let lf = FieldLayout::new(vec![(sf.clone(), cons_of(&sf))]);
    let f = |x: [Scalar; 2]| 1.0 + x[0] * x[1] + x[0] * x[0];
    let fine_field = SolutionField::interpolate(&lf, &[&f]);
    let mut x_c = vec![0.0; sc.n_dofs()];
    t.interpolate_to_coarse(&fine_field.values, &mut x_c).unwrap();
    for pos in 0..coarse.n_active() {
        for (local, &d) in sc.cell_dofs(pos).iter().enumerate() {
            let p = sc.node_position(pos, local);
            assert!((x_c[d] - f(p)).abs() < 1e-12);
        }
    }
}
