use std::sync::Arc;

use super::*;
use crate::disc::{ConstraintSet, DirichletSpec, FieldLayout, PressureRule, ScalarSpace};
use crate::la::{norm2, SplitMix64};
use crate::mesh::{Geometry, Mesh};
use crate::mg::{LevelChain, SystemBc};
use crate::num::Scalar;
use crate::op::{assemble_rhs, KernelBase, LaplaceOperator, MassOperator, StokesOperator};
use crate::solver::KrylovConfig;

/// Small dense operator for scalar ODE reductions.
struct DenseOp(DenseMatrix<Scalar>);

impl LinearOperator for DenseOp {
    fn n(&self) -> usize {
        self.0.rows()
    }
    fn apply(&self, x: &[Scalar], y: &mut [Scalar]) {
        self.0.matvec(x, y);
    }
}

impl MgOperator for DenseOp {
    fn apply_direct(&self, x: &[Scalar], y: &mut [Scalar]) {
        self.0.matvec(x, y);
    }
    fn diagonal(&self) -> Vec<Scalar> {
        (0..self.0.rows()).map(|i| self.0[(i, i)]).collect()
    }
    fn assemble(&self) -> CsrMatrix<Scalar> {
        let mut t = Triplets::new(self.0.rows(), self.0.cols());
        for i in 0..self.0.rows() {
            for j in 0..self.0.cols() {
                t.push(i, j, self.0[(i, j)]);
            }
        }
        t.to_csr()
    }
}

#[test]
fn temporal_k0_is_implicit_euler() {
    let b = TemporalBasis::new(0);
    assert_eq!(b.nodes, vec![1.0]);
    assert!((b.m_q[(0, 0)] - 1.0).abs() < 1e-14);
    assert!((b.a_q[(0, 0)] - 1.0).abs() < 1e-14);
    assert!((b.jump[0] - 1.0).abs() < 1e-14);
    assert!((b.g_q[(0, 0)] - 1.0).abs() < 1e-14);
}

#[test]
fn temporal_k1_matches_quadrature_oracle() {
    let b = TemporalBasis::new(1);
    assert!((b.nodes[0] - 1.0 / 3.0).abs() < 1e-12);
    assert!((b.nodes[1] - 1.0).abs() < 1e-12);
    // 20-point Gauss oracle
    let basis = LagrangeBasis::new(b.nodes.clone());
    let rule = gauss_legendre::<Scalar>(20);
    for i in 0..2 {
        for j in 0..2 {
            let m = rule.integrate(|s| basis.value(i, s) * basis.value(j, s));
            let a = rule.integrate(|s| basis.derivative(j, s) * basis.value(i, s))
                + basis.value(i, 0.0) * basis.value(j, 0.0);
            assert!((b.m_q[(i, j)] - m).abs() < 1e-14, "M[{i}][{j}]");
            assert!((b.a_q[(i, j)] - a).abs() < 1e-14, "A[{i}][{j}]");
        }
    }
}

#[test]
fn temporal_mass_spd_and_boundary_identity() {
    let mut rng = SplitMix64::new(2);
    for k in 0..=4 {
        let b = TemporalBasis::new(k);
        let q = k + 1;
        // symmetry and positivity of M
        for i in 0..q {
            for j in 0..q {
                assert!((b.m_q[(i, j)] - b.m_q[(j, i)]).abs() < 1e-14);
            }
        }
        for _ in 0..50 {
            let x: Vec<Scalar> = rng.vector(q);
            let mut mx = vec![0.0; q];
            b.m_q.matvec(&x, &mut mx);
            let quad = crate::la::dot(&x, &mx);
            if norm2(&x) > 1e-8 {
                assert!(quad > 0.0, "k={k}: M not positive definite");
            }
        }
        // A + A^T = phi(1) phi(1)^T + phi(0) phi(0)^T (integration by parts
        // plus the jump term)
        let basis = LagrangeBasis::new(b.nodes.clone());
        for i in 0..q {
            for j in 0..q {
                let lhs = b.a_q[(i, j)] + b.a_q[(j, i)];
                let rhs = basis.value(i, 1.0) * basis.value(j, 1.0)
                    + basis.value(i, 0.0) * basis.value(j, 0.0);
                assert!((lhs - rhs).abs() < 1e-13, "k={k} ({i},{j})");
            }
        }
    }
}

#[test]
fn dg_scalar_ode_amplification() {
    // u' = lambda u over one slab: stage system (G - z I) x = m~ u_prev
    let amp = |k: usize, z: Scalar| -> Scalar {
        let b = TemporalBasis::new(k);
        let q = k + 1;
        let mut m = DenseMatrix::zeros(q, q);
        for i in 0..q {
            for j in 0..q {
                m[(i, j)] = b.g_q[(i, j)] - if i == j { z } else { 0.0 };
            }
        }
        let sol = m.lu().unwrap().solve(&b.jump_scaled);
        sol[q - 1]
    };
    // k = 0: amplification exactly 1/(1 - z)
    for z in [-0.3, -1.5, 0.2] {
        assert!((amp(0, z) - 1.0 / (1.0 - z)).abs() < 1e-13);
    }
    // k = 1 is the 2-stage Radau IIA rational approximation
    for z in [-0.4, -2.0, 0.1] {
        let want = (1.0 + z / 3.0) / (1.0 - 2.0 * z / 3.0 + z * z / 6.0);
        assert!((amp(1, z) - want).abs() < 1e-12, "z={z}");
    }
}

fn scalar_heat_setup(
    n: u32,
    p: u8,
) -> (FieldLayout, Arc<dyn MgOperator>, Arc<dyn MgOperator>, KernelBase) {
    let mesh = Arc::new(Mesh::create(Geometry::unit_square(), (n, n)).unwrap());
    let space = Arc::new(ScalarSpace::new(mesh.clone(), vec![p; mesh.n_active()]));
    let cons = Arc::new(ConstraintSet::build(&space, &DirichletSpec::all_zero(), 0.0));
    let layout = FieldLayout::new(vec![(space, cons)]);
    let mass: Arc<dyn MgOperator> =
        Arc::new(MassOperator::new(layout.clone(), 1.0).with_identity_rows(false));
    let stiff: Arc<dyn MgOperator> =
        Arc::new(LaplaceOperator::new(layout.clone(), 1.0).with_identity_rows(false));
    let base = KernelBase::new(layout.clone(), 1);
    (layout, mass, stiff, base)
}

#[test]
fn apply_slab_matches_dense_kron_oracle() {
    for k in [0usize, 1, 2] {
        let (layout, mass, stiff, _) = scalar_heat_setup(2, 1);
        let basis = Arc::new(TemporalBasis::new(k));
        let tau = 0.37;
        let constrained: Vec<usize> = layout
            .constraints(0)
            .iter()
            .map(|(&d, _)| d)
            .collect();
        let slab = SlabSystem::new(basis.clone(), tau, mass.clone(), stiff.clone(), constrained)
            .unwrap();
        let n = slab.n_space();
        let q = k + 1;
        assert!(q * n <= 300);
        // dense kron(G, M) + tau kron(I, A) with identity rows patched in
        let m_d = mass.assemble().to_dense();
        let a_d = stiff.assemble().to_dense();
        let mut kron = basis.g_q.kron(&m_d);
        let id = DenseMatrix::identity(q);
        let ka = id.kron(&a_d);
        for i in 0..q * n {
            for j in 0..q * n {
                kron[(i, j)] += tau * ka[(i, j)];
            }
        }
        for s in 0..q {
            for &c in &slab.constrained {
                for j in 0..q * n {
                    kron[(s * n + c, j)] = 0.0;
                }
                kron[(s * n + c, s * n + c)] = 1.0;
            }
        }
        let mut rng = SplitMix64::new(7 + k as u64);
        for _ in 0..10 {
            let x: Vec<Scalar> = rng.vector(q * n);
            let mut y_mf = vec![0.0; q * n];
            slab.apply(&x, &mut y_mf);
            let mut y_dense = vec![0.0; q * n];
            kron.matvec(&x, &mut y_dense);
            let diff: Scalar = y_mf
                .iter()
                .zip(&y_dense)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<Scalar>()
                .sqrt();
            assert!(diff <= 1e-12 * norm2(&y_dense).max(1.0), "k={k}: {diff}");
        }
        // zero in, zero out
        let y = slab.apply_alloc(&vec![0.0; q * n]);
        assert_eq!(norm2(&y), 0.0);
        // diagonal matches the assembled diagonal
        let d1 = MgOperator::diagonal(&slab);
        let d2 = slab.assemble().diagonal();
        for (a, b) in d1.iter().zip(&d2) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn slab_rhs_k0_reduces_to_implicit_euler() {
    let (layout, mass, stiff, _) = scalar_heat_setup(2, 1);
    let basis = Arc::new(TemporalBasis::new(0));
    let constrained: Vec<usize> = layout.constraints(0).iter().map(|(&d, _)| d).collect();
    let slab = SlabSystem::new(basis, 0.5, mass.clone(), stiff, constrained).unwrap();
    let n = slab.n_space();
    let mut rng = SplitMix64::new(11);
    let x_prev: Vec<Scalar> = rng.vector(n);
    let b = slab.slab_rhs(&vec![0.0; n], &x_prev).unwrap();
    let mut want = vec![0.0; n];
    mass.apply(&x_prev, &mut want);
    for (a, b) in b.iter().zip(&want) {
        assert!((a - b).abs() < 1e-13);
    }
    // zero previous state and loads give a zero right-hand side
    let b0 = slab.slab_rhs(&vec![0.0; n], &vec![0.0; n]).unwrap();
    assert_eq!(norm2(&b0), 0.0);
}

#[test]
fn constant_in_time_solution_reproduced_at_all_stages() {
    // steady heat state: A u = f; the DG slab solution stays u at every stage
    let (layout, mass, stiff, base) = scalar_heat_setup(2, 2);
    let n = layout.n_dofs();
    let f = |x: [Scalar; 2]| (std::f64::consts::PI * x[0]).sin() * x[1];
    let f_vec = assemble_rhs(&base, &[Some(&f)]);
    let a_dense = stiff.assemble().to_dense();
    // identity rows for the direct solve
    let mut a_solve = a_dense.clone();
    for (&c, _) in layout.constraints(0).iter() {
        for j in 0..n {
            a_solve[(c, j)] = 0.0;
        }
        a_solve[(c, c)] = 1.0;
    }
    let u_steady = a_solve.lu().unwrap().solve(&f_vec);
    for k in [1usize, 2] {
        let basis = Arc::new(TemporalBasis::new(k));
        let q = k + 1;
        let constrained: Vec<usize> = layout.constraints(0).iter().map(|(&d, _)| d).collect();
        let tau = 0.3;
        let slab = SlabSystem::new(basis, tau, mass.clone(), stiff.clone(), constrained).unwrap();
        // raw loads: tau * int phi_i dt * (f, v) = tau * (int phi_i) f_vec
        let rule = gauss_legendre::<Scalar>(k + 2);
        let tb = LagrangeBasis::new(slab.basis.nodes.clone());
        let mut loads = vec![0.0; q * n];
        for s in 0..q {
            let wi = rule.integrate(|t| tb.value(s, t));
            for d in 0..n {
                loads[s * n + d] = tau * wi * f_vec[d];
            }
        }
        let b = slab.slab_rhs(&loads, &u_steady).unwrap();
        let kron = slab.assemble().to_dense();
        let x = kron.lu().unwrap().solve(&b);
        for s in 0..q {
            for d in 0..n {
                assert!(
                    (x[s * n + d] - u_steady[d]).abs() < 1e-10,
                    "stage {s} dof {d}"
                );
            }
        }
    }
}

#[test]
fn st_single_cell_patch_solves_exactly() {
    // one spatial cell, Q = 2: the single space-time patch with omega = 1
    // solves the slab problem in one ASM iteration
    let (layout, mass, stiff, _) = scalar_heat_setup(1, 1);
    let basis = Arc::new(TemporalBasis::new(1));
    let constrained: Vec<usize> = layout.constraints(0).iter().map(|(&d, _)| d).collect();
    let slab = SlabSystem::new(basis, 0.2, mass, stiff, constrained).unwrap();
    let n_total = slab.n();
    let spaces = crate::mg::LevelSpaces {
        mesh: layout.space(0).mesh().clone(),
        layout: layout.clone(),
        vel_degrees: vec![1; 1],
        has_pressure: false,
    };
    let (patch_dofs, cells) = st_cell_patches(&spaces, 2);
    assert_eq!(patch_dofs.len(), 1);
    let matrix = slab.assemble();
    let patches = Arc::new(AsmPatches::build(&matrix, patch_dofs, &cells).unwrap());
    let cfg = SmootherConfig::asm(1, 1.0);
    let sm = Smoother::build(&cfg, &slab, MgOperator::diagonal(&slab), Some(patches)).unwrap();
    let mut rng = SplitMix64::new(4);
    let mut b: Vec<Scalar> = rng.vector(n_total);
    // zero constrained rows (all four corners are Dirichlet in this toy)
    for s in 0..2 {
        for &c in &slab.constrained {
            b[s * slab.n_space() + c] = 0.0;
        }
    }
    let mut x = vec![0.0; n_total];
    sm.smooth(&slab, &mut x, &b);
    let mut ax = vec![0.0; n_total];
    slab.apply(&x, &mut ax);
    for (l, r) in ax.iter().zip(&b) {
        assert!((l - r).abs() < 1e-11);
    }
}

#[test]
fn stmg_level_sequence_rule_enumeration() {
    assert_eq!(temporal_chain(3), vec![3, 2, 1, 0]);
    assert_eq!(temporal_chain(1), vec![1, 0]);
    assert_eq!(temporal_chain(0), vec![0]);
    // k = 3, two spatial h-levels, velocity p = 2 Taylor-Hood: the unique
    // R1+R2 sequence is (h0,k0) (h0,k1) (h0,k2) (h0,k3) (h1,k3).
    // (A single fully clamped Taylor-Hood cell would be singular, so the
    // coarse mesh is 2x2.)
    let mesh = {
        let m = Mesh::create(Geometry::unit_square(), (2, 2)).unwrap();
        let flags: std::collections::BTreeSet<usize> = m.active_ids().iter().copied().collect();
        Arc::new(m.refine(&flags).unwrap())
    };
    let bc = SystemBc {
        velocity: DirichletSpec::all_zero(),
        pressure: DirichletSpec::none(),
        pin_pressure: Some([0.0, 0.0]),
    };
    let chain = LevelChain::hp(
        &mesh,
        &vec![2; mesh.n_active()],
        Some(PressureRule::TaylorHood),
        &bc,
        1,
        true,
    )
    .unwrap();
    let basis = Arc::new(TemporalBasis::new(3));
    let mut make_ops = |_l: usize, spaces: &crate::mg::LevelSpaces| {
        let mass: Arc<dyn MgOperator> =
            Arc::new(MassOperator::block_mass(spaces.layout.clone()));
        let stiff: Arc<dyn MgOperator> = Arc::new(
            StokesOperator::new(spaces.layout.clone(), 1.0)
                .unwrap()
                .with_identity_rows(false),
        );
        Ok((mass, stiff))
    };
    let (mg, infos) = build_stmg(
        &chain,
        &basis,
        0.1,
        &mut make_ops,
        &SmootherConfig::asm(1, 1.0),
    )
    .unwrap();
    let seq: Vec<(usize, usize)> = infos.iter().map(|i| (i.spatial_level, i.temporal_k)).collect();
    assert_eq!(seq, vec![(0, 0), (0, 1), (0, 2), (0, 3), (1, 3)]);
    assert_eq!(mg.n_levels(), 5);
    // fine and coarse stage counts across temporal levels follow k -> ceil(k/2)
    let n_sp0 = chain.levels[0].n_dofs();
    for (i, want_q) in [(0usize, 1usize), (1, 2), (2, 3), (3, 4)] {
        assert_eq!(infos[i].n, want_q * n_sp0, "level {i}");
    }
}

#[test]
fn march_heat_equation_temporal_order() {
    // manufactured u = sin(pi x) sin(pi y) e^{-t}, nu = 1:
    // f = (2 pi^2 - 1) u; fixed spatial mesh, halved slab lengths; the
    // error against a tiny-tau reference isolates the temporal order
    let pi = std::f64::consts::PI;
    let (layout, mass, stiff, base) = scalar_heat_setup(3, 2);
    let n = layout.n_dofs();
    let u_exact = move |x: [Scalar; 2], t: Scalar| (pi * x[0]).sin() * (pi * x[1]).sin() * (-t).exp();
    let ic: Vec<Scalar> = {
        let field = crate::disc::SolutionField::interpolate(&layout, &[&|x: [Scalar; 2]| u_exact(x, 0.0)]);
        field.values
    };
    let t_end = 0.5;
    let mut run = |k: usize, n_slabs: usize| -> Vec<Scalar> {
        let basis = Arc::new(TemporalBasis::new(k));
        let tau = t_end / n_slabs as Scalar;
        let constrained: Vec<usize> = layout.constraints(0).iter().map(|(&d, _)| d).collect();
        let slab =
            SlabSystem::new(basis.clone(), tau, mass.clone(), stiff.clone(), constrained).unwrap();
        // single-level "hierarchy": direct solve via GMRES + strong patches
        let spaces = crate::mg::LevelSpaces {
            mesh: layout.space(0).mesh().clone(),
            layout: layout.clone(),
            vel_degrees: vec![2; layout.space(0).mesh().n_active()],
            has_pressure: false,
        };
        let chain = single_level_chain(spaces);
        let mut make_ops = |_l: usize, _s: &crate::mg::LevelSpaces| {
            Ok((mass.clone(), stiff.clone()))
        };
        let (mg, _) = build_stmg(&chain, &basis, tau, &mut make_ops, &SmootherConfig::asm(1, 1.0))
            .unwrap();
        let rule = gauss_legendre::<Scalar>(k + 2);
        let tb = LagrangeBasis::new(slab.basis.nodes.clone());
        let mut loads_fn = |slab_idx: usize, _prev: &[Scalar]| -> Vec<Scalar> {
            let t0 = slab_idx as Scalar * tau;
            let mut loads = vec![0.0; (k + 1) * n];
            for (g, &sg) in rule.points.iter().enumerate() {
                let t = t0 + tau * sg;
                let f = move |x: [Scalar; 2]| (2.0 * pi * pi - 1.0) * u_exact(x, t);
                let f_vec = assemble_rhs(&base, &[Some(&f)]);
                for s in 0..=k {
                    let w = tau * rule.weights[g] * tb.value(s, sg);
                    for d in 0..n {
                        loads[s * n + d] += w * f_vec[d];
                    }
                }
            }
            loads
        };
        let mut bc_fn = |_slab: usize, _x: &mut [Scalar]| {}; // homogeneous walls
        let cfg = KrylovConfig::new(1e-11, 400);
        let mut final_state = vec![0.0; n];
        let q = k + 1;
        march_slabs(
            &slab,
            &mg,
            &ic,
            n_slabs,
            &mut loads_fn,
            &mut bc_fn,
            &cfg,
            Some(&mut |_s, x: &[Scalar]| {
                final_state.copy_from_slice(&x[(q - 1) * n..]);
            }),
        )
        .unwrap();
        final_state
    };
    for k in [1usize] {
        let reference = run(k, 64);
        let mut errs = Vec::new();
        for n_slabs in [2usize, 4, 8] {
            let sol = run(k, n_slabs);
            let e: Scalar = sol
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<Scalar>()
                .sqrt();
            errs.push(e);
        }
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        // at least the k+1 rate at slab ends (superconvergence may show more)
        assert!(
            o1 >= k as Scalar + 0.8 && o2 >= k as Scalar + 0.8,
            "k={k}: orders {o1} {o2}, errors {errs:?}"
        );
    }
}

#[test]
fn march_zero_data_zero_iterations() {
    let (layout, mass, stiff, _) = scalar_heat_setup(2, 1);
    let n = layout.n_dofs();
    let basis = Arc::new(TemporalBasis::new(1));
    let constrained: Vec<usize> = layout.constraints(0).iter().map(|(&d, _)| d).collect();
    let slab = SlabSystem::new(basis.clone(), 0.1, mass.clone(), stiff.clone(), constrained).unwrap();
    let spaces = crate::mg::LevelSpaces {
        mesh: layout.space(0).mesh().clone(),
        layout: layout.clone(),
        vel_degrees: vec![1; 4],
        has_pressure: false,
    };
    let chain = single_level_chain(spaces);
    let mut make_ops = |_l: usize, _s: &crate::mg::LevelSpaces| Ok((mass.clone(), stiff.clone()));
    let (mg, _) = build_stmg(&chain, &basis, 0.1, &mut make_ops, &SmootherConfig::asm(1, 1.0)).unwrap();
    let stats = march_slabs(
        &slab,
        &mg,
        &vec![0.0; n],
        3,
        &mut |_, _| vec![0.0; 2 * n],
        &mut |_, _| {},
        &KrylovConfig::new(1e-10, 50),
        None,
    )
    .unwrap();
    assert_eq!(stats.total_iterations, 0);
}

/// One-level chain wrapper for tests.
fn single_level_chain(spaces: crate::mg::LevelSpaces) -> LevelChain {
    let n = spaces.n_dofs();
    let constrained: std::collections::BTreeSet<usize> =
        spaces.constrained_dofs().into_iter().collect();
    LevelChain {
        kind: crate::mg::HierarchyKind::SpaceTime,
        outer: spaces.clone(),
        levels: vec![spaces],
        transfers: vec![],
        injection: crate::mg::Injection {
            entries: (0..n)
                .filter(|d| !constrained.contains(d))
                .map(|d| (d, 0, d))
                .collect(),
        },
        n_system: n,
        partitions: vec![],
        state_copy: vec![(0..n).map(|i| (i, i)).collect()],
    }
}
