use std::sync::Arc;
use flowmg_core::disc::{DirichletSpec, PressureRule, BoundaryCondition};
use flowmg_core::la::SplitMix64;
use flowmg_core::mesh::{Geometry, Mesh};
use flowmg_core::mg::{LevelChain, MgOperator, SmootherConfig, SystemBc};
use flowmg_core::op::{MassOperator, StokesOperator};
use flowmg_core::spacetime::{build_stmg, SlabSystem, TemporalBasis};

#[test]
fn probe_k2() {
    let g = Geometry::Channel { length: 1.64, height: 0.41, obstacle: Some([0.41, 0.1367, 0.5467, 0.2733]) };
    let mesh = {
        let m = Mesh::create(g, (12, 3)).unwrap();
        let flags: std::collections::BTreeSet<usize> = m.active_ids().iter().copied().collect();
        Arc::new(m.refine(&flags).unwrap())
    };
    let nu = 0.01;
    let k: usize = std::env::var("K").map(|v| v.parse().unwrap()).unwrap_or(2);
    let tau = std::env::var("TAU").map(|v| v.parse().unwrap()).unwrap_or(0.125);
    let p = (k + 1) as u8;
    let degrees = vec![p; mesh.n_active()];
    let tol = 1e-9;
    let is_outflow = move |x: [f64; 2]| x[0] > 1.64 - tol;
    let bc = SystemBc {
        velocity: DirichletSpec { conditions: vec![BoundaryCondition::zero(move |x| !is_outflow(x))] },
        pressure: DirichletSpec::none(),
        pin_pressure: None,
    };
    let chain = LevelChain::hp(&mesh, &degrees, Some(PressureRule::TaylorHood), &bc, 1, true).unwrap();
    let basis = Arc::new(TemporalBasis::new(k));
    let layout = chain.finest().layout.clone();
    let mass: Arc<dyn MgOperator> = Arc::new(MassOperator::block_mass(layout.clone()));
    let stiff: Arc<dyn MgOperator> = Arc::new(StokesOperator::new(layout.clone(), nu).unwrap().with_identity_rows(false));
    let system = SlabSystem::new(basis.clone(), tau, mass, stiff, chain.finest().constrained_dofs()).unwrap();
    for cfg_name in ["cheb5", "cheb7"] {
        let smoother = match cfg_name {
            "cheb5" => SmootherConfig::chebyshev_jacobi_asm(5),
            _ => SmootherConfig::chebyshev_jacobi_asm(7),
        };
        let mut make_ops = |_l: usize, spaces: &flowmg_core::mg::LevelSpaces| {
            let m: Arc<dyn MgOperator> = Arc::new(MassOperator::block_mass(spaces.layout.clone()));
            let a: Arc<dyn MgOperator> = Arc::new(StokesOperator::new(spaces.layout.clone(), nu)?.with_identity_rows(false));
            Ok((m, a))
        };
        let (mg, _) = build_stmg(&chain, &basis, tau, &mut make_ops, &smoother).unwrap();
        let n = flowmg_core::op::LinearOperator::n(&system);
        let mut rng = SplitMix64::new(3);
        let mut b: Vec<f64> = rng.vector(n);
        for s in 0..system.stages() { for &c in &system.constrained { b[s * system.n_space() + c] = 0.0; } }
        let x0 = vec![0.0; n];
        let cfgk = flowmg_core::solver::KrylovConfig::new(1e-8, 300);
        let (_, st) = flowmg_core::solver::solve_gmres(&system, Some(&mg), &b, &x0, &cfgk).unwrap();
        eprintln!("k={k} tau={tau} {cfg_name}: gmres its {} converged {}", st.iterations, st.converged);
    }
    panic!("probe");
}
