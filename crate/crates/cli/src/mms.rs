//! Manufactured-solution verification: convergence orders for the steady
//! Stokes solver, the Kovasznay steady Navier-Stokes solve, BDF2 Taylor-Green
//! marching, and the DG(k) space-time Stokes discretization.

use std::path::Path;
use std::sync::Arc;

use flowmg_core::disc::{
    l2_error, BlockSpace, BoundaryCondition, ConstraintSet, DirichletSpec, PressureRule,
    SolutionField,
};
use flowmg_core::la::norm2;
use flowmg_core::manufactured::{
    kovasznay, separable_stokes, stokes_divfree, taylor_green, SteadyCase,
};
use flowmg_core::mesh::{Geometry, Mesh};
use flowmg_core::mg::hierarchy::PatchRule;
use flowmg_core::mg::{LevelChain, MgOperator, SmootherConfig, SystemBc};
use flowmg_core::op::{LinearOperator, MassOperator, NsParameters, StokesOperator};
use flowmg_core::poly::LagrangeBasis;
use flowmg_core::quad::gauss_legendre;
use flowmg_core::solver::{
    bdf2_march, newton_solve, newton_solve_inspect, KrylovConfig, NewtonConfig, NsContext,
};
use flowmg_core::spacetime::{build_stmg, march_slabs, SlabSystem, TemporalBasis};
use flowmg_core::Scalar;

use crate::config::Config;
use crate::setup::{refine_all, CsvField, CsvFile};
use crate::stokes::{solve_stokes, StokesProblem};
use crate::RunError;

#[derive(Clone, Debug)]
pub struct MmsReport {
    pub case: String,
    pub measured_order: Scalar,
    pub expected_order: Scalar,
    pub tolerance: Scalar,
    pub pass: bool,
    pub errors: Vec<Scalar>,
    pub notes: String,
}

impl MmsReport {
    fn evaluate(case: &str, errors: Vec<Scalar>, expected: Scalar, tol: Scalar, notes: String) -> MmsReport {
        let order = fitted_order(&errors);
        MmsReport {
            case: case.to_string(),
            measured_order: order,
            expected_order: expected,
            tolerance: tol,
            pass: (order - expected).abs() <= tol,
            errors,
            notes,
        }
    }
}

/// Least-squares slope of log(error) against level index (halved h or dt).
pub fn fitted_order(errors: &[Scalar]) -> Scalar {
    let pts: Vec<(Scalar, Scalar)> = errors
        .iter()
        .enumerate()
        .map(|(i, e)| (i as Scalar, e.max(1e-300).ln()))
        .collect();
    let n = pts.len() as Scalar;
    let sx: Scalar = pts.iter().map(|p| p.0).sum();
    let sy: Scalar = pts.iter().map(|p| p.1).sum();
    let sxx: Scalar = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: Scalar = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    // levels halve h (or dt): order = -slope / ln 2
    -slope / std::f64::consts::LN_2
}

pub fn run(cfg: &Config, out: &Path, seed: u64, ranks: usize) -> Result<Vec<MmsReport>, RunError> {
    let cases = cfg.str_or("mms", "cases", "stokes kovasznay taylor-green spacetime");
    let mut reports = Vec::new();
    for case in cases.split_whitespace() {
        let report = match case {
            "stokes" => stokes_order(cfg, ranks)?,
            "kovasznay" => kovasznay_order(cfg, seed)?,
            "taylor-green" => taylor_green_order(cfg)?,
            "spacetime" => spacetime_order(cfg)?,
            other => {
                return Err(RunError::Config(crate::config::ConfigError(format!(
                    "unknown mms case `{other}`"
                ))))
            }
        };
        reports.push(report);
    }
    let mut csv = CsvFile::new(&["case", "measured_order", "expected", "tolerance", "pass"]);
    for r in &reports {
        csv.row(&[
            CsvField::Text(r.case.clone()),
            CsvField::Num(r.measured_order),
            CsvField::Num(r.expected_order),
            CsvField::Num(r.tolerance),
            CsvField::Text(if r.pass { "yes".into() } else { "no".into() }),
        ]);
    }
    csv.write(&out.join("stats.csv")).map_err(RunError::io)?;
    Ok(reports)
}

fn dirichlet_from_case(case: &SteadyCase) -> [DirichletSpec; 2] {
    let u0 = case.u[0].clone();
    let u1 = case.u[1].clone();
    [
        DirichletSpec {
            conditions: vec![BoundaryCondition::new(|_| true, move |x, _| u0(x))],
        },
        DirichletSpec {
            conditions: vec![BoundaryCondition::new(|_| true, move |x, _| u1(x))],
        },
    ]
}

/// Steady Stokes Q2/Q1: velocity L2 order 3 under uniform refinement.
pub fn stokes_order(cfg: &Config, ranks: usize) -> Result<MmsReport, RunError> {
    let nu = cfg.f64_or("mms", "stokes_nu", 1.0)?;
    let levels = cfg.usize_or("mms", "stokes_levels", 3)?;
    let base = cfg.usize_or("mms", "stokes_base", 4)? as u32;
    let case = stokes_divfree(nu);
    let mut mesh = Arc::new(Mesh::create(Geometry::unit_square(), (base, base)).unwrap());
    let mut errors = Vec::new();
    for _ in 0..levels {
        let degrees = vec![2u8; mesh.n_active()];
        let pin_value = (case.p)([0.0, 0.0]);
        let fx = case.u[0].clone();
        let fy = case.u[1].clone();
        let forcing = case.forcing.clone();
        let problem = StokesProblem {
            mesh: mesh.clone(),
            degrees,
            nu,
            velocity_bc: dirichlet_from_case(&case),
            pressure_pin: Some(([0.0, 0.0], pin_value)),
            forcing: Some([
                Arc::new(move |x| forcing(x, 0.0)[0]),
                {
                    let forcing = case.forcing.clone();
                    Arc::new(move |x| forcing(x, 0.0)[1])
                },
            ]),
            smoother: SmootherConfig::chebyshev_jacobi(5),
            patch_rule: None,
            fgmres: KrylovConfig::new(1e-10, 300),
            ranks,
        };
        let sol = solve_stokes(&problem).map_err(RunError::Solver)?;
        let field = SolutionField {
            layout: sol.layout.clone(),
            values: sol.values.clone(),
        };
        let e0 = l2_error(&field, 0, fx.as_ref(), 5);
        let e1 = l2_error(&field, 1, fy.as_ref(), 5);
        errors.push((e0 * e0 + e1 * e1).sqrt());
        mesh = Arc::new(refine_all(&mesh));
    }
    Ok(MmsReport::evaluate(
        "stokes",
        errors,
        3.0,
        0.2,
        "velocity L2, Q2/Q1 Taylor-Hood".into(),
    ))
}

struct NsSteadySetup {
    ctx: NsContext,
    chain: Arc<LevelChain>,
    state: Vec<Scalar>,
}

fn kovasznay_setup(
    mesh: &Arc<Mesh>,
    case: &SteadyCase,
    stabilize_ramp: bool,
) -> Result<NsSteadySetup, RunError> {
    let degrees = vec![2u8; mesh.n_active()];
    let [bc_ux, bc_uy] = dirichlet_from_case(case);
    let sys_bc = SystemBc {
        velocity: bc_ux.clone(),
        pressure: DirichletSpec::none(),
        pin_pressure: Some([-0.5, -0.5]),
    };
    let chain = Arc::new(
        LevelChain::global_coarsening(mesh, &degrees, Some(PressureRule::EqualOrder), &sys_bc, 1)
            .map_err(RunError::Solver)?,
    );
    let params = if stabilize_ramp {
        NsParameters::stokes(case.nu, true)
    } else {
        NsParameters::navier_stokes(case.nu, true)
    };
    let ctx = NsContext::new(
        chain.clone(),
        params,
        SmootherConfig::jacobi(5, 0.6),
        None,
    )
    .map_err(RunError::Solver)?;
    // state with exact boundary values; the pressure pin is homogeneous, so
    // compare pressures only up to a constant
    let bs = BlockSpace::distribute_dofs(mesh, &degrees, PressureRule::EqualOrder)
        .map_err(RunError::Solver)?;
    let cons_ux = ConstraintSet::build(&bs.velocity, &bc_ux, 0.0);
    let cons_uy = ConstraintSet::build(&bs.velocity, &bc_uy, 0.0);
    let n_s = bs.velocity.n_dofs();
    let mut state = vec![0.0; chain.n_system];
    cons_ux.distribute(&mut state[0..n_s]);
    cons_uy.distribute(&mut state[n_s..2 * n_s]);
    Ok(NsSteadySetup { ctx, chain, state })
}

/// Kovasznay steady NS, Q2Q2 stabilized: velocity L2 order 3; Newton from a
/// Stokes initial guess with finite-difference Jacobian checks per iterate.
pub fn kovasznay_order(cfg: &Config, seed: u64) -> Result<MmsReport, RunError> {
    let levels = cfg.usize_or("mms", "kovasznay_levels", 3)?;
    let re = cfg.f64_or("mms", "kovasznay_re", 40.0)?;
    let case = kovasznay(1.0 / re);
    let geometry = Geometry::Rectangle {
        x0: -0.5,
        y0: -0.5,
        x1: 1.0,
        y1: 1.5,
    };
    let mut mesh = Arc::new(Mesh::create(geometry, (3, 4)).unwrap());
    let mut errors = Vec::new();
    let mut fd_failures = 0usize;
    let mut last_history = Vec::new();
    for level in 0..levels {
        let sol = kovasznay_solve(&mesh, &case, seed, level == levels - 1, &mut fd_failures)?;
        last_history = sol.1;
        let field = sol.0;
        let e0 = l2_error(&field, 0, case.u[0].as_ref(), 5);
        let e1 = l2_error(&field, 1, case.u[1].as_ref(), 5);
        errors.push((e0 * e0 + e1 * e1).sqrt());
        mesh = Arc::new(refine_all(&mesh));
    }
    let notes = format!(
        "fd_failures={fd_failures}; final residual history {last_history:?}"
    );
    let mut report = MmsReport::evaluate("kovasznay", errors, 3.0, 0.3, notes);
    report.pass &= fd_failures == 0;
    Ok(report)
}

/// Solve one Kovasznay level; returns the field and the Newton history.
fn kovasznay_solve(
    mesh: &Arc<Mesh>,
    case: &SteadyCase,
    seed: u64,
    check_fd: bool,
    fd_failures: &mut usize,
) -> Result<(SolutionField, Vec<Scalar>), RunError> {
    // Stokes initial guess: same setup with convection off
    let mut setup = kovasznay_setup(mesh, case, true)?;
    let mut cfg_lin = NewtonConfig::new();
    cfg_lin.rel_tol = 1e-10;
    cfg_lin.linear = KrylovConfig::new(1e-8, 600);
    newton_solve(&setup.ctx, &mut setup.state, 0.0, None, &cfg_lin).map_err(RunError::Solver)?;

    // full Navier-Stokes Newton from that state
    let ns = kovasznay_setup(mesh, case, false)?;
    let mut state = setup.state;
    let mut cfg_ns = NewtonConfig::new();
    cfg_ns.rel_tol = 1e-10;
    cfg_ns.abs_tol = 1e-12;
    cfg_ns.linear = KrylovConfig::new(1e-6, 600);
    let op = ns.ctx.finest_op().clone();
    let mut inspect = |_it: usize, s: &Vec<Scalar>| {
        if !check_fd {
            return;
        }
        // finite-difference Jacobian check at this iterate, delta1 frozen
        let jac = op.linearize(s, 0.0, None);
        let d1 = op.delta1_cells(s, None);
        let mut rng = flowmg_core::la::SplitMix64::new(seed ^ 0xfd);
        let mut d: Vec<Scalar> = rng.vector(s.len());
        ns.chain.outer.layout.distribute_homogeneous(&mut d);
        let nd = norm2(&d);
        d.iter_mut().for_each(|v| *v /= nd);
        let eps = 1e-6;
        let r0 = op.residual_frozen(s, 0.0, None, Some(&d1));
        let s_eps: Vec<Scalar> = s.iter().zip(&d).map(|(a, b)| a + eps * b).collect();
        let r1 = op.residual_frozen(&s_eps, 0.0, None, Some(&d1));
        let fd: Vec<Scalar> = r0.iter().zip(&r1).map(|(a, b)| (b - a) / eps).collect();
        let jd = jac.apply_alloc(&d);
        let diff: Scalar = fd
            .iter()
            .zip(&jd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<Scalar>()
            .sqrt();
        if diff > 1e-5 * norm2(&jd).max(1e-30) {
            *fd_failures += 1;
        }
    };
    let stats = newton_solve_inspect(&ns.ctx, &mut state, 0.0, None, &cfg_ns, Some(&mut inspect))
        .map_err(RunError::Solver)?;
    let field = SolutionField {
        layout: ns.chain.outer.layout.clone(),
        values: state,
    };
    Ok((field, stats.residual_history))
}

/// Kovasznay Newton history for the superlinearity criterion.
pub fn kovasznay_newton_history(cfg: &Config, seed: u64) -> Result<(Vec<Scalar>, usize), RunError> {
    let re = cfg.f64_or("mms", "kovasznay_re", 40.0)?;
    let case = kovasznay(1.0 / re);
    let geometry = Geometry::Rectangle {
        x0: -0.5,
        y0: -0.5,
        x1: 1.0,
        y1: 1.5,
    };
    let refine = cfg.usize_or("mms", "kovasznay_history_refine", 1)?;
    let mut mesh = Arc::new(Mesh::create(geometry, (3, 4)).unwrap());
    for _ in 0..refine {
        mesh = Arc::new(refine_all(&mesh));
    }
    let mut failures = 0usize;
    let (_, history) = kovasznay_solve(&mesh, &case, seed, true, &mut failures)?;
    Ok((history, failures))
}

/// Taylor-Green BDF2: temporal order 2 against a small-dt reference on a
/// fixed mesh; also reports the kinetic-energy decay mismatch.
pub fn taylor_green_order(cfg: &Config) -> Result<MmsReport, RunError> {
    let nu = cfg.f64_or("mms", "tg_nu", 0.01)?;
    let case = taylor_green(nu);
    let two_pi = 2.0 * std::f64::consts::PI;
    let mesh = Arc::new(
        Mesh::create(
            Geometry::Rectangle {
                x0: 0.0,
                y0: 0.0,
                x1: two_pi,
                y1: two_pi,
            },
            (4, 4),
        )
        .unwrap(),
    );
    let t_end = cfg.f64_or("mms", "tg_t_end", 0.4)?;
    let degrees = vec![2u8; mesh.n_active()];
    let u0 = case.u[0].clone();
    let u1 = case.u[1].clone();
    let bc_ux = DirichletSpec {
        conditions: vec![BoundaryCondition::new(|_| true, move |x, t| u0(x, t))],
    };
    let bc_uy = DirichletSpec {
        conditions: vec![BoundaryCondition::new(|_| true, move |x, t| u1(x, t))],
    };
    let sys_bc = SystemBc {
        velocity: bc_ux.clone(),
        pressure: DirichletSpec::none(),
        pin_pressure: Some([two_pi / 2.0, two_pi / 2.0]),
    };
    // Taylor-Hood without stabilization: the delta1(dt) terms would otherwise
    // make the discrete system itself dt-dependent and hide the BDF2 order
    let chain = Arc::new(
        LevelChain::global_coarsening(&mesh, &degrees, Some(PressureRule::TaylorHood), &sys_bc, 1)
            .map_err(RunError::Solver)?,
    );
    let mut params = NsParameters::navier_stokes(nu, false);
    params.convection = true;
    let ctx = NsContext::new(
        chain.clone(),
        params,
        SmootherConfig::asm(2, 1.0),
        Some(PatchRule::Cells),
    )
    .map_err(RunError::Solver)?;
    let bs = BlockSpace::distribute_dofs(&mesh, &degrees, PressureRule::TaylorHood)
        .map_err(RunError::Solver)?;
    let mut cons_ux = ConstraintSet::build(&bs.velocity, &bc_ux, 0.0);
    let mut cons_uy = ConstraintSet::build(&bs.velocity, &bc_uy, 0.0);
    let n_s = bs.velocity.n_dofs();
    let layout = chain.outer.layout.clone();
    let ic = {
        let u0 = case.u[0].clone();
        let u1 = case.u[1].clone();
        let p = case.p.clone();
        let f0 = move |x: [Scalar; 2]| u0(x, 0.0);
        let f1 = move |x: [Scalar; 2]| u1(x, 0.0);
        let fp = move |x: [Scalar; 2]| p(x, 0.0);
        SolutionField::interpolate(&layout, &[&f0, &f1, &fp]).values
    };
    let mut newton = NewtonConfig::new();
    newton.rel_tol = 1e-9;
    newton.abs_tol = 1e-11;
    newton.linear = KrylovConfig::new(1e-6, 300);
    let mut run_dt = |dt: Scalar| -> Result<Vec<Scalar>, RunError> {
        let mut state = ic.clone();
        let mut set_bc = |s: &mut Vec<Scalar>, t: Scalar| {
            cons_ux.refresh_time(&bc_ux, t);
            cons_uy.refresh_time(&bc_uy, t);
            cons_ux.distribute(&mut s[0..n_s]);
            cons_uy.distribute(&mut s[n_s..2 * n_s]);
        };
        bdf2_march(&ctx, &mut state, t_end, dt, None, &mut set_bc, &newton, None)
            .map_err(RunError::Solver)?;
        Ok(state)
    };
    let reference = run_dt(t_end / 64.0)?;
    let mut errors = Vec::new();
    for steps in [4usize, 8, 16] {
        let sol = run_dt(t_end / steps as Scalar)?;
        let e: Scalar = sol
            .iter()
            .take(2 * n_s)
            .zip(reference.iter().take(2 * n_s))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<Scalar>()
            .sqrt();
        errors.push(e);
    }
    // kinetic-energy decay against exp(-4 nu t)
    let mass = MassOperator::block_mass(layout.clone());
    let energy = |v: &[Scalar]| {
        let mv = mass.apply_alloc(v);
        0.5 * flowmg_core::la::dot(&mv[..2 * n_s], &v[..2 * n_s])
    };
    let e_t = energy(&reference);
    let e_0 = energy(&ic);
    let decay_err = (e_t / e_0 - (-4.0 * nu * t_end).exp()).abs();
    Ok(MmsReport::evaluate(
        "taylor-green",
        errors,
        2.0,
        0.2,
        format!("BDF2 Richardson; energy-decay mismatch {decay_err:.3e}"),
    ))
}

/// Transient Stokes DG(k): pure temporal order against a fine-slab reference,
/// measured in the L2-in-time norm of the dof-vector difference.
pub fn spacetime_order(cfg: &Config) -> Result<MmsReport, RunError> {
    let nu = cfg.f64_or("mms", "st_nu", 0.5)?;
    let k = cfg.usize_or("mms", "st_k", 1)?;
    let t_end = cfg.f64_or("mms", "st_t_end", 0.8)?;
    let case = separable_stokes(nu);
    let mesh = Arc::new(Mesh::create(Geometry::unit_square(), (3, 3)).unwrap());
    let degrees = vec![3u8; mesh.n_active()];
    let u0 = case.u[0].clone();
    let u1 = case.u[1].clone();
    let bc_ux = DirichletSpec {
        conditions: vec![BoundaryCondition::new(|_| true, move |x, t| u0(x, t))],
    };
    let bc_uy = DirichletSpec {
        conditions: vec![BoundaryCondition::new(|_| true, move |x, t| u1(x, t))],
    };
    let sys_bc = SystemBc {
        velocity: bc_ux.clone(),
        pressure: DirichletSpec::none(),
        pin_pressure: Some([0.5, 0.5]),
    };
    let chain = LevelChain::hp(
        &mesh,
        &degrees,
        Some(PressureRule::TaylorHood),
        &sys_bc,
        1,
        true,
    )
    .map_err(RunError::Solver)?;
    let layout = chain.finest().layout.clone();
    let n = layout.n_dofs();
    let basis = Arc::new(TemporalBasis::new(k));
    let bs = BlockSpace::distribute_dofs(&mesh, &degrees, PressureRule::TaylorHood)
        .map_err(RunError::Solver)?;
    let mut cons_ux = ConstraintSet::build(&bs.velocity, &bc_ux, 0.0);
    let mut cons_uy = ConstraintSet::build(&bs.velocity, &bc_uy, 0.0);
    let n_s = bs.velocity.n_dofs();
    let ic = {
        let u0 = case.u[0].clone();
        let u1 = case.u[1].clone();
        let p = case.p.clone();
        let f0 = move |x: [Scalar; 2]| u0(x, 0.0);
        let f1 = move |x: [Scalar; 2]| u1(x, 0.0);
        let fp = move |x: [Scalar; 2]| p(x, 0.0);
        SolutionField::interpolate(&layout, &[&f0, &f1, &fp]).values
    };
    let kb = flowmg_core::op::KernelBase::new(layout.clone(), 1);
    let rule = gauss_legendre::<Scalar>(k + 2);
    let tb = LagrangeBasis::new(basis.nodes.clone());
    let forcing = case.forcing.clone();
    let mut run_tau = |n_slabs: usize| -> Result<Trajectory, RunError> {
        let tau = t_end / n_slabs as Scalar;
        let mass: Arc<dyn MgOperator> = Arc::new(MassOperator::block_mass(layout.clone()));
        let stiff: Arc<dyn MgOperator> = Arc::new(
            StokesOperator::new(layout.clone(), nu)
                .map_err(RunError::Solver)?
                .with_identity_rows(false),
        );
        let system = SlabSystem::new(
            basis.clone(),
            tau,
            mass,
            stiff,
            chain.finest().constrained_dofs(),
        )
        .map_err(RunError::Solver)?;
        let mut make_ops = |_l: usize, spaces: &flowmg_core::mg::LevelSpaces| {
            let m: Arc<dyn MgOperator> = Arc::new(MassOperator::block_mass(spaces.layout.clone()));
            let a: Arc<dyn MgOperator> =
                Arc::new(StokesOperator::new(spaces.layout.clone(), nu)?.with_identity_rows(false));
            Ok((m, a))
        };
        let (mg, _) = build_stmg(&chain, &basis, tau, &mut make_ops, &SmootherConfig::asm(1, 1.0))
            .map_err(RunError::Solver)?;
        let q = basis.stages();
        let forcing = forcing.clone();
        let kb = &kb;
        let rule = &rule;
        let tb = &tb;
        let mut loads = move |slab: usize, _prev: &[Scalar]| -> Vec<Scalar> {
            let t0 = slab as Scalar * tau;
            let mut out = vec![0.0; q * n];
            for (g, &sg) in rule.points.iter().enumerate() {
                let t = t0 + tau * sg;
                let f = forcing.clone();
                let fx = move |x: [Scalar; 2]| f(x, t)[0];
                let f = forcing.clone();
                let fy = move |x: [Scalar; 2]| f(x, t)[1];
                let f_vec = flowmg_core::op::assemble_rhs(kb, &[Some(&fx), Some(&fy), None]);
                for s in 0..q {
                    let w = tau * rule.weights[g] * tb.value(s, sg);
                    for d in 0..n {
                        out[s * n + d] += w * f_vec[d];
                    }
                }
            }
            out
        };
        let nodes = basis.nodes.clone();
        let mut stage_bc = |slab: usize, x: &mut [Scalar]| {
            let t0 = slab as Scalar * tau;
            for (s, &node) in nodes.iter().enumerate() {
                let t = t0 + tau * node;
                cons_ux.refresh_time(&bc_ux, t);
                cons_uy.refresh_time(&bc_uy, t);
                let slice = &mut x[s * n..(s + 1) * n];
                cons_ux.distribute(&mut slice[0..n_s]);
                cons_uy.distribute(&mut slice[n_s..2 * n_s]);
            }
        };
        let gmres = KrylovConfig::new(1e-11, 400);
        let mut slabs = Vec::with_capacity(n_slabs);
        march_slabs(
            &system,
            &mg,
            &ic,
            n_slabs,
            &mut loads,
            &mut stage_bc,
            &gmres,
            Some(&mut |_i, x: &[Scalar]| slabs.push(x.to_vec())),
        )
        .map_err(RunError::Solver)?;
        Ok(Trajectory {
            tau,
            slabs,
            nodes: basis.nodes.clone(),
            n,
        })
    };
    let reference = run_tau(64)?;
    let mut errors = Vec::new();
    let mut endpoint_errors = Vec::new();
    for n_slabs in [4usize, 8, 16] {
        let traj = run_tau(n_slabs)?;
        errors.push(l2_in_time_diff(&traj, &reference, 2 * n_s));
        let a = traj.final_state();
        let b = reference.final_state();
        let e: Scalar = a
            .iter()
            .take(2 * n_s)
            .zip(b.iter().take(2 * n_s))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<Scalar>()
            .sqrt();
        endpoint_errors.push(e);
    }
    let endpoint_order = fitted_order(&endpoint_errors);
    Ok(MmsReport::evaluate(
        "spacetime",
        errors,
        (k + 1) as Scalar,
        0.2,
        format!("DG({k}) L2-in-time; slab-endpoint order {endpoint_order:.2}"),
    ))
}

struct Trajectory {
    tau: Scalar,
    slabs: Vec<Vec<Scalar>>,
    nodes: Vec<Scalar>,
    n: usize,
}

impl Trajectory {
    /// Evaluate the DG-in-time polynomial at physical time t.
    fn eval(&self, t: Scalar, out: &mut [Scalar]) {
        let eps = 1e-12;
        let idx = ((t / self.tau - eps).floor().max(0.0) as usize).min(self.slabs.len() - 1);
        let s_local = (t - idx as Scalar * self.tau) / self.tau;
        let basis = LagrangeBasis::new(self.nodes.clone());
        out.iter_mut().for_each(|v| *v = 0.0);
        let x = &self.slabs[idx];
        for (q, _) in self.nodes.iter().enumerate() {
            let w = basis.value(q, s_local);
            for d in 0..self.n {
                out[d] += w * x[q * self.n + d];
            }
        }
    }

    fn final_state(&self) -> Vec<Scalar> {
        let x = self.slabs.last().unwrap();
        let q = self.nodes.len();
        x[(q - 1) * self.n..].to_vec()
    }
}

/// Integral of the dof-vector difference of two trajectories over the
/// velocity block, via Gauss quadrature per coarse slab.
fn l2_in_time_diff(a: &Trajectory, b: &Trajectory, n_vel: usize) -> Scalar {
    let rule = gauss_legendre::<Scalar>(4);
    let mut total = 0.0;
    let mut va = vec![0.0; a.n];
    let mut vb = vec![0.0; b.n];
    for (i, _) in a.slabs.iter().enumerate() {
        let t0 = i as Scalar * a.tau;
        let mut slab_contrib = 0.0;
        for (g, &sg) in rule.points.iter().enumerate() {
            let t = t0 + a.tau * sg;
            a.eval(t, &mut va);
            b.eval(t, &mut vb);
            let d2: Scalar = va
                .iter()
                .take(n_vel)
                .zip(vb.iter().take(n_vel))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            slab_contrib += a.tau * rule.weights[g] * d2;
        }
        total += slab_contrib;
    }
    total.sqrt()
}
