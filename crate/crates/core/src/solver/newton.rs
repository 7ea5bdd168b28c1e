//! Newton-Krylov driver for the stabilized Navier-Stokes equations with a
//! monolithic multigrid preconditioner, BDF2 time marching, and the Reynolds
//! ramp for steady states.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::la::norm2;
use crate::mg::hierarchy::{build_multigrid, PatchRule};
use crate::mg::{LevelChain, MgOperator, Multigrid, SmootherConfig};
use crate::num::Scalar;
use crate::op::{BdfScheme, NsOperator, NsParameters, Transient};

use super::krylov::{solve_gmres, KrylovConfig};

#[derive(Clone, Copy, Debug)]
pub struct NewtonConfig {
    pub abs_tol: Scalar,
    pub rel_tol: Scalar,
    pub max_iter: usize,
    pub linear: KrylovConfig,
    pub damping: Scalar,
}

impl NewtonConfig {
    pub fn new() -> NewtonConfig {
        NewtonConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_iter: 20,
            // fixed Eisenstat-Walker-style forcing term
            linear: KrylovConfig::new(1e-4, 200),
            damping: 1.0,
        }
    }
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Debug, Default)]
pub struct NewtonStats {
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    pub residual_history: Vec<Scalar>,
    pub per_step_linear: Vec<usize>,
}

impl NewtonStats {
    /// Linear iterations per nonlinear iteration, as in the papers' tables.
    pub fn avg_linear(&self) -> Scalar {
        if self.newton_iterations == 0 {
            0.0
        } else {
            self.linear_iterations as Scalar / self.newton_iterations as Scalar
        }
    }
}

/// Navier-Stokes solver context: the level chain with one NsOperator per
/// level. Geometry-dependent pieces are built once; Jacobians and smoothers
/// are re-linearized per Newton step.
pub struct NsContext {
    pub chain: Arc<LevelChain>,
    /// the operator the residual and outer Jacobian act on (active mesh)
    pub outer_op: Arc<NsOperator>,
    pub level_ops: Vec<Arc<NsOperator>>,
    pub smoother: SmootherConfig,
    pub patch_rule: Option<PatchRule>,
}

impl NsContext {
    pub fn new(
        chain: Arc<LevelChain>,
        params: NsParameters,
        smoother: SmootherConfig,
        patch_rule: Option<PatchRule>,
    ) -> Result<NsContext> {
        let mut level_ops = Vec::with_capacity(chain.levels.len());
        for lvl in &chain.levels {
            level_ops.push(NsOperator::new(lvl.layout.clone(), params.clone())?);
        }
        let outer_op = NsOperator::new(chain.outer.layout.clone(), params)?;
        Ok(NsContext {
            chain,
            outer_op,
            level_ops,
            smoother,
            patch_rule,
        })
    }

    pub fn finest_op(&self) -> &Arc<NsOperator> {
        &self.outer_op
    }

    pub fn n(&self) -> usize {
        self.chain.n_system
    }

    /// Level states from an outer state: value copies where level cells are
    /// active in the outer mesh, cell-local interpolation from the next finer
    /// level elsewhere (fine to coarse).
    pub fn restrict_state(&self, state: &[Scalar]) -> Vec<Vec<Scalar>> {
        let n_levels = self.chain.levels.len();
        let mut states = vec![Vec::new(); n_levels];
        for l in (0..n_levels).rev() {
            let mut level_state = vec![0.0; self.chain.levels[l].n_dofs()];
            if l + 1 < n_levels {
                self.chain.transfers[l]
                    .interpolate_to_coarse(&states[l + 1], &mut level_state)
                    .expect("chain transfer sizes");
            }
            for &(od, ld) in &self.chain.state_copy[l] {
                level_state[ld] = state[od];
            }
            states[l] = level_state;
        }
        states
    }

    /// Linearize every level at the given states and assemble the monolithic
    /// multigrid preconditioner.
    pub fn build_preconditioner(
        &self,
        states: &[Vec<Scalar>],
        olds: Option<(&[Vec<Scalar>], Option<&[Vec<Scalar>]>, BdfScheme)>,
        time: Scalar,
    ) -> Result<Multigrid> {
        let mut factory = |l: usize, _spaces: &crate::mg::LevelSpaces| {
            let transient_store;
            let transient = match &olds {
                Some((o1, o2, scheme)) => {
                    transient_store = Transient {
                        scheme: *scheme,
                        old1: &o1[l],
                        old2: o2.map(|v| &v[l][..]),
                    };
                    Some(&transient_store)
                }
                None => None,
            };
            let jac = self.level_ops[l].linearize(&states[l], time, transient);
            Ok(Box::new(jac) as Box<dyn MgOperator>)
        };
        build_multigrid(&self.chain, &mut factory, &self.smoother, self.patch_rule)
    }
}

/// Newton loop: solve J delta = -R with GMRES preconditioned by one V-cycle
/// of the monolithic multigrid, updating with constant damping. Divergence
/// (three consecutive residual growths) aborts with the history.
pub fn newton_solve(
    ctx: &NsContext,
    state: &mut Vec<Scalar>,
    time: Scalar,
    transient: Option<(&[Scalar], Option<&[Scalar]>, BdfScheme)>,
    cfg: &NewtonConfig,
) -> Result<NewtonStats> {
    newton_solve_inspect(ctx, state, time, transient, cfg, None)
}

/// `newton_solve` with a per-iterate hook on the current state (verification
/// harnesses run Jacobian checks there).
pub fn newton_solve_inspect(
    ctx: &NsContext,
    state: &mut Vec<Scalar>,
    time: Scalar,
    transient: Option<(&[Scalar], Option<&[Scalar]>, BdfScheme)>,
    cfg: &NewtonConfig,
    mut inspect: Option<&mut dyn FnMut(usize, &Vec<Scalar>)>,
) -> Result<NewtonStats> {
    let op = ctx.finest_op().clone();
    let mut stats = NewtonStats::default();
    let mut growths = 0usize;
    let mut r0_norm = None;
    for _ in 0..cfg.max_iter {
        let tr_store;
        let tr = match transient {
            Some((o1, o2, scheme)) => {
                tr_store = Transient {
                    scheme,
                    old1: o1,
                    old2: o2,
                };
                Some(&tr_store)
            }
            None => None,
        };
        let r = op.residual(state, time, tr);
        let rnorm = norm2(&r);
        stats.residual_history.push(rnorm);
        let r0 = *r0_norm.get_or_insert(rnorm);
        if rnorm <= cfg.abs_tol.max(cfg.rel_tol * r0) {
            return Ok(stats);
        }
        if stats.residual_history.len() >= 2 {
            let prev = stats.residual_history[stats.residual_history.len() - 2];
            if rnorm > prev {
                growths += 1;
                if growths >= 3 {
                    return Err(Error::Diverged(format!(
                        "newton residuals grew 3 consecutive steps: {:?}",
                        stats.residual_history
                    )));
                }
            } else {
                growths = 0;
            }
        }
        if let Some(cb) = inspect.as_deref_mut() {
            cb(stats.newton_iterations, state);
        }
        // linearize all levels at the current state
        let states = ctx.restrict_state(state);
        let olds = match transient {
            Some((o1, o2, scheme)) => {
                let o1l = ctx.restrict_state(o1);
                let o2l = o2.map(|v| ctx.restrict_state(v));
                Some((o1l, o2l, scheme))
            }
            None => None,
        };
        let mg = ctx.build_preconditioner(
            &states,
            olds.as_ref().map(|(o1, o2, s)| (&o1[..], o2.as_deref(), *s)),
            time,
        )?;
        let jac = op.linearize(
            state,
            time,
            match transient {
                Some((o1, o2, scheme)) => {
                    // reuse the finest-level transient for the Jacobian
                    Some(Transient {
                        scheme,
                        old1: o1,
                        old2: o2,
                    })
                }
                None => None,
            }
            .as_ref(),
        );
        let rhs: Vec<Scalar> = r.iter().map(|v| -v).collect();
        let x0 = vec![0.0; rhs.len()];
        let (delta, lin) = solve_gmres(&jac, Some(&mg), &rhs, &x0, &cfg.linear)?;
        stats.linear_iterations += lin.iterations;
        stats.per_step_linear.push(lin.iterations);
        stats.newton_iterations += 1;
        for (s, d) in state.iter_mut().zip(&delta) {
            *s += cfg.damping * d;
        }
    }
    // max_iter exhausted: report the history
    let last = *stats.residual_history.last().unwrap_or(&Scalar::NAN);
    let r0 = r0_norm.unwrap_or(Scalar::NAN);
    if last <= cfg.abs_tol.max(cfg.rel_tol * r0) {
        Ok(stats)
    } else {
        Err(Error::Diverged(format!(
            "newton did not converge in {} iterations: {:?}",
            cfg.max_iter, stats.residual_history
        )))
    }
}

#[derive(Clone, Debug, Default)]
pub struct MarchStats {
    pub n_steps: usize,
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    pub per_step: Vec<NewtonStats>,
}

impl MarchStats {
    pub fn avg_newton(&self) -> Scalar {
        if self.n_steps == 0 {
            0.0
        } else {
            self.newton_iterations as Scalar / self.n_steps as Scalar
        }
    }

    pub fn avg_linear(&self) -> Scalar {
        if self.newton_iterations == 0 {
            0.0
        } else {
            self.linear_iterations as Scalar / self.newton_iterations as Scalar
        }
    }
}

/// BDF2 time marching (BDF1 on the first step). `set_bc` imposes the
/// Dirichlet values of the state at a given time. With `cfl` set, the step
/// size follows dt = cfl * h_min / max|u|.
#[allow(clippy::too_many_arguments)]
pub fn bdf2_march(
    ctx: &NsContext,
    state: &mut Vec<Scalar>,
    t_end: Scalar,
    dt: Scalar,
    cfl: Option<Scalar>,
    set_bc: &mut dyn FnMut(&mut Vec<Scalar>, Scalar),
    cfg: &NewtonConfig,
    mut on_step: Option<&mut dyn FnMut(usize, Scalar, &Vec<Scalar>, &NewtonStats)>,
) -> Result<MarchStats> {
    if dt <= 0.0 {
        return Err(Error::NonPositiveTimeStep);
    }
    let h_min = ctx
        .chain
        .finest()
        .layout
        .space(0)
        .mesh()
        .active_cells()
        .map(|c| c.diameter())
        .fold(Scalar::INFINITY, Scalar::min);
    let mut stats = MarchStats::default();
    let mut t = 0.0;
    let mut old1 = state.clone();
    let mut old2: Option<Vec<Scalar>> = None;
    let mut step = 0usize;
    while t < t_end - 1e-12 {
        let dt_step = match cfl {
            Some(c) => {
                let umax = max_velocity(ctx, state).max(1e-12);
                (c * h_min / umax).min(t_end - t).min(dt * 100.0)
            }
            None => dt.min(t_end - t),
        };
        let scheme = if old2.is_none() {
            BdfScheme::bdf1(dt_step)?
        } else {
            BdfScheme::bdf2(dt_step)?
        };
        t += dt_step;
        set_bc(state, t);
        let o1 = old1.clone();
        let o2 = old2.clone();
        let result = newton_solve(
            ctx,
            state,
            t,
            Some((&o1, o2.as_deref(), scheme)),
            cfg,
        );
        let nstats = result.map_err(|e| Error::Slab {
            slab: step,
            reason: Box::new(e),
        })?;
        stats.n_steps += 1;
        stats.newton_iterations += nstats.newton_iterations;
        stats.linear_iterations += nstats.linear_iterations;
        if let Some(cb) = on_step.as_deref_mut() {
            cb(step, t, state, &nstats);
        }
        stats.per_step.push(nstats);
        old2 = Some(old1);
        old1 = state.clone();
        step += 1;
    }
    Ok(stats)
}

fn max_velocity(ctx: &NsContext, state: &[Scalar]) -> Scalar {
    let layout = &ctx.chain.finest().layout;
    let n_s = layout.space(0).n_dofs();
    let mut umax: Scalar = 0.0;
    for i in 0..n_s {
        let ux = state[i];
        let uy = state[layout.offset(1) + i];
        umax = umax.max((ux * ux + uy * uy).sqrt());
    }
    umax
}

/// Steady solves over an increasing Reynolds sequence, each warm-started
/// from the previous solution. The caller maps Re to a context (viscosity
/// changes the operators).
pub fn ramp_reynolds(
    make_ctx: &mut dyn FnMut(Scalar) -> Result<NsContext>,
    reynolds: &[Scalar],
    state: &mut Vec<Scalar>,
    set_bc: &mut dyn FnMut(&mut Vec<Scalar>, Scalar),
    cfg: &NewtonConfig,
) -> Result<Vec<NewtonStats>> {
    if reynolds.is_empty() {
        return Err(Error::Invalid("empty Reynolds sequence".into()));
    }
    let mut all = Vec::new();
    for &re in reynolds {
        let ctx = make_ctx(re)?;
        set_bc(state, 0.0);
        let stats = newton_solve(&ctx, state, 0.0, None, cfg)?;
        all.push(stats);
    }
    Ok(all)
}
