//! Stabilized Navier-Stokes residual and Jacobian with SUPG/PSPG terms and
//! BDF time derivatives, in the component layout [u_x | u_y | p].
//!
//! Momentum rows: (du/dt + u.grad u - f, v) + nu (grad u, grad v) - (p, div v)
//!                + sum_K delta1 (R_M, u.grad v)_K
//! Continuity rows (negated so the linear part matches the symmetric Stokes
//! operator): -[(div u, q) + sum_K delta1 (R_M, grad q)_K]
//! with the strong residual R_M = du/dt + u.grad u + grad p - nu lap u - f.

use std::sync::Arc;

use crate::disc::tables::TensorEval;
use crate::disc::FieldLayout;
use crate::error::{Error, Result};
use crate::num::Scalar;

use super::{kernel_apply, CellKernel, KernelBase, LinearOperator};

pub type Forcing = Arc<dyn Fn([Scalar; 2], Scalar) -> [Scalar; 2] + Send + Sync>;

/// Backward-differentiation coefficients: du/dt ~ (a0 u^n + a1 u^{n-1} + a2 u^{n-2}) / dt.
#[derive(Clone, Copy, Debug)]
pub struct BdfScheme {
    pub dt: Scalar,
    pub coeffs: [Scalar; 3],
}

impl BdfScheme {
    pub fn bdf1(dt: Scalar) -> Result<BdfScheme> {
        if dt <= 0.0 {
            return Err(Error::NonPositiveTimeStep);
        }
        Ok(BdfScheme {
            dt,
            coeffs: [1.0, -1.0, 0.0],
        })
    }

    pub fn bdf2(dt: Scalar) -> Result<BdfScheme> {
        if dt <= 0.0 {
            return Err(Error::NonPositiveTimeStep);
        }
        Ok(BdfScheme {
            dt,
            coeffs: [1.5, -2.0, 0.5],
        })
    }
}

/// SUPG/PSPG parameter
/// delta1 = [ (2/dt)^2 + (2|u|/h)^2 + (36 nu / h^2)^2 ]^{-1/2};
/// steady problems drop the dt term. All-zero arguments give 0.
pub fn delta1(h: Scalar, u_norm: Scalar, nu: Scalar, dt: Option<Scalar>) -> Scalar {
    let mut s = (2.0 * u_norm / h).powi(2) + (36.0 * nu / (h * h)).powi(2);
    if let Some(dt) = dt {
        s += (2.0 / dt).powi(2);
    }
    if s > 0.0 {
        1.0 / s.sqrt()
    } else {
        0.0
    }
}

#[derive(Clone)]
pub struct NsParameters {
    pub nu: Scalar,
    pub stabilize: bool,
    /// with convection disabled the operator is the (transient) Stokes
    /// system plus the PSPG pressure stabilization
    pub convection: bool,
    pub forcing: Option<Forcing>,
}

impl NsParameters {
    pub fn navier_stokes(nu: Scalar, stabilize: bool) -> NsParameters {
        NsParameters {
            nu,
            stabilize,
            convection: true,
            forcing: None,
        }
    }

    pub fn stokes(nu: Scalar, stabilize: bool) -> NsParameters {
        NsParameters {
            nu,
            stabilize,
            convection: false,
            forcing: None,
        }
    }

    pub fn with_forcing(mut self, f: Forcing) -> NsParameters {
        self.forcing = Some(f);
        self
    }
}

/// Transient context for a residual/Jacobian evaluation.
pub struct Transient<'a> {
    pub scheme: BdfScheme,
    pub old1: &'a [Scalar],
    pub old2: Option<&'a [Scalar]>,
}

pub struct NsOperator {
    base: KernelBase,
    pub params: NsParameters,
}

/// Per-cell linearization data at quadrature points.
struct CellState {
    delta1: Scalar,
    /// per point: u*, physical grad u* (rows = components), strong residual R*
    u: Vec<[Scalar; 2]>,
    grad_u: Vec<[[Scalar; 2]; 2]>,
    r_strong: Vec<[Scalar; 2]>,
}

impl NsOperator {
    pub fn new(layout: FieldLayout, params: NsParameters) -> Result<Arc<NsOperator>> {
        if params.nu <= 0.0 {
            return Err(Error::NonPositiveViscosity);
        }
        assert_eq!(layout.n_components(), 3, "NS layout is [ux, uy, p]");
        // one extra quadrature point for the convective term
        Ok(Arc::new(NsOperator {
            base: KernelBase::new(layout, 2),
            params,
        }))
    }

    pub fn layout(&self) -> &FieldLayout {
        &self.base.layout
    }

    pub fn base(&self) -> &KernelBase {
        &self.base
    }

    fn component_eval(
        &self,
        pos: usize,
        x_loc: &[Scalar],
        with_second: bool,
    ) -> (Vec<[Scalar; 2]>, Vec<[[Scalar; 2]; 2]>, Vec<[Scalar; 2]>, Vec<Scalar>, Vec<[Scalar; 2]>) {
        // returns per-point: u, grad_u(phys), lap_u-ready second data folded in,
        // p values, grad_p(phys). Velocity Laplacian is returned via grad slot 2.
        let geo = &self.base.geometry[pos];
        let tv = self.base.table(pos, 0);
        let tp = self.base.table(pos, 2);
        let ev_v = TensorEval::new(tv);
        let ev_p = TensorEval::new(tp);
        let nv = tv.n_nodes() * tv.n_nodes();
        let np = tp.n_nodes() * tp.n_nodes();
        let n_pts = ev_v.n_points();
        let mut u = vec![[0.0; 2]; n_pts];
        let mut grad_u = vec![[[0.0; 2]; 2]; n_pts];
        let mut lap_u = vec![[0.0; 2]; n_pts];
        for c in 0..2 {
            let mut vals = vec![0.0; n_pts];
            let mut grads = vec![[0.0; 2]; n_pts];
            let mut second = vec![[0.0; 3]; n_pts];
            ev_v.evaluate(
                &x_loc[c * nv..(c + 1) * nv],
                &mut vals,
                &mut grads,
                if with_second { Some(&mut second) } else { None },
            );
            for q in 0..n_pts {
                let it = &geo.inv_t[q];
                let g = [
                    it[0][0] * grads[q][0] + it[0][1] * grads[q][1],
                    it[1][0] * grads[q][0] + it[1][1] * grads[q][1],
                ];
                u[q][c] = vals[q];
                grad_u[q][c] = g;
                if with_second {
                    lap_u[q][c] = laplacian_phys(second[q], g, it, geo.mixed2);
                }
            }
        }
        let mut p_val = vec![0.0; n_pts];
        let mut p_ref_grad = vec![[0.0; 2]; n_pts];
        ev_p.evaluate(&x_loc[2 * nv..2 * nv + np], &mut p_val, &mut p_ref_grad, None);
        let mut grad_p = vec![[0.0; 2]; n_pts];
        for q in 0..n_pts {
            let it = &geo.inv_t[q];
            grad_p[q] = [
                it[0][0] * p_ref_grad[q][0] + it[0][1] * p_ref_grad[q][1],
                it[1][0] * p_ref_grad[q][0] + it[1][1] * p_ref_grad[q][1],
            ];
        }
        // pack laplacian into the unused slot convention: (u, grad_u, lap_u, p, grad_p)
        (u, grad_u, lap_u, p_val, grad_p)
    }

    /// Nonlinear residual; constrained rows are zeroed. The state must have
    /// its constraints distributed (it carries the boundary values).
    pub fn residual(
        &self,
        state: &[Scalar],
        time: Scalar,
        transient: Option<&Transient>,
    ) -> Vec<Scalar> {
        self.residual_frozen(state, time, transient, None)
    }

    /// Residual with per-cell delta1 overridden (frozen at some other state).
    /// Finite-difference checks of the Picard-frozen Jacobian must evaluate
    /// both residuals with the same delta1.
    pub fn residual_frozen(
        &self,
        state: &[Scalar],
        time: Scalar,
        transient: Option<&Transient>,
        frozen_delta1: Option<&[Scalar]>,
    ) -> Vec<Scalar> {
        let layout = &self.base.layout;
        let n = layout.n_dofs();
        assert_eq!(state.len(), n);
        let mut r = vec![0.0; n];
        let mut x_loc = Vec::new();
        let mut old1_loc = Vec::new();
        let mut old2_loc = Vec::new();
        for pos in 0..self.base.n_cells() {
            self.base.gather_direct(pos, state, &mut x_loc);
            if let Some(t) = transient {
                self.base.gather_direct(pos, t.old1, &mut old1_loc);
                if let Some(o2) = t.old2 {
                    self.base.gather_direct(pos, o2, &mut old2_loc);
                } else {
                    old2_loc.clear();
                    old2_loc.resize(x_loc.len(), 0.0);
                }
            }
            let mut y_loc = vec![0.0; x_loc.len()];
            self.residual_cell(
                pos,
                &x_loc,
                transient.map(|t| (t.scheme, &old1_loc[..], &old2_loc[..])),
                time,
                frozen_delta1.map(|d| d[pos]),
                &mut y_loc,
            );
            self.base.scatter(pos, &y_loc, &mut r);
        }
        layout.zero_constrained(&mut r);
        r
    }

    /// Per-cell delta1 values at a state (for freezing across evaluations).
    pub fn delta1_cells(&self, state: &[Scalar], dt: Option<Scalar>) -> Vec<Scalar> {
        let mut x_loc = Vec::new();
        (0..self.base.n_cells())
            .map(|pos| {
                self.base.gather_direct(pos, state, &mut x_loc);
                let (u, _, _, _, _) = self.component_eval(pos, &x_loc, false);
                self.cell_delta1(pos, &u, dt)
            })
            .collect()
    }

    fn cell_delta1(&self, pos: usize, u: &[[Scalar; 2]], dt: Option<Scalar>) -> Scalar {
        if !self.params.stabilize {
            return 0.0;
        }
        let h = self.base.geometry[pos].diameter;
        let u_max = u
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
            .fold(0.0, Scalar::max);
        delta1(h, u_max, self.params.nu, dt)
    }

    fn residual_cell(
        &self,
        pos: usize,
        x_loc: &[Scalar],
        transient: Option<(BdfScheme, &[Scalar], &[Scalar])>,
        time: Scalar,
        frozen_d1: Option<Scalar>,
        y_loc: &mut [Scalar],
    ) {
        let geo = &self.base.geometry[pos];
        let nu = self.params.nu;
        let (u, grad_u, lap_u, p_val, grad_p) = self.component_eval(pos, x_loc, true);
        let n_pts = u.len();
        // BDF time-derivative values at the quadrature points
        let mut udot = vec![[0.0; 2]; n_pts];
        let mut dt_opt = None;
        if let Some((scheme, old1, old2)) = transient {
            dt_opt = Some(scheme.dt);
            let (u1, _, _, _, _) = self.component_eval(pos, old1, false);
            let (u2, _, _, _, _) = self.component_eval(pos, old2, false);
            for q in 0..n_pts {
                for c in 0..2 {
                    udot[q][c] = (scheme.coeffs[0] * u[q][c]
                        + scheme.coeffs[1] * u1[q][c]
                        + scheme.coeffs[2] * u2[q][c])
                        / scheme.dt;
                }
            }
        }
        let d1 = frozen_d1.unwrap_or_else(|| self.cell_delta1(pos, &u, dt_opt));
        self.accumulate_cell(pos, geo, nu, d1, n_pts, y_loc, |q| {
            let f = match &self.params.forcing {
                Some(f) => f(geo.points[q], time),
                None => [0.0, 0.0],
            };
            let cv = if self.params.convection { 1.0 } else { 0.0 };
            let conv = [
                cv * (u[q][0] * grad_u[q][0][0] + u[q][1] * grad_u[q][0][1]),
                cv * (u[q][0] * grad_u[q][1][0] + u[q][1] * grad_u[q][1][1]),
            ];
            let r_strong = [
                udot[q][0] + conv[0] + grad_p[q][0] - nu * lap_u[q][0] - f[0],
                udot[q][1] + conv[1] + grad_p[q][1] - nu * lap_u[q][1] - f[1],
            ];
            PointTerms {
                momentum_val: [
                    udot[q][0] + conv[0] - f[0],
                    udot[q][1] + conv[1] - f[1],
                ],
                grad_u_phys: [grad_u[q][0], grad_u[q][1]],
                p_val: p_val[q],
                advect: if self.params.convection { u[q] } else { [0.0, 0.0] },
                r_strong,
            }
        });
    }

    /// Freeze the linearization state and return the Jacobian operator.
    /// The transient history enters the frozen strong residual R*.
    pub fn linearize(
        self: &Arc<Self>,
        state: &[Scalar],
        time: Scalar,
        transient: Option<&Transient>,
    ) -> NsJacobian {
        let mut cells = Vec::with_capacity(self.base.n_cells());
        let mut x_loc = Vec::new();
        let mut old1_loc = Vec::new();
        let mut old2_loc = Vec::new();
        for pos in 0..self.base.n_cells() {
            self.base.gather_direct(pos, state, &mut x_loc);
            let (u, grad_u, lap_u, _, grad_p) = self.component_eval(pos, &x_loc, true);
            let n_pts = u.len();
            let mut udot = vec![[0.0; 2]; n_pts];
            if let Some(t) = transient {
                self.base.gather_direct(pos, t.old1, &mut old1_loc);
                let (u1, _, _, _, _) = self.component_eval(pos, &old1_loc, false);
                let u2 = match t.old2 {
                    Some(o2) => {
                        self.base.gather_direct(pos, o2, &mut old2_loc);
                        Some(self.component_eval(pos, &old2_loc, false).0)
                    }
                    None => None,
                };
                for q in 0..n_pts {
                    for c in 0..2 {
                        let prev2 = u2.as_ref().map(|v| v[q][c]).unwrap_or(0.0);
                        udot[q][c] = (t.scheme.coeffs[0] * u[q][c]
                            + t.scheme.coeffs[1] * u1[q][c]
                            + t.scheme.coeffs[2] * prev2)
                            / t.scheme.dt;
                    }
                }
            }
            let dt_opt = transient.map(|t| t.scheme.dt);
            let d1 = self.cell_delta1(pos, &u, dt_opt);
            let mut r_strong = vec![[0.0; 2]; n_pts];
            for q in 0..n_pts {
                let f = match &self.params.forcing {
                    Some(f) => f(self.base.geometry[pos].points[q], time),
                    None => [0.0, 0.0],
                };
                let cv = if self.params.convection { 1.0 } else { 0.0 };
                let conv = [
                    cv * (u[q][0] * grad_u[q][0][0] + u[q][1] * grad_u[q][0][1]),
                    cv * (u[q][0] * grad_u[q][1][0] + u[q][1] * grad_u[q][1][1]),
                ];
                r_strong[q] = [
                    udot[q][0] + conv[0] + grad_p[q][0] - self.params.nu * lap_u[q][0] - f[0],
                    udot[q][1] + conv[1] + grad_p[q][1] - self.params.nu * lap_u[q][1] - f[1],
                ];
            }
            cells.push(CellState {
                delta1: d1,
                u,
                grad_u,
                r_strong,
            });
        }
        NsJacobian {
            op: self.clone(),
            cells,
            a0_over_dt: transient
                .map(|t| t.scheme.coeffs[0] / t.scheme.dt)
                .unwrap_or(0.0),
        }
    }

    /// Shared accumulation of momentum/continuity contributions.
    #[allow(clippy::too_many_arguments)]
    fn accumulate_cell(
        &self,
        pos: usize,
        geo: &super::CellGeometry,
        nu: Scalar,
        d1: Scalar,
        n_pts: usize,
        y_loc: &mut [Scalar],
        terms: impl Fn(usize) -> PointTerms,
    ) {
        let tv = self.base.table(pos, 0);
        let tp = self.base.table(pos, 2);
        let ev_v = TensorEval::new(tv);
        let ev_p = TensorEval::new(tp);
        let nv = tv.n_nodes() * tv.n_nodes();
        let np = tp.n_nodes() * tp.n_nodes();
        let mut vc = [vec![0.0; n_pts], vec![0.0; n_pts]];
        let mut gc = [vec![[0.0; 2]; n_pts], vec![[0.0; 2]; n_pts]];
        let mut pv = vec![0.0; n_pts];
        let mut pg = vec![[0.0; 2]; n_pts];
        for q in 0..n_pts {
            let t = terms(q);
            let it = &geo.inv_t[q];
            let w = geo.jxw[q];
            let pull = |g: [Scalar; 2]| {
                [
                    it[0][0] * g[0] + it[1][0] * g[1],
                    it[0][1] * g[0] + it[1][1] * g[1],
                ]
            };
            let div_u = t.grad_u_phys[0][0] + t.grad_u_phys[1][1];
            for c in 0..2 {
                vc[c][q] = w * t.momentum_val[c];
                let mut phys = [nu * t.grad_u_phys[c][0], nu * t.grad_u_phys[c][1]];
                phys[c] -= t.p_val;
                // SUPG: delta1 * R_c * (u*.grad v_c)
                phys[0] += d1 * t.r_strong[c] * t.advect[0];
                phys[1] += d1 * t.r_strong[c] * t.advect[1];
                let r = pull(phys);
                gc[c][q] = [w * r[0], w * r[1]];
            }
            // continuity (negated): -(div u) q - delta1 R . grad q
            pv[q] = -w * div_u;
            let pr = pull([d1 * t.r_strong[0], d1 * t.r_strong[1]]);
            pg[q] = [-w * pr[0], -w * pr[1]];
        }
        for c in 0..2 {
            ev_v.integrate(&vc[c], &gc[c], &mut y_loc[c * nv..(c + 1) * nv]);
        }
        ev_p.integrate(&pv, &pg, &mut y_loc[2 * nv..2 * nv + np]);
    }
}

/// Contributions of one quadrature point, shared between residual and
/// Jacobian kernels.
struct PointTerms {
    momentum_val: [Scalar; 2],
    grad_u_phys: [[Scalar; 2]; 2],
    p_val: Scalar,
    /// advection velocity multiplying grad v in the SUPG test term
    advect: [Scalar; 2],
    r_strong: [Scalar; 2],
}

/// Gateaux derivative of the residual at a frozen state (delta1 frozen too).
pub struct NsJacobian {
    op: Arc<NsOperator>,
    cells: Vec<CellState>,
    a0_over_dt: Scalar,
}

impl CellKernel for NsJacobian {
    fn base(&self) -> &KernelBase {
        &self.op.base
    }

    fn apply_cell(&self, pos: usize, x_loc: &[Scalar], y_loc: &mut [Scalar]) {
        let geo = &self.op.base.geometry[pos];
        let nu = self.op.params.nu;
        let st = &self.cells[pos];
        let (du, grad_du, lap_du, dp_val, grad_dp) = self.op.component_eval(pos, x_loc, true);
        let n_pts = du.len();
        let a0 = self.a0_over_dt;
        self.op.accumulate_cell(pos, geo, nu, st.delta1, n_pts, y_loc, |q| {
            // d(conv) = du.grad u* + u*.grad du
            let cv = if self.op.params.convection { 1.0 } else { 0.0 };
            let dconv = [
                cv * (du[q][0] * st.grad_u[q][0][0]
                    + du[q][1] * st.grad_u[q][0][1]
                    + st.u[q][0] * grad_du[q][0][0]
                    + st.u[q][1] * grad_du[q][0][1]),
                cv * (du[q][0] * st.grad_u[q][1][0]
                    + du[q][1] * st.grad_u[q][1][1]
                    + st.u[q][0] * grad_du[q][1][0]
                    + st.u[q][1] * grad_du[q][1][1]),
            ];
            let dr = [
                a0 * du[q][0] + dconv[0] + grad_dp[q][0] - nu * lap_du[q][0],
                a0 * du[q][1] + dconv[1] + grad_dp[q][1] - nu * lap_du[q][1],
            ];
            // SUPG derivative splits as d1 [ dR_c u* + R*_c du ] . grad v_c;
            // the first product goes through accumulate_cell, the second is
            // added after this call
            PointTerms {
                momentum_val: [a0 * du[q][0] + dconv[0], a0 * du[q][1] + dconv[1]],
                grad_u_phys: [grad_du[q][0], grad_du[q][1]],
                p_val: dp_val[q],
                advect: if self.op.params.convection {
                    st.u[q]
                } else {
                    [0.0, 0.0]
                },
                r_strong: dr,
            }
        });
        // second SUPG part: d1 * R*_c * (du . grad v_c); PSPG has no such
        // term because grad q does not depend on the state
        if self.op.params.stabilize && self.op.params.convection && st.delta1 > 0.0 {
            let tv = self.op.base.table(pos, 0);
            let ev_v = TensorEval::new(tv);
            let nv = tv.n_nodes() * tv.n_nodes();
            let mut vc = vec![0.0; n_pts];
            let mut gc = vec![[0.0; 2]; n_pts];
            for c in 0..2 {
                for q in 0..n_pts {
                    let it = &geo.inv_t[q];
                    let w = geo.jxw[q];
                    let phys = [
                        st.delta1 * st.r_strong[q][c] * du[q][0],
                        st.delta1 * st.r_strong[q][c] * du[q][1],
                    ];
                    gc[q] = [
                        w * (it[0][0] * phys[0] + it[1][0] * phys[1]),
                        w * (it[0][1] * phys[0] + it[1][1] * phys[1]),
                    ];
                    vc[q] = 0.0;
                }
                ev_v.integrate(&vc, &gc, &mut y_loc[c * nv..(c + 1) * nv]);
            }
        }
    }
}

impl LinearOperator for NsJacobian {
    fn n(&self) -> usize {
        self.op.base.layout.n_dofs()
    }

    fn apply(&self, x: &[Scalar], y: &mut [Scalar]) {
        kernel_apply(self, x, y);
    }
}

/// trace of J^{-T} (H_ref - c (.) g_phys) J^{-1} for the bilinear map.
fn laplacian_phys(
    h_ref: [Scalar; 3],
    g_phys: [Scalar; 2],
    inv_t: &[[Scalar; 2]; 2],
    mixed2: [Scalar; 2],
) -> Scalar {
    let corr = mixed2[0] * g_phys[0] + mixed2[1] * g_phys[1];
    let m = [[h_ref[0], h_ref[1] - corr], [h_ref[1] - corr, h_ref[2]]];
    let mut lap = 0.0;
    for i in 0..2 {
        for k in 0..2 {
            for l in 0..2 {
                lap += inv_t[i][k] * m[k][l] * inv_t[i][l];
            }
        }
    }
    lap
}
