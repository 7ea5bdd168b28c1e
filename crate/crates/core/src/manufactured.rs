//! Manufactured solutions for verification: analytic fields plus the forcing
//! that makes them exact solutions of the target equations.

use std::sync::Arc;

use crate::num::Scalar;
use crate::op::Forcing;

pub type ScalarFn = Arc<dyn Fn([Scalar; 2]) -> Scalar + Send + Sync>;
pub type ScalarFnT = Arc<dyn Fn([Scalar; 2], Scalar) -> Scalar + Send + Sync>;

/// Steady manufactured case: exact velocity/pressure and the forcing.
#[derive(Clone)]
pub struct SteadyCase {
    pub u: [ScalarFn; 2],
    pub p: ScalarFn,
    pub forcing: Forcing,
    pub nu: Scalar,
}

/// Transient manufactured case with time-dependent fields.
#[derive(Clone)]
pub struct TransientCase {
    pub u: [ScalarFnT; 2],
    pub p: ScalarFnT,
    pub forcing: Forcing,
    pub nu: Scalar,
}

/// Divergence-free Stokes field u = curl(sin^2(pi x) sin^2(pi y)) with
/// p = sin(pi x) cos(pi y) on the unit square; velocity vanishes on the
/// boundary. Forcing satisfies -nu lap u + grad p = f, div u = 0.
pub fn stokes_divfree(nu: Scalar) -> SteadyCase {
    let pi = std::f64::consts::PI;
    let u0 = move |x: [Scalar; 2]| {
        0.5 * pi * (1.0 - (2.0 * pi * x[0]).cos()) * (2.0 * pi * x[1]).sin()
    };
    let u1 = move |x: [Scalar; 2]| {
        -0.5 * pi * (2.0 * pi * x[0]).sin() * (1.0 - (2.0 * pi * x[1]).cos())
    };
    let p = move |x: [Scalar; 2]| (pi * x[0]).sin() * (pi * x[1]).cos();
    let forcing = move |x: [Scalar; 2], _t: Scalar| {
        let lap_u = 2.0 * pi.powi(3) * (2.0 * pi * x[1]).sin() * (2.0 * (2.0 * pi * x[0]).cos() - 1.0);
        let lap_v = -2.0 * pi.powi(3) * (2.0 * pi * x[0]).sin() * (2.0 * (2.0 * pi * x[1]).cos() - 1.0);
        let px = pi * (pi * x[0]).cos() * (pi * x[1]).cos();
        let py = -pi * (pi * x[0]).sin() * (pi * x[1]).sin();
        [-nu * lap_u + px, -nu * lap_v + py]
    };
    SteadyCase {
        u: [Arc::new(u0), Arc::new(u1)],
        p: Arc::new(p),
        forcing: Arc::new(forcing),
        nu,
    }
}

/// Kovasznay flow: an exact steady Navier-Stokes solution with zero forcing,
/// typically posed on [-0.5, 1] x [-0.5, 1.5].
pub fn kovasznay(nu: Scalar) -> SteadyCase {
    let pi = std::f64::consts::PI;
    let lambda = 0.5 / nu - (0.25 / (nu * nu) + 4.0 * pi * pi).sqrt();
    let u0 = move |x: [Scalar; 2]| 1.0 - (lambda * x[0]).exp() * (2.0 * pi * x[1]).cos();
    let u1 =
        move |x: [Scalar; 2]| lambda / (2.0 * pi) * (lambda * x[0]).exp() * (2.0 * pi * x[1]).sin();
    let p = move |x: [Scalar; 2]| 0.5 * (1.0 - (2.0 * lambda * x[0]).exp());
    SteadyCase {
        u: [Arc::new(u0), Arc::new(u1)],
        p: Arc::new(p),
        forcing: Arc::new(|_, _| [0.0, 0.0]),
        nu,
    }
}

/// Taylor-Green vortex on [0, 2 pi]^2: u decays with e^{-2 nu t}, kinetic
/// energy with e^{-4 nu t}; zero forcing.
pub fn taylor_green(nu: Scalar) -> TransientCase {
    let u0 = move |x: [Scalar; 2], t: Scalar| x[0].sin() * x[1].cos() * (-2.0 * nu * t).exp();
    let u1 = move |x: [Scalar; 2], t: Scalar| -x[0].cos() * x[1].sin() * (-2.0 * nu * t).exp();
    let p = move |x: [Scalar; 2], t: Scalar| {
        0.25 * ((2.0 * x[0]).cos() + (2.0 * x[1]).cos()) * (-4.0 * nu * t).exp()
    };
    TransientCase {
        u: [Arc::new(u0), Arc::new(u1)],
        p: Arc::new(p),
        forcing: Arc::new(|_, _| [0.0, 0.0]),
        nu,
    }
}

/// Separable transient Stokes field u = sin(t) curl(sin^2(pi x) sin^2(pi y)),
/// p = sin(t) sin(pi x) cos(pi y), with the matching forcing. The solution
/// starts from the exactly compatible zero state and the velocity vanishes
/// on the boundary for all times.
pub fn separable_stokes(nu: Scalar) -> TransientCase {
    let pi = std::f64::consts::PI;
    let g = move |t: Scalar| t.sin();
    let dg = move |t: Scalar| t.cos();
    let us0 = move |x: [Scalar; 2]| {
        0.5 * pi * (1.0 - (2.0 * pi * x[0]).cos()) * (2.0 * pi * x[1]).sin()
    };
    let us1 = move |x: [Scalar; 2]| {
        -0.5 * pi * (2.0 * pi * x[0]).sin() * (1.0 - (2.0 * pi * x[1]).cos())
    };
    let u0 = move |x: [Scalar; 2], t: Scalar| g(t) * us0(x);
    let u1 = move |x: [Scalar; 2], t: Scalar| g(t) * us1(x);
    let p = move |x: [Scalar; 2], t: Scalar| g(t) * (pi * x[0]).sin() * (pi * x[1]).cos();
    let forcing = move |x: [Scalar; 2], t: Scalar| {
        let lap_u =
            2.0 * pi.powi(3) * (2.0 * pi * x[1]).sin() * (2.0 * (2.0 * pi * x[0]).cos() - 1.0);
        let lap_v =
            -2.0 * pi.powi(3) * (2.0 * pi * x[0]).sin() * (2.0 * (2.0 * pi * x[1]).cos() - 1.0);
        let grad_p = [
            pi * (pi * x[0]).cos() * (pi * x[1]).cos(),
            -pi * (pi * x[0]).sin() * (pi * x[1]).sin(),
        ];
        [
            dg(t) * us0(x) - g(t) * nu * lap_u + g(t) * grad_p[0],
            dg(t) * us1(x) - g(t) * nu * lap_v + g(t) * grad_p[1],
        ]
    };
    TransientCase {
        u: [Arc::new(u0), Arc::new(u1)],
        p: Arc::new(p),
        forcing: Arc::new(forcing),
        nu,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check_steady(case: &SteadyCase, x: [Scalar; 2]) {
        // verify -nu lap u + (u.grad)u + grad p = f and div u = 0 by finite
        // differences (the Stokes case omits the convective term)
        let h = 1e-5;
        let eval = |f: &ScalarFn, x: [Scalar; 2]| f(x);
        let div = (eval(&case.u[0], [x[0] + h, x[1]]) - eval(&case.u[0], [x[0] - h, x[1]]))
            / (2.0 * h)
            + (eval(&case.u[1], [x[0], x[1] + h]) - eval(&case.u[1], [x[0], x[1] - h])) / (2.0 * h);
        assert!(div.abs() < 1e-7, "divergence {div}");
    }

    #[test]
    fn stokes_case_divergence_free_and_forcing_consistent() {
        let case = stokes_divfree(0.7);
        for &x in &[[0.3, 0.4], [0.71, 0.22], [0.5, 0.5]] {
            fd_check_steady(&case, x);
            // residual of -nu lap u + grad p - f via finite differences
            let h = 1e-4;
            for c in 0..2 {
                let u = &case.u[c];
                let lap = (u([x[0] + h, x[1]]) + u([x[0] - h, x[1]]) + u([x[0], x[1] + h])
                    + u([x[0], x[1] - h])
                    - 4.0 * u(x))
                    / (h * h);
                let gp = match c {
                    0 => ((case.p)([x[0] + h, x[1]]) - (case.p)([x[0] - h, x[1]])) / (2.0 * h),
                    _ => ((case.p)([x[0], x[1] + h]) - (case.p)([x[0], x[1] - h])) / (2.0 * h),
                };
                let f = (case.forcing)(x, 0.0)[c];
                assert!(
                    (-case.nu * lap + gp - f).abs() < 1e-5,
                    "momentum residual c={c}"
                );
            }
        }
        // no-slip boundary
        for &x in &[[0.0, 0.3], [1.0, 0.8], [0.4, 0.0], [0.9, 1.0]] {
            assert!((case.u[0])(x).abs() < 1e-13);
            assert!((case.u[1])(x).abs() < 1e-13);
        }
    }

    #[test]
    fn kovasznay_satisfies_navier_stokes() {
        let case = kovasznay(1.0 / 40.0);
        let h = 1e-4;
        for &x in &[[0.2, 0.3], [-0.1, 0.9], [0.6, 1.1]] {
            fd_check_steady(&case, x);
            for c in 0..2 {
                let u = &case.u[c];
                let lap = (u([x[0] + h, x[1]]) + u([x[0] - h, x[1]]) + u([x[0], x[1] + h])
                    + u([x[0], x[1] - h])
                    - 4.0 * u(x))
                    / (h * h);
                let gx = (u([x[0] + h, x[1]]) - u([x[0] - h, x[1]])) / (2.0 * h);
                let gy = (u([x[0], x[1] + h]) - u([x[0], x[1] - h])) / (2.0 * h);
                let conv = (case.u[0])(x) * gx + (case.u[1])(x) * gy;
                let gp = match c {
                    0 => ((case.p)([x[0] + h, x[1]]) - (case.p)([x[0] - h, x[1]])) / (2.0 * h),
                    _ => ((case.p)([x[0], x[1] + h]) - (case.p)([x[0], x[1] - h])) / (2.0 * h),
                };
                let res = conv - case.nu * lap + gp;
                assert!(res.abs() < 2e-4, "NS residual {res} at {x:?} c={c}");
            }
        }
    }

    #[test]
    fn taylor_green_satisfies_navier_stokes() {
        let case = taylor_green(0.01);
        let (h, dt) = (1e-4, 1e-5);
        let t = 0.37;
        for &x in &[[1.0, 2.0], [3.1, 0.7]] {
            for c in 0..2 {
                let u = &case.u[c];
                let ut = (u(x, t + dt) - u(x, t - dt)) / (2.0 * dt);
                let lap = (u([x[0] + h, x[1]], t) + u([x[0] - h, x[1]], t)
                    + u([x[0], x[1] + h], t)
                    + u([x[0], x[1] - h], t)
                    - 4.0 * u(x, t))
                    / (h * h);
                let gx = (u([x[0] + h, x[1]], t) - u([x[0] - h, x[1]], t)) / (2.0 * h);
                let gy = (u([x[0], x[1] + h], t) - u([x[0], x[1] - h], t)) / (2.0 * h);
                let conv = (case.u[0])(x, t) * gx + (case.u[1])(x, t) * gy;
                let gp = match c {
                    0 => ((case.p)([x[0] + h, x[1]], t) - (case.p)([x[0] - h, x[1]], t)) / (2.0 * h),
                    _ => ((case.p)([x[0], x[1] + h], t) - (case.p)([x[0], x[1] - h], t)) / (2.0 * h),
                };
                let res = ut + conv - case.nu * lap + gp;
                assert!(res.abs() < 1e-4, "residual {res}");
            }
        }
    }

    #[test]
    fn separable_stokes_forcing_consistent() {
        let case = separable_stokes(0.3);
        let (h, dt) = (1e-4, 1e-5);
        let t = 0.8;
        for &x in &[[0.25, 0.6], [0.7, 0.15]] {
            for c in 0..2 {
                let u = &case.u[c];
                let ut = (u(x, t + dt) - u(x, t - dt)) / (2.0 * dt);
                let lap = (u([x[0] + h, x[1]], t) + u([x[0] - h, x[1]], t)
                    + u([x[0], x[1] + h], t)
                    + u([x[0], x[1] - h], t)
                    - 4.0 * u(x, t))
                    / (h * h);
                let gp = match c {
                    0 => ((case.p)([x[0] + h, x[1]], t) - (case.p)([x[0] - h, x[1]], t)) / (2.0 * h),
                    _ => ((case.p)([x[0], x[1] + h], t) - (case.p)([x[0], x[1] - h], t)) / (2.0 * h),
                };
                let f = (case.forcing)(x, t)[c];
                let res = ut - case.nu * lap + gp - f;
                assert!(res.abs() < 1e-5, "residual {res}");
            }
        }
    }
}
