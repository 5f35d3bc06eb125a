//! Finite-difference oracle for the manufactured solutions.
//!
//! Applies each family's operator to `u_exact` through fourth-order central differences
//! and never touches the closed-form derivatives, so it independently checks the forcing
//! terms and the residual assembly.

use super::{PdeProblem, PointDerivatives};
use crate::autonet::EvalPoint;
use crate::error::{Error, Result};

/// Default step for the oracle stencils.
pub const DEFAULT_STEP: f64 = 1e-3;

fn d1(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
}

fn d2(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(2.0 * h) + 16.0 * f(h) - 30.0 * f(0.0) + 16.0 * f(-h) - f(-2.0 * h)) / (12.0 * h * h)
}

/// Derivatives of `u(x, t)` at a point by fourth-order central differences.
///
/// Spatial steps shrink to a twentieth of the distance to the circle and to the origin:
/// stencils stay inside the disk, where the solution is defined, and clear of the
/// `(1 - rho)^2.5` singularity and of the cone the solution has at the origin when
/// `F'(0) != 0`.
pub fn fd_derivatives(u: impl Fn(&[f64], f64) -> f64, x: [f64; 2], t: f64, h: f64) -> PointDerivatives {
    let rho = x[0].hypot(x[1]);
    let hs = h.min((1.0 - rho) / 20.0).min(rho / 20.0);
    let along = |axis: usize| {
        let u = &u;
        move |d: f64| {
            let mut y = x;
            y[axis] += d;
            u(&y, t)
        }
    };
    let in_time = |d: f64| u(&x, t + d);
    let hess = [d2(along(0), hs), d2(along(1), hs)];
    PointDerivatives {
        u: u(&x, t),
        grad_x: [d1(along(0), hs), d1(along(1), hs)],
        laplacian: hess[0] + hess[1],
        dt: d1(in_time, h),
        dtt: d2(in_time, h),
    }
}

/// `|a - b| / max(|b|, 1)`: relative away from zero crossings of `b`.
pub fn scaled_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// `D[u_exact]` at an interior point, from finite differences only.
pub fn fd_operator(problem: &PdeProblem, point: &EvalPoint, h: f64) -> Result<f64> {
    problem.exact_solution(point)?;
    let rho = point.x[0].hypot(point.x[1]);
    if rho >= 1.0 || rho == 0.0 {
        return Err(Error::arg("the finite-difference oracle needs a point strictly inside the punctured disk"));
    }
    let x = [point.x[0], point.x[1]];
    let t = point.t.unwrap_or(0.0);
    let d = fd_derivatives(|y, s| problem.exact_at(y, s), x, t, h);
    Ok(problem.operator(&point.x, &d))
}
