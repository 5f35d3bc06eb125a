//! Manufactured-solution PDE families on the unit disk and their physics-informed loss.
//!
//! Every family shares the radial profile
//!
//! ```text
//! F(rho) = sin(pi l1 / 2 (1 - rho)^2.5) + l2 sin(pi / 2 (1 - rho))
//! ```
//!
//! multiplied by a time factor `T(t)`: `1` (elliptic), `e^-t` (Allen-Cahn) or
//! `e^(t^2) - 1` (hyperbolic). Forcing terms are derived in closed form from the radial
//! Laplacian `F'' + F'/rho`.

pub mod loss;
pub mod oracle;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autonet::{EvalPoint, InputDerivatives, LoraNet, Region};
use crate::error::{Error, Result};

pub use loss::{LossBreakdown, LossContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Elliptic,
    AllenCahn,
    Hyperbolic,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Elliptic, Family::AllenCahn, Family::Hyperbolic];

    pub fn is_time_dependent(self) -> bool {
        self != Family::Elliptic
    }

    /// Network input dimension: two spatial coordinates, plus time when present.
    pub fn input_dim(self) -> usize {
        if self.is_time_dependent() {
            3
        } else {
            2
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Elliptic => "elliptic",
            Family::AllenCahn => "allen_cahn",
            Family::Hyperbolic => "hyperbolic",
        }
    }

    /// `(T, T', T'')` at time `t`.
    fn time_factor(self, t: f64) -> (f64, f64, f64) {
        match self {
            Family::Elliptic => (1.0, 0.0, 0.0),
            Family::AllenCahn => {
                let e = (-t).exp();
                (e, -e, e)
            }
            Family::Hyperbolic => {
                let e = (t * t).exp();
                (e - 1.0, 2.0 * t * e, (2.0 + 4.0 * t * t) * e)
            }
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown PDE family {s:?}")))
    }
}

/// Radial profile and its first two derivatives in `rho`.
#[derive(Debug, Clone, Copy)]
struct Radial {
    f: f64,
    df: f64,
    d2f: f64,
}

/// A PDE family instantiated at physical parameters `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeProblem {
    pub family: Family,
    pub lambda: [f64; 2],
}

/// Value and input derivatives of some function at a point, as consumed by the operators.
/// Time entries are ignored by the elliptic family.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointDerivatives {
    pub u: f64,
    pub grad_x: [f64; 2],
    pub laplacian: f64,
    pub dt: f64,
    pub dtt: f64,
}

impl TryFrom<&InputDerivatives> for PointDerivatives {
    type Error = Error;

    fn try_from(d: &InputDerivatives) -> Result<Self> {
        if d.grad_x.len() != 2 {
            return Err(Error::arg("operators are defined on two spatial dimensions"));
        }
        Ok(Self {
            u: d.u,
            grad_x: [d.grad_x[0], d.grad_x[1]],
            laplacian: d.laplacian,
            dt: d.dt().unwrap_or(0.0),
            dtt: d.dtt().unwrap_or(0.0),
        })
    }
}

impl PdeProblem {
    pub fn new(family: Family, lambda: [f64; 2]) -> Result<Self> {
        if !lambda.iter().all(|v| v.is_finite()) {
            return Err(Error::arg(format!("lambda {lambda:?} is not finite")));
        }
        Ok(Self { family, lambda })
    }

    fn radial(&self, rho: f64) -> Radial {
        let [l1, l2] = self.lambda;
        let s = (1.0 - rho).max(0.0);
        let a = PI * l1 / 2.0;
        let b = PI / 2.0;
        let s15 = s.powf(1.5);
        let (sa, ca) = (a * s * s15).sin_cos();
        let (sb, cb) = (b * s).sin_cos();
        // Derivatives in s = 1 - rho, then flip the sign of the odd one.
        let g1 = 2.5 * a * s15 * ca + l2 * b * cb;
        let g2 = -(2.5 * a * s15).powi(2) * sa + 3.75 * a * s.sqrt() * ca - l2 * b * b * sb;
        Radial { f: sa + l2 * sb, df: -g1, d2f: g2 }
    }

    /// `F'' + F'/rho`, with the limit `2 F''(0)` at the origin when `F'(0) = 0`.
    fn radial_laplacian(&self, rho: f64, r: Radial) -> Result<f64> {
        if rho >= 1e-6 {
            return Ok(r.d2f + r.df / rho);
        }
        if r.df.abs() > 1e-9 {
            return Err(Error::numerical(format!(
                "solution for lambda {:?} has a cone at the origin; forcing is singular at rho = {rho:e}",
                self.lambda
            )));
        }
        Ok(2.0 * r.d2f)
    }

    fn check_domain(&self, point: &EvalPoint) -> Result<(f64, f64)> {
        if point.x.len() != 2 {
            return Err(Error::arg(format!("expected a point in R^2, got dimension {}", point.x.len())));
        }
        let rho = point.x[0].hypot(point.x[1]);
        if !(rho <= 1.0 + 1e-12) {
            return Err(Error::arg(format!("point {:?} lies outside the unit disk", point.x)));
        }
        let t = match (self.family.is_time_dependent(), point.t) {
            (false, _) => 0.0,
            (true, Some(t)) if (0.0..=1.0).contains(&t) => t,
            (true, Some(t)) => return Err(Error::arg(format!("time {t} outside [0, 1]"))),
            (true, None) => return Err(Error::arg(format!("{} points need a time coordinate", self.family))),
        };
        Ok((rho.min(1.0), t))
    }

    /// Unchecked `u(x, t)`; `rho > 1` is treated as the boundary.
    pub(crate) fn exact_at(&self, x: &[f64], t: f64) -> f64 {
        let rho = x[0].hypot(x[1]);
        self.family.time_factor(t).0 * self.radial(rho).f
    }

    pub fn exact_solution(&self, point: &EvalPoint) -> Result<f64> {
        let (rho, t) = self.check_domain(point)?;
        Ok(self.family.time_factor(t).0 * self.radial(rho).f)
    }

    /// `g = D[u_exact]` in closed form.
    pub fn forcing(&self, point: &EvalPoint) -> Result<f64> {
        let (rho, t) = self.check_domain(point)?;
        let r = self.radial(rho);
        let lap = self.radial_laplacian(rho, r)?;
        let (tf, dtf, d2tf) = self.family.time_factor(t);
        let u = tf * r.f;
        let g = match self.family {
            // -div(a grad u) + |grad u|^2 with a = 1 + rho^2 / 2 and grad a = x.
            Family::Elliptic => -(1.0 + 0.5 * rho * rho) * tf * lap - rho * tf * r.df + (tf * r.df).powi(2),
            Family::AllenCahn => dtf * r.f - tf * lap - u.powi(3) + u,
            Family::Hyperbolic => d2tf * r.f - tf * lap,
        };
        if !g.is_finite() {
            return Err(Error::numerical(format!("non-finite forcing at {:?}, t = {t}", point.x)));
        }
        Ok(g)
    }

    /// Initial velocity `du/dt(0, x)` for the hyperbolic family. Zero, since `T'(0) = 0`.
    pub fn initial_velocity(&self, point: &EvalPoint) -> Result<f64> {
        let (rho, _) = self.check_domain(point)?;
        Ok(self.family.time_factor(0.0).1 * self.radial(rho).f)
    }

    /// The differential operator `D[u]` applied to derivative data at spatial point `x`.
    pub fn operator(&self, x: &[f64], d: &PointDerivatives) -> f64 {
        match self.family {
            Family::Elliptic => {
                let rho2 = x[0] * x[0] + x[1] * x[1];
                let x_dot_grad = x[0] * d.grad_x[0] + x[1] * d.grad_x[1];
                let grad2 = d.grad_x[0].powi(2) + d.grad_x[1].powi(2);
                -(1.0 + 0.5 * rho2) * d.laplacian - x_dot_grad + grad2
            }
            Family::AllenCahn => d.dt - d.laplacian - d.u.powi(3) + d.u,
            Family::Hyperbolic => d.dtt - d.laplacian,
        }
    }

    /// `D[phi] - g` at an interior point.
    pub fn pde_residual(&self, net: &LoraNet, point: &EvalPoint) -> Result<f64> {
        let g = self.forcing(point)?;
        let d = PointDerivatives::try_from(&net.input_derivatives(point)?)?;
        let r = self.operator(&point.x, &d) - g;
        if !r.is_finite() {
            return Err(Error::numerical(format!("non-finite residual at {:?}, t = {:?}", point.x, point.t)));
        }
        Ok(r)
    }
}

/// Sample sizes. Initial-condition points (time-dependent families) reuse `boundary`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointCounts {
    pub interior: usize,
    pub boundary: usize,
    pub test: usize,
}

impl Default for PointCounts {
    fn default() -> Self {
        Self { interior: 4096, boundary: 512, test: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSets {
    pub interior: Vec<EvalPoint>,
    pub boundary: Vec<EvalPoint>,
    /// Empty for the elliptic family.
    pub initial: Vec<EvalPoint>,
    pub test: Vec<EvalPoint>,
}

fn disk_point(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let r = rng.random::<f64>().sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    vec![r * theta.cos(), r * theta.sin()]
}

fn circle_point(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let theta = 2.0 * PI * rng.random::<f64>();
    vec![theta.cos(), theta.sin()]
}

impl PdeProblem {
    /// Uniform samples on the disk, the circle and (for time-dependent families) the
    /// initial slice. Deterministic in `seed`.
    pub fn sample_points(&self, counts: PointCounts, seed: u64) -> PointSets {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let timed = self.family.is_time_dependent();
        let time = |rng: &mut ChaCha8Rng| timed.then(|| rng.random::<f64>());
        let mut interior = Vec::with_capacity(counts.interior);
        for _ in 0..counts.interior {
            let x = disk_point(&mut rng);
            interior.push(EvalPoint { x, t: time(&mut rng), region: Region::Interior });
        }
        let mut boundary = Vec::with_capacity(counts.boundary);
        for _ in 0..counts.boundary {
            let x = circle_point(&mut rng);
            boundary.push(EvalPoint { x, t: time(&mut rng), region: Region::Boundary });
        }
        let mut initial = Vec::new();
        if timed {
            for _ in 0..counts.boundary {
                initial.push(EvalPoint { x: disk_point(&mut rng), t: Some(0.0), region: Region::Initial });
            }
        }
        let mut test = Vec::with_capacity(counts.test);
        for _ in 0..counts.test {
            let x = disk_point(&mut rng);
            test.push(EvalPoint { x, t: time(&mut rng), region: Region::Interior });
        }
        PointSets { interior, boundary, initial, test }
    }
}

/// `sqrt(sum (pred - exact)^2 / sum exact^2)`.
pub fn relative_error_values(pred: &[f64], exact: &[f64]) -> Result<f64> {
    if pred.len() != exact.len() || pred.is_empty() {
        return Err(Error::arg("relative error needs equally sized, non-empty samples"));
    }
    let den: f64 = exact.iter().map(|u| u * u).sum();
    if den == 0.0 {
        return Err(Error::DegenerateMetric("exact solution vanishes on the whole test set".into()));
    }
    let num: f64 = pred.iter().zip(exact).map(|(p, u)| (p - u).powi(2)).sum();
    Ok((num / den).sqrt())
}

/// Relative L2 error of the network against the exact solution on `test`.
pub fn relative_error(net: &LoraNet, problem: &PdeProblem, test: &[EvalPoint]) -> Result<f64> {
    let exact = test.iter().map(|p| problem.exact_solution(p)).collect::<Result<Vec<_>>>()?;
    let pred = loss::predict(net, test)?;
    relative_error_values(&pred, &exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autonet::MlpParams;

    fn pt(x: [f64; 2], t: Option<f64>) -> EvalPoint {
        EvalPoint { x: x.to_vec(), t, region: Region::Interior }
    }

    #[test]
    fn exact_solution_values() {
        let p = PdeProblem::new(Family::Elliptic, [1.0, 0.0]).unwrap();
        assert!((p.exact_solution(&pt([0.0, 0.0], None)).unwrap() - 1.0).abs() < 1e-15);
        for fam in Family::ALL {
            let q = PdeProblem::new(fam, [1.3, 2.0]).unwrap();
            let t = fam.is_time_dependent().then_some(0.4);
            assert!(q.exact_solution(&pt([0.6, -0.8], t)).unwrap().abs() < 1e-15);
        }
        let h = PdeProblem::new(Family::Hyperbolic, [1.0, 1.0]).unwrap();
        assert_eq!(h.exact_solution(&pt([0.2, 0.1], Some(0.0))).unwrap(), 0.0);
        assert!(p.exact_solution(&pt([0.9, 0.9], None)).is_err());
        assert!(h.exact_solution(&pt([0.1, 0.1], None)).is_err());
    }

    #[test]
    fn structural_forcing_identities() {
        let h = PdeProblem::new(Family::Hyperbolic, [1.0, 5.0]).unwrap();
        let x = pt([0.3, 0.2], Some(0.0));
        // u(0, .) = 0, so g = u_tt(0) = 2 F.
        let f = h.radial(0.3f64.hypot(0.2)).f;
        assert!((h.forcing(&x).unwrap() - 2.0 * f).abs() < 1e-12);
        assert_eq!(h.initial_velocity(&x).unwrap(), 0.0);
    }

    #[test]
    fn origin_uses_series_limit_or_reports_cone() {
        let smooth = PdeProblem::new(Family::Elliptic, [1.0, 1.0]).unwrap();
        let at0 = smooth.forcing(&pt([0.0, 0.0], None)).unwrap();
        // g is only Lipschitz at the origin, so compare with a linear extrapolation.
        let g = |r: f64| smooth.forcing(&pt([r, 0.0], None)).unwrap();
        let extrapolated = 2.0 * g(1e-4) - g(2e-4);
        assert!((at0 - extrapolated).abs() < 1e-5, "{at0} vs {extrapolated}");
        let cone = PdeProblem::new(Family::Elliptic, [2.0, 1.0]).unwrap();
        assert!(matches!(cone.forcing(&pt([0.0, 0.0], None)), Err(Error::Numerical(_))));
    }

    #[test]
    fn zero_network_residual_is_minus_forcing() {
        for fam in [Family::Elliptic, Family::AllenCahn] {
            let p = PdeProblem::new(fam, [1.0, 1.0]).unwrap();
            let net = LoraNet::plain(MlpParams::zeros(&[fam.input_dim(), 4, 1]).unwrap()).unwrap();
            let x = pt([0.25, -0.5], fam.is_time_dependent().then_some(0.3));
            assert_eq!(p.pde_residual(&net, &x).unwrap(), -p.forcing(&x).unwrap());
        }
    }

    #[test]
    fn sampling_is_deterministic_and_in_domain() {
        let p = PdeProblem::new(Family::AllenCahn, [1.0, 1.0]).unwrap();
        let counts = PointCounts { interior: 300, boundary: 40, test: 50 };
        let a = p.sample_points(counts, 3);
        assert_eq!(a, p.sample_points(counts, 3));
        assert_ne!(a, p.sample_points(counts, 4));
        assert_eq!(a.initial.len(), 40);
        for q in a.interior.iter().chain(&a.test) {
            assert!(q.x[0].hypot(q.x[1]) <= 1.0);
            assert!((0.0..=1.0).contains(&q.t.unwrap()));
        }
        for q in &a.boundary {
            assert!((q.x[0].hypot(q.x[1]) - 1.0).abs() < 1e-15);
            assert_eq!(p.exact_solution(q).unwrap().abs() < 1e-15, true);
        }
        assert!(a.initial.iter().all(|q| q.t == Some(0.0) && q.region == Region::Initial));
        let e = PdeProblem::new(Family::Elliptic, [1.0, 1.0]).unwrap().sample_points(counts, 1);
        assert!(e.initial.is_empty() && e.interior.iter().all(|q| q.t.is_none()));
    }

    #[test]
    fn uniform_disk_second_moment() {
        let p = PdeProblem::new(Family::Elliptic, [1.0, 0.0]).unwrap();
        let s = p.sample_points(PointCounts { interior: 100_000, boundary: 0, test: 0 }, 12);
        let r2: Vec<f64> = s.interior.iter().map(|q| q.x[0] * q.x[0] + q.x[1] * q.x[1]).collect();
        let mean = r2.iter().sum::<f64>() / r2.len() as f64;
        // Var(rho^2) = 1/12 for rho^2 ~ U(0, 1).
        let se = (1.0f64 / 12.0 / r2.len() as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn relative_error_cases() {
        let u = [1.0, -2.0, 0.5];
        assert_eq!(relative_error_values(&u, &u).unwrap(), 0.0);
        assert_eq!(relative_error_values(&[0.0; 3], &u).unwrap(), 1.0);
        let eps = 0.1;
        let shifted: Vec<f64> = u.iter().map(|v| v + eps).collect();
        let expect = (3.0 * eps * eps / 5.25f64).sqrt();
        assert!((relative_error_values(&shifted, &u).unwrap() - expect).abs() < 1e-15);
        let scaled = |k: f64, v: &[f64]| v.iter().map(|x| k * x).collect::<Vec<_>>();
        let a = relative_error_values(&shifted, &u).unwrap();
        let b = relative_error_values(&scaled(-3.0, &shifted), &scaled(-3.0, &u)).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(matches!(relative_error_values(&[1.0], &[0.0]), Err(Error::DegenerateMetric(_))));
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
            assert_eq!(serde_json::to_string(&f).unwrap(), format!("\"{}\"", f.name()));
        }
        assert!("parabolic".parse::<Family>().is_err());
    }
}
