use serde::Serialize;

use super::integrand::{ConvexIntegrand, Growth, IntegrandKind, RadialProfile};
use crate::error::{ensure_finite, Error, Result};
use crate::geometry::PlanePoint;

const INNER_CAP: usize = 10_000;
const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// A subgradient extracted as the limit of Yosida approximations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubgradientSelection {
    pub point: PlanePoint,
    pub value: PlanePoint,
    pub is_minimal_norm: bool,
    pub lambda_used: f64,
}

/// `λ = 1, 10⁻¹, …, 10⁻⁸`.
pub fn default_lambda_schedule() -> Vec<f64> {
    (0..=8).map(|k| 10f64.powi(-k)).collect()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("lambda must be positive and finite, got {lambda}")))
    }
}

/// Root of `r + λ f'(r) = s` on `[0, s]`, which is the radius of the prox of
/// a radial integrand. Newton steps safeguarded by bisection.
fn radial_prox_radius(profile: &RadialProfile, lambda: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let phi = |r: f64| r + lambda * profile.derivative(r) - s;
    if phi(0.0) >= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, s);
    // Newton from the linearization at 0 is monotone when f' is concave or
    // convex on (0, s]; fall back to the other end when f''(0) is infinite
    let mut r = s / (1.0 + lambda * profile.second_derivative(1e-12 * s).min(1e300));
    if !(r > 1e-12 * s) {
        r = s / (1.0 + lambda * profile.second_derivative(s).min(1e300));
    }
    for _ in 0..200 {
        let val = phi(r);
        if val == 0.0 {
            return r;
        }
        if val < 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let slope = 1.0 + lambda * profile.second_derivative(r);
        let mut next = r - val / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - r).abs() <= 2.0 * f64::EPSILON * next.abs() || hi - lo <= 4.0 * f64::EPSILON * s {
            return next;
        }
        r = next;
    }
    r
}

/// Projection onto `{p : a² p₁² + b² p₂² ≤ 1}`.
fn project_ellipse(a: f64, b: f64, q: PlanePoint) -> PlanePoint {
    let (ca, cb) = (a * a, b * b);
    if ca * q.x * q.x + cb * q.y * q.y <= 1.0 {
        return q;
    }
    // F(μ) = Σ c_i q_i² / (1 + μ c_i)² − 1 is convex and decreasing on μ ≥ 0,
    // so Newton from μ = 0 increases monotonically to the root.
    let f = |mu: f64| {
        let (dx, dy) = (1.0 + mu * ca, 1.0 + mu * cb);
        let v = ca * q.x * q.x / (dx * dx) + cb * q.y * q.y / (dy * dy) - 1.0;
        let dv = -2.0 * ca * ca * q.x * q.x / (dx * dx * dx) - 2.0 * cb * cb * q.y * q.y / (dy * dy * dy);
        (v, dv)
    };
    let mut mu = 0.0;
    for _ in 0..200 {
        let (v, dv) = f(mu);
        let step = v / dv;
        mu -= step;
        if step.abs() <= 1e-16 * mu.abs() {
            break;
        }
    }
    PlanePoint::new(q.x / (1.0 + mu * ca), q.y / (1.0 + mu * cb))
}

impl ConvexIntegrand {
    /// `J_λ(z) = argmin_y |y − z|²/(2λ) + g(y)`.
    pub fn prox(&self, lambda: f64, z: PlanePoint) -> Result<PlanePoint> {
        check_lambda(lambda)?;
        ensure_finite("prox argument", &[z.x, z.y])?;
        Ok(match self.kind() {
            IntegrandKind::EuclideanNorm => {
                let r = z.norm();
                if r <= lambda {
                    PlanePoint::ZERO
                } else {
                    z * (1.0 - lambda / r)
                }
            }
            IntegrandKind::Quadratic => z * (1.0 + 2.0 * lambda).recip(),
            IntegrandKind::MinimalSurface => {
                radial_point(&RadialProfile::Hyperbolic { eps: 1.0 }, lambda, z)
            }
            IntegrandKind::RadialOfNorm(profile) => radial_point(profile, lambda, z),
            IntegrandKind::AnisotropicNorm { a, b } => {
                z - project_ellipse(*a, *b, z * lambda.recip()) * lambda
            }
            IntegrandKind::Custom(_) => self.custom_prox(lambda, z)?,
        })
    }

    /// `g_λ(z) = g(J_λ z) + |z − J_λ z|²/(2λ)`.
    pub fn moreau_envelope(&self, lambda: f64, z: PlanePoint) -> Result<f64> {
        let j = self.prox(lambda, z)?;
        Ok(self.value(j) + (z - j).norm_sq() / (2.0 * lambda))
    }

    /// `A_λ(z) = (z − J_λ z)/λ`, the gradient of the Moreau envelope.
    pub fn yosida(&self, lambda: f64, z: PlanePoint) -> Result<PlanePoint> {
        check_lambda(lambda)?;
        ensure_finite("yosida argument", &[z.x, z.y])?;
        Ok(match self.kind() {
            IntegrandKind::EuclideanNorm => {
                let r = z.norm();
                if r <= lambda {
                    z * lambda.recip()
                } else {
                    z * r.recip()
                }
            }
            IntegrandKind::Quadratic => z * (2.0 / (1.0 + 2.0 * lambda)),
            IntegrandKind::MinimalSurface => {
                radial_yosida(&RadialProfile::Hyperbolic { eps: 1.0 }, lambda, z)
            }
            IntegrandKind::RadialOfNorm(profile) => radial_yosida(profile, lambda, z),
            IntegrandKind::AnisotropicNorm { a, b } => project_ellipse(*a, *b, z * lambda.recip()),
            IntegrandKind::Custom(_) => (z - self.custom_prox(lambda, z)?) * lambda.recip(),
        })
    }

    /// Prox of the envelope `g_λ` with step `μ`:
    /// `z + μ/(λ+μ) (J_{λ+μ} z − z)`.
    pub fn envelope_prox(&self, lambda: f64, mu: f64, z: PlanePoint) -> Result<PlanePoint> {
        check_lambda(mu)?;
        let j = self.prox(lambda + mu, z)?;
        Ok(z + (j - z) * (mu / (lambda + mu)))
    }

    /// The limit of `A_λ(z)` along a decreasing schedule. Where `g` has a
    /// closed-form gradient at `z` that agrees with the last iterate, the
    /// gradient is returned as the limit.
    pub fn minimal_subgradient(&self, z: PlanePoint, schedule: &[f64]) -> Result<SubgradientSelection> {
        if self.growth() != Growth::Linear {
            return Err(Error::Unsupported(
                "minimal subgradient extraction needs a linear-growth integrand".into(),
            ));
        }
        if schedule.len() < 2 || schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("lambda schedule must be strictly decreasing".into()));
        }
        let last_lambda = schedule[schedule.len() - 1];
        if last_lambda > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "lambda schedule must reach 1e-8, ends at {last_lambda}"
            )));
        }
        let mut prev = self.yosida(schedule[0], z)?;
        let mut last = prev;
        let mut gap = f64::INFINITY;
        for &lambda in &schedule[1..] {
            last = self.yosida(lambda, z)?;
            gap = (last - prev).norm();
            prev = last;
        }
        if gap >= 1e-6 {
            return Err(Error::Convergence {
                what: "minimal subgradient",
                iterations: schedule.len(),
                residual: gap,
            });
        }
        let value = match self.gradient(z) {
            Some(grad) if (grad - last).norm() < 1e-6 => grad,
            _ => last,
        };
        Ok(SubgradientSelection { point: z, value, is_minimal_norm: true, lambda_used: last_lambda })
    }

    fn custom_prox(&self, lambda: f64, z: PlanePoint) -> Result<PlanePoint> {
        let IntegrandKind::Custom(custom) = self.kind() else {
            unreachable!("custom_prox on built-in kind")
        };
        if let Some(prox) = &custom.prox {
            return Ok(prox(lambda, z));
        }
        let objective = |y: PlanePoint| (y - z).norm_sq() / (2.0 * lambda) + self.value(y);
        let scale = 1.0 + z.norm();
        if let Some(grad) = &custom.gradient {
            // Damped Newton on the optimality condition y − z + λ∇g(y) = 0,
            // with a finite-difference Jacobian of the analytic gradient.
            let residual = |y: PlanePoint| y - z + grad(y) * lambda;
            let mut y = z;
            let mut res = residual(y);
            for _ in 0..INNER_CAP {
                if res.norm() <= 1e-12 * scale {
                    return Ok(y);
                }
                let eps = 1e-7 * (1.0 + y.max_abs());
                let gx = (grad(y + PlanePoint::new(eps, 0.0)) - grad(y - PlanePoint::new(eps, 0.0))) * (0.5 / eps);
                let gy = (grad(y + PlanePoint::new(0.0, eps)) - grad(y - PlanePoint::new(0.0, eps))) * (0.5 / eps);
                let (j11, j12, j21, j22) = (1.0 + lambda * gx.x, lambda * gy.x, lambda * gx.y, 1.0 + lambda * gy.y);
                let det = j11 * j22 - j12 * j21;
                let mut step = if det.abs() > 1e-300 {
                    PlanePoint::new((j22 * res.x - j12 * res.y) / det, (j11 * res.y - j21 * res.x) / det)
                } else {
                    res
                };
                let f0 = objective(y);
                let mut accepted = false;
                for _ in 0..60 {
                    let cand = y - step;
                    let cres = residual(cand);
                    if objective(cand) <= f0 || cres.norm() < res.norm() {
                        y = cand;
                        res = cres;
                        accepted = true;
                        break;
                    }
                    step = step * 0.5;
                }
                if !accepted {
                    break;
                }
            }
            let r = res.norm();
            if r <= 1e-12 * scale {
                return Ok(y);
            }
            return Err(Error::Convergence { what: "custom prox", iterations: INNER_CAP, residual: r });
        }
        // Value-only integrand: golden-section line minimization cycling over
        // four directions. Resolution is limited by rounding in the objective.
        let dirs = [
            PlanePoint::new(1.0, 0.0),
            PlanePoint::new(0.0, 1.0),
            PlanePoint::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
            PlanePoint::new(std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2),
        ];
        let tol = 1e-9 * scale;
        let mut y = z;
        let mut moved = f64::INFINITY;
        let mut evaluations = 0;
        while evaluations < INNER_CAP {
            let start = y;
            for d in dirs {
                let (t, used) = golden_line_min(|t| objective(y + d * t), scale, tol * 0.1);
                evaluations += used;
                y += d * t;
            }
            moved = (y - start).norm();
            if moved <= tol {
                return Ok(y);
            }
        }
        Err(Error::Convergence { what: "custom prox", iterations: evaluations, residual: moved })
    }
}

fn radial_point(profile: &RadialProfile, lambda: f64, z: PlanePoint) -> PlanePoint {
    let s = z.norm();
    if s == 0.0 {
        return PlanePoint::ZERO;
    }
    z * (radial_prox_radius(profile, lambda, s) / s)
}

fn radial_yosida(profile: &RadialProfile, lambda: f64, z: PlanePoint) -> PlanePoint {
    let s = z.norm();
    if s == 0.0 {
        return PlanePoint::ZERO;
    }
    let r = radial_prox_radius(profile, lambda, s);
    if r == 0.0 {
        z * lambda.recip()
    } else {
        z * (profile.derivative(r) / s)
    }
}

/// Minimizes a convex function of one variable; returns the argmin and the
/// number of evaluations.
fn golden_line_min(f: impl Fn(f64) -> f64, scale: f64, tol: f64) -> (f64, usize) {
    let f0 = f(0.0);
    let mut used = 1;
    let mut s = 1e-3 * scale;
    for _ in 0..80 {
        used += 2;
        if f(s) >= f0 && f(-s) >= f0 {
            break;
        }
        s *= 2.0;
    }
    let (mut a, mut b) = (-s, s);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    used += 2;
    while b - a > tol && used < INNER_CAP {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
        used += 1;
    }
    let t = 0.5 * (a + b);
    if f(t) <= f0 {
        (t, used + 2)
    } else {
        (0.0, used + 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: PlanePoint, b: PlanePoint, tol: f64) -> bool {
        (a - b).max_abs() <= tol
    }

    #[test]
    fn prox_examples() {
        let e = ConvexIntegrand::euclidean_norm();
        assert!(close(e.prox(1.0, PlanePoint::new(3.0, 4.0)).unwrap(), PlanePoint::new(2.4, 3.2), 1e-15));
        let q = ConvexIntegrand::quadratic();
        assert!(close(q.prox(1.0, PlanePoint::new(2.0, 0.0)).unwrap(), PlanePoint::new(2.0 / 3.0, 0.0), 1e-15));
        let z = PlanePoint::new(0.7, -1.3);
        for g in [e, ConvexIntegrand::minimal_surface(), ConvexIntegrand::anisotropic_norm(1.0, 2.0).unwrap()] {
            assert!(close(g.prox(1e-8, z).unwrap(), z, 1e-4));
        }
    }

    #[test]
    fn prox_rejects_bad_lambda() {
        let e = ConvexIntegrand::euclidean_norm();
        assert!(e.prox(0.0, PlanePoint::ZERO).is_err());
        assert!(e.prox(-1.0, PlanePoint::ZERO).is_err());
        assert!(e.prox(1.0, PlanePoint::new(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn moreau_examples() {
        let e = ConvexIntegrand::euclidean_norm();
        assert!((e.moreau_envelope(1.0, PlanePoint::new(3.0, 4.0)).unwrap() - 4.5).abs() < 1e-14);
        let z = PlanePoint::new(3.0, 4.0);
        assert!(e.moreau_envelope(1e8, z).unwrap() < 1e-6);
        let q = ConvexIntegrand::quadratic();
        assert!((q.moreau_envelope(0.5, PlanePoint::new(1.0, 0.0)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn yosida_examples() {
        let e = ConvexIntegrand::euclidean_norm();
        let z = PlanePoint::new(3.0, 4.0);
        assert!(close(e.yosida(1.0, z).unwrap(), PlanePoint::new(0.6, 0.8), 1e-15));
        assert!(close(e.yosida(10.0, z).unwrap(), PlanePoint::new(0.3, 0.4), 1e-15));
        let q = ConvexIntegrand::quadratic();
        assert!(close(q.yosida(1.0, PlanePoint::new(3.0, 0.0)).unwrap(), PlanePoint::new(2.0, 0.0), 1e-15));
    }

    #[test]
    fn minimal_subgradient_examples() {
        let sched = default_lambda_schedule();
        let e = ConvexIntegrand::euclidean_norm();
        assert_eq!(e.minimal_subgradient(PlanePoint::ZERO, &sched).unwrap().value, PlanePoint::ZERO);
        let s = e.minimal_subgradient(PlanePoint::new(3.0, 4.0), &sched).unwrap();
        assert!(close(s.value, PlanePoint::new(0.6, 0.8), 1e-15));
        let an = ConvexIntegrand::anisotropic_norm(1.0, 2.0).unwrap();
        let s = an.minimal_subgradient(PlanePoint::new(1.0, 0.0), &sched).unwrap();
        assert!(close(s.value, PlanePoint::new(1.0, 0.0), 1e-12));
    }

    #[test]
    fn minimal_subgradient_needs_schedule_to_1e8() {
        let e = ConvexIntegrand::euclidean_norm();
        assert!(e.minimal_subgradient(PlanePoint::ZERO, &[1.0, 0.1]).is_err());
        assert!(e.minimal_subgradient(PlanePoint::ZERO, &[1e-9, 1.0]).is_err());
        assert!(ConvexIntegrand::quadratic().minimal_subgradient(PlanePoint::ZERO, &default_lambda_schedule()).is_err());
    }

    #[test]
    fn anisotropic_prox_satisfies_optimality() {
        let an = ConvexIntegrand::anisotropic_norm(0.5, 3.0).unwrap();
        for z in [PlanePoint::new(2.0, -1.0), PlanePoint::new(0.1, 5.0), PlanePoint::new(-4.0, 0.3)] {
            let lambda = 0.7;
            let j = an.prox(lambda, z).unwrap();
            if j.norm() > 0.0 {
                let grad = an.gradient(j).unwrap();
                assert!(close(j - z + grad * lambda, PlanePoint::ZERO, 1e-12), "{z:?}");
            }
        }
    }

    #[test]
    fn radial_prox_satisfies_optimality() {
        for profile in [
            RadialProfile::Hyperbolic { eps: 0.01 },
            RadialProfile::LinearHyperbolic,
            RadialProfile::Power { exponent: 3.0 },
        ] {
            let g = ConvexIntegrand::radial(profile).unwrap();
            for &lambda in &[1e-3, 0.5, 20.0] {
                let z = PlanePoint::new(1.5, -2.0);
                let j = g.prox(lambda, z).unwrap();
                if let Some(grad) = g.gradient(j) {
                    if j.norm() > 0.0 {
                        let res = j - z + grad * lambda;
                        assert!(res.norm() < 1e-12 * (1.0 + lambda), "{profile:?} {lambda}: {res:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn custom_prox_matches_closed_forms() {
        // quartic: Newton path
        let q4 = ConvexIntegrand::quartic();
        let z = PlanePoint::new(1.0, 2.0);
        let j = q4.prox(0.3, z).unwrap();
        let res = j - z + j * (j.norm_sq() + 1.0) * 0.3;
        assert!(res.norm() < 1e-12);
        // value-only path, checked against the l1 soft threshold
        let IntegrandKind::Custom(mut custom) = ConvexIntegrand::l1_norm().kind().clone() else { unreachable!() };
        custom.prox = None;
        let l1 = ConvexIntegrand::custom(custom, Growth::Linear, None);
        let j = l1.prox(0.5, PlanePoint::new(2.0, -0.3)).unwrap();
        assert!(close(j, PlanePoint::new(1.5, 0.0), 1e-7), "{j:?}");
    }

    #[test]
    fn envelope_prox_is_prox_of_envelope() {
        // For g = |·| the envelope is Huber; check optimality y − z + μ A_λ(y) = 0.
        let e = ConvexIntegrand::euclidean_norm();
        let (lambda, mu) = (0.2, 0.7);
        for z in [PlanePoint::new(3.0, 1.0), PlanePoint::new(0.1, 0.05)] {
            let y = e.envelope_prox(lambda, mu, z).unwrap();
            let r = y - z + e.yosida(lambda, y).unwrap() * mu;
            assert!(r.norm() < 1e-14, "{r:?}");
        }
    }
}
