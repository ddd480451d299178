use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::geometry::PlanePoint;

pub type ScalarField = Arc<dyn Fn(PlanePoint) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(PlanePoint) -> PlanePoint + Send + Sync>;
/// `(λ, z) ↦ J_λ(z)`.
pub type ProxMap = Arc<dyn Fn(f64, PlanePoint) -> PlanePoint + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    Linear,
    Superlinear,
}

/// Profiles `f` for radial integrands `g(z) = f(|z|)`. All are convex and
/// nondecreasing on `[0, ∞)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialProfile {
    /// `sqrt(eps² + s²)`
    Hyperbolic { eps: f64 },
    /// `s + sqrt(1 + s²) - 1`, strictly convex with `f'(0) = 1` and slope 2 at infinity.
    LinearHyperbolic,
    /// `s^p / p` with `p ≥ 1`.
    Power { exponent: f64 },
}

/// `sqrt(a² + b²)`, with the overflow-safe libm path only for huge inputs.
#[inline]
fn hyp(a: f64, b: f64) -> f64 {
    if a.abs() < 1e150 && b.abs() < 1e150 {
        (a * a + b * b).sqrt()
    } else {
        a.hypot(b)
    }
}

impl RadialProfile {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RadialProfile::Hyperbolic { eps } if !(eps > 0.0 && eps.is_finite()) => Err(
                Error::InvalidParameter(format!("hyperbolic profile needs eps > 0, got {eps}")),
            ),
            RadialProfile::Power { exponent } if !(exponent >= 1.0 && exponent.is_finite()) => {
                Err(Error::InvalidParameter(format!(
                    "power profile needs exponent >= 1, got {exponent}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match *self {
            RadialProfile::Hyperbolic { eps } => hyp(eps, s),
            RadialProfile::LinearHyperbolic => s + (1.0 + s * s).sqrt() - 1.0,
            RadialProfile::Power { exponent } => s.powf(exponent) / exponent,
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match *self {
            RadialProfile::Hyperbolic { eps } => s / hyp(eps, s),
            RadialProfile::LinearHyperbolic => 1.0 + s / (1.0 + s * s).sqrt(),
            RadialProfile::Power { exponent } => {
                if exponent == 1.0 {
                    1.0
                } else {
                    s.powf(exponent - 1.0)
                }
            }
        }
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        match *self {
            RadialProfile::Hyperbolic { eps } => eps * eps / hyp(eps, s).powi(3),
            RadialProfile::LinearHyperbolic => (1.0 + s * s).powf(-1.5),
            RadialProfile::Power { exponent } => {
                if exponent == 1.0 {
                    0.0
                } else {
                    (exponent - 1.0) * s.powf(exponent - 2.0)
                }
            }
        }
    }

    /// `lim f(s)/s`, or `None` when infinite.
    pub fn slope_at_infinity(&self) -> Option<f64> {
        match *self {
            RadialProfile::Hyperbolic { .. } => Some(1.0),
            RadialProfile::LinearHyperbolic => Some(2.0),
            RadialProfile::Power { exponent } if exponent == 1.0 => Some(1.0),
            RadialProfile::Power { .. } => None,
        }
    }

    pub fn growth(&self) -> Growth {
        if self.slope_at_infinity().is_some() {
            Growth::Linear
        } else {
            Growth::Superlinear
        }
    }

    fn growth_constant(&self) -> Option<f64> {
        match *self {
            RadialProfile::Hyperbolic { eps } => Some(eps.max(1.0)),
            RadialProfile::LinearHyperbolic => Some(2.0),
            RadialProfile::Power { exponent } if exponent == 1.0 => Some(1.0),
            RadialProfile::Power { .. } => None,
        }
    }
}

/// A user-supplied integrand. The value closure must be convex; the other
/// closures are optional closed forms.
#[derive(Clone)]
pub struct CustomIntegrand {
    pub name: String,
    pub value: ScalarField,
    pub gradient: Option<VectorField>,
    pub recession: Option<ScalarField>,
    pub prox: Option<ProxMap>,
}

impl fmt::Debug for CustomIntegrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomIntegrand")
            .field("name", &self.name)
            .field("gradient", &self.gradient.is_some())
            .field("recession", &self.recession.is_some())
            .field("prox", &self.prox.is_some())
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum IntegrandKind {
    EuclideanNorm,
    RadialOfNorm(RadialProfile),
    AnisotropicNorm { a: f64, b: f64 },
    Quadratic,
    MinimalSurface,
    Custom(CustomIntegrand),
}

/// Result of the finite-schedule recession estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecessionEstimate {
    pub value: f64,
    /// Whether the sampled quotients `g(tp + z)/t` form a monotone sequence.
    pub monotone: bool,
    /// Whether the last two quotients differ by less than `1e-8 (1 + |p|)`.
    pub converged: bool,
    pub quotients: Vec<(f64, f64)>,
}

/// A convex integrand `g: R² → R`.
#[derive(Clone, Debug)]
pub struct ConvexIntegrand {
    kind: IntegrandKind,
    growth: Growth,
    lipschitz_bound: Option<f64>,
    growth_constant: Option<f64>,
}

impl ConvexIntegrand {
    pub fn euclidean_norm() -> Self {
        ConvexIntegrand {
            kind: IntegrandKind::EuclideanNorm,
            growth: Growth::Linear,
            lipschitz_bound: Some(1.0),
            growth_constant: Some(1.0),
        }
    }

    /// `g(z) = sqrt(z₁²/a² + z₂²/b²)`.
    pub fn anisotropic_norm(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "anisotropic norm needs a > 0 and b > 0, got a = {a}, b = {b}"
            )));
        }
        let c = a.max(b).max(1.0 / a).max(1.0 / b).max(1.0);
        Ok(ConvexIntegrand {
            kind: IntegrandKind::AnisotropicNorm { a, b },
            growth: Growth::Linear,
            lipschitz_bound: Some((1.0 / a).max(1.0 / b)),
            growth_constant: Some(c),
        })
    }

    /// `g(z) = |z|²`.
    pub fn quadratic() -> Self {
        ConvexIntegrand {
            kind: IntegrandKind::Quadratic,
            growth: Growth::Superlinear,
            lipschitz_bound: None,
            growth_constant: None,
        }
    }

    /// `g(z) = sqrt(1 + |z|²)`.
    pub fn minimal_surface() -> Self {
        ConvexIntegrand {
            kind: IntegrandKind::MinimalSurface,
            growth: Growth::Linear,
            lipschitz_bound: Some(1.0),
            growth_constant: Some(1.0),
        }
    }

    pub fn radial(profile: RadialProfile) -> Result<Self> {
        profile.validate()?;
        let growth = profile.growth();
        let lipschitz_bound = profile.slope_at_infinity();
        let growth_constant = profile.growth_constant();
        Ok(ConvexIntegrand {
            kind: IntegrandKind::RadialOfNorm(profile),
            growth,
            lipschitz_bound,
            growth_constant,
        })
    }

    /// Wraps a custom convex function. Values may be negative.
    pub fn custom(custom: CustomIntegrand, growth: Growth, lipschitz_bound: Option<f64>) -> Self {
        ConvexIntegrand {
            kind: IntegrandKind::Custom(custom),
            growth,
            lipschitz_bound,
            growth_constant: None,
        }
    }

    /// `g(z) = |z₁| + |z₂|`, which fails the midpoint-collinearity condition.
    pub fn l1_norm() -> Self {
        let value: ScalarField = Arc::new(|z: PlanePoint| z.x.abs() + z.y.abs());
        let recession = value.clone();
        ConvexIntegrand {
            kind: IntegrandKind::Custom(CustomIntegrand {
                name: "l1_norm".into(),
                value,
                gradient: None,
                recession: Some(recession),
                prox: Some(Arc::new(|lambda: f64, z: PlanePoint| {
                    let shrink = |t: f64| t.signum() * (t.abs() - lambda).max(0.0);
                    PlanePoint::new(shrink(z.x), shrink(z.y))
                })),
            }),
            growth: Growth::Linear,
            lipschitz_bound: Some(std::f64::consts::SQRT_2),
            growth_constant: Some(std::f64::consts::SQRT_2),
        }
    }

    /// `g(z) = |z|⁴/4 + |z|²/2`, a superlinear integrand with an analytic gradient.
    pub fn quartic() -> Self {
        let value: ScalarField = Arc::new(|z: PlanePoint| {
            let r2 = z.norm_sq();
            0.25 * r2 * r2 + 0.5 * r2
        });
        let gradient: VectorField = Arc::new(|z: PlanePoint| z * (z.norm_sq() + 1.0));
        ConvexIntegrand::custom(
            CustomIntegrand {
                name: "quartic".into(),
                value,
                gradient: Some(gradient),
                recession: None,
                prox: None,
            },
            Growth::Superlinear,
            None,
        )
    }

    pub fn kind(&self) -> &IntegrandKind {
        &self.kind
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    pub fn lipschitz_bound(&self) -> Option<f64> {
        self.lipschitz_bound
    }

    /// The stored constant `C ≥ 1` with `|z|/C ≤ g(z) ≤ C(1 + |z|)`, when known.
    pub fn growth_constant(&self) -> Option<f64> {
        self.growth_constant
    }

    pub fn name(&self) -> String {
        match &self.kind {
            IntegrandKind::EuclideanNorm => "euclidean_norm".into(),
            IntegrandKind::RadialOfNorm(p) => format!("radial({p:?})"),
            IntegrandKind::AnisotropicNorm { a, b } => format!("anisotropic_norm(a={a}, b={b})"),
            IntegrandKind::Quadratic => "quadratic".into(),
            IntegrandKind::MinimalSurface => "minimal_surface".into(),
            IntegrandKind::Custom(c) => c.name.clone(),
        }
    }

    /// Unchecked evaluation for inner loops.
    #[inline]
    pub fn value(&self, z: PlanePoint) -> f64 {
        match &self.kind {
            IntegrandKind::EuclideanNorm => z.norm(),
            IntegrandKind::RadialOfNorm(p) => p.value(z.norm()),
            IntegrandKind::AnisotropicNorm { a, b } => (z.x / a).hypot(z.y / b),
            IntegrandKind::Quadratic => z.norm_sq(),
            IntegrandKind::MinimalSurface => (1.0 + z.norm_sq()).sqrt(),
            IntegrandKind::Custom(c) => (c.value)(z),
        }
    }

    pub fn eval(&self, z: PlanePoint) -> Result<f64> {
        ensure_finite("integrand argument", &[z.x, z.y])?;
        Ok(self.value(z))
    }

    /// True when `gradient` is defined everywhere.
    pub fn is_differentiable(&self) -> bool {
        match &self.kind {
            IntegrandKind::Quadratic | IntegrandKind::MinimalSurface => true,
            IntegrandKind::RadialOfNorm(p) => p.derivative(0.0) == 0.0,
            IntegrandKind::Custom(c) => c.gradient.is_some(),
            IntegrandKind::EuclideanNorm | IntegrandKind::AnisotropicNorm { .. } => false,
        }
    }

    /// The gradient at `z`, or `None` where `g` is not differentiable or no
    /// closed form is available.
    pub fn gradient(&self, z: PlanePoint) -> Option<PlanePoint> {
        match &self.kind {
            IntegrandKind::Quadratic => Some(z * 2.0),
            IntegrandKind::MinimalSurface => Some(z * (1.0 + z.norm_sq()).sqrt().recip()),
            IntegrandKind::EuclideanNorm => {
                let r = z.norm();
                (r > 0.0).then(|| z * r.recip())
            }
            IntegrandKind::AnisotropicNorm { a, b } => {
                let g = (z.x / a).hypot(z.y / b);
                (g > 0.0).then(|| PlanePoint::new(z.x / (a * a * g), z.y / (b * b * g)))
            }
            IntegrandKind::RadialOfNorm(p) => {
                let r = z.norm();
                if r > 0.0 {
                    Some(z * (p.derivative(r) / r))
                } else if p.derivative(0.0) == 0.0 {
                    Some(PlanePoint::ZERO)
                } else {
                    None
                }
            }
            IntegrandKind::Custom(c) => c.gradient.as_ref().map(|grad| grad(z)),
        }
    }

    /// Closed-form recession function where available.
    pub fn recession_exact(&self, p: PlanePoint) -> Option<f64> {
        if self.growth == Growth::Superlinear {
            return None;
        }
        match &self.kind {
            IntegrandKind::EuclideanNorm | IntegrandKind::MinimalSurface => Some(p.norm()),
            IntegrandKind::AnisotropicNorm { .. } => Some(self.value(p)),
            IntegrandKind::RadialOfNorm(profile) => profile.slope_at_infinity().map(|s| s * p.norm()),
            IntegrandKind::Quadratic => None,
            IntegrandKind::Custom(c) => c.recession.as_ref().map(|r| r(p)),
        }
    }

    /// Estimates `lim g(tp)/t` on the geometric schedule `t = 10 … t_max`.
    pub fn recession(&self, p: PlanePoint, t_max: f64, n_steps: usize) -> Result<RecessionEstimate> {
        self.recession_shifted(p, PlanePoint::ZERO, t_max, n_steps)
    }

    /// Estimates `lim g(tp + z)/t`, which agrees with the unshifted limit for
    /// Lipschitz `g`.
    pub fn recession_shifted(
        &self,
        p: PlanePoint,
        shift: PlanePoint,
        t_max: f64,
        n_steps: usize,
    ) -> Result<RecessionEstimate> {
        if self.growth == Growth::Superlinear {
            return Err(Error::Unsupported(format!(
                "recession function of superlinear integrand {} is infinite off the origin",
                self.name()
            )));
        }
        ensure_finite("recession direction", &[p.x, p.y, shift.x, shift.y])?;
        if !(t_max >= 1e3) {
            return Err(Error::InvalidParameter(format!("t_max must be at least 1e3, got {t_max}")));
        }
        if n_steps < 2 {
            return Err(Error::InvalidParameter("recession schedule needs at least 2 steps".into()));
        }
        let ratio = (t_max / 10.0).powf(1.0 / (n_steps - 1) as f64);
        let mut quotients = Vec::with_capacity(n_steps);
        let mut t = 10.0;
        for k in 0..n_steps {
            if k == n_steps - 1 {
                t = t_max;
            }
            quotients.push((t, self.value(p * t + shift) / t));
            t *= ratio;
        }
        let values: Vec<f64> = quotients.iter().map(|q| q.1).collect();
        let nonincreasing = values.windows(2).all(|w| w[1] <= w[0]);
        let nondecreasing = values.windows(2).all(|w| w[1] >= w[0]);
        let last = values[values.len() - 1];
        let prev = values[values.len() - 2];
        Ok(RecessionEstimate {
            value: last,
            monotone: nonincreasing || nondecreasing,
            converged: (last - prev).abs() < 1e-8 * (1.0 + p.norm()),
            quotients,
        })
    }

    /// `g∞(p)`: closed form when known, otherwise the schedule estimate with
    /// `t_max = 1e8`.
    pub fn recession_value(&self, p: PlanePoint) -> Result<f64> {
        if let Some(v) = self.recession_exact(p) {
            return Ok(v);
        }
        Ok(self.recession(p, 1e8, 8)?.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let e = ConvexIntegrand::euclidean_norm();
        assert_eq!(e.eval(PlanePoint::new(3.0, 4.0)).unwrap(), 5.0);
        let an = ConvexIntegrand::anisotropic_norm(1.0, 2.0).unwrap();
        let v = an.eval(PlanePoint::new(2.0, 2.0)).unwrap();
        assert!((v - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(ConvexIntegrand::quadratic().eval(PlanePoint::new(1.0, -1.0)).unwrap(), 2.0);
    }

    #[test]
    fn eval_rejects_non_finite() {
        let e = ConvexIntegrand::euclidean_norm();
        assert!(matches!(e.eval(PlanePoint::new(f64::NAN, 0.0)), Err(Error::Domain(_))));
        assert!(e.eval(PlanePoint::new(0.0, f64::INFINITY)).is_err());
    }

    #[test]
    fn anisotropic_requires_positive_axes() {
        assert!(ConvexIntegrand::anisotropic_norm(0.0, 1.0).is_err());
        assert!(ConvexIntegrand::anisotropic_norm(1.0, -2.0).is_err());
    }

    #[test]
    fn recession_examples() {
        let e = ConvexIntegrand::euclidean_norm();
        let r = e.recession(PlanePoint::new(0.0, 1.0), 1e6, 6).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);

        let an = ConvexIntegrand::anisotropic_norm(1.0, 2.0).unwrap();
        let r = an.recession(PlanePoint::new(2.0, 2.0), 1e6, 6).unwrap();
        assert!((r.value - 5f64.sqrt()).abs() < 1e-12);

        // sqrt(1 + 25 t²)/t at t = 1e6
        let ms = ConvexIntegrand::minimal_surface();
        let r = ms.recession(PlanePoint::new(3.0, 4.0), 1e6, 6).unwrap();
        assert!((r.value - 5.0).abs() < 1e-6);
        assert!(r.converged && r.monotone);
    }

    #[test]
    fn recession_of_superlinear_is_unsupported() {
        let q = ConvexIntegrand::quadratic();
        assert!(matches!(
            q.recession(PlanePoint::new(1.0, 0.0), 1e6, 6),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn recession_rejects_short_schedule() {
        let e = ConvexIntegrand::euclidean_norm();
        assert!(e.recession(PlanePoint::new(1.0, 0.0), 10.0, 6).is_err());
    }

    #[test]
    fn l1_witness_evaluates() {
        let l1 = ConvexIntegrand::l1_norm();
        assert_eq!(l1.value(PlanePoint::new(0.5, 0.5)), 1.0);
        assert_eq!(l1.recession_value(PlanePoint::new(-2.0, 1.0)).unwrap(), 3.0);
    }

    #[test]
    fn radial_profiles_match_derivatives() {
        for profile in [
            RadialProfile::Hyperbolic { eps: 0.5 },
            RadialProfile::LinearHyperbolic,
            RadialProfile::Power { exponent: 3.0 },
        ] {
            for &s in &[0.1, 1.0, 4.0] {
                let h = 1e-6;
                let fd = (profile.value(s + h) - profile.value(s - h)) / (2.0 * h);
                assert!((fd - profile.derivative(s)).abs() < 1e-6, "{profile:?} at {s}");
                let fd2 = (profile.derivative(s + h) - profile.derivative(s - h)) / (2.0 * h);
                assert!((fd2 - profile.second_derivative(s)).abs() < 1e-5, "{profile:?} at {s}");
            }
        }
    }
}
