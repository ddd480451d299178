//! Planar vectors, the star operator `z* = (-y, x)`, the drift field
//! `X*(z) = 2 z*`, and tilt transforms of grid functions.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridDomain, GridFunction};

/// A point or vector of the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

impl PlanePoint {
    pub const ZERO: PlanePoint = PlanePoint { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        PlanePoint { x, y }
    }

    pub fn dot(self, other: PlanePoint) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// `⟨self, other*⟩`. Zero exactly when the two vectors are parallel.
    pub fn dot_star(self, other: PlanePoint) -> f64 {
        self.dot(star(other))
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs())
    }
}

impl Add for PlanePoint {
    type Output = PlanePoint;
    fn add(self, rhs: PlanePoint) -> PlanePoint {
        PlanePoint::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for PlanePoint {
    fn add_assign(&mut self, rhs: PlanePoint) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for PlanePoint {
    type Output = PlanePoint;
    fn sub(self, rhs: PlanePoint) -> PlanePoint {
        PlanePoint::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for PlanePoint {
    type Output = PlanePoint;
    fn neg(self) -> PlanePoint {
        PlanePoint::new(-self.x, -self.y)
    }
}

impl Mul<f64> for PlanePoint {
    type Output = PlanePoint;
    fn mul(self, s: f64) -> PlanePoint {
        PlanePoint::new(self.x * s, self.y * s)
    }
}

impl Mul<PlanePoint> for f64 {
    type Output = PlanePoint;
    fn mul(self, p: PlanePoint) -> PlanePoint {
        p * self
    }
}

impl From<[f64; 2]> for PlanePoint {
    fn from(v: [f64; 2]) -> Self {
        PlanePoint::new(v[0], v[1])
    }
}

/// Rotation by a quarter turn: `(x, y) ↦ (-y, x)`.
pub fn star(z: PlanePoint) -> PlanePoint {
    PlanePoint::new(-z.y, z.x)
}

/// The drift field `X*(z) = 2 z*`.
pub fn xstar(z: PlanePoint) -> PlanePoint {
    PlanePoint::new(-2.0 * z.y, 2.0 * z.x)
}

/// The transform `u ↦ u(· + τ) + 2⟨τ*, ·⟩ + ξ`, which maps functions on `Ω`
/// to functions on `Ω_τ = Ω − τ` and leaves the drift functional unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltTransform {
    pub tau: PlanePoint,
    pub xi: f64,
}

impl TiltTransform {
    pub fn new(tau: PlanePoint, xi: f64) -> Result<Self> {
        crate::error::ensure_finite("tilt parameters", &[tau.x, tau.y, xi])?;
        Ok(TiltTransform { tau, xi })
    }

    /// The affine part added at a point of the translated domain.
    pub fn offset_at(&self, z: PlanePoint) -> f64 {
        2.0 * star(self.tau).dot(z) + self.xi
    }
}

/// Applies a tilt transform. `target` must be `u.domain()` translated by `−τ`
/// on the same lattice; node `k` of the target then corresponds to node `k`
/// of the source.
pub fn apply_tilt(u: &GridFunction, t: &TiltTransform, target: &GridDomain) -> Result<GridFunction> {
    let source = u.domain();
    source.check_lattice_shift(t.tau)?;
    let expected = source.translated(-t.tau)?;
    if !expected.same_lattice(target) {
        return Err(Error::GridMismatch(
            "tilt target is not the translate of the source domain".into(),
        ));
    }
    let mut values = vec![0.0; u.values().len()];
    for k in target.in_domain_nodes() {
        values[k] = u.values()[k] + t.offset_at(target.point(k));
    }
    GridFunction::from_values(std::sync::Arc::new(target.clone()), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn star_examples() {
        assert_eq!(star(PlanePoint::new(1.0, 2.0)), PlanePoint::new(-2.0, 1.0));
        assert_eq!(star(PlanePoint::ZERO), PlanePoint::ZERO);
        assert_eq!(star(star(PlanePoint::new(1.0, 2.0))), PlanePoint::new(-1.0, -2.0));
    }

    #[test]
    fn xstar_examples() {
        assert_eq!(xstar(PlanePoint::new(1.0, 0.0)), PlanePoint::new(0.0, 2.0));
        assert_eq!(xstar(PlanePoint::new(0.0, 1.0)), PlanePoint::new(-2.0, 0.0));
        assert_eq!(xstar(PlanePoint::new(1.0, 1.0)), PlanePoint::new(-2.0, 2.0));
    }

    #[test]
    fn parallel_vectors_have_zero_star_product() {
        let z = PlanePoint::new(0.3, -1.7);
        assert_eq!(z.dot_star(z * 3.0), 0.0);
    }

    proptest! {
        #[test]
        fn star_is_an_isometry_and_preserves_dot(x1 in -1e3..1e3f64, y1 in -1e3..1e3f64,
                                                  x2 in -1e3..1e3f64, y2 in -1e3..1e3f64) {
            let a = PlanePoint::new(x1, y1);
            let b = PlanePoint::new(x2, y2);
            prop_assert_eq!(star(a).norm(), a.norm());
            prop_assert_eq!(a.dot(b), star(a).dot(star(b)));
        }

        #[test]
        fn drift_is_linear_under_translation(x in -50.0..50.0f64, y in -50.0..50.0f64,
                                             tx in -50.0..50.0f64, ty in -50.0..50.0f64) {
            let z = PlanePoint::new(x, y);
            let tau = PlanePoint::new(tx, ty);
            let lhs = xstar(z + tau);
            let rhs = xstar(z) + star(tau) * 2.0;
            prop_assert!((lhs - rhs).max_abs() <= 1e-12 * (1.0 + z.norm() + tau.norm()));
        }
    }
}
