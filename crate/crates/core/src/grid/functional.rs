//! The discrete functional. Each cell is split into its four corner
//! triangles (both diagonal triangulations, averaged). On the triangle at a
//! corner the gradient is the P1 gradient through that corner and its two
//! axis neighbours in the cell, and the drift is sampled at the triangle
//! centroid. Affine functions have exact gradients, and the centroid choice
//! makes affine data discrete critical points to third order.

use rayon::prelude::*;
use serde::Serialize;

use super::{BoundaryDatum, GridDomain, GridFunction};
use crate::convex::{ConvexIntegrand, Growth};
use crate::error::{Error, Result};
use crate::geometry::{xstar, PlanePoint};

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::default();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// A pointwise integrand with a gradient, as used by the smooth solvers.
pub trait Density: Sync {
    fn value(&self, z: PlanePoint) -> f64;
    fn gradient(&self, z: PlanePoint) -> PlanePoint;
}

/// `g` itself; only for integrands that are differentiable everywhere.
#[derive(Clone, Copy, Debug)]
pub struct ExactDensity<'a>(&'a ConvexIntegrand);

impl<'a> ExactDensity<'a> {
    pub fn new(g: &'a ConvexIntegrand) -> Result<Self> {
        if g.is_differentiable() {
            Ok(ExactDensity(g))
        } else {
            Err(Error::Unsupported(format!("{} is not differentiable everywhere", g.name())))
        }
    }
}

impl Density for ExactDensity<'_> {
    fn value(&self, z: PlanePoint) -> f64 {
        self.0.value(z)
    }

    fn gradient(&self, z: PlanePoint) -> PlanePoint {
        self.0.gradient(z).unwrap_or(PlanePoint::new(f64::NAN, f64::NAN))
    }
}

/// The Moreau envelope `g_λ` with gradient `A_λ`. Failures of the inner
/// prox surface as NaN.
#[derive(Clone, Copy, Debug)]
pub struct EnvelopeDensity<'a> {
    pub g: &'a ConvexIntegrand,
    pub lambda: f64,
}

impl Density for EnvelopeDensity<'_> {
    fn value(&self, z: PlanePoint) -> f64 {
        self.g.moreau_envelope(self.lambda, z).unwrap_or(f64::NAN)
    }

    fn gradient(&self, z: PlanePoint) -> PlanePoint {
        self.g.yosida(self.lambda, z).unwrap_or(PlanePoint::new(f64::NAN, f64::NAN))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FunctionalValue {
    pub total: f64,
    pub bulk: f64,
    pub boundary_penalty: f64,
}

#[derive(Clone, Debug)]
pub enum Mode {
    /// Boundary nodes must carry `φ`.
    Pinned(BoundaryDatum),
    /// Boundary nodes are free; mismatch is priced by `g∞((φ − u)ν)`.
    Relaxed(BoundaryDatum),
}

impl Mode {
    pub fn datum(&self) -> &BoundaryDatum {
        match self {
            Mode::Pinned(phi) | Mode::Relaxed(phi) => phi,
        }
    }
}

/// Forward difference at the lower-left node of `cell`, which is the
/// gradient on the cell's lower-left corner triangle.
pub fn discrete_gradient(u: &GridFunction, cell: usize) -> Result<PlanePoint> {
    let d = u.domain();
    let (i, j) = d.coords(cell);
    if i + 1 >= d.nx() || j + 1 >= d.ny() || d.cells().binary_search(&cell).is_err() {
        return Err(Error::Domain(format!("cell at node {cell} is not a complete domain cell")));
    }
    Ok(cell_gradients(d, u.values(), cell)[0])
}

/// Gradients on the four corner triangles of `cell`: lower-left,
/// lower-right, upper-left, upper-right.
#[inline]
pub fn cell_gradients(d: &GridDomain, v: &[f64], cell: usize) -> [PlanePoint; 4] {
    let nx = d.nx();
    let inv = d.h().recip();
    let (u00, u10, u01, u11) = (v[cell], v[cell + 1], v[cell + nx], v[cell + nx + 1]);
    let (dx0, dx1) = ((u10 - u00) * inv, (u11 - u01) * inv);
    let (dy0, dy1) = ((u01 - u00) * inv, (u11 - u10) * inv);
    [
        PlanePoint::new(dx0, dy0),
        PlanePoint::new(dx0, dy1),
        PlanePoint::new(dx1, dy0),
        PlanePoint::new(dx1, dy1),
    ]
}

/// Centroids of the four corner triangles, in `cell_gradients` order.
#[inline]
pub fn triangle_centroids(d: &GridDomain, cell: usize) -> [PlanePoint; 4] {
    let c = d.cell_center(cell);
    let s = d.h() / 6.0;
    [
        c + PlanePoint::new(-s, -s),
        c + PlanePoint::new(s, -s),
        c + PlanePoint::new(-s, s),
        c + PlanePoint::new(s, s),
    ]
}

/// Drift at every triangle centroid, four per cell in cell order.
pub(crate) fn drift_samples(d: &GridDomain) -> Vec<PlanePoint> {
    d.cells().iter().flat_map(|&c| triangle_centroids(d, c).map(xstar)).collect()
}

/// Triangle gradients `Ku`, four per cell in cell order.
pub(crate) fn apply_k(d: &GridDomain, v: &[f64]) -> Vec<PlanePoint> {
    d.cells().iter().flat_map(|&c| cell_gradients(d, v, c)).collect()
}

/// Adjoint of `apply_k` for the Euclidean inner products.
pub(crate) fn apply_kt(d: &GridDomain, q: &[PlanePoint]) -> Vec<f64> {
    let mut out = vec![0.0; d.len()];
    scatter(d, q, &mut out);
    out
}

fn scatter(d: &GridDomain, q: &[PlanePoint], out: &mut [f64]) {
    let nx = d.nx();
    let inv = d.h().recip();
    for (m, &c) in d.cells().iter().enumerate() {
        let [p0, p1, p2, p3] = [q[4 * m], q[4 * m + 1], q[4 * m + 2], q[4 * m + 3]];
        // x differences: rows 0 (p0, p1) and 1 (p2, p3)
        let sx0 = (p0.x + p1.x) * inv;
        let sx1 = (p2.x + p3.x) * inv;
        // y differences: columns 0 (p0, p2) and 1 (p1, p3)
        let sy0 = (p0.y + p2.y) * inv;
        let sy1 = (p1.y + p3.y) * inv;
        out[c] += -sx0 - sy0;
        out[c + 1] += sx0 - sy1;
        out[c + nx] += -sx1 + sy0;
        out[c + nx + 1] += sx1 + sy1;
    }
}

/// `Σ_triangles ρ(∇u + X*) h²/4`.
pub(crate) fn bulk_value(density: &dyn Density, d: &GridDomain, v: &[f64], drift: &[PlanePoint]) -> f64 {
    let w = 0.25 * d.h() * d.h();
    let per_cell: Vec<f64> = d
        .cells()
        .par_iter()
        .enumerate()
        .map(|(m, &c)| {
            let grads = cell_gradients(d, v, c);
            (0..4).map(|t| density.value(grads[t] + drift[4 * m + t])).sum::<f64>() * w
        })
        .collect();
    per_cell.into_iter().collect::<KahanSum>().total()
}

/// Bulk value and its gradient with respect to every nodal value.
pub(crate) fn bulk_value_and_gradient(
    density: &dyn Density,
    d: &GridDomain,
    v: &[f64],
    drift: &[PlanePoint],
) -> (f64, Vec<f64>) {
    let w = 0.25 * d.h() * d.h();
    let per_cell: Vec<(f64, [PlanePoint; 4])> = d
        .cells()
        .par_iter()
        .enumerate()
        .map(|(m, &c)| {
            let grads = cell_gradients(d, v, c);
            let mut val = 0.0;
            let mut ps = [PlanePoint::ZERO; 4];
            for t in 0..4 {
                let z = grads[t] + drift[4 * m + t];
                val += density.value(z);
                ps[t] = density.gradient(z) * w;
            }
            (val * w, ps)
        })
        .collect();
    let total = per_cell.iter().map(|p| p.0).collect::<KahanSum>().total();
    let q: Vec<PlanePoint> = per_cell.iter().flat_map(|p| p.1).collect();
    (total, apply_kt(d, &q))
}

/// `Σ_b w_b g∞((φ(z_b) − u_b) ν_b)`.
pub(crate) fn boundary_penalty(g: &ConvexIntegrand, u: &GridFunction, phi: &BoundaryDatum) -> Result<f64> {
    let d = u.domain();
    let mut sum = KahanSum::default();
    for b in d.boundary_nodes() {
        let jump = phi.eval(d.point(b.node)) - u.get(b.node);
        if jump != 0.0 {
            sum.add(b.weight * g.recession_value(b.normal * jump)?);
        }
    }
    Ok(sum.total())
}

pub fn functional_value(g: &ConvexIntegrand, u: &GridFunction, mode: &Mode) -> Result<FunctionalValue> {
    let d = u.domain();
    match mode {
        Mode::Pinned(phi) => {
            for b in d.boundary_nodes() {
                let target = phi.eval(d.point(b.node));
                let got = u.get(b.node);
                if (got - target).abs() > 1e-9 * (1.0 + target.abs()) {
                    let z = d.point(b.node);
                    return Err(Error::InvalidParameter(format!(
                        "pinned functional: u = {got} but phi = {target} at boundary node ({}, {})",
                        z.x, z.y
                    )));
                }
            }
        }
        Mode::Relaxed(_) if g.growth() != Growth::Linear => {
            return Err(Error::Unsupported("relaxed functional needs a linear-growth integrand".into()));
        }
        Mode::Relaxed(_) => {}
    }
    let drift = drift_samples(d);
    let bulk = bulk_value(&PlainDensity(g), d, u.values(), &drift);
    let boundary_penalty = match mode {
        Mode::Pinned(_) => 0.0,
        Mode::Relaxed(phi) => boundary_penalty(g, u, phi)?,
    };
    let total = bulk + boundary_penalty;
    crate::error::ensure_finite("functional value", &[total])?;
    Ok(FunctionalValue { total, bulk, boundary_penalty })
}

/// Value-only view of `g` for evaluation.
struct PlainDensity<'a>(&'a ConvexIntegrand);

impl Density for PlainDensity<'_> {
    fn value(&self, z: PlanePoint) -> f64 {
        self.0.value(z)
    }

    fn gradient(&self, _: PlanePoint) -> PlanePoint {
        unreachable!("value-only density")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::grid::DomainShape;

    fn square(n: usize) -> Arc<GridDomain> {
        Arc::new(GridDomain::unit_square(n).unwrap())
    }

    #[test]
    fn gradient_examples() {
        let d = square(10);
        let a = PlanePoint::new(0.7, -1.1);
        let u = GridFunction::from_fn(d.clone(), |z| a.dot(z) + 3.0).unwrap();
        for &c in d.cells() {
            for g in cell_gradients(&d, u.values(), c) {
                assert!((g - a).max_abs() < 1e-12);
            }
        }
        let c = GridFunction::from_fn(d.clone(), |_| 4.0).unwrap();
        assert_eq!(discrete_gradient(&c, d.index(3, 3)).unwrap(), PlanePoint::ZERO);
        let sq = GridFunction::from_fn(d.clone(), |z| z.x * z.x).unwrap();
        let g = discrete_gradient(&sq, d.index(0, 0)).unwrap();
        assert!((g.x - 0.1).abs() < 1e-12);
        assert!(discrete_gradient(&sq, d.index(10, 0)).is_err());
    }

    #[test]
    fn quadratic_zero_converges_to_eight_thirds() {
        let g = ConvexIntegrand::quadratic();
        let d = square(64);
        let u = GridFunction::zeros(d);
        let v = functional_value(&g, &u, &Mode::Pinned(BoundaryDatum::constant(0.0))).unwrap();
        assert!((v.bulk - 8.0 / 3.0).abs() < 2e-3, "{}", v.bulk);
        assert_eq!(v.boundary_penalty, 0.0);
    }

    #[test]
    fn relaxed_matches_pinned_on_matching_trace() {
        let g = ConvexIntegrand::euclidean_norm();
        let d = Arc::new(GridDomain::new(DomainShape::unit_disk(), 1.0 / 16.0).unwrap());
        let phi = BoundaryDatum::new("x2-y2", |z| z.x * z.x - z.y * z.y);
        let u = phi.sample(d).unwrap();
        let p = functional_value(&g, &u, &Mode::Pinned(phi.clone())).unwrap();
        let r = functional_value(&g, &u, &Mode::Relaxed(phi)).unwrap();
        assert_eq!(r.boundary_penalty, 0.0);
        assert_eq!(p, r);
    }

    #[test]
    fn relaxed_penalty_prices_mismatch() {
        let g = ConvexIntegrand::euclidean_norm();
        let d = square(8);
        let u = GridFunction::zeros(d);
        let r = functional_value(&g, &u, &Mode::Relaxed(BoundaryDatum::constant(2.0))).unwrap();
        // g∞(2ν) = 2 on a boundary of length 4
        assert!((r.boundary_penalty - 8.0).abs() < 1e-12);
        assert!(functional_value(&ConvexIntegrand::quadratic(), &GridFunction::zeros(square(4)), &Mode::Relaxed(BoundaryDatum::constant(0.0))).is_err());
    }

    #[test]
    fn pinned_rejects_wrong_boundary() {
        let g = ConvexIntegrand::quadratic();
        let u = GridFunction::zeros(square(4));
        assert!(functional_value(&g, &u, &Mode::Pinned(BoundaryDatum::constant(1.0))).is_err());
    }

    #[test]
    fn adjoint_identity() {
        let d = Arc::new(GridDomain::new(DomainShape::unit_disk(), 1.0 / 9.0).unwrap());
        let u = GridFunction::from_fn(d.clone(), |z| (2.0 * z.x).sin() + z.y * z.y).unwrap();
        let q: Vec<PlanePoint> = (0..4 * d.cells().len())
            .map(|m| PlanePoint::new((m as f64 * 0.37).cos(), (m as f64 * 0.11).sin()))
            .collect();
        let ku = apply_k(&d, u.values());
        let lhs: f64 = ku.iter().zip(&q).map(|(a, b)| a.dot(*b)).sum();
        let ktq = apply_kt(&d, &q);
        let rhs: f64 = ktq.iter().zip(u.values()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = ConvexIntegrand::minimal_surface();
        let d = square(6);
        let u = GridFunction::from_fn(d.clone(), |z| z.x * z.y + 0.3 * z.x).unwrap();
        let drift = drift_samples(&d);
        let density = ExactDensity::new(&g).unwrap();
        let (_, grad) = bulk_value_and_gradient(&density, &d, u.values(), &drift);
        let mut v = u.values().to_vec();
        for k in [d.index(2, 3), d.index(0, 0), d.index(6, 4)] {
            let eps = 1e-6;
            v[k] += eps;
            let fp = bulk_value(&density, &d, &v, &drift);
            v[k] -= 2.0 * eps;
            let fm = bulk_value(&density, &d, &v, &drift);
            v[k] += eps;
            assert!(((fp - fm) / (2.0 * eps) - grad[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn kahan_recovers_small_terms() {
        let s: KahanSum = [1e16, 1.0, -1e16, 1.0].into_iter().collect();
        assert_eq!(s.total(), 2.0);
    }
}
