//! Bounded slope condition: affine supports of boundary data, barrier
//! envelopes, and the Lipschitz constants `M = Q + 2 sup|z|`,
//! `K = M + 2 sup|z|`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PlanePoint;
use crate::grid::{BoundaryDatum, DomainShape};

/// `L(z) = ⟨a, z⟩ + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFunction {
    pub slope: PlanePoint,
    pub offset: f64,
}

impl AffineFunction {
    pub fn new(slope: PlanePoint, offset: f64) -> Self {
        AffineFunction { slope, offset }
    }

    /// The affine function with slope `a` that takes the value `v` at `z0`.
    pub fn through(slope: PlanePoint, z0: PlanePoint, v: f64) -> Self {
        AffineFunction { slope, offset: v - slope.dot(z0) }
    }

    pub fn eval(&self, z: PlanePoint) -> f64 {
        self.slope.dot(z) + self.offset
    }

    pub fn lipschitz(&self) -> f64 {
        self.slope.norm()
    }

    pub fn datum(&self) -> BoundaryDatum {
        BoundaryDatum::affine(self.slope, self.offset)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BscCertificate {
    pub q: f64,
    pub anchors: Vec<PlanePoint>,
    pub lower_supports: Vec<AffineFunction>,
    pub upper_supports: Vec<AffineFunction>,
}

/// Anchors at which no support with slope at most `q_max` was found.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BscFailure {
    pub q_max: f64,
    pub lower_failures: Vec<PlanePoint>,
    pub upper_failures: Vec<PlanePoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BscVerification {
    pub passed: bool,
    pub tolerance: f64,
    /// Worst `w⁻ − φ` and `φ − w⁺` over anchors and samples.
    pub ordering: f64,
    /// Worst `|w±(z₀) − φ(z₀)|`.
    pub contact: f64,
    /// Worst `|slope| − Q`.
    pub slope: f64,
}

/// `n` points equally spaced in arc length along the boundary.
pub fn boundary_samples(shape: &DomainShape, n: usize) -> Vec<PlanePoint> {
    match shape {
        DomainShape::Disk { center, radius } => (0..n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / n as f64;
                *center + PlanePoint::new(t.cos(), t.sin()) * *radius
            })
            .collect(),
        _ => {
            let verts = polygon_vertices(shape);
            let m = verts.len();
            let perimeter = shape.perimeter();
            let mut out = Vec::with_capacity(n);
            let (mut edge, mut start) = (0, 0.0);
            for k in 0..n {
                let s = perimeter * k as f64 / n as f64;
                loop {
                    let len = (verts[(edge + 1) % m] - verts[edge]).norm();
                    if s <= start + len || edge == m - 1 {
                        let t = ((s - start) / len).clamp(0.0, 1.0);
                        out.push(verts[edge] + (verts[(edge + 1) % m] - verts[edge]) * t);
                        break;
                    }
                    start += len;
                    edge += 1;
                }
            }
            out
        }
    }
}

fn polygon_vertices(shape: &DomainShape) -> Vec<PlanePoint> {
    match shape {
        DomainShape::Square { center, side } => {
            let s = 0.5 * side;
            vec![
                *center + PlanePoint::new(-s, -s),
                *center + PlanePoint::new(s, -s),
                *center + PlanePoint::new(s, s),
                *center + PlanePoint::new(-s, s),
            ]
        }
        DomainShape::Polygon { vertices } => vertices.clone(),
        DomainShape::Disk { .. } => unreachable!("disk has no vertices"),
    }
}

/// Affine data supports itself at every anchor, so `Q = |a|`.
pub fn certify_affine(l: &AffineFunction, anchors: &[PlanePoint]) -> BscCertificate {
    BscCertificate {
        q: l.lipschitz(),
        anchors: anchors.to_vec(),
        lower_supports: vec![*l; anchors.len()],
        upper_supports: vec![*l; anchors.len()],
    }
}

/// Clips a convex polygon to `⟨n, a⟩ ≤ c`.
fn clip(poly: &[PlanePoint], n: PlanePoint, c: f64) -> Vec<PlanePoint> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let (p, q) = (poly[k], poly[(k + 1) % poly.len()]);
        let (fp, fq) = (n.dot(p) - c, n.dot(q) - c);
        if fp <= 0.0 {
            out.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            out.push(p + (q - p) * (fp / (fp - fq)));
        }
    }
    out
}

fn min_norm_point(poly: &[PlanePoint]) -> PlanePoint {
    let n = poly.len();
    if n == 1 {
        return poly[0];
    }
    let inside = (0..n).all(|k| (PlanePoint::ZERO - poly[k]).dot_star(poly[(k + 1) % n] - poly[k]) >= 0.0);
    if inside && n >= 3 {
        return PlanePoint::ZERO;
    }
    let mut best = poly[0];
    for k in 0..n {
        let (p, q) = (poly[k], poly[(k + 1) % n]);
        let e = q - p;
        let t = if e.norm_sq() > 0.0 { (-p.dot(e) / e.norm_sq()).clamp(0.0, 1.0) } else { 0.0 };
        let cand = p + e * t;
        if cand.norm() < best.norm() {
            best = cand;
        }
    }
    best
}

/// Minimal-norm slope `a` with `s⟨a, z − z₀⟩ ≤ s(φ(z) − φ(z₀)) + tol` for
/// every sample, `s = 1` for lower and `s = −1` for upper supports, inside
/// the regular `n_directions`-gon inscribed in the disk of radius `q_max`.
fn support_slope(
    z0: PlanePoint,
    phi0: f64,
    samples: &[(PlanePoint, f64)],
    sign: f64,
    q_max: f64,
    n_directions: usize,
    tol: f64,
) -> Option<PlanePoint> {
    let mut poly: Vec<PlanePoint> = (0..n_directions)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / n_directions as f64;
            PlanePoint::new(t.cos(), t.sin()) * q_max
        })
        .collect();
    for &(z, v) in samples {
        let d = z - z0;
        if d.norm() == 0.0 {
            continue;
        }
        poly = clip(&poly, d * sign, sign * (v - phi0) + tol);
        if poly.is_empty() {
            return None;
        }
    }
    Some(min_norm_point(&poly))
}

/// Searches minimal-slope affine supports of `φ` at each anchor against the
/// sample set.
pub fn construct_supports(
    phi: &BoundaryDatum,
    anchors: &[PlanePoint],
    samples: &[PlanePoint],
    q_max: f64,
    n_directions: usize,
) -> Result<std::result::Result<BscCertificate, BscFailure>> {
    if anchors.is_empty() || samples.is_empty() {
        return Err(Error::InvalidParameter("support construction needs anchors and samples".into()));
    }
    if !(q_max > 0.0 && q_max.is_finite()) || n_directions < 8 {
        return Err(Error::InvalidParameter(format!(
            "need q_max > 0 and n_directions >= 8, got {q_max} and {n_directions}"
        )));
    }
    let sampled: Vec<(PlanePoint, f64)> = samples.iter().map(|&z| (z, phi.eval(z))).collect();
    let scale = 1.0 + sampled.iter().map(|s| s.1.abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    let results: Vec<(Option<PlanePoint>, Option<PlanePoint>)> = anchors
        .par_iter()
        .map(|&z0| {
            let v0 = phi.eval(z0);
            (
                support_slope(z0, v0, &sampled, 1.0, q_max, n_directions, tol),
                support_slope(z0, v0, &sampled, -1.0, q_max, n_directions, tol),
            )
        })
        .collect();
    let mut failure = BscFailure { q_max, lower_failures: Vec::new(), upper_failures: Vec::new() };
    let mut cert = BscCertificate { q: 0.0, anchors: anchors.to_vec(), lower_supports: Vec::new(), upper_supports: Vec::new() };
    for (&z0, (lo, up)) in anchors.iter().zip(results) {
        let v0 = phi.eval(z0);
        match lo {
            Some(a) => cert.lower_supports.push(AffineFunction::through(a, z0, v0)),
            None => failure.lower_failures.push(z0),
        }
        match up {
            Some(a) => cert.upper_supports.push(AffineFunction::through(a, z0, v0)),
            None => failure.upper_failures.push(z0),
        }
    }
    if !failure.lower_failures.is_empty() || !failure.upper_failures.is_empty() {
        return Ok(Err(failure));
    }
    cert.q = cert
        .lower_supports
        .iter()
        .chain(&cert.upper_supports)
        .map(AffineFunction::lipschitz)
        .fold(0.0, f64::max);
    Ok(Ok(cert))
}

pub fn verify_bsc(cert: &BscCertificate, phi: &BoundaryDatum, samples: &[PlanePoint], tol: f64) -> BscVerification {
    let sampled: Vec<(PlanePoint, f64)> = samples.iter().map(|&z| (z, phi.eval(z))).collect();
    let mut ordering = f64::NEG_INFINITY;
    let mut contact: f64 = 0.0;
    let mut slope = f64::NEG_INFINITY;
    for (k, &z0) in cert.anchors.iter().enumerate() {
        let (lo, up) = (cert.lower_supports[k], cert.upper_supports[k]);
        let v0 = phi.eval(z0);
        contact = contact.max((lo.eval(z0) - v0).abs()).max((up.eval(z0) - v0).abs());
        slope = slope.max(lo.lipschitz() - cert.q).max(up.lipschitz() - cert.q);
        for &(z, v) in &sampled {
            ordering = ordering.max(lo.eval(z) - v).max(v - up.eval(z));
        }
    }
    BscVerification {
        passed: ordering <= tol && contact <= tol && slope <= tol,
        tolerance: tol,
        ordering,
        contact,
        slope,
    }
}

/// `f₁ = max w⁻` and `f₂ = min w⁺`.
#[derive(Clone, Debug)]
pub struct Envelopes<'a> {
    cert: &'a BscCertificate,
}

impl<'a> Envelopes<'a> {
    pub fn new(cert: &'a BscCertificate) -> Result<Self> {
        if cert.anchors.is_empty() {
            return Err(Error::InvalidParameter("envelopes need at least one anchor".into()));
        }
        Ok(Envelopes { cert })
    }

    pub fn f1(&self, z: PlanePoint) -> f64 {
        self.cert.lower_supports.iter().map(|l| l.eval(z)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn f2(&self, z: PlanePoint) -> f64 {
        self.cert.upper_supports.iter().map(|l| l.eval(z)).fold(f64::INFINITY, f64::min)
    }
}

pub fn envelopes(cert: &BscCertificate) -> Result<Envelopes<'_>> {
    Envelopes::new(cert)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LipschitzBound {
    pub sup_norm: f64,
    pub m: f64,
    pub k: f64,
}

pub fn lipschitz_bound(q: f64, shape: &DomainShape) -> Result<LipschitzBound> {
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::InvalidParameter(format!("Q must be nonnegative, got {q}")));
    }
    let sup_norm = shape.sup_norm();
    let m = q + 2.0 * sup_norm;
    Ok(LipschitzBound { sup_norm, m, k: m + 2.0 * sup_norm })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_certificates() {
        let l = AffineFunction::new(PlanePoint::new(1.0, -2.0), 0.5);
        let samples = boundary_samples(&DomainShape::unit_square(), 64);
        let cert = certify_affine(&l, &samples);
        assert!((cert.q - 5f64.sqrt()).abs() < 1e-15);
        assert!(verify_bsc(&cert, &l.datum(), &samples, 1e-12).passed);
        let flat = certify_affine(&AffineFunction::new(PlanePoint::ZERO, 1.0), &samples);
        assert_eq!(flat.q, 0.0);
    }

    #[test]
    fn verify_flags_each_family() {
        let l = AffineFunction::new(PlanePoint::new(1.0, 0.0), 0.0);
        let samples = boundary_samples(&DomainShape::unit_disk(), 90);
        let cert = certify_affine(&l, &samples);
        let steep = AffineFunction::through(PlanePoint::new(2.0, 0.0), samples[5], l.eval(samples[5]));
        let mut bad_slope = cert.clone();
        bad_slope.upper_supports[5] = steep;
        let r = verify_bsc(&bad_slope, &l.datum(), &samples, 1e-12);
        assert!(!r.passed && r.slope > 0.9);
        let mut bad_order = cert.clone();
        bad_order.lower_supports[7].offset += 0.1;
        let r = verify_bsc(&bad_order, &l.datum(), &samples, 1e-12);
        assert!(!r.passed && r.ordering > 0.09);
    }

    #[test]
    fn construct_recovers_affine_slope() {
        let a = PlanePoint::new(0.8, 0.3);
        let phi = BoundaryDatum::affine(a, -1.0);
        let shape = DomainShape::Polygon {
            vertices: vec![PlanePoint::new(0.0, 0.0), PlanePoint::new(2.0, 0.0), PlanePoint::new(1.0, 1.5)],
        };
        let samples = boundary_samples(&shape, 120);
        let cert = construct_supports(&phi, &samples, &samples, 5.0, 360).unwrap().unwrap();
        assert!((cert.q - a.norm()).abs() < 1e-6, "{}", cert.q);
        assert!(verify_bsc(&cert, &phi, &samples, 1e-9).passed);
    }

    #[test]
    fn constant_trace_gives_flat_supports() {
        let phi = BoundaryDatum::new("|z|^2", |z| z.norm_sq());
        let samples = boundary_samples(&DomainShape::unit_disk(), 360);
        let cert = construct_supports(&phi, &samples, &samples, 5.0, 360).unwrap().unwrap();
        assert!(cert.q < 1e-6, "{}", cert.q);
        for s in &cert.lower_supports {
            assert!((s.offset - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn saddle_on_disk_satisfies_bsc() {
        let phi = BoundaryDatum::new("x2-y2", |z| z.x * z.x - z.y * z.y);
        let samples = boundary_samples(&DomainShape::unit_disk(), 720);
        let cert = construct_supports(&phi, &samples, &samples, 10.0, 720).unwrap().unwrap();
        assert!(cert.q > 1.0 && cert.q < 6.0, "{}", cert.q);
        assert!(verify_bsc(&cert, &phi, &samples, 1e-9).passed);
        let env = envelopes(&cert).unwrap();
        for &z in &samples {
            assert!(env.f1(z) <= phi.eval(z) + 1e-9 && phi.eval(z) <= env.f2(z) + 1e-9);
        }
    }

    #[test]
    fn construct_fails_below_needed_slope() {
        let phi = BoundaryDatum::affine(PlanePoint::new(3.0, 0.0), 0.0);
        let samples = boundary_samples(&DomainShape::unit_disk(), 90);
        let out = construct_supports(&phi, &samples, &samples, 1.0, 90).unwrap();
        assert!(out.is_err());
    }

    #[test]
    fn envelope_kink_and_lipschitz() {
        let cert = BscCertificate {
            q: 1.0,
            anchors: vec![PlanePoint::new(-1.0, 0.0), PlanePoint::new(1.0, 0.0)],
            lower_supports: vec![
                AffineFunction::new(PlanePoint::new(-1.0, 0.0), 0.0),
                AffineFunction::new(PlanePoint::new(1.0, 0.0), 0.0),
            ],
            upper_supports: vec![AffineFunction::new(PlanePoint::ZERO, 1.0); 2],
        };
        let env = envelopes(&cert).unwrap();
        assert_eq!(env.f1(PlanePoint::new(0.5, 0.0)), 0.5);
        assert_eq!(env.f1(PlanePoint::new(-0.5, 0.0)), 0.5);
        assert_eq!(env.f1(PlanePoint::ZERO), 0.0);
        let mut lip: f64 = 0.0;
        let n = 64;
        let h = 2.0 / n as f64;
        for i in 0..n {
            for j in 0..=n {
                let z = PlanePoint::new(-1.0 + i as f64 * h, -1.0 + j as f64 * h);
                lip = lip.max((env.f1(z + PlanePoint::new(h, 0.0)) - env.f1(z)).abs() / h);
            }
        }
        assert!(lip <= cert.q + 1e-9);
    }

    #[test]
    fn lipschitz_bound_examples() {
        let b = lipschitz_bound(1.0, &DomainShape::unit_square()).unwrap();
        assert!((b.k - (1.0 + 4.0 * 2f64.sqrt())).abs() < 1e-12);
        let b = lipschitz_bound(0.0, &DomainShape::Disk { center: PlanePoint::ZERO, radius: 3.0 }).unwrap();
        assert_eq!(b.k, 12.0);
        let b = lipschitz_bound(5f64.sqrt(), &DomainShape::unit_disk()).unwrap();
        assert!((b.k - (5f64.sqrt() + 4.0)).abs() < 1e-15);
        let far = lipschitz_bound(1.0, &DomainShape::unit_disk().translated(PlanePoint::new(10.0, 0.0))).unwrap();
        assert!(far.k > b.k);
        assert!(lipschitz_bound(-1.0, &DomainShape::unit_disk()).is_err());
    }
}
