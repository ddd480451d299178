use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::integrand::{ConvexIntegrand, Growth};
use super::prox::default_lambda_schedule;
use crate::error::{Error, Result};
use crate::geometry::PlanePoint;

/// Outcome of a sampled condition check. An empty violation list means no
/// counterexample was found on the sample set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub checked: usize,
    /// Pairs for which the premise of the condition held numerically.
    pub premise_hits: usize,
    pub violations: Vec<(PlanePoint, PlanePoint)>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    pub c_estimate: f64,
    /// The estimate on the doubled-twice radius stays within 1.5 times the
    /// estimate on `sample_radius`.
    pub holds: bool,
    pub classification_consistent: bool,
}

/// `|ξ₁·ξ₂*| ≤ tol |ξ₁||ξ₂|`. A zero vector is collinear with everything.
pub fn collinear(a: PlanePoint, b: PlanePoint, tol: f64) -> bool {
    a.dot_star(b).abs() <= tol * a.norm() * b.norm()
}

/// Uniform pairs in `[−radius, radius]²`.
pub fn sample_pairs(n: usize, seed: u64, radius: f64) -> Vec<(PlanePoint, PlanePoint)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || PlanePoint::new(rng.random_range(-radius..=radius), rng.random_range(-radius..=radius));
    (0..n).map(|_| (draw(), draw())).collect()
}

/// Midpoint equality forces collinearity.
pub fn check_condition_a(
    g: &ConvexIntegrand,
    pairs: &[(PlanePoint, PlanePoint)],
    eq_tol: f64,
    collin_tol: f64,
) -> Result<ConditionReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("condition (A) needs at least one pair".into()));
    }
    let mut report = ConditionReport { checked: pairs.len(), premise_hits: 0, violations: Vec::new() };
    for &(a, b) in pairs {
        let (ga, gb) = (g.eval(a)?, g.eval(b)?);
        let gm = g.value((a + b) * 0.5);
        if (gm - 0.5 * (ga + gb)).abs() <= eq_tol * (1.0 + ga.abs() + gb.abs()) {
            report.premise_hits += 1;
            if !collinear(a, b, collin_tol) {
                report.violations.push((a, b));
            }
        }
    }
    Ok(report)
}

/// `g∞(ξ₁) = ⟨p, ξ₁⟩` with `p = ∂⁰g(ξ₂)` forces collinearity. Only the
/// minimal-norm subgradient is tried.
pub fn check_condition_b(
    g: &ConvexIntegrand,
    pairs: &[(PlanePoint, PlanePoint)],
    tol: f64,
) -> Result<ConditionReport> {
    if g.growth() != Growth::Linear {
        return Err(Error::Unsupported("condition (B) needs a linear-growth integrand".into()));
    }
    let schedule = default_lambda_schedule();
    let mut report = ConditionReport { checked: pairs.len(), premise_hits: 0, violations: Vec::new() };
    for &(xi1, xi2) in pairs {
        let p = g.minimal_subgradient(xi2, &schedule)?.value;
        let rec = g.recession_value(xi1)?;
        if (rec - p.dot(xi1)).abs() <= tol * (1.0 + xi1.norm()) {
            report.premise_hits += 1;
            if !collinear(xi1, xi2, 1e-6) {
                report.violations.push((xi1, xi2));
            }
        }
    }
    Ok(report)
}

fn ring_samples(radius: f64, n: usize) -> impl Iterator<Item = PlanePoint> {
    let rings = (n as f64).sqrt().ceil() as usize;
    let per_ring = n.div_ceil(rings);
    (1..=rings).flat_map(move |k| {
        let r = radius * k as f64 / rings as f64;
        (0..per_ring).map(move |j| {
            let t = std::f64::consts::TAU * (j as f64 + 0.5 * (k % 2) as f64) / per_ring as f64;
            PlanePoint::new(r * t.cos(), r * t.sin())
        })
    })
}

fn growth_estimate(g: &ConvexIntegrand, radius: f64, n: usize) -> f64 {
    let mut c: f64 = 1.0;
    for z in std::iter::once(PlanePoint::ZERO).chain(ring_samples(radius, n)) {
        let v = g.value(z);
        let r = z.norm();
        c = c.max(v / (1.0 + r));
        if r > 0.0 {
            c = c.max(if v > 0.0 { r / v } else { f64::INFINITY });
        }
    }
    c
}

/// Smallest `C ≥ 1` with `|z|/C ≤ g(z) ≤ C(1 + |z|)` on ring samples.
pub fn growth_constants(g: &ConvexIntegrand, sample_radius: f64, n_samples: usize) -> Result<GrowthReport> {
    if n_samples < 100 {
        return Err(Error::InvalidParameter(format!("growth estimate needs >= 100 samples, got {n_samples}")));
    }
    if !(sample_radius > 0.0 && sample_radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("sample radius must be positive, got {sample_radius}")));
    }
    let c = growth_estimate(g, sample_radius, n_samples);
    let extended = growth_estimate(g, 4.0 * sample_radius, n_samples);
    let holds = c.is_finite() && extended <= 1.5 * c;
    Ok(GrowthReport {
        c_estimate: c,
        holds,
        classification_consistent: holds == (g.growth() == Growth::Linear),
    })
}

/// Midpoint-convexity defects `g(θz₁+(1−θ)z₂) − θg(z₁) − (1−θ)g(z₂)` above
/// `1e-12·scale` on random triples.
pub fn convexity_violations(g: &ConvexIntegrand, n: usize, seed: u64, radius: f64) -> Vec<(PlanePoint, PlanePoint, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..n {
        let a = PlanePoint::new(rng.random_range(-radius..=radius), rng.random_range(-radius..=radius));
        let b = PlanePoint::new(rng.random_range(-radius..=radius), rng.random_range(-radius..=radius));
        let t: f64 = rng.random();
        let (ga, gb) = (g.value(a), g.value(b));
        let lhs = g.value(a * t + b * (1.0 - t));
        let rhs = t * ga + (1.0 - t) * gb;
        let scale = 1.0 + ga.abs() + gb.abs();
        if lhs > rhs + 1e-12 * scale {
            out.push((a, b, t));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_a_on_examples() {
        let e = ConvexIntegrand::euclidean_norm();
        let pairs = [(PlanePoint::new(1.0, 0.0), PlanePoint::new(2.0, 0.0))];
        let r = check_condition_a(&e, &pairs, 1e-12, 1e-6).unwrap();
        assert_eq!(r.premise_hits, 1);
        assert!(r.passed());

        let l1 = ConvexIntegrand::l1_norm();
        let pairs = [(PlanePoint::new(1.0, 0.0), PlanePoint::new(0.0, 1.0))];
        let r = check_condition_a(&l1, &pairs, 1e-12, 1e-6).unwrap();
        assert_eq!(r.violations.len(), 1);

        assert!(check_condition_a(&e, &[], 1e-12, 1e-6).is_err());
    }

    #[test]
    fn anisotropic_passes_condition_a() {
        let an = ConvexIntegrand::anisotropic_norm(1.0, 2.0).unwrap();
        let r = check_condition_a(&an, &sample_pairs(10_000, 7, 5.0), 1e-12, 1e-4).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn condition_b_examples() {
        let an = ConvexIntegrand::anisotropic_norm(1.0, 2.0).unwrap();
        let r = check_condition_b(&an, &[(PlanePoint::new(2.0, 2.0), PlanePoint::new(1.0, 1.0))], 1e-9).unwrap();
        assert_eq!(r.premise_hits, 1);
        assert!(r.passed());

        let e = ConvexIntegrand::euclidean_norm();
        let r = check_condition_b(&e, &[(PlanePoint::new(0.0, 1.0), PlanePoint::new(1.0, 0.0))], 1e-9).unwrap();
        assert_eq!(r.premise_hits, 0);
        let r = check_condition_b(&e, &[(PlanePoint::new(3.0, 0.0), PlanePoint::new(1.0, 0.0))], 1e-9).unwrap();
        assert_eq!(r.premise_hits, 1);
        assert!(r.passed());
    }

    #[test]
    fn l1_fails_condition_b() {
        // p = (1, 1) at ξ₂ = (1, 1); g∞(1, 0.5) = 1.5 = ⟨p, ξ₁⟩
        let l1 = ConvexIntegrand::l1_norm();
        let r = check_condition_b(&l1, &[(PlanePoint::new(1.0, 0.5), PlanePoint::new(1.0, 1.0))], 1e-6).unwrap();
        assert_eq!(r.violations.len(), 1);
    }

    #[test]
    fn growth_constant_examples() {
        let r = growth_constants(&ConvexIntegrand::euclidean_norm(), 10.0, 400).unwrap();
        assert!((r.c_estimate - 1.0).abs() < 1e-12 && r.holds);
        let r = growth_constants(&ConvexIntegrand::anisotropic_norm(1.0, 2.0).unwrap(), 10.0, 400).unwrap();
        assert!((r.c_estimate - 2.0).abs() < 1e-9 && r.holds, "{r:?}");
        let r = growth_constants(&ConvexIntegrand::quadratic(), 10.0, 400).unwrap();
        assert!(!r.holds && r.classification_consistent);
        assert!(growth_constants(&ConvexIntegrand::quadratic(), 10.0, 99).is_err());
    }

    #[test]
    fn builtins_are_convex_on_samples() {
        for g in [
            ConvexIntegrand::euclidean_norm(),
            ConvexIntegrand::minimal_surface(),
            ConvexIntegrand::quadratic(),
            ConvexIntegrand::anisotropic_norm(0.3, 2.0).unwrap(),
            ConvexIntegrand::quartic(),
            ConvexIntegrand::l1_norm(),
        ] {
            assert!(convexity_violations(&g, 10_000, 3, 10.0).is_empty(), "{}", g.name());
        }
    }
}
