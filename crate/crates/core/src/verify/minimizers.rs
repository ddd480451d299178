//! Checks built on solves: affine minimizers, comparison, regularity under
//! the bounded slope condition and uniqueness.

use std::sync::Arc;

use super::{random_wave, rng, square, CheckReport, SuiteConfig, Tally};
use crate::bsc::{boundary_samples, certify_affine, construct_supports, envelopes, lipschitz_bound, verify_bsc};
use crate::bsc::{AffineFunction, BscCertificate};
use crate::convex::{ConvexIntegrand, Growth};
use crate::error::{Error, Result};
use crate::geometry::PlanePoint;
use crate::grid::{discrete_lipschitz, BoundaryDatum, DomainShape, GridDomain, GridFunction, LipschitzScope};
use crate::solver::{smoothed_path_solve, solve, solve_relaxed, Algorithm, Init, SolveConfig, SolveReport};

/// Smoothing schedule used for nondifferentiable integrands.
pub fn path_schedule() -> Vec<f64> {
    vec![1.0, 1e-1, 1e-2, 1e-3, 1e-4]
}

/// Pinned solve with the method suited to `g`: gradient descent for
/// differentiable integrands, the smoothed path for the others, or the
/// primal-dual method when `config` asks for it.
pub fn minimize_pinned(
    g: &ConvexIntegrand,
    domain: Arc<GridDomain>,
    phi: &BoundaryDatum,
    config: &SolveConfig,
) -> Result<SolveReport> {
    match config.algorithm {
        Algorithm::GradientDescentBacktracking if !g.is_differentiable() => {
            smoothed_path_solve(g, domain, phi, &path_schedule(), config)
        }
        _ => solve(g, domain, phi, config),
    }
}

fn max_over_domain(d: &GridDomain, f: impl Fn(usize) -> f64) -> f64 {
    d.in_domain_nodes().map(f).fold(f64::NEG_INFINITY, f64::max)
}

fn not_converged(t: &mut Tally, what: &str, r: &SolveReport) -> bool {
    if r.converged {
        return false;
    }
    let last = r.residual_history.last().copied().unwrap_or(f64::NAN);
    t.inconclusive(format!("{what}: no convergence after {} iterations (last residual {last:.3e})", r.iterations));
    true
}

/// Affine data reproduce the affine function; data below it keep the
/// minimizer below it.
pub fn check_affine_minimizer(
    g: &ConvexIntegrand,
    domain: Arc<GridDomain>,
    a: PlanePoint,
    b: f64,
    config: &SolveConfig,
    tol: f64,
) -> Result<CheckReport> {
    let mut t = Tally::new(&g.name());
    let l = BoundaryDatum::affine(a, b);
    let target = l.sample(domain.clone())?;
    let exact = minimize_pinned(g, domain.clone(), &l, config)?;
    if !not_converged(&mut t, "affine data", &exact) {
        t.bound("sup_error", exact.minimizer.sup_distance(&target)?, tol);
    }
    let below = minimize_pinned(g, domain.clone(), &BoundaryDatum::affine(a, b - 0.1), config)?;
    if !not_converged(&mut t, "lowered data", &below) {
        let excess = max_over_domain(&domain, |k| below.minimizer.get(k) - target.get(k));
        t.bound("barrier_excess", excess, tol);
    }
    t.measure("iterations", exact.iterations as f64);
    Ok(t.finish())
}

pub(crate) fn affine_suite(cfg: &SuiteConfig) -> Result<CheckReport> {
    let d = square(cfg.grid)?;
    let (a, b) = (PlanePoint::new(1.0, -2.0), 0.5);
    let gd = SolveConfig::default();
    let mut parts = vec![
        check_affine_minimizer(&ConvexIntegrand::quadratic(), d.clone(), a, b, &gd, 1e-8)?,
        check_affine_minimizer(&ConvexIntegrand::minimal_surface(), d.clone(), a, b, &gd, 1e-5)?,
        check_affine_minimizer(&ConvexIntegrand::euclidean_norm(), d.clone(), a, b, &gd, 1e-4)?,
        check_affine_minimizer(&ConvexIntegrand::quartic(), d.clone(), a, b, &gd, 1e-6)?,
    ];
    // primal-dual cross-check on the nonsmooth integrand
    let g = ConvexIntegrand::euclidean_norm();
    let l = BoundaryDatum::affine(a, b);
    let pd = solve(&g, d.clone(), &l, &SolveConfig::primal_dual(1e-7, 50_000))?;
    let mut t = Tally::new("primal_dual_cross_check");
    if !not_converged(&mut t, "primal-dual", &pd) {
        t.bound("sup_error", pd.minimizer.sup_distance(&l.sample(d)?)?, 1e-4);
    }
    parts.push(t.finish());
    Ok(CheckReport::combine("affine_minimizer", parts))
}

struct ComparisonOutcome {
    report: CheckReport,
    low: Option<GridFunction>,
    high: Option<GridFunction>,
}

fn compare(
    g: &ConvexIntegrand,
    domain: Arc<GridDomain>,
    phi_low: &BoundaryDatum,
    phi_high: &BoundaryDatum,
    config: &SolveConfig,
    tol: f64,
    name: &str,
) -> Result<ComparisonOutcome> {
    let mut gap: f64 = 0.0;
    for b in domain.boundary_nodes() {
        let z = domain.point(b.node);
        let (lo, hi) = (phi_low.eval(z), phi_high.eval(z));
        if lo > hi {
            return Err(Error::InvalidParameter(format!(
                "comparison needs phi_low <= phi_high; {lo} > {hi} at ({}, {})",
                z.x, z.y
            )));
        }
        gap = gap.max(hi - lo);
    }
    let mut t = Tally::new(name);
    let low = minimize_pinned(g, domain.clone(), phi_low, config)?;
    let high = minimize_pinned(g, domain.clone(), phi_high, config)?;
    let stalled = not_converged(&mut t, "lower data", &low) | not_converged(&mut t, "upper data", &high);
    if stalled {
        return Ok(ComparisonOutcome { report: t.finish(), low: None, high: None });
    }
    let ordering = max_over_domain(&domain, |k| low.minimizer.get(k) - high.minimizer.get(k));
    let sup = low.minimizer.sup_distance(&high.minimizer)?;
    t.measure("boundary_gap", gap);
    t.measure("interior_gap", sup);
    if !t.bound("ordering", ordering, tol) {
        t.witness(format!("max(u_low - u_high) = {ordering:.6e}"));
    }
    t.bound("sup_bound_excess", sup - gap, tol);
    Ok(ComparisonOutcome { report: t.finish(), low: Some(low.minimizer), high: Some(high.minimizer) })
}

/// Ordered data give ordered minimizers whose distance is bounded by that
/// of the data.
pub fn check_comparison(
    g: &ConvexIntegrand,
    domain: Arc<GridDomain>,
    phi_low: &BoundaryDatum,
    phi_high: &BoundaryDatum,
    config: &SolveConfig,
    tol: f64,
) -> Result<CheckReport> {
    Ok(compare(g, domain, phi_low, phi_high, config, tol, "comparison")?.report)
}

pub(crate) fn comparison_suite(cfg: &SuiteConfig) -> Result<CheckReport> {
    let g = ConvexIntegrand::quadratic();
    let d = square(cfg.grid)?;
    let config = SolveConfig::default();
    let mut r = rng(cfg.seed, 6);
    let mut parts = Vec::new();
    for k in 0..5 {
        let phi = random_wave(&mut r, 1.0, "phi");
        let bump = random_wave(&mut r, 1.0, "bump");
        let low = phi.clone();
        let high = BoundaryDatum::new("psi", move |z| phi.eval(z) + 0.05 + 0.05 * bump.eval(z).powi(2));
        parts.push(compare(&g, d.clone(), &low, &high, &config, 1e-8, &format!("scenario_{k}"))?.report);
    }

    let phi = random_wave(&mut r, 1.0, "phi");
    let shifted = phi.shifted(0.3);
    let out = compare(&g, d.clone(), &phi, &shifted, &config, 1e-8, "vertical_shift")?;
    let mut shift = out.report;
    if let (Some(lo), Some(hi)) = (out.low, out.high) {
        let dev = max_over_domain(&d, |k| (hi.get(k) - lo.get(k) - 0.3).abs());
        shift.criteria.push(super::Criterion {
            label: "shift_equivariance".into(),
            residual: dev,
            tolerance: 1e-12,
            passed: dev <= 1e-12,
        });
    }
    parts.push(shift);

    let (l1, l2) = (BoundaryDatum::affine(PlanePoint::new(1.0, 1.0), 0.0), BoundaryDatum::affine(PlanePoint::new(2.0, 1.0), 1.0));
    let out = compare(&g, d.clone(), &l1, &l2, &config, 1e-8, "affine_pair")?;
    let mut affine = out.report;
    if let (Some(lo), Some(hi)) = (out.low, out.high) {
        let err = lo.sup_distance(&l1.sample(d.clone())?)?.max(hi.sup_distance(&l2.sample(d)?)?);
        affine.criteria.push(super::Criterion {
            label: "affine_exact".into(),
            residual: err,
            tolerance: 1e-8,
            passed: err <= 1e-8,
        });
    }
    parts.push(affine);
    Ok(CheckReport::combine("comparison", parts))
}

/// Tolerances for the regularity check.
#[derive(Clone, Copy, Debug)]
pub struct RegularityTolerances {
    pub lipschitz: f64,
    pub barrier: f64,
    /// Relative to `1 + max |φ|` over the boundary nodes.
    pub penalty: f64,
}

impl Default for RegularityTolerances {
    fn default() -> Self {
        RegularityTolerances { lipschitz: 1e-3, barrier: 1e-3, penalty: 1e-4 }
    }
}

/// Solves with a certified datum and checks the Lipschitz bound, the
/// barrier envelopes and, when `relaxed` is given, that the relaxed
/// minimizer attains the data.
pub fn check_bsc_regularity(
    g: &ConvexIntegrand,
    domain: Arc<GridDomain>,
    phi: &BoundaryDatum,
    cert: &BscCertificate,
    config: &SolveConfig,
    relaxed: Option<&SolveConfig>,
    tol: RegularityTolerances,
    name: &str,
) -> Result<CheckReport> {
    let mut t = Tally::new(name);
    let verified = verify_bsc(cert, phi, &cert.anchors, 1e-9);
    let dense = verify_bsc(cert, phi, &boundary_samples(domain.shape(), 4 * cert.anchors.len().max(90)), 1e-9);
    t.measure("q", cert.q);
    t.measure("dense_ordering", dense.ordering);
    t.bound("certificate_ordering", verified.ordering, verified.tolerance);
    t.bound("certificate_contact", verified.contact, verified.tolerance);
    let bound = lipschitz_bound(cert.q, domain.shape())?;
    t.measure("k_bound", bound.k);

    let pinned = minimize_pinned(g, domain.clone(), phi, config)?;
    if !not_converged(&mut t, "pinned solve", &pinned) {
        let u = &pinned.minimizer;
        let lip = discrete_lipschitz(u, LipschitzScope::AllPairs);
        t.measure("lipschitz", lip);
        t.bound("lipschitz_excess", lip - bound.k, tol.lipschitz);
        let env = envelopes(cert)?;
        let lower = max_over_domain(&domain, |k| env.f1(domain.point(k)) - u.get(k));
        let upper = max_over_domain(&domain, |k| u.get(k) - env.f2(domain.point(k)));
        for (label, v) in [("lower_barrier_excess", lower), ("upper_barrier_excess", upper)] {
            if !t.bound(label, v, tol.barrier) {
                t.witness(format!("{label} = {v:.6e}"));
            }
        }
    }
    if let Some(relaxed_config) = relaxed {
        if g.growth() != Growth::Linear {
            t.note("relaxed solve skipped: superlinear integrand");
        } else {
            let rel = solve_relaxed(g, domain.clone(), phi, relaxed_config)?;
            if !not_converged(&mut t, "relaxed solve", &rel) {
                let scale = 1.0
                    + domain.boundary_nodes().iter().map(|b| phi.eval(domain.point(b.node)).abs()).fold(0.0, f64::max);
                t.measure("relaxed_penalty", rel.value.boundary_penalty);
                t.measure("relaxed_iterations", rel.iterations as f64);
                t.bound("relaxed_penalty", rel.value.boundary_penalty, tol.penalty * scale);
            }
        }
    }
    Ok(t.finish())
}

/// Support construction for a datum on the boundary of `shape`.
pub(crate) fn certify(phi: &BoundaryDatum, shape: &DomainShape, n: usize, q_max: f64) -> Result<BscCertificate> {
    let samples = boundary_samples(shape, n);
    construct_supports(phi, &samples, &samples, q_max, n)?
        .map_err(|f| Error::Domain(format!("no supports with slope <= {} at {} anchors", f.q_max, f.lower_failures.len() + f.upper_failures.len())))
}

pub(crate) fn bsc_suite(cfg: &SuiteConfig) -> Result<CheckReport> {
    let ms = ConvexIntegrand::minimal_surface();
    let gd = SolveConfig::default();
    let pd = SolveConfig::primal_dual(1e-6, 20_000);
    let tol = RegularityTolerances::default();

    let disk = DomainShape::unit_disk();
    let saddle = BoundaryDatum::new("x^2 - y^2", |z| z.x * z.x - z.y * z.y);
    let cert = certify(&saddle, &disk, 720, 10.0)?;
    let fine = Arc::new(GridDomain::new(disk.clone(), 0.5 / cfg.grid as f64)?);
    let saddle_report = check_bsc_regularity(&ms, fine, &saddle, &cert, &gd, Some(&pd), tol, "saddle_disk")?;

    let centered = DomainShape::Square { center: PlanePoint::ZERO, side: 1.0 };
    let l = AffineFunction::new(PlanePoint::new(1.0, -2.0), 0.5);
    let affine_cert = certify_affine(&l, &boundary_samples(&centered, 256));
    let sq = Arc::new(GridDomain::new(centered, 1.0 / cfg.grid as f64)?);
    let affine_report =
        check_bsc_regularity(&ConvexIntegrand::quadratic(), sq, &l.datum(), &affine_cert, &gd, None, tol, "affine_square")?;

    let far = disk.translated(PlanePoint::new(10.0, 0.0));
    let moved = BoundaryDatum::new("(x-10)^2 - y^2", |z| (z.x - 10.0) * (z.x - 10.0) - z.y * z.y);
    let far_cert = certify(&moved, &far, 360, 10.0)?;
    let far_grid = Arc::new(GridDomain::new(far, 1.0 / cfg.grid as f64)?);
    let far_report = check_bsc_regularity(&ms, far_grid, &moved, &far_cert, &gd, None, tol, "translated_disk")?;
    Ok(CheckReport::combine("bsc_regularity", vec![saddle_report, affine_report, far_report]))
}

/// Solves from `n_starts` different initial guesses and compares.
pub fn check_uniqueness(
    g: &ConvexIntegrand,
    domain: Arc<GridDomain>,
    phi: &BoundaryDatum,
    n_starts: usize,
    config: &SolveConfig,
    tol: f64,
    seed: u64,
) -> Result<CheckReport> {
    if n_starts < 2 {
        return Err(Error::InvalidParameter("uniqueness needs at least two starts".into()));
    }
    let mut t = Tally::new(&g.name());
    let inits: Vec<Init> = (0..n_starts)
        .map(|k| match k {
            0 => Init::Zero,
            1 => Init::Seeded(seed),
            2 => Init::BoundaryHarmonicExtension,
            _ => Init::Seeded(seed.wrapping_add(k as u64)),
        })
        .collect();
    let mut solutions = Vec::new();
    for init in inits {
        let rep = minimize_pinned(g, domain.clone(), phi, &SolveConfig { init, ..config.clone() })?;
        if !not_converged(&mut t, &format!("start {init:?}"), &rep) {
            solutions.push(rep.minimizer);
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..solutions.len() {
        for j in i + 1..solutions.len() {
            worst = worst.max(solutions[i].sup_distance(&solutions[j])?);
        }
    }
    t.bound("pairwise_sup_distance", worst, tol);
    Ok(t.finish())
}

pub(crate) fn uniqueness_suite(cfg: &SuiteConfig) -> Result<CheckReport> {
    let d = square(cfg.grid)?;
    let mut r = rng(cfg.seed, 7);
    let phi = random_wave(&mut r, 1.0, "phi");
    let gd = SolveConfig::default();
    let parts = vec![
        check_uniqueness(&ConvexIntegrand::quadratic(), d.clone(), &phi, 3, &gd, 1e-8, cfg.seed)?,
        check_uniqueness(&ConvexIntegrand::minimal_surface(), d.clone(), &phi, 3, &gd, 1e-5, cfg.seed)?,
        check_uniqueness(&ConvexIntegrand::euclidean_norm(), d, &phi, 2, &gd, 1e-4, cfg.seed)?,
    ];
    Ok(CheckReport::combine("uniqueness", parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_quadratic_small() {
        let r = check_affine_minimizer(
            &ConvexIntegrand::quadratic(),
            square(8).unwrap(),
            PlanePoint::new(0.3, 1.0),
            -1.0,
            &SolveConfig::default(),
            1e-8,
        )
        .unwrap();
        assert!(r.passed, "{r:#?}");
    }

    #[test]
    fn stalled_solve_is_inconclusive() {
        let cfg = SolveConfig { max_iters: 1, init: Init::Zero, ..SolveConfig::default() };
        let r = check_affine_minimizer(
            &ConvexIntegrand::minimal_surface(),
            square(8).unwrap(),
            PlanePoint::new(1.0, 1.0),
            0.0,
            &cfg,
            1e-5,
        )
        .unwrap();
        assert_eq!(r.status, super::super::CheckStatus::Inconclusive);
    }

    #[test]
    fn comparison_rejects_unordered_data() {
        let r = check_comparison(
            &ConvexIntegrand::quadratic(),
            square(8).unwrap(),
            &BoundaryDatum::constant(1.0),
            &BoundaryDatum::constant(0.0),
            &SolveConfig::default(),
            1e-8,
        );
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn comparison_shift() {
        let phi = BoundaryDatum::new("w", |z| (2.0 * z.x).sin() + z.y * z.y);
        let r = check_comparison(
            &ConvexIntegrand::quadratic(),
            square(10).unwrap(),
            &phi,
            &phi.shifted(0.3),
            &SolveConfig::default(),
            1e-8,
        )
        .unwrap();
        assert!(r.passed, "{r:#?}");
        assert!((r.measurements["interior_gap"] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn uniqueness_needs_two_starts() {
        let d = square(4).unwrap();
        assert!(check_uniqueness(&ConvexIntegrand::quadratic(), d, &BoundaryDatum::constant(0.0), 1, &SolveConfig::default(), 1e-8, 0).is_err());
    }

    #[test]
    fn affine_bsc_on_square() {
        let centered = DomainShape::Square { center: PlanePoint::ZERO, side: 1.0 };
        let l = AffineFunction::new(PlanePoint::new(1.0, -2.0), 0.5);
        let cert = certify_affine(&l, &boundary_samples(&centered, 64));
        let d = Arc::new(GridDomain::new(centered, 1.0 / 8.0).unwrap());
        let r = check_bsc_regularity(
            &ConvexIntegrand::quadratic(),
            d,
            &l.datum(),
            &cert,
            &SolveConfig::default(),
            None,
            RegularityTolerances::default(),
            "affine",
        )
        .unwrap();
        assert!(r.passed, "{r:#?}");
        assert!((r.measurements["lipschitz"] - 5f64.sqrt()).abs() < 1e-8);
    }
}
