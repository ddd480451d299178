//! Minimization of the discrete functional with pinned or relaxed boundary
//! values.

mod descent;
pub mod linalg;
mod primal_dual;

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::{ConvexIntegrand, Growth};
use crate::error::{Error, Result};
use crate::grid::{
    functional_value, BoundaryDatum, EnvelopeDensity, ExactDensity, FunctionalValue, GridDomain, GridFunction, Mode,
    NodeKind,
};

pub use linalg::{BandCholesky, BandMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    GradientDescentBacktracking,
    PrimalDual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Zero,
    BoundaryHarmonicExtension,
    Seeded(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub max_iters: usize,
    pub tol_rel: f64,
    pub algorithm: Algorithm,
    /// Primal-dual steps; `h/(2√2)` each when unset.
    pub primal_step: Option<f64>,
    pub dual_step: Option<f64>,
    pub init: Init,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_iters: 20_000,
            tol_rel: 1e-10,
            algorithm: Algorithm::GradientDescentBacktracking,
            primal_step: None,
            dual_step: None,
            init: Init::BoundaryHarmonicExtension,
        }
    }
}

impl SolveConfig {
    pub fn primal_dual(tol_rel: f64, max_iters: usize) -> Self {
        SolveConfig { max_iters, tol_rel, algorithm: Algorithm::PrimalDual, ..SolveConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rel > 0.0 && self.tol_rel.is_finite()) {
            return Err(Error::Config(format!("tol_rel must be positive, got {}", self.tol_rel)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// `(τ, σ)`, checked against `τσ·8/h² ≤ 1`.
    fn steps(&self, h: f64) -> Result<(f64, f64)> {
        let default = h / (2.0 * std::f64::consts::SQRT_2);
        let tau = self.primal_step.unwrap_or(default);
        let sigma = self.dual_step.unwrap_or(default);
        if !(tau > 0.0 && sigma > 0.0) {
            return Err(Error::Config(format!("primal-dual steps must be positive, got {tau}, {sigma}")));
        }
        if tau * sigma * 8.0 / (h * h) > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "step sizes violate tau*sigma*8/h^2 <= 1: tau = {tau}, sigma = {sigma}, h = {h}"
            )));
        }
        Ok((tau, sigma))
    }
}

/// One stage of a smoothed path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageReport {
    pub lambda: f64,
    /// Value of the smoothed functional at the stage minimizer.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    /// Nodal values of the stage minimizer.
    #[serde(skip)]
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub minimizer: GridFunction,
    pub algorithm: Algorithm,
    pub value: FunctionalValue,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageReport>,
    /// Stage values non-decreasing within 1e-10; smoothed paths only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_monotone: Option<bool>,
}

/// Outcome of an inner iteration loop.
pub(crate) struct LoopOutcome {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
}

/// Free-node numbering in row-major order, so that couplings stay within a
/// band of width `nx`.
pub(crate) struct FreeNodes {
    pub nodes: Vec<usize>,
    pub slot: Vec<Option<usize>>,
}

impl FreeNodes {
    pub fn new(d: &GridDomain, include_boundary: bool) -> Self {
        let mut slot = vec![None; d.len()];
        let mut nodes = Vec::new();
        for k in 0..d.len() {
            let free = match d.kind(k) {
                NodeKind::Interior => true,
                NodeKind::Boundary => include_boundary,
                NodeKind::Exterior => false,
            };
            if free {
                slot[k] = Some(nodes.len());
                nodes.push(k);
            }
        }
        FreeNodes { nodes, slot }
    }

    /// Hessian of the quadratic-integrand functional on the free nodes: each
    /// triangle contributes `½ [[1, −1], [−1, 1]]` per difference.
    pub fn laplacian(&self, d: &GridDomain) -> BandMatrix {
        let nx = d.nx();
        let bw = self
            .nodes
            .iter()
            .filter_map(|&k| {
                let up = k + nx;
                (up < d.len()).then(|| self.slot[up].map(|s| s - self.slot[k].unwrap())).flatten()
            })
            .max()
            .unwrap_or(1)
            .max(1);
        let mut a = BandMatrix::zeros(self.nodes.len(), bw);
        let mut pair = |p: usize, q: usize, w: f64| {
            match (self.slot[p], self.slot[q]) {
                (Some(i), Some(j)) => {
                    a.add(i, i, w);
                    a.add(j, j, w);
                    a.add(i, j, -w);
                }
                (Some(i), None) => a.add(i, i, w),
                (None, Some(j)) => a.add(j, j, w),
                (None, None) => {}
            }
        };
        for &c in d.cells() {
            // every cell edge is a difference in two of the four triangles
            pair(c, c + 1, 1.0);
            pair(c + nx, c + nx + 1, 1.0);
            pair(c, c + nx, 1.0);
            pair(c + 1, c + nx + 1, 1.0);
        }
        a
    }
}

fn initial_values(d: &GridDomain, phi: &BoundaryDatum, init: Init) -> Vec<f64> {
    let mut v = vec![0.0; d.len()];
    for b in d.boundary_nodes() {
        v[b.node] = phi.eval(d.point(b.node));
    }
    match init {
        Init::Zero => {}
        Init::Seeded(seed) => {
            let (lo, hi) = d
                .boundary_nodes()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| (lo.min(v[b.node]), hi.max(v[b.node])));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for k in d.interior_nodes().collect::<Vec<_>>() {
                v[k] = rng.random_range(lo - 1.0..=hi + 1.0);
            }
        }
        Init::BoundaryHarmonicExtension => {
            let interior: Vec<usize> = d.interior_nodes().collect();
            if interior.is_empty() {
                return v;
            }
            let mean = d.boundary_nodes().iter().map(|b| v[b.node]).sum::<f64>() / d.boundary_nodes().len() as f64;
            let scale = 1.0 + d.boundary_nodes().iter().map(|b| v[b.node].abs()).fold(0.0, f64::max);
            for &k in &interior {
                v[k] = mean;
            }
            let nx = d.nx();
            let mut next = v.clone();
            for _ in 0..2_000 {
                let mut change: f64 = 0.0;
                for &k in &interior {
                    let avg = 0.25 * (v[k - 1] + v[k + 1] + v[k - nx] + v[k + nx]);
                    change = change.max((avg - v[k]).abs());
                    next[k] = avg;
                }
                std::mem::swap(&mut v, &mut next);
                if change <= 1e-6 * scale {
                    break;
                }
            }
        }
    }
    v
}

fn finish(
    g: &ConvexIntegrand,
    domain: Arc<GridDomain>,
    mode: &Mode,
    algorithm: Algorithm,
    outcome: LoopOutcome,
    start: Instant,
) -> Result<SolveReport> {
    let minimizer = GridFunction::from_values(domain, outcome.values)?;
    let value = functional_value(g, &minimizer, mode)?;
    Ok(SolveReport {
        minimizer,
        algorithm,
        value,
        iterations: outcome.iterations,
        converged: outcome.converged,
        residual_history: outcome.residual_history,
        wall_time_s: start.elapsed().as_secs_f64(),
        stages: Vec::new(),
        path_monotone: None,
    })
}

/// Minimizes the pinned functional. Gradient descent needs an integrand
/// that is differentiable everywhere.
pub fn solve(
    g: &ConvexIntegrand,
    domain: Arc<GridDomain>,
    phi: &BoundaryDatum,
    config: &SolveConfig,
) -> Result<SolveReport> {
    config.validate()?;
    let start = Instant::now();
    let init = initial_values(&domain, phi, config.init);
    let outcome = match config.algorithm {
        Algorithm::GradientDescentBacktracking => {
            let density = ExactDensity::new(g)?;
            descent::minimize(&density, &domain, init, config)?
        }
        Algorithm::PrimalDual => {
            let (tau, sigma) = config.steps(domain.h())?;
            primal_dual::minimize(g, &domain, init, None, tau, sigma, config)?
        }
    };
    finish(g, domain, &Mode::Pinned(phi.clone()), config.algorithm, outcome, start)
}

/// Minimizes the relaxed functional with free boundary values, by the
/// primal-dual method.
pub fn solve_relaxed(
    g: &ConvexIntegrand,
    domain: Arc<GridDomain>,
    phi: &BoundaryDatum,
    config: &SolveConfig,
) -> Result<SolveReport> {
    config.validate()?;
    if g.growth() != Growth::Linear {
        return Err(Error::Unsupported("relaxed solve needs a linear-growth integrand".into()));
    }
    if config.algorithm != Algorithm::PrimalDual {
        return Err(Error::Config("relaxed solve uses the primal_dual algorithm".into()));
    }
    let start = Instant::now();
    let (tau, sigma) = config.steps(domain.h())?;
    let init = initial_values(&domain, phi, config.init);
    let outcome = primal_dual::minimize(g, &domain, init, Some(phi), tau, sigma, config)?;
    finish(g, domain, &Mode::Relaxed(phi.clone()), Algorithm::PrimalDual, outcome, start)
}

/// Pinned solves for the Moreau envelopes `g_λ` along a decreasing
/// schedule, each warm-started from the previous stage.
pub fn smoothed_path_solve(
    g: &ConvexIntegrand,
    domain: Arc<GridDomain>,
    phi: &BoundaryDatum,
    lambda_schedule: &[f64],
    config: &SolveConfig,
) -> Result<SolveReport> {
    config.validate()?;
    if lambda_schedule.is_empty()
        || lambda_schedule.iter().any(|l| !(*l > 0.0 && l.is_finite()))
        || lambda_schedule.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidParameter("lambda schedule must be positive and strictly decreasing".into()));
    }
    let start = Instant::now();
    let mut values = initial_values(&domain, phi, config.init);
    let mut stages = Vec::with_capacity(lambda_schedule.len());
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = true;
    for &lambda in lambda_schedule {
        let stage_start = Instant::now();
        let density = EnvelopeDensity { g, lambda };
        let outcome = descent::minimize(&density, &domain, values, config)?;
        values = outcome.values;
        let drift = crate::grid::functional::drift_samples(&domain);
        let value = crate::grid::functional::bulk_value(&density, &domain, &values, &drift);
        stages.push(StageReport {
            lambda,
            value,
            iterations: outcome.iterations,
            converged: outcome.converged,
            wall_time_s: stage_start.elapsed().as_secs_f64(),
            values: values.clone(),
        });
        iterations += outcome.iterations;
        converged &= outcome.converged;
        history.extend(outcome.residual_history);
    }
    let monotone = stages.windows(2).all(|w| w[1].value >= w[0].value - 1e-10 * (1.0 + w[0].value.abs()));
    let outcome = LoopOutcome { values, iterations, converged, residual_history: history };
    let mut report = finish(g, domain, &Mode::Pinned(phi.clone()), Algorithm::GradientDescentBacktracking, outcome, start)?;
    report.stages = stages;
    report.path_monotone = Some(monotone);
    Ok(report)
}
