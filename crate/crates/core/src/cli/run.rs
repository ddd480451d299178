//! Command execution.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::config::{Boundary, Command, RunConfig, SweepAxis};
use super::output::{canonical_json, heatmap_pgm, write_atomic};
use crate::bsc::{boundary_samples, certify_affine, construct_supports, lipschitz_bound, verify_bsc};
use crate::bsc::{AffineFunction, BscFailure, BscVerification, LipschitzBound};
use crate::convex::Growth;
use crate::error::Result;
use crate::geometry::PlanePoint;
use crate::grid::{discrete_lipschitz, write_grid_csv, DomainShape, GridDomain, GridFunction, LipschitzScope};
use crate::solver::{smoothed_path_solve, solve_relaxed, SolveConfig, SolveReport};
use crate::verify::{check_bsc_regularity, minimize_pinned, run_suite, CheckReport, CheckStatus, RegularityTolerances};
use crate::verify::{SuiteConfig, SuiteReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Pass => 0,
            RunStatus::Fail => 1,
            RunStatus::Inconclusive => 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    command: &'static str,
    status: RunStatus,
    integrand: String,
    domain: &'a DomainShape,
    h: f64,
    boundary: &'a str,
    /// `sup |u − L|` over in-domain nodes for affine data.
    #[serde(skip_serializing_if = "Option::is_none")]
    affine_sup_error: Option<f64>,
    lipschitz: f64,
    solve: &'a SolveReport,
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    command: &'static str,
    status: RunStatus,
    #[serde(flatten)]
    suite: &'a SuiteReport,
}

#[derive(Serialize)]
struct BscOutput<'a> {
    command: &'static str,
    status: RunStatus,
    domain: &'a DomainShape,
    boundary: &'a str,
    samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verification: Option<BscVerification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lipschitz_bound: Option<LipschitzBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<BscFailure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    regularity: Option<CheckReport>,
}

#[derive(Clone, Debug, Serialize)]
struct SweepRow {
    level: f64,
    value: f64,
    sup_error: f64,
    lipschitz: f64,
    runtime_s: f64,
    iterations: usize,
    converged: bool,
}

#[derive(Serialize)]
struct Monotone {
    value: &'static str,
    sup_error: &'static str,
    lipschitz: &'static str,
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    command: &'static str,
    status: RunStatus,
    integrand: String,
    domain: &'a DomainShape,
    boundary: &'a str,
    /// `"h"` or `"lambda"`; names the `level` field of each row.
    axis: &'static str,
    /// `"affine"` for affine data, otherwise `"last_level"`.
    reference: &'static str,
    rows: Vec<SweepRow>,
    monotone: Monotone,
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    match cfg.command {
        Command::Solve | Command::SolveRelaxed => run_solve(cfg, out),
        Command::Verify => run_verify(cfg, out),
        Command::BscCheck => run_bsc(cfg, out),
        Command::Sweep => run_sweep(cfg, out),
    }
}

fn sup_error_vs(u: &GridFunction, f: impl Fn(PlanePoint) -> f64) -> f64 {
    let d = u.domain();
    d.in_domain_nodes().map(|k| (u.get(k) - f(d.point(k))).abs()).fold(0.0, f64::max)
}

fn affine_error(u: &GridFunction, boundary: &Boundary) -> Option<f64> {
    boundary.affine.map(|(a, b)| sup_error_vs(u, |z| AffineFunction::new(a, b).eval(z)))
}

/// Value of `u` at the grid node nearest to `z`; NaN off the domain.
fn nearest(u: &GridFunction, z: PlanePoint) -> f64 {
    let d = u.domain();
    let o = d.point(0);
    let (i, j) = (((z.x - o.x) / d.h()).round(), ((z.y - o.y) / d.h()).round());
    if !(i >= 0.0 && j >= 0.0 && (i as usize) < d.nx() && (j as usize) < d.ny()) {
        return f64::NAN;
    }
    let k = d.index(i as usize, j as usize);
    if d.is_in_domain(k) {
        u.get(k)
    } else {
        f64::NAN
    }
}

fn write_solution(cfg: &RunConfig, out: &Path, u: &GridFunction, files: &mut Vec<PathBuf>) -> Result<()> {
    files.push(write_atomic(out, "solution.csv", write_grid_csv(u).as_bytes())?);
    if cfg.heatmap {
        files.push(write_atomic(out, "heatmap.pgm", &heatmap_pgm(u))?);
    }
    Ok(())
}

fn run_solve(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let g = cfg.integrand()?;
    let shape = cfg.domain()?;
    let boundary = cfg.boundary()?;
    let domain = Arc::new(GridDomain::new(shape.clone(), cfg.h())?);
    let relaxed = cfg.command == Command::SolveRelaxed;
    let report = if relaxed {
        solve_relaxed(&g, domain, &boundary.datum, &cfg.solver)?
    } else {
        minimize_pinned(&g, domain, &boundary.datum, &cfg.solver)?
    };
    let status = if report.converged { RunStatus::Pass } else { RunStatus::Inconclusive };
    let output = SolveOutput {
        command: if relaxed { "solve_relaxed" } else { "solve" },
        status,
        integrand: g.name(),
        domain: shape,
        h: cfg.h(),
        boundary: boundary.datum.label(),
        affine_sup_error: affine_error(&report.minimizer, &boundary),
        lipschitz: discrete_lipschitz(&report.minimizer, LipschitzScope::AllPairs),
        solve: &report,
    };
    let mut files = Vec::new();
    write_solution(cfg, out, &report.minimizer, &mut files)?;
    files.push(write_atomic(out, "report.json", canonical_json(&output)?.as_bytes())?);
    let mut summary = vec![format!(
        "{}: value {:.12e} after {} iterations ({}) in {:.2}s",
        output.command,
        report.value.total,
        report.iterations,
        if report.converged { "converged" } else { "not converged" },
        report.wall_time_s
    )];
    if let Some(e) = output.affine_sup_error {
        summary.push(format!("sup |u - L| = {e:.3e}"));
    }
    Ok(RunOutcome { status, files, summary })
}

fn suite_status(checks: &[CheckReport]) -> RunStatus {
    if checks.iter().any(|c| c.status == CheckStatus::Fail) {
        RunStatus::Fail
    } else if checks.iter().any(|c| c.status == CheckStatus::Inconclusive) {
        RunStatus::Inconclusive
    } else {
        RunStatus::Pass
    }
}

fn run_verify(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let suite = run_suite(&SuiteConfig { seed: cfg.seed, grid: cfg.grid() }, &cfg.checks)?;
    let status = suite_status(&suite.checks);
    let output = VerifyOutput { command: "verify", status, suite: &suite };
    let files = vec![write_atomic(out, "report.json", canonical_json(&output)?.as_bytes())?];
    let summary = suite
        .checks
        .iter()
        .map(|c| {
            let tag = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Inconclusive => "INCONCLUSIVE",
            };
            format!("{tag:<12} {:<24} worst {:.3e} (tolerance {:.1e})", c.name, c.worst_residual, c.tolerance)
        })
        .collect();
    Ok(RunOutcome { status, files, summary })
}

fn run_bsc(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let shape = cfg.domain()?;
    let boundary = cfg.boundary()?;
    let samples = boundary_samples(shape, cfg.bsc.samples);
    let cert = match boundary.affine {
        Some((a, b)) if a.norm() <= cfg.bsc.q_max => Ok(certify_affine(&AffineFunction::new(a, b), &samples)),
        _ => construct_supports(&boundary.datum, &samples, &samples, cfg.bsc.q_max, cfg.bsc.samples)?,
    };
    let mut output = BscOutput {
        command: "bsc_check",
        status: RunStatus::Fail,
        domain: shape,
        boundary: boundary.datum.label(),
        samples: cfg.bsc.samples,
        q: None,
        verification: None,
        lipschitz_bound: None,
        failure: None,
        regularity: None,
    };
    let mut summary = Vec::new();
    match cert {
        Err(failure) => {
            summary.push(format!(
                "no supports with slope <= {} at {} lower and {} upper anchors",
                failure.q_max,
                failure.lower_failures.len(),
                failure.upper_failures.len()
            ));
            output.failure = Some(failure);
        }
        Ok(cert) => {
            let verification = verify_bsc(&cert, &boundary.datum, &samples, 1e-9);
            let bound = lipschitz_bound(cert.q, shape)?;
            summary.push(format!(
                "Q = {:.6}, certificate {}, K = {:.6}",
                cert.q,
                if verification.passed { "verified" } else { "rejected" },
                bound.k
            ));
            output.status = if verification.passed { RunStatus::Pass } else { RunStatus::Fail };
            if cfg.bsc.regularity {
                let g = cfg.integrand()?;
                let domain = Arc::new(GridDomain::new(shape.clone(), cfg.h())?);
                let relaxed = SolveConfig::primal_dual(1e-6, 20_000);
                let relaxed = (g.growth() == Growth::Linear).then_some(&relaxed);
                let tol = RegularityTolerances::default();
                let r = check_bsc_regularity(&g, domain, &boundary.datum, &cert, &cfg.solver, relaxed, tol, "bsc_regularity")?;
                summary.push(format!("regularity: {:?}, worst {:.3e}", r.status, r.worst_residual));
                output.status = match (output.status, r.status) {
                    (RunStatus::Fail, _) | (_, CheckStatus::Fail) => RunStatus::Fail,
                    (_, CheckStatus::Inconclusive) => RunStatus::Inconclusive,
                    _ => RunStatus::Pass,
                };
                output.regularity = Some(r);
            }
            output.q = Some(cert.q);
            output.verification = Some(verification);
            output.lipschitz_bound = Some(bound);
        }
    }
    let files = vec![write_atomic(out, "report.json", canonical_json(&output)?.as_bytes())?];
    Ok(RunOutcome { status: output.status, files, summary })
}

fn direction(col: impl Iterator<Item = f64> + Clone) -> &'static str {
    let v: Vec<f64> = col.collect();
    if v.iter().any(|x| x.is_nan()) {
        return "none";
    }
    let up = v.windows(2).all(|w| w[1] >= w[0]);
    let down = v.windows(2).all(|w| w[1] <= w[0]);
    match (up, down) {
        (true, true) => "constant",
        (true, false) => "non_decreasing",
        (false, true) => "non_increasing",
        (false, false) => "none",
    }
}

fn sweep_csv(axis: &str, rows: &[SweepRow]) -> String {
    let mut s = format!("{axis},value,sup_error,lipschitz,runtime_s\n");
    for r in rows {
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.6e}\n",
            r.level, r.value, r.sup_error, r.lipschitz, r.runtime_s
        ));
    }
    s
}

fn run_sweep(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let g = cfg.integrand()?;
    let shape = cfg.domain()?;
    let boundary = cfg.boundary()?;
    let (axis, levels) = cfg.sweep.as_ref().expect("validated").axis()?;
    let mut solutions: Vec<(GridFunction, SweepRow)> = Vec::with_capacity(levels.len());
    match axis {
        SweepAxis::H => {
            for &h in levels {
                let start = Instant::now();
                let domain = Arc::new(GridDomain::new(shape.clone(), h)?);
                let r = minimize_pinned(&g, domain, &boundary.datum, &cfg.solver)?;
                let row = SweepRow {
                    level: h,
                    value: r.value.total,
                    sup_error: f64::NAN,
                    lipschitz: discrete_lipschitz(&r.minimizer, LipschitzScope::AllPairs),
                    runtime_s: start.elapsed().as_secs_f64(),
                    iterations: r.iterations,
                    converged: r.converged,
                };
                solutions.push((r.minimizer, row));
            }
        }
        SweepAxis::Lambda => {
            let domain = Arc::new(GridDomain::new(shape.clone(), cfg.h())?);
            let r = smoothed_path_solve(&g, domain.clone(), &boundary.datum, levels, &cfg.solver)?;
            for stage in r.stages {
                let u = GridFunction::from_values(domain.clone(), stage.values)?;
                let row = SweepRow {
                    level: stage.lambda,
                    value: stage.value,
                    sup_error: f64::NAN,
                    lipschitz: discrete_lipschitz(&u, LipschitzScope::AllPairs),
                    runtime_s: stage.wall_time_s,
                    iterations: stage.iterations,
                    converged: stage.converged,
                };
                solutions.push((u, row));
            }
        }
    }
    let reference = match boundary.affine {
        Some(_) => {
            for (u, row) in &mut solutions {
                row.sup_error = affine_error(u, &boundary).expect("affine datum");
            }
            "affine"
        }
        None => {
            let last = solutions.last().expect("at least 2 levels").0.clone();
            for (u, row) in &mut solutions {
                let d = u.domain();
                row.sup_error = sup_error_vs(u, |z| nearest(&last, z));
                if d.in_domain_nodes().any(|k| nearest(&last, d.point(k)).is_nan()) {
                    row.sup_error = f64::NAN;
                }
            }
            "last_level"
        }
    };
    let rows: Vec<SweepRow> = solutions.iter().map(|s| s.1.clone()).collect();
    let status = if rows.iter().all(|r| r.converged) { RunStatus::Pass } else { RunStatus::Inconclusive };
    let axis_name = if axis == SweepAxis::H { "h" } else { "lambda" };
    let monotone = Monotone {
        value: direction(rows.iter().map(|r| r.value)),
        sup_error: direction(rows.iter().map(|r| r.sup_error)),
        lipschitz: direction(rows.iter().map(|r| r.lipschitz)),
    };
    let mut files = vec![write_atomic(out, "sweep.csv", sweep_csv(axis_name, &rows).as_bytes())?];
    write_solution(cfg, out, &solutions.last().expect("at least 2 levels").0, &mut files)?;
    let summary = rows
        .iter()
        .map(|r| format!("{axis_name} = {:.3e}: value {:.10e}, sup error {:.3e}, Lipschitz {:.4}", r.level, r.value, r.sup_error, r.lipschitz))
        .collect();
    let output = SweepOutput {
        command: "sweep",
        status,
        integrand: g.name(),
        domain: shape,
        boundary: boundary.datum.label(),
        axis: axis_name,
        reference,
        rows,
        monotone,
    };
    files.push(write_atomic(out, "report.json", canonical_json(&output)?.as_bytes())?);
    Ok(RunOutcome { status, files, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config;
    use crate::grid::read_grid_csv;

    const AFFINE: &str = r#"
grid = 16
heatmap = true
[integrand]
kind = "quadratic"
[domain]
shape = "square"
center = { x = 0.5, y = 0.5 }
side = 1.0
[boundary]
kind = "affine"
a = { x = 1.0, y = -2.0 }
b = 0.5
"#;

    #[test]
    fn solve_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config(&format!("command = \"solve\"\n{AFFINE}")).unwrap();
        let r = run(&cfg, dir.path()).unwrap();
        assert_eq!(r.status, RunStatus::Pass);
        let text = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
        let d = Arc::new(GridDomain::unit_square(16).unwrap());
        let u = read_grid_csv(d, &text).unwrap();
        assert!(sup_error_vs(&u, |z| z.x - 2.0 * z.y + 0.5) <= 1e-8);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert!(report["affine_sup_error"].as_f64().unwrap() <= 1e-8);
        assert!(report["solve"].get("wall_time_s").is_none());
        let pgm = std::fs::read(dir.path().join("heatmap.pgm")).unwrap();
        assert!(pgm.starts_with(b"P5\n17 17\n255\n"));
    }

    #[test]
    fn bsc_on_affine_data_recovers_slope() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config(&format!("command = \"bsc_check\"\n{AFFINE}")).unwrap();
        let r = run(&cfg, dir.path()).unwrap();
        assert_eq!(r.status, RunStatus::Pass);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert!((report["q"].as_f64().unwrap() - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sweep_over_h_keeps_affine_exactness() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("command = \"sweep\"\n{AFFINE}\n[sweep]\nh = [0.0625, 0.03125, 0.015625]\n");
        let cfg = parse_config(&text).unwrap();
        let r = run(&cfg, dir.path()).unwrap();
        assert_eq!(r.status, RunStatus::Pass);
        let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("h,value,sup_error,lipschitz,runtime_s"));
        for line in lines {
            let sup: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
            assert!(sup <= 1e-8, "{line}");
        }
    }

    #[test]
    fn zero_data_value_approaches_drift_energy() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("command = \"sweep\"\n{}\n[sweep]\nh = [0.125, 0.0625, 0.03125]\n", AFFINE.replace("a = { x = 1.0, y = -2.0 }\nb = 0.5", "a = { x = 0.0, y = 0.0 }\nb = 0.0"));
        let cfg = parse_config(&text).unwrap();
        run(&cfg, dir.path()).unwrap();
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        let values: Vec<f64> = report["rows"].as_array().unwrap().iter().map(|r| r["value"].as_f64().unwrap()).collect();
        let errs: Vec<f64> = values.iter().map(|v| (v - 8.0 / 3.0).abs()).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{values:?}");
        assert!(errs[2] < 1e-3, "{values:?}");
    }

    #[test]
    fn lambda_sweep_is_monotone() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("command = \"sweep\"\n{}\n[sweep]\nlambda = [1.0, 0.1, 0.01]\n", AFFINE.replace("quadratic", "euclidean_norm"));
        let cfg = parse_config(&text).unwrap();
        let r = run(&cfg, dir.path()).unwrap();
        assert_eq!(r.status, RunStatus::Pass);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(report["monotone"]["value"], "non_decreasing");
        assert_eq!(report["axis"], "lambda");
    }

    #[test]
    fn relaxed_solve_needs_primal_dual() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("command = \"solve_relaxed\"\n{}", AFFINE.replace("quadratic", "minimal_surface"));
        let cfg = parse_config(&text).unwrap();
        assert!(matches!(run(&cfg, dir.path()), Err(crate::Error::Config(_))));
    }
}
