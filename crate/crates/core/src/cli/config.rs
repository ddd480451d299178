//! TOML run configuration.
//!
//! ```toml
//! command = "solve"          # solve | solve_relaxed | verify | bsc_check | sweep
//! seed = 0
//! grid = 64                  # grid step 1/grid
//! heatmap = true
//!
//! [integrand]
//! kind = "minimal_surface"
//!
//! [domain]
//! shape = "disk"
//! center = { x = 0.0, y = 0.0 }
//! radius = 1.0
//!
//! [boundary]
//! kind = "expr"
//! expr = "x^2 - y^2"
//!
//! [solver]
//! tol_rel = 1e-10
//! ```

use std::path::PathBuf;

use serde::Deserialize;

use super::expr::{parse_expr, Expr};
use crate::convex::{ConvexIntegrand, RadialProfile};
use crate::error::{Error, Result};
use crate::geometry::PlanePoint;
use crate::grid::{BoundaryDatum, DomainShape};
use crate::solver::SolveConfig;
use crate::verify::CHECK_NAMES;

pub const DEFAULT_GRID: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    SolveRelaxed,
    Verify,
    BscCheck,
    Sweep,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegrandSpec {
    EuclideanNorm,
    AnisotropicNorm { a: f64, b: f64 },
    Quadratic,
    MinimalSurface,
    Quartic,
    L1Norm,
    Hyperbolic { eps: f64 },
    LinearHyperbolic,
    Power { exponent: f64 },
}

impl IntegrandSpec {
    pub fn build(&self) -> Result<ConvexIntegrand> {
        Ok(match *self {
            IntegrandSpec::EuclideanNorm => ConvexIntegrand::euclidean_norm(),
            IntegrandSpec::AnisotropicNorm { a, b } => ConvexIntegrand::anisotropic_norm(a, b)?,
            IntegrandSpec::Quadratic => ConvexIntegrand::quadratic(),
            IntegrandSpec::MinimalSurface => ConvexIntegrand::minimal_surface(),
            IntegrandSpec::Quartic => ConvexIntegrand::quartic(),
            IntegrandSpec::L1Norm => ConvexIntegrand::l1_norm(),
            IntegrandSpec::Hyperbolic { eps } => ConvexIntegrand::radial(RadialProfile::Hyperbolic { eps })?,
            IntegrandSpec::LinearHyperbolic => ConvexIntegrand::radial(RadialProfile::LinearHyperbolic)?,
            IntegrandSpec::Power { exponent } => ConvexIntegrand::radial(RadialProfile::Power { exponent })?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    Affine { a: PlanePoint, b: f64 },
    Expr { expr: String },
}

/// A parsed boundary datum; affine data keep their coefficients.
#[derive(Clone, Debug)]
pub struct Boundary {
    pub datum: BoundaryDatum,
    pub affine: Option<(PlanePoint, f64)>,
}

impl BoundarySpec {
    pub fn build(&self) -> Result<Boundary> {
        match self {
            BoundarySpec::Affine { a, b } => {
                if !(a.x.is_finite() && a.y.is_finite() && b.is_finite()) {
                    return Err(Error::Config("boundary.a and boundary.b must be finite".into()));
                }
                Ok(Boundary { datum: BoundaryDatum::affine(*a, *b), affine: Some((*a, *b)) })
            }
            BoundarySpec::Expr { expr } => {
                let e: Expr = parse_expr(expr).map_err(|e| Error::Config(format!("boundary.expr: {e}")))?;
                Ok(Boundary { datum: BoundaryDatum::new(expr.clone(), move |z| e.eval(z)), affine: None })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Grid steps, one solve per level.
    pub h: Option<Vec<f64>>,
    /// Smoothing parameters of one smoothed path at the base grid.
    pub lambda: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    H,
    Lambda,
}

impl SweepSpec {
    pub fn axis(&self) -> Result<(SweepAxis, &[f64])> {
        let (axis, levels) = match (&self.h, &self.lambda) {
            (Some(h), None) => (SweepAxis::H, h.as_slice()),
            (None, Some(l)) => (SweepAxis::Lambda, l.as_slice()),
            _ => return Err(Error::Config("sweep needs exactly one of sweep.h and sweep.lambda".into())),
        };
        if levels.len() < 2 {
            return Err(Error::Config("sweep needs at least 2 levels".into()));
        }
        if levels.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("sweep levels must be positive and finite, got {levels:?}")));
        }
        Ok((axis, levels))
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BscSpec {
    pub q_max: f64,
    /// Boundary samples, also used as anchors.
    pub samples: usize,
    /// Also solve and check the regularity bounds.
    pub regularity: bool,
}

impl Default for BscSpec {
    fn default() -> Self {
        BscSpec { q_max: 10.0, samples: 720, regularity: false }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    pub grid: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub heatmap: bool,
    pub integrand: Option<IntegrandSpec>,
    pub domain: Option<DomainShape>,
    pub boundary: Option<BoundarySpec>,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default)]
    pub checks: Vec<String>,
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub bsc: BscSpec,
}

impl RunConfig {
    /// `verify all` with default settings.
    pub fn verify_all() -> Self {
        RunConfig {
            command: Command::Verify,
            seed: 0,
            grid: None,
            out: None,
            heatmap: false,
            integrand: None,
            domain: None,
            boundary: None,
            solver: SolveConfig::default(),
            checks: Vec::new(),
            sweep: None,
            bsc: BscSpec::default(),
        }
    }

    pub fn grid(&self) -> usize {
        self.grid.unwrap_or(DEFAULT_GRID)
    }

    pub fn h(&self) -> f64 {
        1.0 / self.grid() as f64
    }

    pub fn integrand(&self) -> Result<ConvexIntegrand> {
        self.integrand.as_ref().ok_or_else(|| missing("integrand"))?.build()
    }

    pub fn domain(&self) -> Result<&DomainShape> {
        self.domain.as_ref().ok_or_else(|| missing("domain"))
    }

    pub fn boundary(&self) -> Result<Boundary> {
        self.boundary.as_ref().ok_or_else(|| missing("boundary"))?.build()
    }

    /// Checks what serde cannot: required sections per command and value
    /// ranges.
    pub fn validate(&self) -> Result<()> {
        if self.grid() < 2 {
            return Err(Error::Config(format!("grid must be at least 2, got {}", self.grid())));
        }
        self.solver.validate()?;
        match self.command {
            Command::Verify => {
                for c in &self.checks {
                    if c != "all" && !CHECK_NAMES.contains(&c.as_str()) {
                        return Err(Error::Config(format!(
                            "unknown check {c:?}; known checks: all, {}",
                            CHECK_NAMES.join(", ")
                        )));
                    }
                }
            }
            Command::BscCheck => {
                self.domain()?;
                self.boundary()?;
                if self.bsc.regularity {
                    self.integrand()?;
                }
                if !(self.bsc.q_max > 0.0 && self.bsc.q_max.is_finite()) || self.bsc.samples < 8 {
                    return Err(Error::Config("bsc needs q_max > 0 and at least 8 samples".into()));
                }
            }
            Command::Solve | Command::SolveRelaxed | Command::Sweep => {
                self.integrand()?;
                self.domain()?;
                self.boundary()?;
            }
        }
        if self.command == Command::Sweep {
            self.sweep.as_ref().ok_or_else(|| missing("sweep"))?.axis()?;
        } else if self.sweep.is_some() {
            return Err(Error::Config("[sweep] only applies to command = \"sweep\"".into()));
        }
        if self.command != Command::Verify && !self.checks.is_empty() {
            return Err(Error::Config("checks only apply to command = \"verify\"".into()));
        }
        Ok(())
    }
}

fn missing(section: &str) -> Error {
    Error::Config(format!("missing [{section}] section"))
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLVE: &str = r#"
command = "solve"
grid = 16

[integrand]
kind = "anisotropic_norm"
a = 1.0
b = 3.0

[domain]
shape = "square"
center = { x = 0.5, y = 0.5 }
side = 1.0

[boundary]
kind = "affine"
a = { x = 1.0, y = -2.0 }
b = 0.5

[solver]
algorithm = "primal_dual"
tol_rel = 1e-6
"#;

    #[test]
    fn parses_a_full_config() {
        let cfg = parse_config(SOLVE).unwrap();
        assert_eq!(cfg.command, Command::Solve);
        assert_eq!(cfg.h(), 1.0 / 16.0);
        assert_eq!(cfg.integrand, Some(IntegrandSpec::AnisotropicNorm { a: 1.0, b: 3.0 }));
        assert_eq!(cfg.solver.tol_rel, 1e-6);
        assert_eq!(cfg.solver.max_iters, SolveConfig::default().max_iters);
        let b = cfg.boundary().unwrap();
        assert_eq!(b.affine, Some((PlanePoint::new(1.0, -2.0), 0.5)));
        assert_eq!(b.datum.eval(PlanePoint::new(1.0, 1.0)), -0.5);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let bad = SOLVE.replace("side = 1.0", "side = 1.0\nsides = 2");
        let e = parse_config(&bad).unwrap_err().to_string();
        assert!(e.contains("sides") && e.contains("line"), "{e}");
        let bad = SOLVE.replace("tol_rel", "tolerance");
        assert!(parse_config(&bad).unwrap_err().to_string().contains("tolerance"));
        assert!(parse_config("command = \"solve\"\ncolour = 1").is_err());
    }

    #[test]
    fn missing_sections_and_bad_values() {
        assert!(parse_config("command = \"solve\"").unwrap_err().to_string().contains("[integrand]"));
        assert!(parse_config("command = \"verify\"\nchecks = [\"nope\"]").is_err());
        assert!(parse_config("command = \"verify\"\ngrid = 1").is_err());
        let e = parse_config(&SOLVE.replace("kind = \"affine\"\na = { x = 1.0, y = -2.0 }\nb = 0.5", "kind = \"expr\"\nexpr = \"x +\""))
            .unwrap_err()
            .to_string();
        assert!(e.contains("boundary.expr") && e.contains("column"), "{e}");
        let sweep = SOLVE.replace("command = \"solve\"", "command = \"sweep\"");
        assert!(parse_config(&sweep).is_err());
        assert!(parse_config(&format!("{sweep}\n[sweep]\nh = [0.1]\n")).is_err());
        assert!(parse_config(&format!("{sweep}\n[sweep]\nh = [0.1, 0.05]\nlambda = [1.0, 0.1]\n")).is_err());
        assert!(parse_config(&format!("{sweep}\n[sweep]\nh = [0.1, 0.05]\n")).is_ok());
    }

    #[test]
    fn verify_defaults() {
        let cfg = parse_config("command = \"verify\"").unwrap();
        assert_eq!(cfg.grid(), DEFAULT_GRID);
        assert!(cfg.checks.is_empty());
        assert_eq!(cfg, RunConfig::verify_all());
    }
}
