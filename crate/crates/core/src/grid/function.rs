use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GridDomain;
use crate::error::{Error, Result};
use crate::geometry::PlanePoint;

/// Nodal values on a grid domain. Storage covers the whole bounding box;
/// exterior entries are held at zero and never read.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn from_values(domain: Arc<GridDomain>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                domain.len(),
                values.len()
            )));
        }
        for k in 0..values.len() {
            if !domain.is_in_domain(k) {
                values[k] = 0.0;
            } else if !values[k].is_finite() {
                let z = domain.point(k);
                return Err(Error::Domain(format!("non-finite value {} at node ({}, {})", values[k], z.x, z.y)));
            }
        }
        Ok(GridFunction { domain, values })
    }

    pub fn zeros(domain: Arc<GridDomain>) -> Self {
        let values = vec![0.0; domain.len()];
        GridFunction { domain, values }
    }

    pub fn from_fn(domain: Arc<GridDomain>, f: impl Fn(PlanePoint) -> f64) -> Result<Self> {
        let values = (0..domain.len())
            .map(|k| if domain.is_in_domain(k) { f(domain.point(k)) } else { 0.0 })
            .collect();
        GridFunction::from_values(domain, values)
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn domain_arc(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Values at the boundary nodes, in boundary order.
    pub fn boundary_trace(&self) -> Vec<f64> {
        self.domain.boundary_nodes().iter().map(|b| self.values[b.node]).collect()
    }

    /// `max |u − v|` over in-domain nodes.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        self.domain.check_same(&other.domain)?;
        Ok(self.domain.in_domain_nodes().map(|k| (self.values[k] - other.values[k]).abs()).fold(0.0, f64::max))
    }

    /// `max (u − v)` over in-domain nodes.
    pub fn max_excess(&self, other: &GridFunction) -> Result<f64> {
        self.domain.check_same(&other.domain)?;
        Ok(self.domain.in_domain_nodes().map(|k| self.values[k] - other.values[k]).fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn sup_norm(&self) -> f64 {
        self.domain.in_domain_nodes().map(|k| self.values[k].abs()).fold(0.0, f64::max)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.domain.in_domain_nodes().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
            (lo.min(self.values[k]), hi.max(self.values[k]))
        })
    }

    /// Adds a constant on in-domain nodes.
    pub fn shifted(&self, c: f64) -> GridFunction {
        let mut out = self.clone();
        for k in 0..out.values.len() {
            if self.domain.is_in_domain(k) {
                out.values[k] += c;
            }
        }
        out
    }

    fn zip_with(u: &GridFunction, v: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        u.domain.check_same(&v.domain)?;
        let values = (0..u.values.len())
            .map(|k| if u.domain.is_in_domain(k) { f(u.values[k], v.values[k]) } else { 0.0 })
            .collect();
        Ok(GridFunction { domain: u.domain.clone(), values })
    }
}

pub fn lattice_max(u: &GridFunction, v: &GridFunction) -> Result<GridFunction> {
    GridFunction::zip_with(u, v, f64::max)
}

pub fn lattice_min(u: &GridFunction, v: &GridFunction) -> Result<GridFunction> {
    GridFunction::zip_with(u, v, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzScope {
    /// Grid edges only: `max |Δu|/h`.
    Neighbors,
    /// Every pair of in-domain nodes. Always at least `Neighbors / √2` for
    /// functions sampled from Lipschitz data, and at least `Neighbors` itself
    /// since grid edges are among the pairs.
    AllPairs,
}

pub fn discrete_lipschitz(u: &GridFunction, scope: LipschitzScope) -> f64 {
    let d = u.domain();
    let vals = u.values();
    match scope {
        LipschitzScope::Neighbors => {
            let mut best: f64 = 0.0;
            for k in d.in_domain_nodes() {
                let (i, j) = d.coords(k);
                if i + 1 < d.nx() && d.is_in_domain(k + 1) {
                    best = best.max((vals[k + 1] - vals[k]).abs() / d.h());
                }
                if j + 1 < d.ny() && d.is_in_domain(k + d.nx()) {
                    best = best.max((vals[k + d.nx()] - vals[k]).abs() / d.h());
                }
            }
            best
        }
        LipschitzScope::AllPairs => {
            let nodes: Vec<(PlanePoint, f64)> = d.in_domain_nodes().map(|k| (d.point(k), vals[k])).collect();
            nodes
                .par_iter()
                .enumerate()
                .map(|(a, &(za, ua))| {
                    nodes[a + 1..]
                        .iter()
                        .map(|&(zb, ub)| (ua - ub).abs() / (za - zb).norm())
                        .fold(0.0, f64::max)
                })
                .reduce(|| 0.0, f64::max)
        }
    }
}

/// Boundary data `φ`, evaluated pointwise.
#[derive(Clone)]
pub struct BoundaryDatum {
    label: String,
    f: Arc<dyn Fn(PlanePoint) -> f64 + Send + Sync>,
}

impl fmt::Debug for BoundaryDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("BoundaryDatum").field(&self.label).finish()
    }
}

impl BoundaryDatum {
    pub fn new(label: impl Into<String>, f: impl Fn(PlanePoint) -> f64 + Send + Sync + 'static) -> Self {
        BoundaryDatum { label: label.into(), f: Arc::new(f) }
    }

    /// `⟨a, z⟩ + b`.
    pub fn affine(a: PlanePoint, b: f64) -> Self {
        BoundaryDatum::new(format!("affine(a=({}, {}), b={})", a.x, a.y, b), move |z| a.dot(z) + b)
    }

    pub fn constant(c: f64) -> Self {
        BoundaryDatum::new(format!("constant({c})"), move |_| c)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, z: PlanePoint) -> f64 {
        (self.f)(z)
    }

    /// `φ + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let f = self.f.clone();
        BoundaryDatum::new(format!("{} + {c}", self.label), move |z| f(z) + c)
    }

    /// Samples `φ` on every in-domain node.
    pub fn sample(&self, domain: Arc<GridDomain>) -> Result<GridFunction> {
        GridFunction::from_fn(domain, |z| self.eval(z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> Arc<GridDomain> {
        Arc::new(GridDomain::unit_square(n).unwrap())
    }

    #[test]
    fn lattice_ops_examples() {
        let d = square(8);
        let u = GridFunction::from_fn(d.clone(), |z| z.x - 0.5).unwrap();
        let v = GridFunction::from_fn(d.clone(), |z| 0.5 - z.x).unwrap();
        let mx = lattice_max(&u, &v).unwrap();
        let mn = lattice_min(&u, &v).unwrap();
        for k in d.in_domain_nodes() {
            assert_eq!(mx.get(k), u.get(k).abs());
            assert_eq!(mn.get(k), -u.get(k).abs());
            assert_eq!(mx.get(k) + mn.get(k), u.get(k) + v.get(k));
        }
        let w = u.shifted(1.0);
        assert_eq!(lattice_max(&u, &w).unwrap(), w);
        assert_eq!(lattice_min(&u, &w).unwrap(), u);
    }

    #[test]
    fn lattice_ops_reject_mismatch() {
        let u = GridFunction::zeros(square(8));
        let v = GridFunction::zeros(square(16));
        assert!(matches!(lattice_max(&u, &v), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn lipschitz_examples() {
        let d = square(16);
        let a = PlanePoint::new(0.6, -0.8);
        let u = GridFunction::from_fn(d.clone(), |z| a.dot(z) + 0.3).unwrap();
        assert!((discrete_lipschitz(&u, LipschitzScope::Neighbors) - 0.8).abs() < 1e-12);
        // slope direction (3, −4)/5 is resolved by a lattice pair
        assert!((discrete_lipschitz(&u, LipschitzScope::AllPairs) - 1.0).abs() < 1e-12);
        let c = GridFunction::from_fn(d.clone(), |_| 2.0).unwrap();
        assert_eq!(discrete_lipschitz(&c, LipschitzScope::AllPairs), 0.0);
        let x = GridFunction::from_fn(d, |z| z.x).unwrap();
        assert!((discrete_lipschitz(&x, LipschitzScope::Neighbors) - 1.0).abs() < 1e-12);
        assert!((discrete_lipschitz(&x, LipschitzScope::AllPairs) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_values_rejects_nan_inside() {
        let d = square(4);
        let mut vals = vec![0.0; d.len()];
        vals[d.index(2, 2)] = f64::NAN;
        assert!(GridFunction::from_values(d.clone(), vals).is_err());
        assert!(GridFunction::from_values(d, vec![0.0; 3]).is_err());
    }
}
