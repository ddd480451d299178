//! Planar grid domains on the global lattice `hZ²`, nodal grid functions and
//! the discrete functionals.

mod csv;
mod function;
pub(crate) mod functional;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PlanePoint;

pub use csv::{parse_grid_csv, read_grid_csv, write_grid_csv, RawGrid};
pub use function::{discrete_lipschitz, lattice_max, lattice_min, BoundaryDatum, GridFunction, LipschitzScope};
pub use functional::{
    cell_gradients, discrete_gradient, functional_value, triangle_centroids, Density, EnvelopeDensity,
    ExactDensity, FunctionalValue, KahanSum, Mode,
};

/// Closed convex planar regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainShape {
    Square { center: PlanePoint, side: f64 },
    Disk { center: PlanePoint, radius: f64 },
    /// Vertices of a convex polygon, in either orientation.
    Polygon { vertices: Vec<PlanePoint> },
}

impl DomainShape {
    pub fn unit_square() -> Self {
        DomainShape::Square { center: PlanePoint::new(0.5, 0.5), side: 1.0 }
    }

    pub fn unit_disk() -> Self {
        DomainShape::Disk { center: PlanePoint::ZERO, radius: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DomainShape::Square { center, side } => {
                if !(center.is_finite() && *side > 0.0 && side.is_finite()) {
                    return Err(Error::InvalidParameter(format!("bad square: center {center:?}, side {side}")));
                }
            }
            DomainShape::Disk { center, radius } => {
                if !(center.is_finite() && *radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidParameter(format!("bad disk: center {center:?}, radius {radius}")));
                }
            }
            DomainShape::Polygon { vertices } => {
                if vertices.len() < 3 || vertices.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("polygon needs at least 3 finite vertices".into()));
                }
                let n = vertices.len();
                let mut sign = 0.0;
                for k in 0..n {
                    let (a, b, c) = (vertices[k], vertices[(k + 1) % n], vertices[(k + 2) % n]);
                    let cross = (b - a).dot_star(c - b);
                    if cross.abs() <= 1e-14 {
                        return Err(Error::InvalidParameter("polygon has collinear consecutive vertices".into()));
                    }
                    if sign == 0.0 {
                        sign = cross.signum();
                    } else if cross.signum() != sign {
                        return Err(Error::InvalidParameter("polygon must be convex".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Counter-clockwise vertex list for polygonal shapes.
    fn ccw_vertices(&self) -> Option<Vec<PlanePoint>> {
        match self {
            DomainShape::Square { center, side } => {
                let s = 0.5 * side;
                Some(vec![
                    *center + PlanePoint::new(-s, -s),
                    *center + PlanePoint::new(s, -s),
                    *center + PlanePoint::new(s, s),
                    *center + PlanePoint::new(-s, s),
                ])
            }
            DomainShape::Disk { .. } => None,
            DomainShape::Polygon { vertices } => {
                let mut v = vertices.clone();
                let area2: f64 = (0..v.len()).map(|k| v[k].dot_star(v[(k + 1) % v.len()])).sum();
                // ⟨a, b*⟩ = −(a × b), so a positive sum means clockwise.
                if area2 > 0.0 {
                    v.reverse();
                }
                Some(v)
            }
        }
    }

    pub fn translated(&self, offset: PlanePoint) -> Self {
        match self {
            DomainShape::Square { center, side } => DomainShape::Square { center: *center + offset, side: *side },
            DomainShape::Disk { center, radius } => DomainShape::Disk { center: *center + offset, radius: *radius },
            DomainShape::Polygon { vertices } => {
                DomainShape::Polygon { vertices: vertices.iter().map(|v| *v + offset).collect() }
            }
        }
    }

    /// Membership up to an absolute slack `tol`.
    pub fn contains(&self, z: PlanePoint, tol: f64) -> bool {
        match self {
            DomainShape::Square { center, side } => (z - *center).max_abs() <= 0.5 * side + tol,
            DomainShape::Disk { center, radius } => (z - *center).norm() <= radius + tol,
            DomainShape::Polygon { .. } => {
                let v = self.ccw_vertices().expect("polygon");
                (0..v.len()).all(|k| {
                    let (a, b) = (v[k], v[(k + 1) % v.len()]);
                    let edge = b - a;
                    // left of a→b for counter-clockwise order
                    (z - a).dot_star(edge) / edge.norm() >= -tol
                })
            }
        }
    }

    pub fn centroid(&self) -> PlanePoint {
        match self {
            DomainShape::Square { center, .. } | DomainShape::Disk { center, .. } => *center,
            DomainShape::Polygon { .. } => {
                let v = self.ccw_vertices().expect("polygon");
                let (mut area, mut c) = (0.0, PlanePoint::ZERO);
                for k in 0..v.len() {
                    let (a, b) = (v[k], v[(k + 1) % v.len()]);
                    let cross = a.x * b.y - b.x * a.y;
                    area += cross;
                    c += (a + b) * cross;
                }
                c * (1.0 / (3.0 * area))
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            DomainShape::Square { side, .. } => side * side,
            DomainShape::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            DomainShape::Polygon { .. } => {
                let v = self.ccw_vertices().expect("polygon");
                0.5 * (0..v.len()).map(|k| v[k].x * v[(k + 1) % v.len()].y - v[(k + 1) % v.len()].x * v[k].y).sum::<f64>()
            }
        }
    }

    /// `sup |z|` over the closed region; attained at a vertex or on the circle.
    pub fn sup_norm(&self) -> f64 {
        match self {
            DomainShape::Disk { center, radius } => center.norm() + radius,
            _ => self.ccw_vertices().expect("polygon").iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (PlanePoint, PlanePoint) {
        match self {
            DomainShape::Disk { center, radius } => {
                (*center - PlanePoint::new(*radius, *radius), *center + PlanePoint::new(*radius, *radius))
            }
            _ => {
                let v = self.ccw_vertices().expect("polygon");
                let lo = v.iter().fold(PlanePoint::new(f64::INFINITY, f64::INFINITY), |m, p| {
                    PlanePoint::new(m.x.min(p.x), m.y.min(p.y))
                });
                let hi = v.iter().fold(PlanePoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |m, p| {
                    PlanePoint::new(m.x.max(p.x), m.y.max(p.y))
                });
                (lo, hi)
            }
        }
    }

    /// Outward unit normal at the boundary point nearest to `z`. At polygon
    /// vertices the normals of the two edges are averaged.
    pub fn outward_normal(&self, z: PlanePoint) -> PlanePoint {
        match self {
            DomainShape::Disk { center, .. } => {
                let d = z - *center;
                let r = d.norm();
                if r == 0.0 {
                    PlanePoint::new(1.0, 0.0)
                } else {
                    d * r.recip()
                }
            }
            _ => {
                let v = self.ccw_vertices().expect("polygon");
                let n = v.len();
                let dists: Vec<(f64, PlanePoint)> = (0..n)
                    .map(|k| {
                        let (a, b) = (v[k], v[(k + 1) % n]);
                        let e = b - a;
                        let t = ((z - a).dot(e) / e.norm_sq()).clamp(0.0, 1.0);
                        let nearest = a + e * t;
                        let normal = PlanePoint::new(e.y, -e.x) * e.norm().recip();
                        ((z - nearest).norm(), normal)
                    })
                    .collect();
                let best = dists.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
                let slack = 1e-9 * (1.0 + best);
                let mut normal = PlanePoint::ZERO;
                for (d, nu) in &dists {
                    if *d <= best + slack {
                        normal += *nu;
                    }
                }
                normal * normal.norm().recip()
            }
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            DomainShape::Disk { radius, .. } => std::f64::consts::TAU * radius,
            _ => {
                let v = self.ccw_vertices().expect("polygon");
                (0..v.len()).map(|k| (v[(k + 1) % v.len()] - v[k]).norm()).sum()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryNode {
    pub node: usize,
    pub normal: PlanePoint,
    /// Length of boundary assigned to this node.
    pub weight: f64,
}

/// A convex region sampled on the lattice `hZ²`. Node `(i, j)` of the
/// bounding box sits at `((i0 + i) h, (j0 + j) h)`.
///
/// A node is in the domain when it lies in the closed region up to
/// `1e-9 h`. Cells are lattice squares with all four corners in the domain.
/// Interior nodes are those whose four incident cells all belong to the
/// domain; the other in-domain nodes are boundary nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDomain {
    shape: DomainShape,
    h: f64,
    i0: i64,
    j0: i64,
    nx: usize,
    ny: usize,
    kinds: Vec<NodeKind>,
    cells: Vec<usize>,
    boundary: Vec<BoundaryNode>,
}

impl GridDomain {
    pub fn new(shape: DomainShape, h: f64) -> Result<Self> {
        shape.validate()?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {h}")));
        }
        let (lo, hi) = shape.bounds();
        let slack = 1e-9;
        let i0 = (lo.x / h - slack).ceil() as i64;
        let j0 = (lo.y / h - slack).ceil() as i64;
        let i1 = (hi.x / h + slack).floor() as i64;
        let j1 = (hi.y / h + slack).floor() as i64;
        if i1 - i0 < 2 || j1 - j0 < 2 {
            return Err(Error::InvalidParameter(format!("grid spacing {h} too coarse for the domain")));
        }
        let (nx, ny) = ((i1 - i0 + 1) as usize, (j1 - j0 + 1) as usize);
        if nx.saturating_mul(ny) > 50_000_000 {
            return Err(Error::InvalidParameter(format!("grid of {nx}x{ny} nodes is too large")));
        }
        let mut inside = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let z = PlanePoint::new((i0 + i as i64) as f64 * h, (j0 + j as i64) as f64 * h);
                inside[j * nx + i] = shape.contains(z, slack * h);
            }
        }
        let mut cells = Vec::new();
        let mut cell_in = vec![false; nx * ny];
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let k = j * nx + i;
                if inside[k] && inside[k + 1] && inside[k + nx] && inside[k + nx + 1] {
                    cells.push(k);
                    cell_in[k] = true;
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::InvalidParameter("domain contains no complete grid cell".into()));
        }
        let mut kinds = vec![NodeKind::Exterior; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if !inside[k] {
                    continue;
                }
                let full = i > 0
                    && j > 0
                    && i + 1 < nx
                    && j + 1 < ny
                    && cell_in[k]
                    && cell_in[k - 1]
                    && cell_in[k - nx]
                    && cell_in[k - nx - 1];
                kinds[k] = if full { NodeKind::Interior } else { NodeKind::Boundary };
            }
        }
        let mut domain = GridDomain { shape, h, i0, j0, nx, ny, kinds, cells, boundary: Vec::new() };
        domain.boundary = domain.build_boundary();
        Ok(domain)
    }

    /// `[0, 1]²` with spacing `1/n`, which has `(n + 1)²` nodes.
    pub fn unit_square(n: usize) -> Result<Self> {
        GridDomain::new(DomainShape::unit_square(), 1.0 / n as f64)
    }

    fn build_boundary(&self) -> Vec<BoundaryNode> {
        let c = self.shape.centroid();
        let mut nodes: Vec<(f64, usize)> = self
            .kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == NodeKind::Boundary)
            .map(|(k, _)| {
                let d = self.point(k) - c;
                (d.y.atan2(d.x), k)
            })
            .collect();
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // weights: half the lengths of the two adjacent segments of the
        // closed polygon through the boundary nodes in angular order
        let n = nodes.len();
        (0..n)
            .map(|m| {
                let k = nodes[m].1;
                let z = self.point(k);
                let prev = self.point(nodes[(m + n - 1) % n].1);
                let next = self.point(nodes[(m + 1) % n].1);
                let weight = 0.5 * ((z - prev).norm() + (next - z).norm());
                BoundaryNode { node: k, normal: self.shape.outward_normal(z), weight }
            })
            .collect()
    }

    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of nodes in the bounding box.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Lattice index of the bounding-box origin.
    pub fn origin_index(&self) -> (i64, i64) {
        (self.i0, self.j0)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn point(&self, k: usize) -> PlanePoint {
        let (i, j) = self.coords(k);
        PlanePoint::new((self.i0 + i as i64) as f64 * self.h, (self.j0 + j as i64) as f64 * self.h)
    }

    pub fn kind(&self, k: usize) -> NodeKind {
        self.kinds[k]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn is_in_domain(&self, k: usize) -> bool {
        self.kinds[k] != NodeKind::Exterior
    }

    pub fn in_domain_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&k| self.is_in_domain(k))
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&k| self.kinds[k] == NodeKind::Interior)
    }

    /// Boundary nodes in counter-clockwise order around the centroid.
    pub fn boundary_nodes(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    /// Lower-left node index of every included cell, row-major.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn cell_center(&self, cell: usize) -> PlanePoint {
        self.point(cell) + PlanePoint::new(0.5 * self.h, 0.5 * self.h)
    }

    /// Area covered by the included cells.
    pub fn cell_area(&self) -> f64 {
        self.cells.len() as f64 * self.h * self.h
    }

    /// `sup |z|` over the closed continuous region.
    pub fn sup_norm(&self) -> f64 {
        self.shape.sup_norm()
    }

    /// The lattice offset `τ / h`, provided `τ` is a whole number of steps.
    pub fn check_lattice_shift(&self, tau: PlanePoint) -> Result<(i64, i64)> {
        let (sx, sy) = (tau.x / self.h, tau.y / self.h);
        let (rx, ry) = (sx.round(), sy.round());
        if (sx - rx).abs() > 1e-9 || (sy - ry).abs() > 1e-9 {
            return Err(Error::Alignment(tau.x, tau.y));
        }
        Ok((rx as i64, ry as i64))
    }

    /// The domain shifted by a lattice vector. Node classification, normals
    /// and weights are carried over unchanged.
    pub fn translated(&self, offset: PlanePoint) -> Result<Self> {
        let (di, dj) = self.check_lattice_shift(offset)?;
        let mut out = self.clone();
        out.shape = self.shape.translated(offset);
        out.i0 += di;
        out.j0 += dj;
        Ok(out)
    }

    /// Same spacing, placement, and node classification.
    pub fn same_lattice(&self, other: &GridDomain) -> bool {
        self.h == other.h
            && self.i0 == other.i0
            && self.j0 == other.j0
            && self.nx == other.nx
            && self.ny == other.ny
            && self.kinds == other.kinds
    }

    pub(crate) fn check_same(&self, other: &GridDomain) -> Result<()> {
        if self.same_lattice(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch("grid functions live on different domains".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_layout() {
        let d = GridDomain::unit_square(32).unwrap();
        assert_eq!((d.nx(), d.ny()), (33, 33));
        assert_eq!(d.cells().len(), 32 * 32);
        assert_eq!(d.interior_nodes().count(), 31 * 31);
        assert_eq!(d.boundary_nodes().len(), 4 * 32);
        let total: f64 = d.boundary_nodes().iter().map(|b| b.weight).sum();
        assert!((total - 4.0).abs() < 1e-12, "{total}");
        assert_eq!(d.point(d.index(32, 0)), PlanePoint::new(1.0, 0.0));
    }

    #[test]
    fn square_normals_and_corner_bisectors() {
        let d = GridDomain::unit_square(8).unwrap();
        for b in d.boundary_nodes() {
            assert!((b.normal.norm() - 1.0).abs() < 1e-12);
            let z = d.point(b.node);
            if z == PlanePoint::ZERO {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                assert!((b.normal - PlanePoint::new(-s, -s)).max_abs() < 1e-12);
            }
            if z.x == 1.0 && z.y > 0.0 && z.y < 1.0 {
                assert_eq!(b.normal, PlanePoint::new(1.0, 0.0));
            }
        }
    }

    #[test]
    fn interior_nodes_have_four_neighbors() {
        for shape in [DomainShape::unit_disk(), DomainShape::Polygon {
            vertices: vec![PlanePoint::new(0.0, 0.0), PlanePoint::new(1.0, 0.2), PlanePoint::new(0.4, 1.0)],
        }] {
            let d = GridDomain::new(shape, 1.0 / 40.0).unwrap();
            for k in d.interior_nodes() {
                for nb in [k - 1, k + 1, k - d.nx(), k + d.nx()] {
                    assert!(d.is_in_domain(nb));
                }
            }
        }
    }

    #[test]
    fn disk_area_and_perimeter_converge() {
        let mut prev_err = f64::INFINITY;
        for n in [16, 32, 64] {
            let d = GridDomain::new(DomainShape::unit_disk(), 1.0 / n as f64).unwrap();
            let err = (d.cell_area() - std::f64::consts::PI).abs();
            assert!(err < 8.0 / n as f64, "{n}: {err}");
            assert!(err < prev_err);
            prev_err = err;
            let total: f64 = d.boundary_nodes().iter().map(|b| b.weight).sum();
            // polygon through the staircase: longer than the circle, shorter
            // than its taxicab length
            assert!(total > std::f64::consts::TAU && total < 8.0, "{total}");
            for b in d.boundary_nodes() {
                let z = d.point(b.node);
                assert!((b.normal - z * z.norm().recip()).max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn translation_keeps_structure() {
        let d = GridDomain::new(DomainShape::unit_disk(), 1.0 / 16.0).unwrap();
        let t = d.translated(PlanePoint::new(5.0 / 16.0, -3.0 / 16.0)).unwrap();
        assert_eq!(t.kinds(), d.kinds());
        assert_eq!(t.origin_index(), (d.origin_index().0 + 5, d.origin_index().1 - 3));
        assert!(matches!(d.translated(PlanePoint::new(0.01, 0.0)), Err(Error::Alignment(..))));
        let rebuilt = GridDomain::new(d.shape().translated(PlanePoint::new(5.0 / 16.0, -3.0 / 16.0)), 1.0 / 16.0).unwrap();
        assert!(rebuilt.same_lattice(&t));
    }

    #[test]
    fn sup_norm_examples() {
        assert!((DomainShape::unit_square().sup_norm() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(DomainShape::Disk { center: PlanePoint::new(10.0, 0.0), radius: 1.0 }.sup_norm(), 11.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(GridDomain::new(DomainShape::Disk { center: PlanePoint::ZERO, radius: -1.0 }, 0.1).is_err());
        assert!(GridDomain::new(DomainShape::unit_square(), 0.0).is_err());
        assert!(GridDomain::new(DomainShape::unit_square(), 0.9).is_err());
        let bowtie = DomainShape::Polygon {
            vertices: vec![PlanePoint::new(0.0, 0.0), PlanePoint::new(1.0, 1.0), PlanePoint::new(1.0, 0.0), PlanePoint::new(0.0, 1.0)],
        };
        assert!(GridDomain::new(bowtie, 0.1).is_err());
    }

    #[test]
    fn polygon_orientation_is_irrelevant() {
        let v = vec![PlanePoint::new(0.0, 0.0), PlanePoint::new(1.0, 0.0), PlanePoint::new(1.0, 1.0), PlanePoint::new(0.0, 1.0)];
        let mut r = v.clone();
        r.reverse();
        let a = GridDomain::new(DomainShape::Polygon { vertices: v }, 0.125).unwrap();
        let b = GridDomain::new(DomainShape::Polygon { vertices: r }, 0.125).unwrap();
        assert_eq!(a.kinds(), b.kinds());
        assert_eq!(a.boundary_nodes(), b.boundary_nodes());
    }
}
