//! Text format for grid functions:
//!
//! ```text
//! nx,<int>
//! ny,<int>
//! h,<float>
//! x0,<float>
//! y0,<float>
//! v00,v10,...        one line per grid row, bottom row first
//! ```
//!
//! Floats use 17 significant digits; exterior nodes are written as `nan`.

use std::fmt::Write as _;
use std::sync::Arc;

use super::{GridDomain, GridFunction};
use crate::error::{Error, Result};

/// A parsed grid file, not yet attached to a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct RawGrid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub x0: f64,
    pub y0: f64,
    pub values: Vec<f64>,
}

fn fmt_f64(out: &mut String, v: f64) {
    if v.is_nan() {
        out.push_str("nan");
    } else {
        write!(out, "{v:.16e}").expect("write to string");
    }
}

pub fn write_grid_csv(u: &GridFunction) -> String {
    let d = u.domain();
    let origin = d.point(0);
    let mut out = String::with_capacity(24 * d.len() + 128);
    writeln!(out, "nx,{}", d.nx()).unwrap();
    writeln!(out, "ny,{}", d.ny()).unwrap();
    for (key, v) in [("h", d.h()), ("x0", origin.x), ("y0", origin.y)] {
        out.push_str(key);
        out.push(',');
        fmt_f64(&mut out, v);
        out.push('\n');
    }
    for j in 0..d.ny() {
        for i in 0..d.nx() {
            if i > 0 {
                out.push(',');
            }
            let k = d.index(i, j);
            fmt_f64(&mut out, if d.is_in_domain(k) { u.get(k) } else { f64::NAN });
        }
        out.push('\n');
    }
    out
}

fn parse_float(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse { line, message: format!("bad number {field:?}: {e}") })
}

fn header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<(usize, &'a str)> {
    let (n, line) = lines.next().ok_or(Error::Parse { line: 0, message: format!("missing {key} header") })?;
    let (k, v) = line
        .split_once(',')
        .ok_or_else(|| Error::Parse { line: n, message: format!("expected `{key},<value>`") })?;
    if k.trim() != key {
        return Err(Error::Parse { line: n, message: format!("expected header {key}, found {k:?}") });
    }
    Ok((n, v))
}

pub fn parse_grid_csv(text: &str) -> Result<RawGrid> {
    let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let mut count = |key: &str| -> Result<usize> {
        let (n, v) = header(&mut lines, key)?;
        v.trim().parse::<usize>().map_err(|e| Error::Parse { line: n, message: format!("bad {key}: {e}") })
    };
    let nx = count("nx")?;
    let ny = count("ny")?;
    if nx == 0 || ny == 0 || nx.checked_mul(ny).is_none_or(|t| t > 50_000_000) {
        return Err(Error::Parse { line: 2, message: format!("unsupported grid size {nx}x{ny}") });
    }
    let mut real = |key: &str| -> Result<f64> {
        let (n, v) = header(&mut lines, key)?;
        parse_float(v, n)
    };
    let h = real("h")?;
    let x0 = real("x0")?;
    let y0 = real("y0")?;
    if !(h > 0.0 && h.is_finite() && x0.is_finite() && y0.is_finite()) {
        return Err(Error::Parse { line: 3, message: "h must be positive and origin finite".into() });
    }
    let mut values = Vec::with_capacity((nx * ny).min(text.len()));
    let mut rows = 0;
    for (n, line) in lines {
        if rows == ny {
            return Err(Error::Parse { line: n, message: format!("more than {ny} rows") });
        }
        let before = values.len();
        for field in line.split(',') {
            values.push(parse_float(field, n)?);
        }
        if values.len() - before != nx {
            return Err(Error::Parse { line: n, message: format!("expected {nx} values, found {}", values.len() - before) });
        }
        rows += 1;
    }
    if rows != ny {
        return Err(Error::Parse { line: 0, message: format!("expected {ny} rows, found {rows}") });
    }
    Ok(RawGrid { nx, ny, h, x0, y0, values })
}

/// Parses a grid file and attaches it to `domain`, whose layout must match.
pub fn read_grid_csv(domain: Arc<GridDomain>, text: &str) -> Result<GridFunction> {
    let raw = parse_grid_csv(text)?;
    let origin = domain.point(0);
    if raw.nx != domain.nx() || raw.ny != domain.ny() || raw.h != domain.h() || raw.x0 != origin.x || raw.y0 != origin.y {
        return Err(Error::GridMismatch("grid file layout does not match the domain".into()));
    }
    for k in 0..raw.values.len() {
        if domain.is_in_domain(k) == raw.values[k].is_nan() {
            return Err(Error::GridMismatch(format!("node {k} disagrees with the domain mask")));
        }
    }
    GridFunction::from_values(domain, raw.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainShape;
    use proptest::prelude::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let d = Arc::new(GridDomain::new(DomainShape::unit_disk(), 1.0 / 12.0).unwrap());
        let u = GridFunction::from_fn(d.clone(), |z| (3.0 * z.x).sin() / 7.0 + z.y * 1e-17).unwrap();
        let text = write_grid_csv(&u);
        let back = read_grid_csv(d, &text).unwrap();
        assert_eq!(back.values(), u.values());
        assert!(text.contains("nan"));
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(parse_grid_csv("nx,2\nny,2\nh,1\nx0,0\n"), Err(Error::Parse { .. })));
        assert!(parse_grid_csv("nx,2\nny,1\nh,1\nx0,0\ny0,0\n1,2,3\n").is_err());
        assert!(parse_grid_csv("nx,2\nny,1\nh,-1\nx0,0\ny0,0\n1,2\n").is_err());
        assert!(parse_grid_csv("ny,2\n").is_err());
        let ok = parse_grid_csv("nx,2\nny,1\nh,0.5\nx0,0\ny0,0\n1,2\n").unwrap();
        assert_eq!(ok.values, vec![1.0, 2.0]);
    }

    #[test]
    fn rejects_layout_mismatch() {
        let d = Arc::new(GridDomain::unit_square(4).unwrap());
        let other = Arc::new(GridDomain::unit_square(5).unwrap());
        let text = write_grid_csv(&GridFunction::zeros(other));
        assert!(matches!(read_grid_csv(d, &text), Err(Error::GridMismatch(_))));
    }

    proptest! {
        #[test]
        fn parser_never_panics(s in "\\PC{0,200}") {
            let _ = parse_grid_csv(&s);
        }

        #[test]
        fn values_round_trip(vals in proptest::collection::vec(-1e300..1e300f64, 25)) {
            let d = Arc::new(GridDomain::unit_square(4).unwrap());
            let u = GridFunction::from_values(d.clone(), vals).unwrap();
            let back = read_grid_csv(d, &write_grid_csv(&u)).unwrap();
            prop_assert_eq!(back.values(), u.values());
        }
    }
}
