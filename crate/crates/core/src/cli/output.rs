//! Artifact writers. Every file is written to a temporary name in the
//! target directory and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::grid::GridFunction;

/// Keys holding wall-clock times; dropped from the canonical report.
const TIMING_KEYS: &[&str] = &["wall_time_s", "runtime_s"];

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, &target)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result?;
    Ok(target)
}

fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !TIMING_KEYS.contains(&k.as_str()));
            map.values_mut().for_each(strip_timings);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

/// Pretty JSON without timing fields. Object keys come out sorted
/// and non-finite numbers become `null`.
pub fn canonical_json<T: Serialize>(report: &T) -> Result<String> {
    let mut v = serde_json::to_value(report).map_err(|e| crate::Error::Config(format!("report serialization: {e}")))?;
    strip_timings(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("JSON value serializes");
    s.push('\n');
    Ok(s)
}

/// Binary P5 image, top grid row first, min value 0 and max 255. Exterior
/// nodes are drawn as 0.
pub fn heatmap_pgm(u: &GridFunction) -> Vec<u8> {
    let d = u.domain();
    let (lo, hi) = u.min_max();
    let span = hi - lo;
    let mut out = format!("P5\n{} {}\n255\n", d.nx(), d.ny()).into_bytes();
    for j in (0..d.ny()).rev() {
        for i in 0..d.nx() {
            let k = d.index(i, j);
            let px = if !d.is_in_domain(k) || !(span > 0.0) {
                0
            } else {
                (255.0 * (u.get(k) - lo) / span).round().clamp(0.0, 255.0) as u8
            };
            out.push(px);
        }
    }
    out
}
