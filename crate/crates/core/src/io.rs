//! CSV and JSON artifacts. Floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{FiberError, Result};
use crate::fiber::Trace;
use crate::inversion::PlanarCurve;
use crate::linalg::{EigenBasis, SparseMatrix};
use crate::Vector;

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| FiberError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| FiberError::io(path, e))
}

pub fn vector_csv(v: &Vector) -> String {
    let mut out = String::from("node_index,value\n");
    for (i, x) in v.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", num(*x));
    }
    out
}

pub fn write_vector_csv(path: impl AsRef<Path>, v: &Vector) -> Result<()> {
    write_text(path, &vector_csv(v))
}

/// Parses `node_index,value` rows (header optional, indices `0..n` in any order).
pub fn parse_vector_csv(text: &str) -> Result<Vector> {
    let mut entries = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (line_no == 0 && line.starts_with("node_index")) {
            continue;
        }
        let bad = || FiberError::Config(format!("vector csv line {}: {line:?}", line_no + 1));
        let (i, v) = line.split_once(',').ok_or_else(bad)?;
        let i: usize = i.trim().parse().map_err(|_| bad())?;
        let v: f64 = v.trim().parse().map_err(|_| bad())?;
        entries.push((i, v));
    }
    let n = entries.len();
    let mut out = Vector::from_element(n, f64::NAN);
    for (i, v) in entries {
        if i >= n || !out[i].is_nan() {
            return Err(FiberError::Config(format!(
                "vector csv index {i} out of range or repeated"
            )));
        }
        out[i] = v;
    }
    Ok(out)
}

pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<Vector> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FiberError::io(path, e))?;
    parse_vector_csv(&text)
}

pub fn trace_csv(trace: &Trace) -> String {
    let d = trace.direction.len();
    let mut out = String::from("t");
    for j in 1..=d {
        let _ = write!(out, ",height_{j}");
    }
    for j in 1..=d {
        let _ = write!(out, ",f_height_{j}");
    }
    out.push_str(",residual_h,residual_full,newton_iters\n");
    for s in &trace.samples {
        out.push_str(&num(s.t));
        for h in s.point.heights.iter().chain(&s.point.f_heights) {
            let _ = write!(out, ",{}", num(*h));
        }
        let _ = writeln!(
            out,
            ",{},{},{}",
            num(s.point.residual_h),
            num(s.point.residual_full),
            s.point.newton_iters
        );
    }
    out
}

pub fn curve_csv(curve: &PlanarCurve) -> String {
    let mut out = String::from("s,v_1,v_2,b_1,b_2,residual_h\n");
    for i in 0..curve.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            num(curve.s[i]),
            num(curve.v[i][0]),
            num(curve.v[i][1]),
            num(curve.b[i][0]),
            num(curve.b[i][1]),
            num(curve.residual_h[i])
        );
    }
    out
}

/// One column per eigenvector, one row per interior node.
pub fn eigenvectors_csv(basis: &EigenBasis) -> String {
    let mut out = String::from("node_index");
    for j in 1..=basis.len() {
        let _ = write!(out, ",psi_{j}");
    }
    out.push('\n');
    let n = basis.eigenvectors.first().map_or(0, |v| v.len());
    for i in 0..n {
        out.push_str(&i.to_string());
        for v in &basis.eigenvectors {
            let _ = write!(out, ",{}", num(v[i]));
        }
        out.push('\n');
    }
    out
}

pub fn matrix_coordinate_text(m: &SparseMatrix) -> String {
    format!(
        "{} {} {}\n{}",
        m.nrows(),
        m.ncols(),
        m.nnz(),
        m.to_coordinate_text()
    )
}

pub fn write_json<T: serde::Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_text(path, &(text + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_round_trip() {
        let v = Vector::from_vec(vec![0.1, -1e-300, 3.0, f64::MAX, 1.0 / 3.0]);
        let back = parse_vector_csv(&vector_csv(&v)).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn vector_rejects_gaps() {
        assert!(parse_vector_csv("node_index,value\n0,1\n2,3\n").is_err());
        assert!(parse_vector_csv("0,1\n0,3\n").is_err());
        assert!(parse_vector_csv("0;1\n").is_err());
        assert_eq!(
            parse_vector_csv("1,2\n0,1\n").unwrap().as_slice(),
            &[1.0, 2.0]
        );
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/v.csv");
        let v = Vector::from_vec(vec![1.5, 2.5]);
        write_vector_csv(&path, &v).unwrap();
        assert_eq!(read_vector_csv(&path).unwrap(), v);
        assert!(matches!(
            read_vector_csv(dir.path().join("missing.csv")),
            Err(FiberError::Io { .. })
        ));
    }
}
