//! MatrixMarket coordinate dumps (1-based, lower triangle for symmetric matrices).

use std::io::{BufRead, Write};

use super::{CscMatrix, Result, SparseError};

const HEADER_SYMMETRIC: &str = "%%MatrixMarket matrix coordinate real symmetric";
const HEADER_GENERAL: &str = "%%MatrixMarket matrix coordinate real general";

/// Writes `m` in coordinate format; structurally symmetric square matrices
/// are written as `symmetric` with the lower triangle only.
pub fn write_matrix_market<W: Write>(mut w: W, m: &CscMatrix) -> std::io::Result<()> {
    let symmetric = m.nrows() == m.ncols() && m.asymmetry() == 0.0 && m.pattern().is_structurally_symmetric();
    let entries: Vec<(usize, usize, f64)> = m
        .pattern()
        .entries()
        .filter(|&(_, i, j)| !symmetric || i >= j)
        .map(|(p, i, j)| (i, j, m.values()[p]))
        .collect();
    writeln!(w, "{}", if symmetric { HEADER_SYMMETRIC } else { HEADER_GENERAL })?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Reads a real coordinate matrix; symmetric files are expanded to both triangles.
pub fn read_matrix_market<R: BufRead>(r: R) -> Result<CscMatrix> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| SparseError::Parse("empty input".into()))?
        .map_err(|e| SparseError::Parse(e.to_string()))?;
    let lower = header.to_ascii_lowercase();
    let fields: Vec<&str> = lower.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" || fields[2] != "coordinate" {
        return Err(SparseError::Parse(format!("unsupported header: {header}")));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(SparseError::Parse(format!("unsupported field type: {}", fields[3])));
    }
    let symmetric = match fields[4] {
        "symmetric" => true,
        "general" => false,
        other => return Err(SparseError::Parse(format!("unsupported symmetry: {other}"))),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for line in lines {
        let line = line.map_err(|e| SparseError::Parse(e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        let bad = || SparseError::Parse(format!("malformed line: {t}"));
        if size.is_none() {
            if parts.len() != 3 {
                return Err(bad());
            }
            let nums: Vec<usize> = parts.iter().map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
            size = Some((nums[0], nums[1], nums[2]));
            continue;
        }
        if parts.len() != 3 {
            return Err(bad());
        }
        let i: usize = parts[0].parse().map_err(|_| bad())?;
        let j: usize = parts[1].parse().map_err(|_| bad())?;
        let v: f64 = parts[2].parse().map_err(|_| bad())?;
        if i == 0 || j == 0 {
            return Err(bad());
        }
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    let (nr, nc, _) = size.ok_or_else(|| SparseError::Parse("missing size line".into()))?;
    CscMatrix::from_triplets(nr, nc, &triplets)
}
