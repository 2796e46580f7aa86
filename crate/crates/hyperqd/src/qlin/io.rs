//! Density-matrix interchange format.
//!
//! A JSON document with the dimension and two dim×dim real arrays:
//!
//! ```text
//! { "dim": 4, "re": [[..], ..], "im": [[..], ..] }
//! ```
//!
//! The writer emits 12 significant digits; the reader re-validates the
//! physical-state invariants.

use num_complex::Complex64 as C64;
use std::fmt::Write as _;

use super::matrix::ComplexMatrix;
use super::state::DensityMatrix;
use super::QlinError;

/// Serialize a density matrix to the interchange document.
pub fn write_density_matrix(rho: &DensityMatrix) -> String {
    let d = rho.dim();
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"dim\": {d},");
    for (name, pick) in [("re", 0), ("im", 1)] {
        let _ = writeln!(out, "  \"{name}\": [");
        for i in 0..d {
            out.push_str("    [");
            for j in 0..d {
                let z = rho.element(i, j);
                let v = if pick == 0 { z.re } else { z.im };
                let _ = write!(out, "{}", fmt_sig12(v));
                if j + 1 < d {
                    out.push_str(", ");
                }
            }
            out.push(']');
            if i + 1 < d {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str("  ]");
        if name == "re" {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

/// 12 significant digits, plain decimal/exponent hybrid as emitted by `{:e}`.
fn fmt_sig12(v: f64) -> String {
    if v == 0.0 {
        return "0.0".to_string();
    }
    format!("{:.11e}", v)
}

/// Parse and validate an interchange document.
pub fn read_density_matrix(text: &str) -> Result<DensityMatrix, QlinError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| QlinError::Format(e.to_string()))?;
    let dim = value
        .get("dim")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| QlinError::Format("missing integer field 'dim'".into()))? as usize;
    let re = read_array(&value, "re", dim)?;
    let im = read_array(&value, "im", dim)?;
    let m = ComplexMatrix::from_fn(dim, dim, |i, j| C64::new(re[i][j], im[i][j]));
    DensityMatrix::new(m)
}

fn read_array(value: &serde_json::Value, name: &str, dim: usize) -> Result<Vec<Vec<f64>>, QlinError> {
    let rows = value
        .get(name)
        .and_then(|v| v.as_array())
        .ok_or_else(|| QlinError::Format(format!("missing array field '{name}'")))?;
    if rows.len() != dim {
        return Err(QlinError::Format(format!(
            "field '{name}' has {} rows, expected {dim}",
            rows.len()
        )));
    }
    rows.iter()
        .map(|row| {
            let cols = row
                .as_array()
                .ok_or_else(|| QlinError::Format(format!("field '{name}' row is not an array")))?;
            if cols.len() != dim {
                return Err(QlinError::Format(format!(
                    "field '{name}' row has {} entries, expected {dim}",
                    cols.len()
                )));
            }
            cols.iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| QlinError::Format(format!("non-numeric entry in '{name}'")))
                })
                .collect()
        })
        .collect()
}
