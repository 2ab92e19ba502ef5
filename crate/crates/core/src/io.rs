//! JSON formats for operators and identification maps, and atomic file
//! output.
//!
//! Operator: `{"dim": n, "matrix": M, "weights": [..], "kind": "resolvent"}`
//! where `M` is either a row-major array of `n^2` numbers or a triplet list
//! `{"rows": [..], "cols": [..], "vals": [..]}`. `weights` defaults to ones
//! and `kind` to `"resolvent"`.
//!
//! Map: `{"rows": r, "cols": c, "matrix": M}` with `M` as above.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};
use crate::operators::{HermOperator, OperatorKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixData {
    Dense(Vec<f64>),
    Triplets {
        rows: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorFile {
    dim: usize,
    matrix: MatrixData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default = "default_kind")]
    kind: OperatorKind,
}

fn default_kind() -> OperatorKind {
    OperatorKind::Resolvent
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    rows: usize,
    cols: usize,
    matrix: MatrixData,
}

fn to_matrix(data: MatrixData, rows: usize, cols: usize) -> Result<Matrix> {
    match data {
        MatrixData::Dense(v) => {
            if v.len() != rows * cols {
                return Err(Error::Parse(format!(
                    "dense matrix has {} entries, expected {rows}x{cols}",
                    v.len()
                )));
            }
            Ok(Matrix::Dense(DMatrix::from_row_slice(rows, cols, &v)))
        }
        MatrixData::Triplets { rows: r, cols: c, vals } => {
            if r.len() != vals.len() || c.len() != vals.len() {
                return Err(Error::Parse("triplet arrays differ in length".into()));
            }
            let t: Vec<_> = r.into_iter().zip(c).zip(vals).map(|((r, c), v)| (r, c, v)).collect();
            CsrMatrix::from_triplets(rows, cols, &t)
                .map(Matrix::Sparse)
                .map_err(|e| Error::Parse(e.to_string()))
        }
    }
}

fn from_matrix(m: &Matrix) -> MatrixData {
    match m {
        Matrix::Dense(d) => {
            MatrixData::Dense((0..d.nrows()).flat_map(|r| (0..d.ncols()).map(move |c| d[(r, c)])).collect())
        }
        Matrix::Sparse(s) => {
            let t = s.triplets();
            MatrixData::Triplets {
                rows: t.iter().map(|x| x.0).collect(),
                cols: t.iter().map(|x| x.1).collect(),
                vals: t.iter().map(|x| x.2).collect(),
            }
        }
    }
}

/// Parses an operator document. Malformed documents give `Error::Parse`;
/// well-formed ones that break an operator invariant give
/// `Error::Validation`.
pub fn parse_operator(text: &str, validate_spectrum: bool) -> Result<HermOperator> {
    let file: OperatorFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("operator: {e}")))?;
    if file.dim == 0 {
        return Err(Error::Parse("operator dimension must be positive".into()));
    }
    let matrix = to_matrix(file.matrix, file.dim, file.dim)?;
    let weights = file.weights.unwrap_or_else(|| vec![1.0; file.dim]);
    if weights.len() != file.dim {
        return Err(Error::Parse(format!(
            "{} weights for dimension {}",
            weights.len(),
            file.dim
        )));
    }
    HermOperator::new(matrix, weights, file.kind, validate_spectrum)
}

pub fn operator_to_json(op: &HermOperator) -> String {
    let weights = op.weights();
    let file = OperatorFile {
        dim: op.dim(),
        matrix: from_matrix(op.matrix()),
        weights: (weights.iter().any(|&w| w != 1.0)).then(|| weights.to_vec()),
        kind: op.kind(),
    };
    serde_json::to_string(&file).expect("operator serialises")
}

pub fn parse_map(text: &str) -> Result<Matrix> {
    let file: MapFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("map: {e}")))?;
    to_matrix(file.matrix, file.rows, file.cols)
}

pub fn map_to_json(m: &Matrix) -> String {
    let file = MapFile {
        rows: m.nrows(),
        cols: m.ncols(),
        matrix: from_matrix(m),
    };
    serde_json::to_string(&file).expect("map serialises")
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn read_operator(path: &Path, validate_spectrum: bool) -> Result<HermOperator> {
    parse_operator(&read_to_string(path)?, validate_spectrum)
        .map_err(|e| e.context(path.display().to_string()))
}

pub fn read_map(path: &Path) -> Result<Matrix> {
    parse_map(&read_to_string(path)?).map_err(|e| e.context(path.display().to_string()))
}

/// Writes `contents` to a temporary sibling and renames it over `path`, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Contract(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}
