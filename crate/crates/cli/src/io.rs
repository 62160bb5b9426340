//! System files, matrix shorthands and output helpers.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use nifeq_core::{Mat, StateSpaceModel};

use crate::Failure;

/// Row-major nested arrays.
pub type Rows = Vec<Vec<f64>>;

pub fn rows(m: &Mat) -> Rows {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// A scalar `s` stands for `s·I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Matrix(Rows),
}

impl MatrixSpec {
    /// Parse a flag value: a number or a JSON array of rows.
    pub fn parse_flag(flag: &str, s: &str) -> Result<Self, Failure> {
        if let Ok(v) = s.trim().parse::<f64>() {
            return Ok(Self::Scalar(v));
        }
        serde_json::from_str::<Rows>(s)
            .map(Self::Matrix)
            .map_err(|e| Failure::input(format!("{flag}: expected a number or [[..],..] ({e})")))
    }

    pub fn resolve(&self, field: &str, dim: usize) -> Result<Mat, Failure> {
        match self {
            Self::Scalar(v) => {
                if !v.is_finite() {
                    return Err(Failure::input(format!("{field}: not finite")));
                }
                Ok(Mat::identity(dim, dim) * *v)
            }
            Self::Matrix(r) => {
                let m = to_mat(field, r, Some(dim), Some(dim))?;
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsBlock {
    pub y1b: Option<MatrixSpec>,
    pub qb: Option<MatrixSpec>,
    pub y1a: Option<f64>,
    pub y2: Option<MatrixSpec>,
    pub k3: Option<MatrixSpec>,
    /// `"zero"` (zero first, then random) or `"random"`.
    pub hb: Option<String>,
    pub seed: Option<u64>,
    pub max_tries: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<OptionsBlock>,
}

impl SystemFile {
    pub fn from_model(sys: &StateSpaceModel, name: Option<String>) -> Self {
        Self {
            name,
            a: rows(sys.a()),
            b: rows(sys.b()),
            c: rows(sys.c()),
            d: Some(rows(sys.d())),
            gamma: None,
            options: None,
        }
    }

    pub fn model(&self) -> Result<StateSpaceModel, Failure> {
        let n = self.a.len();
        let p = match (&self.d, n) {
            (Some(d), _) if !d.is_empty() => d.len(),
            (_, 0) => self.c.len(),
            _ => self.b.first().map_or(0, Vec::len),
        };
        if p == 0 {
            return Err(Failure::input("system has no inputs"));
        }
        let a = to_mat("A", &self.a, Some(n), Some(n))?;
        let b = to_mat("B", &self.b, Some(n), Some(p))?;
        // a static gain may leave C as [] instead of p empty rows
        let c = if n == 0 && self.c.iter().all(Vec::is_empty) {
            Mat::zeros(p, 0)
        } else {
            to_mat("C", &self.c, Some(p), Some(n))?
        };
        let d = match &self.d {
            Some(d) => to_mat("D", d, Some(p), Some(p))?,
            None => Mat::zeros(p, p),
        };
        StateSpaceModel::new(a, b, c, d).map_err(|e| Failure::input(e.to_string()))
    }
}

/// Dense matrix from nested rows with optional expected shape. An empty
/// outer array is a matrix with no rows.
pub fn to_mat(
    field: &str,
    r: &Rows,
    nrows: Option<usize>,
    ncols: Option<usize>,
) -> Result<Mat, Failure> {
    let nr = r.len();
    let nc = match (r.first(), ncols) {
        (Some(row), _) => row.len(),
        (None, Some(c)) => c,
        (None, None) => 0,
    };
    if let Some(want) = nrows {
        if nr != want {
            return Err(Failure::input(format!(
                "{field}: expected {want} rows, found {nr}"
            )));
        }
    }
    if let Some(want) = ncols {
        if nr > 0 && nc != want {
            return Err(Failure::input(format!(
                "{field}: expected {want} columns, found {nc}"
            )));
        }
    }
    for (i, row) in r.iter().enumerate() {
        if row.len() != nc {
            return Err(Failure::input(format!(
                "{field}: row {i} has {} entries, expected {nc}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Failure::input(format!(
                "{field}: entry ({i}, {j}) is not finite"
            )));
        }
    }
    Ok(Mat::from_fn(nr, nc, |i, j| r[i][j]))
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Load a system file. A synthesis report is accepted as well; its
/// `closed_loop` member is used.
pub fn load_system(path: &Path) -> Result<SystemFile, Failure> {
    let mut v = read_json(path)?;
    if v.get("A").is_none() {
        if let Some(cl) = v.get_mut("closed_loop") {
            v = cl.take();
        }
    }
    serde_json::from_value(v).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Load a certificate: a bare array of rows, `{"Y": ..}`, or a synthesis
/// report's `certificate_y`.
pub fn load_certificate(path: &Path, n: usize) -> Result<Mat, Failure> {
    let v = read_json(path)?;
    let y = match &v {
        Value::Array(_) => v.clone(),
        _ => v
            .get("Y")
            .or_else(|| v.get("certificate_y"))
            .cloned()
            .ok_or_else(|| Failure::input(format!("{}: no Y or certificate_y", path.display())))?,
    };
    let r: Rows = serde_json::from_value(y).map_err(|e| Failure::input(format!("Y: {e}")))?;
    to_mat("Y", &r, Some(n), Some(n))
}

pub fn emit(report: &Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(report).expect("reports serialize") + "\n";
    if let Some(p) = out {
        fs::write(p, &text).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
    }
    stdout(&text);
    Ok(())
}

/// Write to stdout, ignoring a closed pipe.
pub fn stdout(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}
