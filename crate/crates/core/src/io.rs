//! Plain-text matrix dumps: row-major, one matrix row per line, comma-separated.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::solver::Projection;
use crate::{Error, Result};

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("invalid number {:?}", tok.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: "ragged row".into(),
            });
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    matrix_from_csv(&text, path)
}

/// Writes `B` to `path` and `Θ` (one value per line, then the ridge) to
/// `theta_path`.
pub fn write_projection(path: &Path, theta_path: &Path, proj: &Projection) -> Result<()> {
    write_matrix(path, proj.b())?;
    let mut theta = DMatrix::from_column_slice(proj.dim(), 1, proj.theta().as_slice());
    theta = theta.insert_row(proj.dim(), proj.ridge());
    write_matrix(theta_path, &theta)
}

pub fn read_projection(path: &Path, theta_path: &Path) -> Result<Projection> {
    let b = read_matrix(path)?;
    let theta = read_matrix(theta_path)?;
    if theta.ncols() != 1 || theta.nrows() == 0 {
        return Err(Error::Validation(format!(
            "{} is not a single column",
            theta_path.display()
        )));
    }
    let d = theta.nrows() - 1;
    let ridge = theta[(d, 0)];
    Projection::from_parts(
        b,
        DVector::from_iterator(d, theta.column(0).iter().take(d).copied()),
        ridge,
    )
}
