//! CSV import and export.
//!
//! Floats are written in their shortest round-trip form, so a file read back
//! yields bit-identical values and repeated runs produce identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::ode::{EstimatorState, Trajectory};

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a header and numeric rows.
pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let wrap = |e: csv::Error| Error::Csv { path: path.to_path_buf(), line: 0, msg: e.to_string() };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v))).map_err(wrap)?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::Csv { path: path.to_path_buf(), line: 0, msg: e.to_string() })?;
    inner.flush().map_err(|e| Error::io(path, e))
}

/// Reads a numeric CSV with a header row.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let csv_err = |line: u64, msg: String| Error::Csv { path: path.to_path_buf(), line, msg };
    let header: Vec<String> = r.headers().map_err(|e| csv_err(1, e.to_string()))?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(csv_err(1, "missing header".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(csv_err(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.parse::<f64>()
                    .map_err(|_| csv_err(line, format!("column '{}': cannot parse '{f}' as a number", header[i])))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_centers(path: &Path, centers: &[Vec<f64>]) -> Result<()> {
    let d = centers.first().map_or(0, Vec::len);
    let header: Vec<String> = (1..=d).map(|i| format!("z{i}")).collect();
    write_csv(path, &header, centers.iter().cloned())
}

pub fn read_centers(path: &Path) -> Result<Vec<Vec<f64>>> {
    let (_, rows) = read_csv(path)?;
    if rows.is_empty() {
        return Err(Error::Csv { path: path.to_path_buf(), line: 1, msg: "no centers".into() });
    }
    Ok(rows)
}

/// Header `t, x1..xd, x_hat1..x_hatd`.
pub fn trajectory_header(d: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=d).map(|i| format!("x{i}")));
    h.extend((1..=d).map(|i| format!("x_hat{i}")));
    h
}

/// Writes times and plant/estimator states; coefficients are omitted.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let d = traj.states.first().map_or(0, EstimatorState::dim);
    let rows = traj.states.iter().map(|s| {
        let mut row = Vec::with_capacity(1 + 2 * d);
        row.push(s.t);
        row.extend(s.x.iter());
        row.extend(s.x_hat.iter());
        row
    });
    write_csv(path, &trajectory_header(d), rows)
}

/// Reads a trajectory written by [`write_trajectory`]. The `x_hat` columns
/// are optional; only `t` and `x1..xd` are required.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let (header, rows) = read_csv(path)?;
    let csv_err = |line: u64, msg: String| Error::Csv { path: path.to_path_buf(), line, msg };
    if header.first().map(String::as_str) != Some("t") {
        return Err(csv_err(1, "first column must be 't'".into()));
    }
    let col = |name: &str| header.iter().position(|h| h == name);
    let x_cols: Vec<usize> = (1..).map_while(|i| col(&format!("x{i}"))).collect();
    if x_cols.is_empty() {
        return Err(csv_err(1, "no state columns x1..xd".into()));
    }
    let xh_cols: Vec<usize> = (1..=x_cols.len()).map_while(|i| col(&format!("x_hat{i}"))).collect();
    let states = rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let pick = |cols: &[usize]| DVector::from_iterator(cols.len(), cols.iter().map(|&c| row[c]));
            let x = pick(&x_cols);
            let x_hat = if xh_cols.len() == x_cols.len() { pick(&xh_cols) } else { DVector::zeros(x_cols.len()) };
            EstimatorState::new(row[0], x, x_hat, DVector::zeros(0)).map_err(|e| csv_err(k as u64 + 2, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::from_samples(states).map_err(|e| csv_err(0, e.to_string()))
}
