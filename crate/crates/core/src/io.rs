//! Plain-text output: diagnostics CSV, snapshots, matrices, stability scans.
//!
//! Reals are written with `{:.16e}` (17 significant digits), which
//! round-trips every finite `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::collision::DenseMatrix;
use crate::diagnostics::DiagSeries;
use crate::error::{Error, Result};
use crate::mesh::{DistState, PhaseGrid};
use crate::rkc::StepRecord;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

#[inline]
fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn series_csv(series: &DiagSeries) -> String {
    let mut s = String::new();
    s.push_str(series.header());
    s.push('\n');
    for r in &series.rows {
        let mut cols = vec![real(r.t), real(r.inv.mass), real(r.inv.momentum_x)];
        if series.two_d {
            cols.push(real(r.inv.momentum_y));
        }
        cols.extend([
            real(r.inv.kinetic),
            real(r.inv.electric),
            real(r.inv.total),
            real(r.entropy),
            real(r.l2_maxwellian),
            real(r.dt),
            r.stages.to_string(),
            r.nrhs.to_string(),
        ]);
        s.push_str(&cols.join(","));
        s.push('\n');
    }
    s
}

pub fn write_series(path: &Path, series: &DiagSeries) -> Result<()> {
    write_file(path, &series_csv(series))
}

/// CSV `t,dt,stages,err,accepted,nrhs,wall_time`, one row per attempted step.
pub fn write_steps(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut s = String::from("t,dt,stages,err,accepted,nrhs,wall_time\n");
    for r in records {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            real(r.t),
            real(r.dt),
            r.stages,
            real(r.err),
            u8::from(r.accepted),
            r.nrhs,
            real(r.wall_time)
        )
        .expect("string write");
    }
    write_file(path, &s)
}

/// A distribution plus, optionally, the electric field needed to resume an
/// Ampère-coupled run.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub state: DistState,
    pub field: Option<Vec<f64>>,
}

/// Header `dims N_x N_v L v_max t`, then one value per line in storage
/// order, then optionally a line `E` followed by the field values.
pub fn write_snapshot(path: &Path, state: &DistState, field: Option<&[f64]>) -> Result<()> {
    let g = &state.grid;
    let (n_x, length) = g.space.map_or((0, 0.0), |s| (s.n_x(), s.length()));
    let mut s = String::with_capacity(24 * (state.values.len() + 8));
    writeln!(
        s,
        "{} {} {} {} {} {}",
        g.descriptor_dims(),
        n_x,
        g.velocity.n_v(),
        real(length),
        real(g.velocity.v_max()),
        real(state.t)
    )
    .expect("string write");
    for v in &state.values {
        s.push_str(&real(*v));
        s.push('\n');
    }
    if let Some(e) = field {
        s.push_str("E\n");
        for v in e {
            s.push_str(&real(*v));
            s.push('\n');
        }
    }
    write_file(path, &s)
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, "empty file"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 6 {
        return Err(parse_err(path, "header needs 6 fields"));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|e| parse_err(path, e.to_string()));
    let flt = |s: &str| s.parse::<f64>().map_err(|e| parse_err(path, e.to_string()));
    let dims = int(h[0])?;
    let n_x = int(h[1])?;
    let n_v = int(h[2])?;
    let length = flt(h[3])?;
    let v_max = flt(h[4])?;
    let t = flt(h[5])?;
    let grid = PhaseGrid::build(length, n_x, v_max, n_v, dims)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut field = None;
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "E" {
            field = Some(Vec::new());
            continue;
        }
        let v = flt(line)?;
        match field.as_mut() {
            Some(e) => e.push(v),
            None => values.push(v),
        }
    }
    if values.len() != grid.len() {
        return Err(parse_err(
            path,
            format!("expected {} values, found {}", grid.len(), values.len()),
        ));
    }
    Ok(Snapshot {
        state: DistState::from_values(grid, values, t)?,
        field,
    })
}

/// First line `N rows cols` (velocity cell count, then the matrix shape),
/// then one whitespace-separated row per line.
pub fn write_matrix(path: &Path, n_v: usize, a: &DenseMatrix) -> Result<()> {
    let mut s = String::with_capacity(24 * a.n * a.n + 64);
    writeln!(s, "{} {} {}", n_v, a.n, a.n).expect("string write");
    for r in 0..a.n {
        let row: Vec<String> = (0..a.n).map(|c| real(a.get(r, c))).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    write_file(path, &s)
}

/// Returns `(N, matrix)`.
pub fn read_matrix(path: &Path) -> Result<(usize, DenseMatrix)> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    let header: Vec<usize> = lines
        .next()
        .ok_or_else(|| parse_err(path, "empty file"))?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| parse_err(path, "bad header")))
        .collect::<Result<_>>()?;
    if header.len() != 3 || header[1] != header[2] {
        return Err(parse_err(path, "header must be `N rows cols` with a square shape"));
    }
    let n = header[1];
    let mut a = DenseMatrix::zeros(n);
    let mut r = 0;
    for line in lines.filter(|l| !l.trim().is_empty()) {
        if r >= n {
            return Err(parse_err(path, "too many rows"));
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| parse_err(path, "bad value")))
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(parse_err(path, format!("row {r} has {} entries", vals.len())));
        }
        for (c, v) in vals.into_iter().enumerate() {
            a.set(r, c, v);
        }
        r += 1;
    }
    if r != n {
        return Err(parse_err(path, format!("expected {n} rows, found {r}")));
    }
    Ok((header[0], a))
}

/// Companion file naming the series columns worth plotting.
pub fn write_plotspec(path: &Path, csv_name: &str, series: &DiagSeries) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "file {csv_name}").expect("string write");
    writeln!(s, "x t").expect("string write");
    writeln!(s, "semilogy e_elec").expect("string write");
    writeln!(s, "deviation mass momentum_x e_tot").expect("string write");
    if series.two_d {
        writeln!(s, "deviation momentum_y").expect("string write");
    }
    writeln!(s, "plot entropy l2_maxwellian").expect("string write");
    writeln!(s, "semilogy dt").expect("string write");
    writeln!(s, "plot stages").expect("string write");
    write_file(path, &s)
}

/// CSV `re_z,im_z,abs_R`.
pub fn write_stability_scan(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut s = String::from("re_z,im_z,abs_R\n");
    for (re, im, a) in rows {
        writeln!(s, "{},{},{}", real(*re), real(*im), real(*a)).expect("string write");
    }
    write_file(path, &s)
}

/// CSV `z,R` of the real-axis trace.
pub fn write_real_trace(path: &Path, rows: &[(f64, f64)]) -> Result<()> {
    let mut s = String::from("z,R\n");
    for (z, r) in rows {
        writeln!(s, "{},{}", real(*z), real(*r)).expect("string write");
    }
    write_file(path, &s)
}
