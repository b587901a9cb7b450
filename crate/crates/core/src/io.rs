//! CSV and JSON artifacts and their readers.
//!
//! Reals are written with 17 significant digits, which reproduces every `f64`
//! exactly on reading.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::field::Field;
use crate::kernel::KernelWeights;

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Writes `header` and one row per record.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(real).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV whose header must equal `header`.
pub fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let what = path.display().to_string();
    let bad = |msg: String| Error::Parse { what: what.clone(), msg };
    let mut lines = BufReader::new(fs::File::open(path)?).lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim() != header.join(",") {
        return Err(bad(format!("expected header {:?}, got {first:?}", header.join(","))));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| bad(format!("line {}: {e}", k + 2)))?;
        if row.len() != header.len() {
            return Err(bad(format!("line {}: {} columns, expected {}", k + 2, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Snapshot with header `x,u`.
pub fn write_field_csv(path: &Path, u: &Field, grid: &Grid) -> Result<()> {
    if u.grid_id() != grid.id() {
        return Err(Error::GridMismatch);
    }
    write_csv(path, &["x", "u"], grid.centers().iter().zip(u.values()).map(|(&x, &v)| vec![x, v]))
}

/// Reads a snapshot back onto `grid`; the abscissae must match the cell centers.
pub fn read_field_csv(path: &Path, grid: &Grid) -> Result<Field> {
    let rows = read_csv(path, &["x", "u"])?;
    let c = grid.centers();
    let matches = rows.len() == c.len()
        && rows.iter().zip(c).all(|(r, &x)| (r[0] - x).abs() <= 1e-12 * grid.length());
    if !matches {
        return Err(Error::Parse {
            what: path.display().to_string(),
            msg: format!("abscissae do not match the {}-cell grid", grid.n_cells()),
        });
    }
    Field::from_values(grid, rows.into_iter().map(|r| r[1]).collect())
}

pub const HISTORY_HEADER: [&str; 7] = ["t", "dt", "mass", "l1", "l2", "linf", "mass_loss_rate"];

/// One row per resolved time; a missing loss rate is written as NaN.
pub fn write_history_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    write_csv(
        path,
        &HISTORY_HEADER,
        traj.records().iter().map(|r| vec![r.time, r.dt, r.mass, r.l1, r.l2, r.linf, r.mass_loss_rate.unwrap_or(f64::NAN)]),
    )
}

/// Dense `W` in long format `i,j,w` and the tail `i,x,t`.
pub fn write_weights_csv(dir: &Path, kw: &KernelWeights) -> Result<()> {
    let n = kw.n();
    write_csv(
        &dir.join("weights.csv"),
        &["i", "j", "w"],
        (0..n).flat_map(|i| (0..n).map(move |j| vec![i as f64, j as f64, kw.pair(i, j)])),
    )?;
    let c = kw.grid().centers();
    write_csv(&dir.join("tail.csv"), &["i", "x", "t"], (0..n).map(|i| vec![i as f64, c[i], kw.tail()[i]]))
}

/// Reads the two weight files back as a dense row-major matrix and the tail vector.
pub fn read_weights_csv(dir: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let tail: Vec<f64> = read_csv(&dir.join("tail.csv"), &["i", "x", "t"])?.into_iter().map(|r| r[2]).collect();
    let n = tail.len();
    let rows = read_csv(&dir.join("weights.csv"), &["i", "j", "w"])?;
    if rows.len() != n * n {
        return Err(Error::Parse { what: "weights.csv".into(), msg: format!("{} entries for {n} cells", rows.len()) });
    }
    let mut w = vec![0.0; n * n];
    for r in rows {
        let (i, j) = (r[0] as usize, r[1] as usize);
        if i >= n || j >= n {
            return Err(Error::Parse { what: "weights.csv".into(), msg: format!("index ({i}, {j}) out of range") });
        }
        w[i * n + j] = r[2];
    }
    Ok((w, tail))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(fs::File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_grid, Params};
    use crate::kernel::build_weights;

    #[test]
    fn field_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(-0.3, 1.7, 37).unwrap();
        let u = Field::from_fn(&g, |x| (3.0 * x).sin() / 7.0 + 1e-300).unwrap();
        let path = dir.path().join("a/b/u.csv");
        write_field_csv(&path, &u, &g).unwrap();
        assert_eq!(read_field_csv(&path, &g).unwrap(), u);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x,u\n"));
        assert!(read_field_csv(&path, &make_grid(0.0, 1.0, 37).unwrap()).is_err());
    }

    #[test]
    fn weights_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let kw = build_weights(&make_grid(0.0, 1.0, 9).unwrap(), &Params::new(3.0, 0.4).unwrap());
        write_weights_csv(dir.path(), &kw).unwrap();
        let (w, t) = read_weights_csv(dir.path()).unwrap();
        assert_eq!(t, kw.tail());
        for i in 0..9 {
            assert_eq!(&w[i * 9..(i + 1) * 9], kw.row(i));
        }
    }

    #[test]
    fn malformed_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "x,v\n0.5,1\n").unwrap();
        assert!(matches!(read_csv(&path, &["x", "u"]), Err(Error::Parse { .. })));
        fs::write(&path, "x,u\n0.5,one\n").unwrap();
        assert!(read_csv(&path, &["x", "u"]).unwrap_err().to_string().contains("line 2"));
        fs::write(&path, "x,u\n0.5\n").unwrap();
        assert!(read_csv(&path, &["x", "u"]).is_err());
    }
}
