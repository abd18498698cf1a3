//! CSV time series and plain-text field dumps.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::simulate::{FieldSnapshot, History};

pub fn csv_header(blocks: [usize; 3]) -> String {
    let mut cols = vec!["t".to_string()];
    for (prefix, n) in [("u", blocks[0]), ("iL", blocks[1]), ("iV", blocks[2])] {
        cols.extend((1..=n).map(|k| format!("{prefix}_{k}")));
    }
    cols.extend(
        [
            "ID1", "ID2", "H_total", "H_internal", "H_electric", "H_network", "diss_n", "diss_p", "diss_D", "mass_n",
            "mass_p", "mass_D", "min_n", "min_p", "min_D", "max_n", "max_p", "max_D",
        ]
        .map(String::from),
    );
    cols.join(",")
}

/// 17 significant digits, so every value round-trips.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_string(history: &History) -> io::Result<String> {
    if history.rows.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "empty history"));
    }
    let mut out = csv_header(history.blocks);
    out.push('\n');
    for r in &history.rows {
        let e = &r.energy;
        let values = std::iter::once(r.t)
            .chain(r.x.iter().copied())
            .chain(r.i_d)
            .chain([e.total, e.internal, e.electric, e.network])
            .chain(r.dissipation)
            .chain(r.masses)
            .chain(r.minima)
            .chain(r.maxima);
        let line: Vec<String> = values.map(num).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Header `nx ny hx hy t`, then blocks `n`, `p`, `D`, `V`, each `ny` rows of
/// `nx` values, bottom row first.
pub fn field_dump(grid: (usize, usize, f64, f64), snapshot: &FieldSnapshot) -> String {
    let (nx, ny, hx, hy) = grid;
    let mut out = String::new();
    let _ = writeln!(out, "{nx} {ny} {} {} {}", num(hx), num(hy), num(snapshot.t));
    let s = &snapshot.state;
    for field in [&s.n, &s.p, &s.d, &s.v] {
        for row in field.chunks(nx) {
            let line: Vec<String> = row.iter().map(|v| num(*v)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Writes `series.csv` and `fields_NNNNNN.txt` into `dir`; returns the paths written.
pub fn write_outputs(history: &History, dir: &Path) -> io::Result<Vec<PathBuf>> {
    let csv = csv_string(history)?;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("series.csv");
    fs::write(&path, csv)?;
    written.push(path);
    for (k, snap) in history.fields.iter().enumerate() {
        let path = dir.join(format!("fields_{k:06}.txt"));
        fs::write(&path, field_dump(history.grid, snap))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_columns() {
        let h = csv_header([3, 1, 1]);
        assert_eq!(h.split(',').count(), 19 + 5);
        assert!(h.starts_with("t,u_1,u_2,u_3,iL_1,iV_1,ID1,"));
    }

    #[test]
    fn empty_history_is_an_error() {
        assert!(csv_string(&History::default()).is_err());
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -1.0 / 3.0, 6.02e23, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
