//! Field snapshot files.
//!
//! CSV layout:
//!
//! ```text
//! dim,n,length,components,time
//! 2,64,6.283185307179586,2,0.5
//! <one line per grid point, row-major, `components` comma-separated samples>
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{FlowError, Result};
use crate::field::{PhysicalField, SpectralField};
use crate::grid::Grid;

pub const SNAPSHOT_HEADER: &str = "dim,n,length,components,time";

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub time: f64,
    pub field: SpectralField,
}

pub fn write_snapshot(path: &Path, field: &SpectralField, time: f64) -> Result<()> {
    let grid = field.grid();
    let phys = field.to_physical();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{SNAPSHOT_HEADER}")?;
    writeln!(
        w,
        "{},{},{:e},{},{:e}",
        grid.dim(),
        grid.n(),
        grid.length(),
        field.components(),
        time
    )?;
    for idx in 0..grid.len() {
        for c in 0..field.components() {
            if c > 0 {
                write!(w, ",")?;
            }
            write!(w, "{:e}", phys.component(c)[idx])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_err(path: &Path, msg: impl Into<String>) -> FlowError {
    FlowError::Parse { path: path.to_path_buf(), msg: msg.into() }
}

/// Reads a snapshot; `grid` is reused when it matches the header, otherwise a new grid is built.
pub fn read_snapshot(path: &Path, grid: Option<&Grid>) -> Result<Snapshot> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, "empty file"))??;
    if header.trim() != SNAPSHOT_HEADER {
        return Err(parse_err(path, format!("unexpected header {header:?}")));
    }
    let meta = lines.next().ok_or_else(|| parse_err(path, "missing metadata line"))??;
    let fields: Vec<&str> = meta.trim().split(',').collect();
    if fields.len() != 5 {
        return Err(parse_err(path, "metadata line needs 5 values"));
    }
    let num = |i: usize| -> Result<f64> {
        fields[i].trim().parse::<f64>().map_err(|e| parse_err(path, format!("{}: {e}", fields[i])))
    };
    let dim = num(0)? as usize;
    let n = num(1)? as usize;
    let length = num(2)?;
    let components = num(3)? as usize;
    let time = num(4)?;
    let grid = match grid {
        Some(g) if g.dim() == dim && g.n() == n && g.length() == length => g.clone(),
        _ => Grid::new(dim, n, length)?,
    };
    let len = grid.len();
    let mut samples = vec![0.0; len * components];
    let mut count = 0usize;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if count >= len {
            return Err(parse_err(path, "too many sample rows"));
        }
        let mut cols = 0;
        for (c, tok) in line.split(',').enumerate() {
            if c >= components {
                return Err(parse_err(path, format!("row {count} has too many columns")));
            }
            samples[c * len + count] =
                tok.trim().parse::<f64>().map_err(|e| parse_err(path, format!("{tok}: {e}")))?;
            cols += 1;
        }
        if cols != components {
            return Err(parse_err(path, format!("row {count} has {cols} columns")));
        }
        count += 1;
    }
    if count != len {
        return Err(FlowError::ShapeMismatch { expected: len, got: count });
    }
    let field = SpectralField::from_physical(&PhysicalField::new(&grid, components, samples)?);
    Ok(Snapshot { time, field })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_preserves_samples() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, 16, 3.0).unwrap();
        let f = SpectralField::from_fn(&g, 2, |x, c| (x[0] + c as f64).sin() * x[1].cos());
        let path = dir.path().join("f.csv");
        write_snapshot(&path, &f, 0.25).unwrap();
        let s = read_snapshot(&path, None).unwrap();
        assert_eq!(s.time, 0.25);
        let a = s.field.to_physical();
        let b = f.to_physical();
        let err = a.samples().iter().zip(b.samples()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err < 1e-14, "max deviation {err}");
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, format!("{SNAPSHOT_HEADER}\n2,8,6.28,1,0\n1.0\n")).unwrap();
        assert!(matches!(read_snapshot(&path, None), Err(FlowError::ShapeMismatch { .. })));
    }
}
