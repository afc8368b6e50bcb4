//! Flat-file matrix exchange: CSV with a leading shape header, row-major.
//!
//! Line 1 is `rows,cols`; each following line is one row of comma-separated
//! values. Floats are written in Rust's shortest round-trip form, so a
//! write/read cycle is lossless.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub fn write_matrix_csv(path: &Path, m: ArrayView2<'_, f64>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{},{}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[[i, j]])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Io("empty matrix file".into()))??;
    let mut parts = header.trim().split(',');
    let rows: usize = parts
        .next()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Io(format!("bad shape header: {header:?}")))?;
    let cols: usize = parts
        .next()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Io(format!("bad shape header: {header:?}")))?;
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.trim().split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| Error::Io(format!("bad value {tok:?} on data line {}", i + 1)))?;
            data.push(v);
        }
    }
    if data.len() != rows * cols {
        return Err(Error::Io(format!(
            "expected {}x{} = {} values, found {}",
            rows,
            cols,
            rows * cols,
            data.len()
        )));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Io(format!("shape error: {e}")))
}
