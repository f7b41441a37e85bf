//! Dense matrices as CSV: a first record `rows,cols` followed by `rows`
//! records of `cols` values each, row-major.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{IrpgError, Result};
use crate::linalg::Mat;

pub fn write_matrix<W: Write>(writer: W, m: &Mat) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).has_headers(false).from_writer(writer);
    w.write_record([m.nrows().to_string(), m.ncols().to_string()])?;
    for i in 0..m.nrows() {
        // `{:?}` on f64 prints the shortest repr that round-trips exactly
        w.write_record(m.row(i).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(reader: R) -> Result<Mat> {
    let mut r = csv::ReaderBuilder::new().flexible(true).has_headers(false).from_reader(reader);
    let mut records = r.records();
    let header = records.next().ok_or_else(|| IrpgError::Parse("empty file".into()))??;
    if header.len() != 2 {
        return Err(IrpgError::Parse("first record must be `rows,cols`".into()));
    }
    let dim = |s: &str| s.trim().parse::<usize>().map_err(|e| IrpgError::Parse(format!("bad dimension {s:?}: {e}")));
    let (rows, cols) = (dim(&header[0])?, dim(&header[1])?);
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for rec in records {
        let rec = rec?;
        if rec.len() != cols {
            return Err(IrpgError::Parse(format!("row {seen} has {} values, expected {cols}", rec.len())));
        }
        for field in rec.iter() {
            data.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| IrpgError::Parse(format!("bad value {field:?}: {e}")))?,
            );
        }
        seen += 1;
    }
    if seen != rows {
        return Err(IrpgError::Parse(format!("expected {rows} rows, found {seen}")));
    }
    Ok(Mat::from_row_slice(rows, cols, &data))
}

pub fn save_matrix(path: impl AsRef<Path>, m: &Mat) -> Result<()> {
    write_matrix(std::fs::File::create(path)?, m)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Mat> {
    read_matrix(std::fs::File::open(path)?)
}
