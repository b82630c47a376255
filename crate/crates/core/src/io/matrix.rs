//! Square matrix files: a header row of metric names, then one row per metric.
//!
//! ```text
//! Y,S1,S2
//! 0.01,0.25,0
//! 0.25,10,-1.58
//! 0,-1.58,25
//! ```

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io::format::{fmt_f64, parse_f64};

/// Reads a matrix file and reorders it to `metric_names`. The file must name
/// exactly the same metrics, in any order.
pub fn read_matrix<R: Read>(reader: R, metric_names: &[String]) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let g = header.len();
    let mut body = Vec::with_capacity(g * g);
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != g {
            return Err(Error::Parse { line, message: format!("expected {g} values, found {}", rec.len()) });
        }
        for (j, field) in rec.iter().enumerate() {
            body.push(parse_f64(field, line, &header[j])?);
        }
    }
    if body.len() != g * g {
        return Err(Error::Dimension(format!("matrix file has {g} columns but {} rows", body.len() / g.max(1))));
    }
    let m = DMatrix::from_row_slice(g, g, &body);
    let order = metric_names
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("matrix file has no column for metric '{name}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    if g != metric_names.len() {
        return Err(Error::Dimension(format!(
            "matrix file covers {g} metrics, data has {}",
            metric_names.len()
        )));
    }
    Ok(DMatrix::from_fn(g, g, |i, j| m[(order[i], order[j])]))
}

pub fn read_matrix_file(path: &Path, metric_names: &[String]) -> Result<DMatrix<f64>> {
    read_matrix(std::fs::File::open(path)?, metric_names)
}

pub fn write_matrix<W: Write>(writer: W, metric_names: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(metric_names)?;
    for i in 0..m.nrows() {
        wtr.write_record(m.row(i).iter().map(|v| fmt_f64(*v)))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_matrix_file(path: &Path, metric_names: &[String], m: &DMatrix<f64>) -> Result<()> {
    write_matrix(std::fs::File::create(path)?, metric_names, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 2, &[0.1, 1.0 / 3.0, 1.0 / 3.0, 2e-300]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &names(&["Y", "S"]), &m).unwrap();
        assert_eq!(read_matrix(buf.as_slice(), &names(&["Y", "S"])).unwrap(), m);
    }

    #[test]
    fn reorders_by_header() {
        let text = "S,Y\n2,0.5\n0.5,1\n";
        let m = read_matrix(text.as_bytes(), &names(&["Y", "S"])).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(read_matrix("Y,S\n1,0\n".as_bytes(), &names(&["Y", "S"])), Err(Error::Dimension(_))));
        assert!(matches!(read_matrix("Y,T\n1,0\n0,1\n".as_bytes(), &names(&["Y", "S"])), Err(Error::Schema(_))));
        assert!(matches!(
            read_matrix("Y,S\n1,x\n0,1\n".as_bytes(), &names(&["Y", "S"])),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
