//! Unit-level delimited files: `experiment_id, arm, <metric>...`, one row per unit.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{panel_units_per_experiment, Aggregator, ExperimentAggregate, UnitRecord, UnitTable};
use crate::io::format::{fmt_f64, parse_f64};

/// Shape of an ingested panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    /// Data rows read (units), or aggregate rows for aggregate files.
    pub rows: u64,
    pub num_experiments: usize,
    pub num_metrics: usize,
    pub units_per_experiment: usize,
}

#[derive(Debug, Clone)]
pub struct PanelData {
    /// Metric names in internal order, primary metric first.
    pub metric_names: Vec<String>,
    pub aggregates: Vec<ExperimentAggregate>,
    /// Present only when unit rows were requested and available.
    pub units: Option<UnitTable>,
    pub summary: IngestSummary,
    pub warnings: Vec<String>,
}

/// Moves `primary` (default: the first metric) to the front.
pub(crate) fn primary_order(names: &[String], primary: Option<&str>) -> Result<Vec<usize>> {
    let p = match primary {
        None => 0,
        Some(name) => names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidInput(format!("primary metric '{name}' is not among {names:?}")))?,
    };
    Ok(std::iter::once(p).chain((0..names.len()).filter(|&j| j != p)).collect())
}

pub(crate) fn check_metric_names(names: &[String]) -> Result<()> {
    if names.len() < 2 {
        return Err(Error::Dimension(format!("need at least two metric columns, found {}", names.len())));
    }
    let mut seen = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        if n.is_empty() {
            return Err(Error::Schema(format!("metric column {} has an empty name", i + 1)));
        }
        if let Some(j) = seen.insert(n.as_str(), i) {
            return Err(Error::Schema(format!("metric '{n}' appears in columns {} and {}", j + 3, i + 3)));
        }
    }
    Ok(())
}

/// Streams unit rows into per-cell aggregates. `keep_units` also retains the
/// rows (needed only by the unit-level k-class route).
pub fn read_units<R: Read>(reader: R, primary: Option<&str>, keep_units: bool) -> Result<PanelData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 || header[0] != "experiment_id" || header[1] != "arm" {
        return Err(Error::Schema(format!(
            "unit file header must start with 'experiment_id,arm', found '{}'",
            header.join(",")
        )));
    }
    let file_names = header[2..].to_vec();
    check_metric_names(&file_names)?;
    let order = primary_order(&file_names, primary)?;
    let metric_names: Vec<String> = order.iter().map(|&j| file_names[j].clone()).collect();
    let g = metric_names.len();

    let mut agg = Aggregator::new();
    let mut table = keep_units.then(|| UnitTable::new(g));
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut values = vec![0.0; g];
    let mut rows = 0u64;
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != g + 2 {
            return Err(Error::Parse { line, message: format!("expected {} fields, found {}", g + 2, record.len()) });
        }
        let id = &record[0];
        if id.is_empty() {
            return Err(Error::Parse { line, message: "empty experiment_id".into() });
        }
        let arm: u8 = match &record[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::Parse { line, message: format!("arm must be 0 or 1, found '{other}'") }),
        };
        for (slot, &j) in values.iter_mut().zip(&order) {
            *slot = parse_f64(&record[j + 2], line, &file_names[j])?;
        }
        agg.push(UnitRecord { experiment_id: id, arm: arm as i64, values: &values })
            .map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if let Some(t) = table.as_mut() {
            let e = match index.get(id) {
                Some(&e) => e,
                None => {
                    let e = t.add_experiment(id);
                    index.insert(id.to_string(), e);
                    e
                }
            };
            t.push(e, arm, &values)?;
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InvalidInput("unit file has no data rows".into()));
    }
    let aggregates = agg.finish()?;
    let n = panel_units_per_experiment(&aggregates)?;
    Ok(PanelData {
        summary: IngestSummary { rows, num_experiments: aggregates.len(), num_metrics: g, units_per_experiment: n },
        metric_names,
        aggregates,
        units: table,
        warnings: Vec::new(),
    })
}

pub fn ingest_units(path: &Path, primary: Option<&str>, keep_units: bool) -> Result<PanelData> {
    read_units(std::io::BufReader::new(std::fs::File::open(path)?), primary, keep_units)
}

pub fn write_units<W: Write>(writer: W, table: &UnitTable, metric_names: &[String]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["experiment_id".to_string(), "arm".to_string()];
    header.extend(metric_names.iter().cloned());
    wtr.write_record(&header)?;
    let ids = table.experiment_ids();
    let mut fields = Vec::with_capacity(header.len());
    for row in table.rows() {
        fields.clear();
        fields.push(ids[row.experiment].clone());
        fields.push(row.arm.to_string());
        fields.extend(row.values.iter().map(|v| fmt_f64(*v)));
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_units_file(path: &Path, table: &UnitTable, metric_names: &[String]) -> Result<()> {
    write_units(std::io::BufWriter::new(std::fs::File::create(path)?), table, metric_names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_row_example() {
        let text = "experiment_id,arm,Y,S\ne,1,4,1\ne,1,6,1\ne,0,1,0\ne,0,3,2\n";
        let d = read_units(text.as_bytes(), None, true).unwrap();
        assert_eq!(d.summary, IngestSummary { rows: 4, num_experiments: 1, num_metrics: 2, units_per_experiment: 4 });
        assert_eq!(d.aggregates[0].tau_hat()[0], 3.0);
        assert_eq!(d.units.unwrap().num_rows(), 4);
    }

    #[test]
    fn bad_arm_names_its_line() {
        let mut text = String::from("experiment_id,arm,Y,S\n");
        for _ in 0..5 {
            text.push_str("e,0,1,1\n");
        }
        text.push_str("e,2,1,1\n");
        match read_units(text.as_bytes(), None, false) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 7);
                assert!(message.contains("arm"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_unbalanced() {
        let text = "experiment_id,arm,Y,S\ne,0,1,x\n";
        assert!(matches!(read_units(text.as_bytes(), None, false), Err(Error::Parse { line: 2, .. })));
        let text = "experiment_id,arm,Y,S\ne,0,1,1\ne,1,1,1\ne,1,2,2\n";
        assert!(matches!(read_units(text.as_bytes(), None, false), Err(Error::UnsupportedDesign(_))));
        let text = "id,arm,Y,S\n";
        assert!(matches!(read_units(text.as_bytes(), None, false), Err(Error::Schema(_))));
    }

    #[test]
    fn primary_metric_moves_first() {
        let text = "experiment_id,arm,S,Y\ne,1,1,4\ne,0,0,1\n";
        let d = read_units(text.as_bytes(), Some("Y"), false).unwrap();
        assert_eq!(d.metric_names, vec!["Y", "S"]);
        assert_eq!(d.aggregates[0].tau_hat().as_slice(), &[3.0, 1.0]);
        assert!(read_units(text.as_bytes(), Some("Z"), false).is_err());
    }

    #[test]
    fn write_then_read() {
        let mut t = UnitTable::new(2);
        let e = t.add_experiment("a");
        t.push(e, 0, &[0.1, 1.0 / 3.0]).unwrap();
        t.push(e, 1, &[-2.5, 1e-20]).unwrap();
        let names = vec!["Y".to_string(), "S".to_string()];
        let mut buf = Vec::new();
        write_units(&mut buf, &t, &names).unwrap();
        let d = read_units(buf.as_slice(), None, true).unwrap();
        assert_eq!(d.units.unwrap(), t);
    }
}
