//! Aggregate files: one row per (experiment, arm) with the cell count, the
//! metric sums and the upper triangle of the raw cross-product matrix.
//!
//! ```text
//! experiment_id,arm,count,sum_Y,sum_S,cross_Y_Y,cross_Y_S,cross_S_S
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::{panel_units_per_experiment, CellAggregate, ExperimentAggregate};
use crate::io::format::{fmt_f64, parse_f64};
use crate::io::units::{check_metric_names, primary_order, IngestSummary, PanelData};
use crate::linalg::sorted_eigenvalues;

/// Relative tolerance before a reconstructed cell scatter counts as non-PSD.
pub const CELL_PSD_TOLERANCE: f64 = 1e-9;

fn cross_column(a: &str, b: &str) -> String {
    format!("cross_{a}_{b}")
}

pub fn aggregate_header(metric_names: &[String]) -> Vec<String> {
    let mut h = vec!["experiment_id".to_string(), "arm".to_string(), "count".to_string()];
    h.extend(metric_names.iter().map(|m| format!("sum_{m}")));
    for i in 0..metric_names.len() {
        for j in i..metric_names.len() {
            h.push(cross_column(&metric_names[i], &metric_names[j]));
        }
    }
    h
}

pub fn write_aggregates<W: Write>(writer: W, aggs: &[ExperimentAggregate], metric_names: &[String]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(aggregate_header(metric_names))?;
    let g = metric_names.len();
    for agg in aggs {
        for (arm, cell) in agg.arms.iter().enumerate() {
            let mut rec = vec![agg.experiment_id.clone(), arm.to_string(), cell.count.to_string()];
            rec.extend(cell.sum.iter().map(|v| fmt_f64(*v)));
            for i in 0..g {
                for j in i..g {
                    rec.push(fmt_f64(cell.cross[(i, j)]));
                }
            }
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_aggregates_file(path: &Path, aggs: &[ExperimentAggregate], metric_names: &[String]) -> Result<()> {
    write_aggregates(std::io::BufWriter::new(std::fs::File::create(path)?), aggs, metric_names)
}

struct Layout {
    names: Vec<String>,
    sums: Vec<usize>,
    /// Column of `cross_{i}_{j}` for `i ≤ j`, row-major upper triangle.
    cross: Vec<usize>,
    count: usize,
    id: usize,
    arm: usize,
}

impl Layout {
    fn from_header(header: &[String]) -> Result<Self> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
        };
        let (id, arm, count) = (find("experiment_id")?, find("arm")?, find("count")?);
        let (sums, names): (Vec<usize>, Vec<String>) = header
            .iter()
            .enumerate()
            .filter_map(|(c, h)| h.strip_prefix("sum_").map(|m| (c, m.to_string())))
            .unzip();
        check_metric_names(&names)?;
        let mut cross = Vec::new();
        for i in 0..names.len() {
            for j in i..names.len() {
                cross.push(find(&cross_column(&names[i], &names[j]))?);
            }
        }
        Ok(Self { names, sums, cross, count, id, arm })
    }
}

/// Reads an aggregate file. Cells whose centred scatter
/// `cross − sum·sumᵀ/count` has an eigenvalue below
/// `−CELL_PSD_TOLERANCE·max|cross|` produce a warning, not an error.
pub fn read_aggregates<R: Read>(reader: R, primary: Option<&str>) -> Result<PanelData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let layout = Layout::from_header(&header)?;
    let g = layout.names.len();
    let mut cells: BTreeMap<String, [Option<CellAggregate>; 2]> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut rows = 0u64;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::Parse { line, message: format!("expected {} fields, found {}", header.len(), rec.len()) });
        }
        let id = rec[layout.id].to_string();
        let arm = match &rec[layout.arm] {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::Parse { line, message: format!("arm must be 0 or 1, found '{other}'") }),
        };
        let count: u64 = rec[layout.count]
            .parse()
            .ok()
            .filter(|&c| c > 0)
            .ok_or_else(|| Error::Parse { line, message: format!("count must be a positive integer, found '{}'", &rec[layout.count]) })?;
        let value = |c: usize| parse_f64(&rec[c], line, &header[c]);
        let sum = DVector::from_iterator(g, layout.sums.iter().map(|&c| value(c)).collect::<Result<Vec<_>>>()?);
        let mut cross = DMatrix::zeros(g, g);
        let mut k = 0;
        for i in 0..g {
            for j in i..g {
                let v = value(layout.cross[k])?;
                cross[(i, j)] = v;
                cross[(j, i)] = v;
                k += 1;
            }
        }
        let cell = CellAggregate { count, sum, cross };
        let min_eig = sorted_eigenvalues(&cell.centered_scatter())[0];
        if min_eig < -CELL_PSD_TOLERANCE * cell.cross.amax() {
            warnings.push(format!(
                "line {line}: experiment {id} arm {arm} has a non-PSD centred scatter (eigenvalue {min_eig:e})"
            ));
        }
        let slot = &mut cells.entry(id.clone()).or_default()[arm];
        if slot.is_some() {
            return Err(Error::Parse { line, message: format!("duplicate row for experiment {id} arm {arm}") });
        }
        *slot = Some(cell);
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InvalidInput("aggregate file has no data rows".into()));
    }
    let order = primary_order(&layout.names, primary)?;
    let metric_names: Vec<String> = order.iter().map(|&j| layout.names[j].clone()).collect();
    let aggregates = cells
        .into_iter()
        .map(|(experiment_id, [c0, c1])| match (c0, c1) {
            (Some(c0), Some(c1)) => Ok(ExperimentAggregate { experiment_id, arms: [c0, c1] }.permuted(&order)),
            (c0, _) => Err(Error::InvalidInput(format!(
                "experiment {experiment_id} is missing its arm {} row",
                if c0.is_none() { 0 } else { 1 }
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    let n = panel_units_per_experiment(&aggregates)?;
    Ok(PanelData {
        summary: IngestSummary { rows, num_experiments: aggregates.len(), num_metrics: g, units_per_experiment: n },
        metric_names,
        aggregates,
        units: None,
        warnings,
    })
}

pub fn ingest_aggregates(path: &Path, primary: Option<&str>) -> Result<PanelData> {
    read_aggregates(std::io::BufReader::new(std::fs::File::open(path)?), primary)
}
