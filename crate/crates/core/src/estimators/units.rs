use crate::error::{Error, Result};
use crate::estimators::aggregate::{aggregate_units, ExperimentAggregate, UnitRecord};

/// Column-compact unit-level dataset: one row per unit with an experiment
/// index, an arm, and `G` metric values (`Y` first).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnitTable {
    num_metrics: usize,
    experiment_ids: Vec<String>,
    experiment: Vec<u32>,
    arm: Vec<u8>,
    values: Vec<f64>,
}

/// One borrowed row of a [`UnitTable`].
#[derive(Debug, Clone, Copy)]
pub struct UnitRow<'a> {
    pub experiment: usize,
    pub arm: u8,
    pub values: &'a [f64],
}

impl UnitTable {
    pub fn new(num_metrics: usize) -> Self {
        Self { num_metrics, ..Self::default() }
    }

    pub fn with_capacity(num_metrics: usize, rows: usize) -> Self {
        Self {
            num_metrics,
            experiment_ids: Vec::new(),
            experiment: Vec::with_capacity(rows),
            arm: Vec::with_capacity(rows),
            values: Vec::with_capacity(rows * num_metrics),
        }
    }

    /// Registers an experiment and returns its index.
    pub fn add_experiment(&mut self, id: impl Into<String>) -> usize {
        self.experiment_ids.push(id.into());
        self.experiment_ids.len() - 1
    }

    pub fn push(&mut self, experiment: usize, arm: u8, values: &[f64]) -> Result<()> {
        if experiment >= self.experiment_ids.len() {
            return Err(Error::InvalidInput(format!("unknown experiment index {experiment}")));
        }
        if arm > 1 {
            return Err(Error::InvalidInput(format!("unknown arm value {arm}; expected 0 or 1")));
        }
        if values.len() != self.num_metrics {
            return Err(Error::Dimension(format!(
                "row has {} metric values, table has {}",
                values.len(),
                self.num_metrics
            )));
        }
        self.experiment.push(experiment as u32);
        self.arm.push(arm);
        self.values.extend_from_slice(values);
        Ok(())
    }

    pub fn num_metrics(&self) -> usize {
        self.num_metrics
    }

    pub fn num_rows(&self) -> usize {
        self.arm.len()
    }

    pub fn num_experiments(&self) -> usize {
        self.experiment_ids.len()
    }

    pub fn experiment_ids(&self) -> &[String] {
        &self.experiment_ids
    }

    pub fn row(&self, i: usize) -> UnitRow<'_> {
        let g = self.num_metrics;
        UnitRow {
            experiment: self.experiment[i] as usize,
            arm: self.arm[i],
            values: &self.values[i * g..(i + 1) * g],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = UnitRow<'_>> + '_ {
        (0..self.num_rows()).map(move |i| self.row(i))
    }

    pub fn records(&self) -> impl Iterator<Item = UnitRecord<'_>> + '_ {
        self.rows().map(move |row| UnitRecord {
            experiment_id: &self.experiment_ids[row.experiment],
            arm: row.arm as i64,
            values: row.values,
        })
    }

    pub fn aggregate(&self) -> Result<Vec<ExperimentAggregate>> {
        aggregate_units(self.records())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_and_aggregate() {
        let mut t = UnitTable::new(2);
        let e = t.add_experiment("exp");
        t.push(e, 1, &[1.0, 2.0]).unwrap();
        t.push(e, 0, &[0.0, 1.0]).unwrap();
        assert!(t.push(e, 2, &[0.0, 1.0]).is_err());
        assert!(t.push(e, 0, &[0.0]).is_err());
        assert!(t.push(3, 0, &[0.0, 1.0]).is_err());
        assert_eq!(t.num_rows(), 2);
        let aggs = t.aggregate().unwrap();
        assert_eq!(aggs[0].tau_hat().as_slice(), &[1.0, 1.0]);
    }
}
