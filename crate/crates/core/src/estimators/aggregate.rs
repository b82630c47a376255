//! Per-cell sufficient statistics and single-pass aggregation of unit data.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Sufficient statistics of one (experiment, arm) cell: count, `Σ D` and `Σ D Dᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAggregate {
    pub count: u64,
    pub sum: DVector<f64>,
    pub cross: DMatrix<f64>,
}

impl CellAggregate {
    pub fn empty(num_metrics: usize) -> Self {
        Self {
            count: 0,
            sum: DVector::zeros(num_metrics),
            cross: DMatrix::zeros(num_metrics, num_metrics),
        }
    }

    pub fn num_metrics(&self) -> usize {
        self.sum.len()
    }

    pub fn push(&mut self, values: &[f64]) {
        let g = self.num_metrics();
        debug_assert_eq!(values.len(), g);
        self.count += 1;
        for i in 0..g {
            self.sum[i] += values[i];
            for j in 0..g {
                self.cross[(i, j)] += values[i] * values[j];
            }
        }
    }

    /// Fieldwise addition.
    pub fn merge(&mut self, other: &CellAggregate) {
        self.count += other.count;
        self.sum += &other.sum;
        self.cross += &other.cross;
    }

    pub fn mean(&self) -> DVector<f64> {
        &self.sum / self.count as f64
    }

    /// `Σ (D − D̄)(D − D̄)ᵀ`.
    pub fn centered_scatter(&self) -> DMatrix<f64> {
        &self.cross - &self.sum * self.sum.transpose() / self.count as f64
    }

    fn permuted(&self, order: &[usize]) -> Self {
        let g = order.len();
        Self {
            count: self.count,
            sum: DVector::from_fn(g, |i, _| self.sum[order[i]]),
            cross: DMatrix::from_fn(g, g, |i, j| self.cross[(order[i], order[j])]),
        }
    }
}

/// Both arms of one experiment; `arms[0]` is control, `arms[1]` treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentAggregate {
    pub experiment_id: String,
    pub arms: [CellAggregate; 2],
}

impl ExperimentAggregate {
    pub fn control(&self) -> &CellAggregate {
        &self.arms[0]
    }

    pub fn treatment(&self) -> &CellAggregate {
        &self.arms[1]
    }

    /// Units in the experiment, both arms.
    pub fn n(&self) -> u64 {
        self.arms[0].count + self.arms[1].count
    }

    pub fn num_metrics(&self) -> usize {
        self.arms[0].num_metrics()
    }

    pub fn is_balanced(&self) -> bool {
        self.arms[0].count == self.arms[1].count
    }

    /// Difference in arm means, `τ̂(t)`.
    pub fn tau_hat(&self) -> DVector<f64> {
        self.treatment().mean() - self.control().mean()
    }

    /// `Σ D̃_i` with `D̃ = 2(2A − 1)D`.
    pub fn tilde_sum(&self) -> DVector<f64> {
        (&self.treatment().sum - &self.control().sum) * 2.0
    }

    /// `Σ D̃_i D̃_iᵀ`.
    pub fn tilde_cross(&self) -> DMatrix<f64> {
        (&self.treatment().cross + &self.control().cross) * 4.0
    }

    pub fn merge(&mut self, other: &ExperimentAggregate) {
        self.arms[0].merge(&other.arms[0]);
        self.arms[1].merge(&other.arms[1]);
    }

    /// Reorders metrics so that new metric `i` is old metric `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            experiment_id: self.experiment_id.clone(),
            arms: [self.arms[0].permuted(order), self.arms[1].permuted(order)],
        }
    }
}

/// One unit-level observation.
#[derive(Debug, Clone, Copy)]
pub struct UnitRecord<'a> {
    pub experiment_id: &'a str,
    pub arm: i64,
    pub values: &'a [f64],
}

/// Streaming, mergeable accumulator behind [`aggregate_units`].
#[derive(Debug, Clone, Default)]
pub struct Aggregator {
    num_metrics: Option<usize>,
    cells: BTreeMap<String, [CellAggregate; 2]>,
}

impl Aggregator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: UnitRecord<'_>) -> Result<()> {
        let arm = match record.arm {
            0 => 0,
            1 => 1,
            other => return Err(Error::InvalidInput(format!("unknown arm value {other}; expected 0 or 1"))),
        };
        let g = record.values.len();
        match self.num_metrics {
            None => self.num_metrics = Some(g),
            Some(expected) if expected != g => {
                return Err(Error::Dimension(format!(
                    "record has {g} metric values, earlier records had {expected}"
                )))
            }
            Some(_) => {}
        }
        if let Some(bad) = record.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite metric value {bad}")));
        }
        let cell = match self.cells.get_mut(record.experiment_id) {
            Some(arms) => &mut arms[arm],
            None => {
                let arms = self
                    .cells
                    .entry(record.experiment_id.to_owned())
                    .or_insert_with(|| [CellAggregate::empty(g), CellAggregate::empty(g)]);
                &mut arms[arm]
            }
        };
        cell.push(record.values);
        Ok(())
    }

    /// Combine with an aggregator built from another shard of the stream.
    pub fn merge(&mut self, other: Aggregator) -> Result<()> {
        if let (Some(a), Some(b)) = (self.num_metrics, other.num_metrics) {
            if a != b {
                return Err(Error::Dimension(format!("cannot merge shards with {a} and {b} metrics")));
            }
        }
        self.num_metrics = self.num_metrics.or(other.num_metrics);
        for (id, arms) in other.cells {
            match self.cells.get_mut(&id) {
                Some(mine) => {
                    mine[0].merge(&arms[0]);
                    mine[1].merge(&arms[1]);
                }
                None => {
                    self.cells.insert(id, arms);
                }
            }
        }
        Ok(())
    }

    /// Experiments sorted by id. Fails if any experiment has an empty arm.
    pub fn finish(self) -> Result<Vec<ExperimentAggregate>> {
        self.cells
            .into_iter()
            .map(|(experiment_id, arms)| {
                if let Some(arm) = arms.iter().position(|c| c.count == 0) {
                    return Err(Error::InvalidInput(format!(
                        "experiment {experiment_id} has no units in arm {arm}"
                    )));
                }
                Ok(ExperimentAggregate { experiment_id, arms })
            })
            .collect()
    }
}

/// Aggregate a stream of unit records into one [`ExperimentAggregate`] per
/// experiment id, sorted by id.
pub fn aggregate_units<'a, I>(records: I) -> Result<Vec<ExperimentAggregate>>
where
    I: IntoIterator<Item = UnitRecord<'a>>,
{
    let mut agg = Aggregator::new();
    for record in records {
        agg.push(record)?;
    }
    agg.finish()
}

/// Checks the balanced constant-`n` design every estimator assumes and
/// returns `n` (units per experiment).
pub fn panel_units_per_experiment(aggs: &[ExperimentAggregate]) -> Result<usize> {
    let first = aggs
        .first()
        .ok_or_else(|| Error::Dimension("no experiments".into()))?;
    let g = first.num_metrics();
    let n = first.n();
    for agg in aggs {
        if agg.num_metrics() != g {
            return Err(Error::Dimension(format!(
                "experiment {} has {} metrics, expected {g}",
                agg.experiment_id,
                agg.num_metrics()
            )));
        }
        if !agg.is_balanced() {
            return Err(Error::UnsupportedDesign(format!(
                "experiment {} has unbalanced arms ({} control, {} treatment)",
                agg.experiment_id,
                agg.control().count,
                agg.treatment().count
            )));
        }
        if agg.n() != n {
            return Err(Error::UnsupportedDesign(format!(
                "experiment {} has n = {}, but {} has n = {n}; unequal experiment sizes are not supported",
                agg.experiment_id,
                agg.n(),
                first.experiment_id
            )));
        }
    }
    Ok(n as usize)
}
