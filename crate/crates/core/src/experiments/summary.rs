use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{select_best, DiscardReason};
use crate::solver::ExitReason;

use super::record::{Group, Method, RunRecord};

/// Quantiles of best-run FMS over the datasets of one cell. Quantile columns
/// are empty when no dataset kept a surviving run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: Group,
    pub label: String,
    pub method: Method,
    pub lambda_b: f64,
    pub noise: f64,
    pub overlap: f64,
    pub n_datasets: usize,
    pub n_scored: usize,
    pub n_discarded: usize,
    pub fms_min: Option<f64>,
    pub fms_q1: Option<f64>,
    pub fms_median: Option<f64>,
    pub fms_q3: Option<f64>,
    pub fms_max: Option<f64>,
}

/// The chosen run of one (cell, dataset), without the wall-clock column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRow {
    pub group: Group,
    pub label: String,
    pub dataset_id: String,
    pub noise: f64,
    pub overlap: f64,
    pub method: Method,
    pub lambda_b: f64,
    pub init_seed: u64,
    pub final_loss: f64,
    pub outer_iters: usize,
    pub exit_reason: ExitReason,
    pub degenerate: bool,
    pub fms: Option<f64>,
    pub discarded_reason: Option<DiscardReason>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub best: Vec<BestRow>,
}

/// Linear-interpolation quantile of sorted values (`q` in [0, 1]).
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

type CellKey = (Group, Method, u64, u64, u64);

fn cell_key(r: &RunRecord) -> CellKey {
    // bit patterns keep float keys totally ordered for non-negative values
    (r.group, r.method, r.lambda_b.to_bits(), r.noise.to_bits(), r.overlap.to_bits())
}

/// Per (group, method, λ_B, η, overlap) cell: picks the best run of every
/// dataset and reports FMS quantiles over datasets whose best run survived
/// the discard rules. Output order is deterministic.
pub fn summarize(records: &[RunRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Empty("no run records to summarize"));
    }
    let mut cells: BTreeMap<CellKey, BTreeMap<&str, Vec<RunRecord>>> = BTreeMap::new();
    for r in records {
        cells.entry(cell_key(r)).or_default().entry(r.dataset_id.as_str()).or_default().push(r.clone());
    }
    let mut summary = Summary::default();
    for per_dataset in cells.values() {
        let mut scores = Vec::new();
        let mut discarded = 0;
        let mut template: Option<RunRecord> = None;
        for runs in per_dataset.values() {
            let best = select_best(runs)?;
            let r = &best.record;
            if best.discarded_reason.is_some() {
                discarded += 1;
            } else if let Some(f) = r.fms {
                scores.push(f);
            }
            summary.best.push(BestRow {
                group: r.group,
                label: r.label(),
                dataset_id: r.dataset_id.clone(),
                noise: r.noise,
                overlap: r.overlap,
                method: r.method,
                lambda_b: r.lambda_b,
                init_seed: r.init_seed,
                final_loss: r.final_loss,
                outer_iters: r.outer_iters,
                exit_reason: r.exit_reason,
                degenerate: r.degenerate,
                fms: r.fms,
                discarded_reason: best.discarded_reason,
            });
            template.get_or_insert_with(|| r.clone());
        }
        let t = template.expect("cells are never empty");
        scores.sort_by(f64::total_cmp);
        summary.rows.push(SummaryRow {
            group: t.group,
            label: t.label(),
            method: t.method,
            lambda_b: t.lambda_b,
            noise: t.noise,
            overlap: t.overlap,
            n_datasets: per_dataset.len(),
            n_scored: scores.len(),
            n_discarded: discarded,
            fms_min: quantile(&scores, 0.0),
            fms_q1: quantile(&scores, 0.25),
            fms_median: quantile(&scores, 0.5),
            fms_q3: quantile(&scores, 0.75),
            fms_max: quantile(&scores, 1.0),
        });
    }
    Ok(summary)
}

impl Summary {
    /// Rows of `method` at the given condition.
    pub fn rows_for(&self, method: Method, noise: f64, overlap: f64) -> impl Iterator<Item = &SummaryRow> {
        self.rows.iter().filter(move |r| r.method == method && r.noise == noise && r.overlap == overlap)
    }

    /// Row of `method` with the highest median FMS, i.e. the best λ_B of the grid.
    pub fn best_row(&self, method: Method, noise: f64, overlap: f64) -> Option<&SummaryRow> {
        self.rows_for(method, noise, overlap)
            .filter(|r| r.fms_median.is_some())
            .max_by(|a, b| a.fms_median.unwrap().total_cmp(&b.fms_median.unwrap()))
    }

    /// Per-dataset best rows belonging to a summary row.
    pub fn best_rows_of<'a>(&'a self, row: &'a SummaryRow) -> impl Iterator<Item = &'a BestRow> {
        self.best.iter().filter(move |b| {
            b.group == row.group
                && b.method == row.method
                && b.lambda_b == row.lambda_b
                && b.noise == row.noise
                && b.overlap == row.overlap
        })
    }
}
