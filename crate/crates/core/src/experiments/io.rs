//! File-level commands behind the command-line front end.
//!
//! Run records are written as CSV (header = [`RunRecord`] field names) with a
//! JSON-lines mirror next to it (`runs.csv` → `runs.jsonl`). Summaries go to
//! `summary.csv` and `best_runs.csv`; neither carries wall-clock times, so
//! identical plans produce identical bytes.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cmf::{fms_cmf_vs_parafac2, CmfFactors};
use crate::error::{Error, Result};
use crate::eval::{fms, MatchReport};
use crate::model::relative_error;
use crate::slab::{read_dataset, write_dataset, write_factors, SlabMeta};
use crate::synth::generate;

use super::plan::{ExperimentPlan, SolverSettings};
use super::record::{Group, Method, RunRecord};
use super::runner::{check_not_all_diverged, fit_method, run_parallel, sort_records, FittedModel, RunContext};
use super::summary::{summarize, Summary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dataset_id: String,
    pub seed: u64,
    pub noise: f64,
    pub overlap: f64,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub group: Group,
    pub base_seed: u64,
    pub datasets: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes every dataset of `plan` under `out_dir/<dataset_id>/` and then
/// `manifest.json`. The manifest is written last, so a failure leaves none.
pub fn generate_datasets(plan: &ExperimentPlan, out_dir: &Path) -> Result<Manifest> {
    plan.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut entries = Vec::new();
    for spec in plan.datasets() {
        let cfg = plan.synthetic_config(&spec)?;
        let data = generate(&cfg)?;
        let mut gen = serde_json::to_value(&cfg)?;
        if let Some(obj) = gen.as_object_mut() {
            obj.insert("group".into(), serde_json::to_value(plan.group)?);
            obj.insert("dataset_id".into(), spec.id.clone().into());
        }
        let meta = SlabMeta { i: cfg.i, j: cfg.j, k: cfg.k, r_true: None, seed: spec.seed, generator_config: Some(gen) };
        write_dataset(&out_dir.join(&spec.id), &meta, &data.noisy, Some(&data.truth))?;
        entries.push(ManifestEntry { path: spec.id.clone(), dataset_id: spec.id, seed: spec.seed, noise: spec.noise, overlap: spec.overlap });
    }
    let manifest = Manifest { group: plan.group, base_seed: plan.base_seed, datasets: entries };
    fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// What to run on one dataset directory.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRequest {
    /// (method, λ_B) pairs; λ_B is ignored for PARAFAC2.
    pub variants: Vec<(Method, f64)>,
    pub n_inits: usize,
    pub base_seed: u64,
    /// Defaults to the dataset's true rank, else 3.
    pub rank: Option<usize>,
    pub settings: SolverSettings,
    pub threads: usize,
}

fn context_from_meta(meta: &SlabMeta, dir: &Path) -> RunContext {
    let gen = meta.generator_config.as_ref();
    let field = |k: &str| gen.and_then(|g| g.get(k));
    RunContext {
        group: field("group").and_then(|v| serde_json::from_value(v.clone()).ok()).unwrap_or(Group::Easy),
        dataset_id: field("dataset_id")
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()),
        noise: field("eta").and_then(|v| v.as_f64()).unwrap_or(0.0),
        overlap: field("overlap_fraction").and_then(|v| v.as_f64()).unwrap_or(0.0),
    }
}

/// Fits every requested variant from `n_inits` shared initializations
/// (seeds `base_seed..base_seed + n_inits`), appends the records to
/// `out_file` and its `.jsonl` mirror, and optionally saves each model under
/// `save_factors/<method>-<λ_B>-<seed>/`.
pub fn fit_dataset(dataset_dir: &Path, req: &FitRequest, out_file: &Path, save_factors: Option<&Path>) -> Result<Vec<RunRecord>> {
    if req.n_inits == 0 {
        return Err(Error::InvalidConfig("n_inits must be >= 1".into()));
    }
    if req.variants.is_empty() {
        return Err(Error::InvalidConfig("no method to fit".into()));
    }
    let ds = read_dataset(dataset_dir)?;
    let ctx = context_from_meta(&ds.meta, dataset_dir);
    let rank = req.rank.or(ds.meta.r_true).unwrap_or(3);
    let jobs: Vec<(Method, f64, u64)> = req
        .variants
        .iter()
        .flat_map(|&(m, l)| (req.base_seed..req.base_seed + req.n_inits as u64).map(move |s| (m, l, s)))
        .collect();
    let outcomes = run_parallel(&jobs, req.threads, |&(m, l, s)| {
        fit_method(&ds.data, ds.truth.as_ref(), &ctx, m, l, s, rank, &req.settings)
    })?;
    if let Some(dir) = save_factors {
        for o in &outcomes {
            let r = &o.record;
            let sub = dir.join(format!("{}-{}-{}", r.method, r.lambda_b, r.init_seed));
            match &o.model {
                FittedModel::Parafac2(f) => write_factors(&sub, f)?,
                FittedModel::Cmf(f) => write_cmf_factors(&sub, f)?,
            }
        }
    }
    let mut records: Vec<RunRecord> = outcomes.into_iter().map(|o| o.record).collect();
    sort_records(&mut records);
    append_records(out_file, &records)?;
    check_not_all_diverged(&records)?;
    Ok(records)
}

fn write_cmf_factors(dir: &Path, f: &CmfFactors) -> Result<()> {
    // same layout as PARAFAC2 factors with unit strengths folded away
    let ones = vec![crate::linalg::Vector::from_element(f.rank(), 1.0); f.b.len()];
    write_factors(dir, &crate::model::Parafac2Factors { a: f.a.clone(), b: f.b.clone(), d: ones })
}

/// Score of a saved model against a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub relative_error: f64,
    pub report: Option<MatchReport>,
}

/// Reads factors written by `fit --save-factors` and scores them against the
/// dataset; FMS needs stored truth. `cmf` folds strengths into `B_k` on the
/// truth side before matching.
pub fn evaluate_factors(dataset_dir: &Path, factors_dir: &Path, rank: Option<usize>, cmf: bool) -> Result<Evaluation> {
    let ds = read_dataset(dataset_dir)?;
    let r = match rank.or(ds.meta.r_true) {
        Some(r) => r,
        None => infer_rank(factors_dir, ds.meta.i)?,
    };
    let est = crate::slab::read_factors(factors_dir, ds.meta.i, ds.meta.j, ds.meta.k, r)?;
    let relative_error = relative_error(&ds.data, &est)?;
    let report = match &ds.truth {
        Some(t) if cmf => Some(fms_cmf_vs_parafac2(&CmfFactors { a: est.a.clone(), b: est.b.clone() }, t)?),
        Some(t) => Some(fms(&est, t)?),
        None => None,
    };
    Ok(Evaluation { relative_error, report })
}

fn infer_rank(factors_dir: &Path, i: usize) -> Result<usize> {
    let bytes = fs::metadata(factors_dir.join("A.bin"))?.len() as usize;
    if i == 0 || bytes % (8 * i) != 0 {
        return Err(Error::Shape("cannot infer rank from A.bin".into()));
    }
    Ok(bytes / (8 * i))
}

/// Sibling JSON-lines path of a CSV run file.
pub fn jsonl_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("jsonl")
}

/// Appends to a run CSV (writing the header only into an empty or new file)
/// and to its JSON-lines mirror.
pub fn append_records(csv_path: &Path, records: &[RunRecord]) -> Result<()> {
    if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let fresh = fs::metadata(csv_path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(csv_path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut json = OpenOptions::new().create(true).append(true).open(jsonl_path(csv_path))?;
    for r in records {
        serde_json::to_writer(&mut json, r)?;
        json.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a run file: CSV, or JSON lines when the extension is `.jsonl`.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let text = fs::read_to_string(path)?;
        return text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect();
    }
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `summary.csv` and `best_runs.csv` into `out_dir`.
pub fn write_summary(out_dir: &Path, summary: &Summary) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_csv(&out_dir.join("summary.csv"), &summary.rows)?;
    write_csv(&out_dir.join("best_runs.csv"), &summary.best)?;
    Ok(())
}

/// Summarizes one or more run files into `out_dir`.
pub fn summarize_files(run_files: &[PathBuf], out_dir: &Path) -> Result<Summary> {
    if run_files.is_empty() {
        return Err(Error::InvalidConfig("summarize needs at least one run file".into()));
    }
    let mut records = Vec::new();
    for f in run_files {
        records.extend(read_records(f)?);
    }
    sort_records(&mut records);
    let summary = summarize(&records)?;
    write_summary(out_dir, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

/// Runs a whole plan and writes `plan.json`, `runs.csv`, `runs.jsonl`,
/// `summary.csv` and `best_runs.csv` into `out_dir` (replacing old runs).
pub fn reproduce(plan: &ExperimentPlan, out_dir: &Path, threads: usize) -> Result<Reproduction> {
    plan.validate()?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("plan.json"), serde_json::to_vec_pretty(plan)?)?;
    let records = super::runner::run_plan(plan, threads)?;
    let runs = out_dir.join("runs.csv");
    for stale in [runs.clone(), jsonl_path(&runs)] {
        if stale.exists() {
            fs::remove_file(stale)?;
        }
    }
    append_records(&runs, &records)?;
    check_not_all_diverged(&records)?;
    let summary = if records.is_empty() { Summary::default() } else { summarize(&records)? };
    write_summary(out_dir, &summary)?;
    Ok(Reproduction { records, summary })
}
