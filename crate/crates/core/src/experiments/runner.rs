use std::time::Instant;

use rayon::prelude::*;

use crate::cmf::{detect_degenerate_cmf, fit_cmf, fms_cmf_vs_parafac2, CmfFactors};
use crate::error::{Error, Result};
use crate::eval::{detect_degenerate, fms, DEFAULT_DEGENERACY_THRESHOLD};
use crate::model::{Parafac2Factors, TensorSlices};
use crate::solver::{fit, ExitReason};
use crate::synth::generate;

use super::plan::{ExperimentPlan, SolverSettings};
use super::record::{Group, Method, RunRecord};

/// Labels copied into every record of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RunContext {
    pub group: Group,
    pub dataset_id: String,
    pub noise: f64,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Parafac2(Parafac2Factors),
    Cmf(CmfFactors),
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub record: RunRecord,
    pub model: FittedModel,
}

/// Runs one method from the initialization drawn with `init_seed` and scores
/// it against `truth` when given. CMF records report the `A` gap in
/// `feas_gap_d` and zero for `feas_gap_b_y`, which has no counterpart.
#[allow(clippy::too_many_arguments)]
pub fn fit_method(
    data: &TensorSlices,
    truth: Option<&Parafac2Factors>,
    ctx: &RunContext,
    method: Method,
    lambda_b: f64,
    init_seed: u64,
    rank: usize,
    settings: &SolverSettings,
) -> Result<FitOutcome> {
    let lambda_b = if method.is_temporal() { lambda_b } else { 0.0 };
    let config = settings.to_config(rank, lambda_b, init_seed);
    let start = Instant::now();
    let (model, loss, iters, exit, converged, gaps, degenerate, score) = match method {
        Method::Parafac2 | Method::TParafac2 => {
            let res = fit(data, &config, None)?;
            let degenerate = rank >= 2 && detect_degenerate(&res.factors, DEFAULT_DEGENERACY_THRESHOLD);
            let score = truth.map(|t| fms(&res.factors, t)).transpose()?.map(|r| r.fms);
            (
                FittedModel::Parafac2(res.factors.clone()),
                res.final_loss(),
                res.outer_iters,
                res.exit_reason,
                res.converged,
                (res.feas_gap_b_z, res.feas_gap_b_y, res.feas_gap_d),
                degenerate,
                score,
            )
        }
        Method::TCmf | Method::NnTCmf => {
            let res = fit_cmf(data, lambda_b, method == Method::NnTCmf, &config, None)?;
            let degenerate = rank >= 2 && detect_degenerate_cmf(&res.factors, DEFAULT_DEGENERACY_THRESHOLD);
            let score = truth.map(|t| fms_cmf_vs_parafac2(&res.factors, t)).transpose()?.map(|r| r.fms);
            (
                FittedModel::Cmf(res.factors.clone()),
                res.final_loss(),
                res.outer_iters,
                res.exit_reason,
                res.converged,
                (res.feas_gap_b_z, 0.0, res.feas_gap_a),
                degenerate,
                score,
            )
        }
    };
    let record = RunRecord {
        group: ctx.group,
        dataset_id: ctx.dataset_id.clone(),
        noise: ctx.noise,
        overlap: ctx.overlap,
        method,
        lambda_b,
        init_seed,
        final_loss: loss,
        outer_iters: iters,
        exit_reason: exit,
        converged,
        degenerate,
        fms: score,
        feas_gap_b_z: gaps.0,
        feas_gap_b_y: gaps.1,
        feas_gap_d: gaps.2,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(FitOutcome { record, model })
}

/// Canonical record order: dataset, method, λ_B, initialization.
pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| {
        a.dataset_id
            .cmp(&b.dataset_id)
            .then(a.method.cmp(&b.method))
            .then(a.lambda_b.total_cmp(&b.lambda_b))
            .then(a.init_seed.cmp(&b.init_seed))
    });
}

/// Runs `jobs` on a pool of `threads` workers (0 = one per core).
pub fn run_parallel<J, T, F>(jobs: &[J], threads: usize, f: F) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(&f).collect())
}

/// Generates every dataset of `plan` in memory and runs all
/// (dataset, method, λ_B, initialization) fits. Records come back sorted.
pub fn run_plan(plan: &ExperimentPlan, threads: usize) -> Result<Vec<RunRecord>> {
    plan.validate()?;
    let datasets = plan
        .datasets()
        .into_iter()
        .map(|spec| {
            let cfg = plan.synthetic_config(&spec)?;
            let data = generate(&cfg)?;
            let ctx = RunContext { group: plan.group, dataset_id: spec.id.clone(), noise: spec.noise, overlap: spec.overlap };
            Ok((ctx, data))
        })
        .collect::<Result<Vec<_>>>()?;
    let variants = plan.method_variants();
    let mut jobs = Vec::new();
    for d in 0..datasets.len() {
        for &(method, lambda_b) in &variants {
            for seed in plan.init_seeds() {
                jobs.push((d, method, lambda_b, seed));
            }
        }
    }
    let mut records = run_parallel(&jobs, threads, |&(d, method, lambda_b, seed)| {
        let (ctx, data) = &datasets[d];
        fit_method(&data.noisy, Some(&data.truth), ctx, method, lambda_b, seed, plan.scale.rank, &plan.solver)
            .map(|o| o.record)
    })?;
    sort_records(&mut records);
    Ok(records)
}

/// Fails with [`Error::AllDiverged`] when there are runs and none finished.
pub fn check_not_all_diverged(records: &[RunRecord]) -> Result<()> {
    if !records.is_empty() && records.iter().all(|r| r.exit_reason == ExitReason::Diverged) {
        return Err(Error::AllDiverged(records.len()));
    }
    Ok(())
}
