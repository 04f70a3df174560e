//! Coupled matrix factorization with temporal smoothness, `X_k ≈ A B_k^T`,
//! optionally with `A ≥ 0`. Fitted with the same AO-ADMM machinery as the
//! PARAFAC2 solver but without the shared cross-product constraint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{concat_b, match_components, ComponentModes, MatchReport};
use crate::kernels::{solve_zb_tridiagonal, RHO_FLOOR};
use crate::linalg::{all_finite, pinv, relative_gap, scale_columns, Mat};
use crate::model::{smoothness_penalty, Parafac2Factors, TensorSlices};
use crate::solver::{random_init, ExitReason, SolverConfig, DIVERGENCE_FACTOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmfFactors {
    pub a: Mat,
    pub b: Vec<Mat>,
}

impl CmfFactors {
    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    fn check_against(&self, data: &TensorSlices) -> Result<()> {
        let r = self.rank();
        if self.a.nrows() != data.i() || self.b.len() != data.k() || self.b.iter().any(|b| b.shape() != (data.j(), r)) {
            return Err(Error::Shape("CMF factors do not match data".into()));
        }
        Ok(())
    }

    /// CMF-equivalent view of PARAFAC2 factors: `B_k ← B_k D_k`.
    pub fn from_parafac2(f: &Parafac2Factors) -> Self {
        Self { a: f.a.clone(), b: f.b.iter().zip(&f.d).map(|(b, d)| scale_columns(b, d)).collect() }
    }

    /// Applies the gauge `A → A Q^{-T}`, `B_k → B_k Q`, which leaves every
    /// product `A B_k^T` unchanged.
    pub fn gauge_transform(&self, q: &Mat) -> Result<Self> {
        let q_inv_t = q.clone().try_inverse().ok_or(Error::InvalidConfig("gauge matrix is singular".into()))?.transpose();
        Ok(Self { a: &self.a * q_inv_t, b: self.b.iter().map(|b| b * q).collect() })
    }
}

/// `Σ_k ‖X_k − A B_k^T‖² + λ_B Σ_k ‖B_k − B_{k−1}‖² + λ_A ‖A‖²`.
pub fn cmf_objective(data: &TensorSlices, factors: &CmfFactors, lambda_a: f64, lambda_b: f64) -> Result<f64> {
    factors.check_against(data)?;
    Ok(cmf_objective_parts(data, &factors.a, &factors.b, lambda_a, lambda_b))
}

fn cmf_objective_parts(data: &TensorSlices, a: &Mat, b: &[Mat], lambda_a: f64, lambda_b: f64) -> f64 {
    let fit: f64 = data.slices().iter().zip(b).map(|(x, b_k)| (x - a * b_k.transpose()).norm_squared()).sum();
    fit + lambda_b * smoothness_penalty(b) + lambda_a * a.norm_squared()
}

#[derive(Debug, Clone)]
pub struct CmfFitResult {
    /// With `nonneg_a`, `a` is the non-negative auxiliary copy.
    pub factors: CmfFactors,
    pub loss_trace: Vec<f64>,
    pub outer_iters: usize,
    pub converged: bool,
    pub feas_gap_b_z: f64,
    pub feas_gap_a: f64,
    pub exit_reason: ExitReason,
}

impl CmfFitResult {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("loss trace is never empty")
    }
}

/// Initial CMF factors: the `A` and `B_k` draws of [`random_init`] for the
/// same seed, so CMF and PARAFAC2 runs start from the same matrices.
pub fn cmf_random_init(i: usize, j: usize, k: usize, rank: usize, seed: u64) -> CmfFactors {
    let f = random_init(i, j, k, rank, seed);
    CmfFactors { a: f.a, b: f.b }
}

/// Fits tCMF (`nonneg_a = false`) or NNtCMF (`nonneg_a = true`).
///
/// Each outer iteration runs an inner ADMM over the `B_k` (closed-form
/// `B_k`, tridiagonal smoothness solve, dual step) and then updates `A`,
/// either in closed form or by an ADMM split with a non-negative copy.
/// `config.reg.lambda_a` is the ridge on `A`; `lambda_b` overrides
/// `config.reg.lambda_b`.
pub fn fit_cmf(
    data: &TensorSlices,
    lambda_b: f64,
    nonneg_a: bool,
    config: &SolverConfig,
    init: Option<&CmfFactors>,
) -> Result<CmfFitResult> {
    config.validate()?;
    if !(lambda_b >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda_b must be >= 0, got {lambda_b}")));
    }
    let r = config.rank;
    if r > data.i().min(data.j()) {
        return Err(Error::InvalidConfig(format!("rank {r} exceeds min(I, J)")));
    }
    let start = match init {
        Some(f) => {
            f.check_against(data)?;
            f.clone()
        }
        None => cmf_random_init(data.i(), data.j(), data.k(), r, config.seed),
    };
    let lambda_a = config.reg.lambda_a;
    let (mut a, mut b) = (start.a, start.b);
    let mut z_b = b.clone();
    let mut mu_b = vec![Mat::zeros(data.j(), r); data.k()];
    let mut z_a = a.map(|v| v.max(0.0));
    let mut mu_a = Mat::zeros(data.i(), r);
    let mut loss_trace: Vec<f64> = Vec::new();
    let mut exit_reason = ExitReason::MaxIterations;
    let mut converged = false;
    let mut last_good: Option<(Mat, Vec<Mat>, Mat)> = None;

    let b_gap = |b: &[Mat], z: &[Mat]| b.iter().zip(z).map(|(x, y)| relative_gap(x.iter(), y.iter())).fold(0.0, f64::max);

    for _ in 0..config.max_outer {
        // B cycle
        let a_gram = a.transpose() * &a;
        let rho_b = (a_gram.trace() / r as f64).max(RHO_FLOOR);
        let rho = vec![rho_b; data.k()];
        let lhs_inv = pinv(&(&a_gram + Mat::identity(r, r) * (0.5 * rho_b)));
        let xt_a: Vec<Mat> = data.slices().iter().map(|x| x.transpose() * &a).collect();
        for _ in 0..config.max_inner_b {
            for k in 0..b.len() {
                b[k] = (&xt_a[k] + (&z_b[k] - &mu_b[k]) * (0.5 * rho_b)) * &lhs_inv;
            }
            let inputs: Vec<Mat> = b.iter().zip(&mu_b).map(|(x, m)| x + m).collect();
            z_b = solve_zb_tridiagonal(lambda_b, &inputs, &rho)?;
            for k in 0..b.len() {
                mu_b[k] = &b[k] - &z_b[k] + &mu_b[k];
            }
            if b_gap(&b, &z_b) <= config.inner_tol {
                break;
            }
        }

        // A update
        let mut xb = Mat::zeros(data.i(), r);
        let mut gram = Mat::zeros(r, r);
        for (x, b_k) in data.slices().iter().zip(&b) {
            xb += x * b_k;
            gram += b_k.transpose() * b_k;
        }
        if nonneg_a {
            let rho_a = (gram.trace() / r as f64).max(RHO_FLOOR);
            let inv = pinv(&(&gram * 2.0 + Mat::identity(r, r) * (2.0 * lambda_a + rho_a)));
            for _ in 0..config.max_inner_b {
                a = (&xb * 2.0 + (&z_a - &mu_a) * rho_a) * &inv;
                z_a = (&a + &mu_a).map(|v| v.max(0.0));
                mu_a = &a - &z_a + &mu_a;
                if relative_gap(a.iter(), z_a.iter()) <= config.inner_tol {
                    break;
                }
            }
        } else {
            a = xb * pinv(&(gram + Mat::identity(r, r) * lambda_a));
        }

        let loss = cmf_objective_parts(data, &a, &b, lambda_a, lambda_b);
        let blown = !loss.is_finite()
            || !all_finite(&a)
            || loss_trace.first().is_some_and(|f| loss > DIVERGENCE_FACTOR * f.max(f64::MIN_POSITIVE));
        if blown {
            exit_reason = ExitReason::Diverged;
            if let Some((ga, gb, gz)) = last_good.take() {
                a = ga;
                b = gb;
                z_a = gz;
            }
            break;
        }
        let prev = loss_trace.last().copied();
        loss_trace.push(loss);
        if let Some(prev) = prev {
            let change = (prev - loss).abs();
            if change < config.abs_tol_loss || change < config.rel_tol_loss * prev.abs() {
                let gap_a = if nonneg_a { relative_gap(a.iter(), z_a.iter()) } else { 0.0 };
                if b_gap(&b, &z_b) <= config.feas_tol && gap_a <= config.feas_tol {
                    converged = true;
                    exit_reason = ExitReason::LossTolerance;
                    break;
                }
            }
        }
        last_good = Some((a.clone(), b.clone(), z_a.clone()));
    }
    if loss_trace.is_empty() {
        loss_trace.push(cmf_objective_parts(data, &a, &b, lambda_a, lambda_b));
    }
    let feas_gap_b_z = b_gap(&b, &z_b);
    let feas_gap_a = if nonneg_a { relative_gap(a.iter(), z_a.iter()) } else { 0.0 };
    let a_out = if nonneg_a { z_a } else { a };
    Ok(CmfFitResult {
        factors: CmfFactors { a: a_out, b },
        outer_iters: loss_trace.len(),
        loss_trace,
        converged,
        feas_gap_b_z,
        feas_gap_a,
        exit_reason,
    })
}

fn cmf_modes(f: &CmfFactors) -> ComponentModes {
    let r = f.rank();
    ComponentModes { modes: vec![(0..r).map(|c| f.a.column(c).into_owned()).collect(), concat_b(&f.b, r)] }
}

/// Two-factor version of [`crate::eval::detect_degenerate`].
pub fn detect_degenerate_cmf(f: &CmfFactors, threshold: f64) -> bool {
    crate::eval::degenerate_modes(&cmf_modes(f), threshold)
}

/// FMS over `A` and concatenated `B` only (two factors per component).
pub fn fms_cmf(estimate: &CmfFactors, truth: &CmfFactors) -> Result<MatchReport> {
    if estimate.b.len() != truth.b.len() {
        return Err(Error::Shape("estimate and truth slice counts differ".into()));
    }
    let mut report = match_components(&cmf_modes(estimate), &cmf_modes(truth))?;
    report.degenerate = detect_degenerate_cmf(estimate, crate::eval::DEFAULT_DEGENERACY_THRESHOLD);
    Ok(report)
}

/// FMS of a CMF estimate against PARAFAC2 ground truth, whose strengths are
/// folded into the evolving factor (`B_k D_k`) since CMF has no separate `D_k`.
pub fn fms_cmf_vs_parafac2(estimate: &CmfFactors, truth: &Parafac2Factors) -> Result<MatchReport> {
    fms_cmf(estimate, &CmfFactors::from_parafac2(truth))
}
