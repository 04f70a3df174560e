//! Outer alternating-optimization loop for (temporally regularized)
//! PARAFAC2 and the inner ADMM loop for the evolving-mode factors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    admm_cycle_d_from_products, dual_step_b, project_approx_p, rho_b_heuristic, rho_d_heuristic,
    solve_zb_tridiagonal, update_a_from_products, update_bk_from_products, AdmmState, DCycleInputs,
};
use crate::linalg::{all_finite, relative_gap, Mat, Vector};
use crate::model::{objective_terms_parts, Parafac2Factors, RegularizationConfig, TensorSlices};

/// Inner iterations of the approximate projection per call.
pub const PROJECTION_INNER: usize = 5;

/// A loss above this multiple of the first recorded loss aborts the fit.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rank: usize,
    pub reg: RegularizationConfig,
    pub max_outer: usize,
    pub max_inner_b: usize,
    pub abs_tol_loss: f64,
    pub rel_tol_loss: f64,
    pub feas_tol: f64,
    pub inner_tol: f64,
    pub seed: u64,
    /// Rescale components after every outer sweep, see [`balance_scales`].
    #[serde(default = "default_true")]
    pub balance_scales: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rank: 3,
            reg: RegularizationConfig::default(),
            max_outer: 2000,
            max_inner_b: 5,
            abs_tol_loss: 1e-10,
            rel_tol_loss: 1e-8,
            feas_tol: 1e-4,
            inner_tol: 1e-5,
            seed: 0,
            balance_scales: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.reg.validate()?;
        if self.rank == 0 {
            return Err(Error::InvalidConfig("rank must be >= 1".into()));
        }
        if self.max_outer == 0 || self.max_inner_b == 0 {
            return Err(Error::InvalidConfig("iteration caps must be >= 1".into()));
        }
        for (name, v) in [
            ("abs_tol_loss", self.abs_tol_loss),
            ("rel_tol_loss", self.rel_tol_loss),
            ("feas_tol", self.feas_tol),
            ("inner_tol", self.inner_tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitReason {
    LossTolerance,
    MaxIterations,
    Diverged,
}

impl ExitReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExitReason::LossTolerance => "loss-tolerance",
            ExitReason::MaxIterations => "max-iterations",
            ExitReason::Diverged => "diverged",
        }
    }
}

impl std::str::FromStr for ExitReason {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss-tolerance" => Ok(Self::LossTolerance),
            "max-iterations" => Ok(Self::MaxIterations),
            "diverged" => Ok(Self::Diverged),
            other => Err(Error::InvalidConfig(format!("unknown exit reason {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Model estimate; `d` is the non-negative auxiliary copy.
    pub factors: Parafac2Factors,
    /// Primal `D_k` iterate, as used in the objective.
    pub primal_d: Vec<Vector>,
    pub state: AdmmState,
    pub loss_trace: Vec<f64>,
    pub outer_iters: usize,
    pub converged: bool,
    pub feas_gap_b_z: f64,
    pub feas_gap_b_y: f64,
    pub feas_gap_d: f64,
    pub exit_reason: ExitReason,
}

impl FitResult {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("loss trace is never empty")
    }
}

/// Draws `A`, each `B_k` and each `D_k` i.i.d. from U(0,1), in that order.
/// The same seed gives the same draws for every model sharing this layout.
pub fn random_init(i: usize, j: usize, k: usize, rank: usize, seed: u64) -> Parafac2Factors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Mat::from_fn(i, rank, |_, _| rng.gen::<f64>());
    let b = (0..k).map(|_| Mat::from_fn(j, rank, |_, _| rng.gen::<f64>())).collect();
    let d = (0..k).map(|_| Vector::from_fn(rank, |_, _| rng.gen::<f64>())).collect();
    Parafac2Factors { a, b, d }
}

/// Fresh ADMM state around a factor estimate: `Z_B = B`, `Y_B` from one
/// projection pass, `Z_D = D`, zero duals, Gram-trace step sizes.
pub fn fresh_state(factors: &Parafac2Factors) -> Result<AdmmState> {
    let r = factors.rank();
    let a_gram = factors.a.transpose() * &factors.a;
    let rho_b: Vec<f64> = factors.d.iter().map(|d_k| rho_b_heuristic(&a_gram, d_k)).collect();
    let rho_d: Vec<f64> = factors
        .b
        .iter()
        .map(|b_k| rho_d_heuristic(&a_gram, &(b_k.transpose() * b_k)))
        .collect();
    let proj = project_approx_p(&factors.b, &rho_b, None, &Mat::identity(r, r), PROJECTION_INNER)?;
    let zeros_b = vec![Mat::zeros(factors.b[0].nrows(), r); factors.k()];
    Ok(AdmmState {
        z_b: factors.b.clone(),
        y_b: proj.y,
        mu_zb: zeros_b.clone(),
        mu_delta_b: zeros_b,
        z_d: factors.d.clone(),
        mu_d: vec![Vector::zeros(r); factors.k()],
        rho_b,
        rho_d,
        p: proj.p,
        delta_b: proj.delta_b,
    })
}

/// Initial factors and state. With `init` given the factors are taken
/// verbatim and only the state is built fresh.
pub fn initialize(
    data: &TensorSlices,
    config: &SolverConfig,
    init: Option<&Parafac2Factors>,
) -> Result<(Parafac2Factors, AdmmState)> {
    let factors = match init {
        Some(f) => {
            f.check_against(data)?;
            if f.rank() != config.rank {
                return Err(Error::RankMismatch { estimate: f.rank(), truth: config.rank });
            }
            f.clone()
        }
        None => random_init(data.i(), data.j(), data.k(), config.rank, config.seed),
    };
    let state = fresh_state(&factors)?;
    Ok((factors, state))
}

/// Iterations actually run by [`inner_admm_b`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InnerReport {
    pub iterations: usize,
    pub projection_reset: bool,
}

/// Inner ADMM for the `B_k`: closed-form `B_k` updates, smoothness
/// auxiliary solve, approximate projection and dual steps, repeated until
/// both auxiliaries agree with `B` to `inner_tol` or `max_inner_b` sweeps.
#[allow(clippy::too_many_arguments)]
pub fn inner_admm_b(
    data: &TensorSlices,
    a: &Mat,
    d: &[Vector],
    b: &mut [Mat],
    state: &mut AdmmState,
    lambda_b: f64,
    max_inner_b: usize,
    inner_tol: f64,
) -> Result<InnerReport> {
    if b.len() != data.k() || d.len() != data.k() || state.z_b.len() != data.k() {
        return Err(Error::Shape("B-cycle inputs disagree with slice count".into()));
    }
    let a_gram = a.transpose() * a;
    let xt_a: Vec<Mat> = data.slices().iter().map(|x| x.transpose() * a).collect();
    let mut report = InnerReport { iterations: 0, projection_reset: false };

    for _ in 0..max_inner_b {
        report.iterations += 1;
        for k in 0..b.len() {
            let m = &state.z_b[k] - &state.mu_zb[k] + &state.y_b[k] - &state.mu_delta_b[k];
            b[k] = update_bk_from_products(&xt_a[k], &a_gram, &d[k], &m, state.rho_b[k]);
        }

        let z_inputs: Vec<Mat> = b.iter().zip(&state.mu_zb).map(|(b_k, mu)| b_k + mu).collect();
        state.z_b = solve_zb_tridiagonal(lambda_b, &z_inputs, &state.rho_b)?;

        let y_targets: Vec<Mat> = b.iter().zip(&state.mu_delta_b).map(|(b_k, mu)| b_k + mu).collect();
        let proj = project_approx_p(&y_targets, &state.rho_b, Some(&state.p), &state.delta_b, PROJECTION_INNER)?;
        report.projection_reset |= proj.reinitialized;
        state.y_b = proj.y;
        state.p = proj.p;
        state.delta_b = proj.delta_b;

        for k in 0..b.len() {
            let (mz, md) = dual_step_b(&b[k], &state.z_b[k], &state.y_b[k], &state.mu_zb[k], &state.mu_delta_b[k]);
            state.mu_zb[k] = mz;
            state.mu_delta_b[k] = md;
        }

        let (gap_z, gap_y) = b_gaps(b, state);
        if gap_z <= inner_tol && gap_y <= inner_tol {
            break;
        }
    }
    Ok(report)
}

fn b_gaps(b: &[Mat], state: &AdmmState) -> (f64, f64) {
    let mut gap_z = 0.0_f64;
    let mut gap_y = 0.0_f64;
    for k in 0..b.len() {
        gap_z = gap_z.max(relative_gap(b[k].iter(), state.z_b[k].iter()));
        gap_y = gap_y.max(relative_gap(b[k].iter(), state.y_b[k].iter()));
    }
    (gap_z, gap_y)
}

fn d_gap(d: &[Vector], z_d: &[Vector]) -> f64 {
    d.iter().zip(z_d).map(|(x, z)| relative_gap(x.iter(), z.iter())).fold(0.0, f64::max)
}

/// Per-component rescaling `a_r -> α a_r`, `d_r -> β d_r`,
/// `b_{k,r} -> b_{k,r} / (αβ)` that leaves the data fit, the PARAFAC2
/// constraint and non-negativity untouched. Auxiliaries and scaled duals
/// follow their primal variables.
///
/// `α` and `β` equalize the two ridge terms. The product `αβ` minimizes the
/// regularizer when the component has smoothness cost. Without it the ridge
/// keeps shrinking `A` and `D` while `B` grows, so the evolving-mode
/// columns are instead held at unit root-mean-square norm.
/// Skipped unless both ridge weights are positive.
pub fn balance_scales(a: &mut Mat, b: &mut [Mat], d: &mut [Vector], state: &mut AdmmState, reg: &RegularizationConfig) {
    if reg.lambda_a <= 0.0 || reg.lambda_d <= 0.0 || b.is_empty() {
        return;
    }
    let k = b.len();
    for r in 0..a.ncols() {
        let na = a.column(r).norm();
        let nc = d.iter().map(|d_k| d_k[r] * d_k[r]).sum::<f64>().sqrt();
        let nb = (b.iter().map(|b_k| b_k.column(r).norm_squared()).sum::<f64>() / k as f64).sqrt();
        if !(na > 0.0 && nc > 0.0 && nb > 0.0) {
            continue;
        }
        let q = reg.lambda_b * (1..k).map(|t| (b[t].column(r) - b[t - 1].column(r)).norm_squared()).sum::<f64>();
        let p = (reg.lambda_a * reg.lambda_d).sqrt() * na * nc;
        let gamma = if q > 0.0 { (q / p).cbrt() } else { nb };
        let alpha = (gamma * reg.lambda_d.sqrt() * nc / (reg.lambda_a.sqrt() * na)).sqrt();
        let beta = gamma / alpha;
        if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
            continue;
        }
        let inv = 1.0 / gamma;
        a.column_mut(r).scale_mut(alpha);
        for t in 0..k {
            d[t][r] *= beta;
            state.z_d[t][r] *= beta;
            state.mu_d[t][r] *= beta;
            for m in [&mut b[t], &mut state.z_b[t], &mut state.y_b[t], &mut state.mu_zb[t], &mut state.mu_delta_b[t]] {
                m.column_mut(r).scale_mut(inv);
            }
        }
        state.delta_b.column_mut(r).scale_mut(inv);
    }
}

struct Iterate {
    a: Mat,
    b: Vec<Mat>,
    d: Vec<Vector>,
    state: AdmmState,
}

/// Fits the model by alternating the `B` ADMM cycle, the `D` cycle and the
/// closed-form `A` update until the total loss stalls and all auxiliary
/// variables agree with their primal counterparts.
pub fn fit(data: &TensorSlices, config: &SolverConfig, init: Option<&Parafac2Factors>) -> Result<FitResult> {
    config.validate()?;
    if config.rank > data.i().min(data.j()) {
        return Err(Error::InvalidConfig(format!(
            "rank {} exceeds min(I, J) = {}",
            config.rank,
            data.i().min(data.j())
        )));
    }
    let (factors, state) = initialize(data, config, init)?;
    let reg = config.reg;
    let mut it = Iterate { a: factors.a, b: factors.b, d: factors.d, state };
    let mut last_good: Option<Iterate> = None;
    let mut loss_trace: Vec<f64> = Vec::new();
    let mut exit_reason = ExitReason::MaxIterations;
    let mut converged = false;

    for _ in 0..config.max_outer {
        let a_gram = it.a.transpose() * &it.a;
        for (rho, d_k) in it.state.rho_b.iter_mut().zip(&it.d) {
            *rho = rho_b_heuristic(&a_gram, d_k);
        }
        inner_admm_b(data, &it.a, &it.d, &mut it.b, &mut it.state, reg.lambda_b, config.max_inner_b, config.inner_tol)?;

        let b_grams: Vec<Mat> = it.b.iter().map(|b_k| b_k.transpose() * b_k).collect();
        for (rho, g) in it.state.rho_d.iter_mut().zip(&b_grams) {
            *rho = rho_d_heuristic(&a_gram, g);
        }
        let xb: Vec<Mat> = data.slices().iter().zip(&it.b).map(|(x, b_k)| x * b_k).collect();
        let cross_diag: Vec<Vector> = xb.iter().map(|m| (it.a.transpose() * m).diagonal()).collect();
        let inputs = DCycleInputs { a_gram: &a_gram, b_grams: &b_grams, cross_diag: &cross_diag };
        let st = &mut it.state;
        for _ in 0..config.max_inner_b {
            let z_prev = st.z_d.clone();
            admm_cycle_d_from_products(&inputs, &mut it.d, &mut st.z_d, &mut st.mu_d, &st.rho_d, reg.lambda_d);
            if d_gap(&it.d, &st.z_d) <= config.inner_tol && d_gap(&st.z_d, &z_prev) <= config.inner_tol {
                break;
            }
        }

        it.a = update_a_from_products(&xb, &it.b, &it.d, reg.lambda_a);
        if config.balance_scales {
            balance_scales(&mut it.a, &mut it.b, &mut it.d, &mut it.state, &reg);
        }

        let loss = objective_terms_parts(data, &it.a, &it.b, &it.d, &reg).total();
        let blown = !loss.is_finite()
            || !all_finite(&it.a)
            || loss_trace.first().is_some_and(|first| loss > DIVERGENCE_FACTOR * first.max(f64::MIN_POSITIVE));
        if blown {
            exit_reason = ExitReason::Diverged;
            break;
        }
        let prev = loss_trace.last().copied();
        loss_trace.push(loss);

        if let Some(prev) = prev {
            let change = (prev - loss).abs();
            let loss_ok = change < config.abs_tol_loss || change < config.rel_tol_loss * prev.abs();
            if loss_ok {
                let (gz, gy) = b_gaps(&it.b, &it.state);
                let gd = d_gap(&it.d, &it.state.z_d);
                if gz <= config.feas_tol && gy <= config.feas_tol && gd <= config.feas_tol {
                    converged = true;
                    exit_reason = ExitReason::LossTolerance;
                    last_good = None;
                    break;
                }
            }
        }
        last_good = Some(Iterate { a: it.a.clone(), b: it.b.clone(), d: it.d.clone(), state: it.state.clone() });
    }

    if exit_reason == ExitReason::Diverged {
        if let Some(good) = last_good.take() {
            it = good;
        }
        if loss_trace.is_empty() {
            // first iteration already blew up: report the initial objective
            let (f0, _) = initialize(data, config, init)?;
            loss_trace.push(objective_terms_parts(data, &f0.a, &f0.b, &f0.d, &reg).total());
        }
    }

    let (feas_gap_b_z, feas_gap_b_y) = b_gaps(&it.b, &it.state);
    let feas_gap_d = d_gap(&it.d, &it.state.z_d);
    let outer_iters = loss_trace.len();
    let factors = Parafac2Factors { a: it.a, b: it.b, d: it.state.z_d.clone() };
    Ok(FitResult {
        factors,
        primal_d: it.d,
        state: it.state,
        loss_trace,
        outer_iters,
        converged,
        feas_gap_b_z,
        feas_gap_b_y,
        feas_gap_d,
        exit_reason,
    })
}
