//! Stateless sub-updates of the AO-ADMM scheme: closed forms for `A` and
//! `B_k`, the smoothness auxiliary solve, the approximate projection onto
//! the set of `{B_k}` with a shared cross-product, the non-negative `D_k`
//! cycle and the dual ascent for the `B` splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{canonical_frame, hadamard, inv_sqrt_spd, pinv, polar_factor, scale_columns, Mat, Vector};
use crate::model::TensorSlices;

/// Floor applied to the Gram-trace step sizes.
pub const RHO_FLOOR: f64 = 1e-12;

/// Auxiliary, dual and step-size variables of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmState {
    /// Smoothness auxiliaries `Z_{B_k}`.
    pub z_b: Vec<Mat>,
    /// Shared-cross-product auxiliaries `Y_{B_k}`.
    pub y_b: Vec<Mat>,
    pub mu_zb: Vec<Mat>,
    pub mu_delta_b: Vec<Mat>,
    /// Non-negative copies of the `D_k` diagonals.
    pub z_d: Vec<Vector>,
    pub mu_d: Vec<Vector>,
    pub rho_b: Vec<f64>,
    pub rho_d: Vec<f64>,
    /// Warm-start orthonormal frames for the projection.
    pub p: Vec<Mat>,
    /// Warm-start coordinate matrix for the projection.
    pub delta_b: Mat,
}

/// `ρ_{B_k} = trace(D_k A^T A D_k) / R`, floored.
pub fn rho_b_heuristic(a_gram: &Mat, d_k: &Vector) -> f64 {
    let r = d_k.len().max(1) as f64;
    let t: f64 = (0..d_k.len()).map(|c| d_k[c] * d_k[c] * a_gram[(c, c)]).sum();
    (t / r).max(RHO_FLOOR)
}

/// `ρ_{D_k} = trace((A^T A) ∘ (B_k^T B_k)) / R`, floored.
pub fn rho_d_heuristic(a_gram: &Mat, b_gram: &Mat) -> f64 {
    let r = a_gram.nrows().max(1) as f64;
    let t: f64 = (0..a_gram.nrows()).map(|c| a_gram[(c, c)] * b_gram[(c, c)]).sum();
    (t / r).max(RHO_FLOOR)
}

/// Ridge-regularized least squares for `A` given the products `X_k B_k`.
pub(crate) fn update_a_from_products(xb: &[Mat], b: &[Mat], d: &[Vector], lambda_a: f64) -> Mat {
    let r = d[0].len();
    let mut rhs = Mat::zeros(xb[0].nrows(), r);
    let mut gram = Mat::identity(r, r) * lambda_a;
    for ((xb_k, b_k), d_k) in xb.iter().zip(b).zip(d) {
        rhs += scale_columns(xb_k, d_k);
        let bd = scale_columns(b_k, d_k);
        gram += bd.transpose() * bd;
    }
    rhs * pinv(&gram)
}

/// Minimizer of the Lagrangian in `A`:
/// `(Σ_k X_k B_k D_k)(Σ_k D_k B_k^T B_k D_k + λ_A I)^†`.
pub fn update_a(data: &TensorSlices, b: &[Mat], d: &[Vector], lambda_a: f64) -> Result<Mat> {
    check_bd(data, b, d)?;
    let xb: Vec<Mat> = data.slices().iter().zip(b).map(|(x, b_k)| x * b_k).collect();
    Ok(update_a_from_products(&xb, b, d, lambda_a))
}

/// Inputs of one `B_k` update that stay fixed across the inner ADMM loop.
pub(crate) fn update_bk_from_products(
    xt_a: &Mat,
    a_gram: &Mat,
    d_k: &Vector,
    m: &Mat,
    rho: f64,
) -> Mat {
    let r = d_k.len();
    let lhs = scale_columns(&scale_columns(a_gram, d_k).transpose(), d_k) + Mat::identity(r, r) * rho;
    let rhs = scale_columns(xt_a, d_k) + m * (0.5 * rho);
    match lhs.clone().cholesky() {
        Some(ch) => ch.solve(&rhs.transpose()).transpose(),
        None => rhs * pinv(&lhs),
    }
}

/// Minimizer of the Lagrangian in `B_k`:
/// `(X_k^T A D_k + (ρ/2) M)(D_k A^T A D_k + ρ I)^†` with
/// `M = Z_{B_k} − μ_{Z_{B_k}} + Y_{B_k} − μ_{Δ_{B_k}}`.
#[allow(clippy::too_many_arguments)]
pub fn update_bk(
    x_k: &Mat,
    a: &Mat,
    d_k: &Vector,
    z_bk: &Mat,
    mu_zbk: &Mat,
    y_bk: &Mat,
    mu_delta_bk: &Mat,
    rho_bk: f64,
) -> Mat {
    let m = z_bk - mu_zbk + y_bk - mu_delta_bk;
    update_bk_from_products(&(x_k.transpose() * a), &(a.transpose() * a), d_k, &m, rho_bk)
}

/// Solves the scalar-coefficient tridiagonal system coupling consecutive
/// smoothness auxiliaries:
///
/// ```text
/// (2λ+ρ_1) Z_1 − 2λ Z_2                 = ρ_1 (B_1 + μ_1)
/// −2λ Z_{k−1} + (4λ+ρ_k) Z_k − 2λ Z_{k+1} = ρ_k (B_k + μ_k)
/// −2λ Z_{K−1} + (2λ+ρ_K) Z_K            = ρ_K (B_K + μ_K)
/// ```
///
/// by Thomas elimination with matrix-valued right-hand sides.
pub fn solve_zb_tridiagonal(lambda_b: f64, rhs_inputs: &[Mat], rho_b: &[f64]) -> Result<Vec<Mat>> {
    let k = rhs_inputs.len();
    if k == 0 {
        return Err(Error::Empty("tridiagonal solve needs at least one block"));
    }
    if rho_b.len() != k {
        return Err(Error::Shape(format!("{} step sizes for {k} blocks", rho_b.len())));
    }
    if !(lambda_b >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda_b must be >= 0, got {lambda_b}")));
    }
    if let Some(bad) = rho_b.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::InvalidConfig(format!("step sizes must be > 0, got {bad}")));
    }
    if k == 1 {
        return Ok(vec![rhs_inputs[0].clone()]);
    }
    let off = -2.0 * lambda_b;
    let diag = |idx: usize| {
        let neighbours = if idx == 0 || idx == k - 1 { 1.0 } else { 2.0 };
        rho_b[idx] + 2.0 * lambda_b * neighbours
    };

    // forward sweep
    let mut c_prime = vec![0.0; k];
    let mut d_prime: Vec<Mat> = Vec::with_capacity(k);
    c_prime[0] = off / diag(0);
    d_prime.push(&rhs_inputs[0] * (rho_b[0] / diag(0)));
    for idx in 1..k {
        let m = diag(idx) - off * c_prime[idx - 1];
        c_prime[idx] = off / m;
        let next = (&rhs_inputs[idx] * rho_b[idx] - &d_prime[idx - 1] * off) / m;
        d_prime.push(next);
    }

    // back substitution
    let mut z = d_prime;
    for idx in (0..k - 1).rev() {
        let (head, tail) = z.split_at_mut(idx + 1);
        head[idx] -= &tail[0] * c_prime[idx];
    }
    Ok(z)
}

/// An orthonormal frame, either stored or as `T W` for its target `T`.
#[derive(Debug, Clone)]
enum Frame {
    Explicit(Mat),
    Coefficients(Mat),
}

impl Frame {
    fn materialize(self, target: &Mat) -> Mat {
        match self {
            Frame::Explicit(p) => p,
            Frame::Coefficients(w) => target * w,
        }
    }
}

/// Output of [`project_approx_p`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub y: Vec<Mat>,
    pub p: Vec<Mat>,
    pub delta_b: Mat,
    /// Set when the coordinate matrix collapsed and was reset to the identity.
    pub reinitialized: bool,
}

/// Approximate weighted projection of `targets` onto the set of `{B_k}`
/// sharing one cross-product, parametrized as `Y_k = P_k ΔB` with
/// orthonormal `P_k`. Alternates Procrustes steps for the `P_k` with a
/// weighted average for `ΔB`; the result lies exactly in the set while
/// only approximately minimizing `Σ_k ρ_k ‖Y_k − target_k‖²`.
pub fn project_approx_p(
    targets: &[Mat],
    rho_b: &[f64],
    warm_p: Option<&[Mat]>,
    warm_delta_b: &Mat,
    n_inner: usize,
) -> Result<Projection> {
    let k = targets.len();
    if k == 0 {
        return Err(Error::Empty("projection needs at least one target"));
    }
    if rho_b.len() != k {
        return Err(Error::Shape(format!("{} step sizes for {k} targets", rho_b.len())));
    }
    if n_inner == 0 {
        return Err(Error::InvalidConfig("projection needs at least one inner iteration".into()));
    }
    let (j, r) = targets[0].shape();
    if r > j {
        return Err(Error::Shape(format!("rank {r} exceeds evolving-mode size {j}")));
    }
    if warm_delta_b.shape() != (r, r) {
        return Err(Error::Shape(format!("warm coordinate matrix is {:?}, expected ({r}, {r})", warm_delta_b.shape())));
    }
    let mut frames: Vec<Frame> = match warm_p {
        Some(w) if w.len() == k && w.iter().all(|m| m.shape() == (j, r)) => w.iter().cloned().map(Frame::Explicit).collect(),
        _ => vec![Frame::Explicit(canonical_frame(j, r)); k],
    };
    let mut delta_b = warm_delta_b.clone();
    let mut reinitialized = false;
    let rho_sum: f64 = rho_b.iter().sum();

    if targets.iter().all(|t| t.iter().all(|v| *v == 0.0)) {
        // nothing to project: report an identity-scaled frame
        let p: Vec<Mat> = frames.into_iter().map(|f| f.materialize(&targets[0])).collect();
        return Ok(Projection { y: p.clone(), p, delta_b: Mat::identity(r, r), reinitialized: true });
    }

    // P_k is kept as T_k W_k where possible so the loop only touches R×R
    // matrices; T_k^T T_k carries everything the Procrustes step needs.
    let grams: Vec<Mat> = targets.iter().map(|t| t.transpose() * t).collect();
    let eye = Mat::identity(r, r);
    for _ in 0..n_inner {
        if delta_b.iter().all(|v| *v == 0.0) {
            delta_b = Mat::identity(r, r);
            reinitialized = true;
        }
        let dbt = delta_b.transpose();
        for ((frame, t_k), g_k) in frames.iter_mut().zip(targets).zip(&grams) {
            match inv_sqrt_spd(&(&delta_b * g_k * &dbt)) {
                Some(s) => {
                    let w = &dbt * s;
                    // one Newton-Schulz step tightens orthonormality
                    let gram_p = w.transpose() * g_k * &w;
                    *frame = Frame::Coefficients(w * (&eye * 3.0 - gram_p) * 0.5);
                }
                None => {
                    if let Some(p) = polar_factor(&(t_k * &dbt)) {
                        *frame = Frame::Explicit(p);
                    }
                }
            }
        }
        let mut acc = Mat::zeros(r, r);
        for (((frame, t_k), g_k), rho) in frames.iter().zip(targets).zip(&grams).zip(rho_b) {
            let pt = match frame {
                Frame::Coefficients(w) => w.transpose() * g_k,
                Frame::Explicit(p) => p.transpose() * t_k,
            };
            acc += pt * *rho;
        }
        delta_b = acc / rho_sum;
    }
    if delta_b.iter().all(|v| *v == 0.0) {
        delta_b = Mat::identity(r, r);
        reinitialized = true;
    }
    let p: Vec<Mat> = frames.into_iter().zip(targets).map(|(f, t_k)| f.materialize(t_k)).collect();
    let y = p.iter().map(|p_k| p_k * &delta_b).collect();
    Ok(Projection { y, p, delta_b, reinitialized })
}

/// Everything the `D_k` update needs about the other factors.
pub(crate) struct DCycleInputs<'a> {
    pub a_gram: &'a Mat,
    pub b_grams: &'a [Mat],
    /// `diag(A^T X_k B_k)` per slice.
    pub cross_diag: &'a [Vector],
}

pub(crate) fn admm_cycle_d_from_products(
    inputs: &DCycleInputs<'_>,
    d: &mut [Vector],
    z_d: &mut [Vector],
    mu_d: &mut [Vector],
    rho_d: &[f64],
    lambda_d: f64,
) {
    let r = inputs.a_gram.nrows();
    for k in 0..d.len() {
        let rho = rho_d[k];
        let lhs = hadamard(inputs.a_gram, &inputs.b_grams[k]) * 2.0 + Mat::identity(r, r) * (2.0 * lambda_d + rho);
        let rhs = &inputs.cross_diag[k] * 2.0 + (&z_d[k] - &mu_d[k]) * rho;
        let new_d = match lhs.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => pinv(&lhs) * rhs,
        };
        let new_z = (&new_d + &mu_d[k]).map(|v| v.max(0.0));
        mu_d[k] = &new_d - &new_z + &mu_d[k];
        d[k] = new_d;
        z_d[k] = new_z;
    }
}

/// One ADMM cycle for the non-negative `D_k`: ridge-regularized solve for
/// `d_k`, projection of `d_k + μ_k` onto the non-negative orthant, dual step.
#[allow(clippy::too_many_arguments)]
pub fn admm_cycle_d(
    data: &TensorSlices,
    a: &Mat,
    b: &[Mat],
    d: &mut [Vector],
    z_d: &mut [Vector],
    mu_d: &mut [Vector],
    rho_d: &[f64],
    lambda_d: f64,
) -> Result<()> {
    check_bd(data, b, d)?;
    if z_d.len() != d.len() || mu_d.len() != d.len() || rho_d.len() != d.len() {
        return Err(Error::Shape("D-cycle state lengths disagree".into()));
    }
    let a_gram = a.transpose() * a;
    let b_grams: Vec<Mat> = b.iter().map(|b_k| b_k.transpose() * b_k).collect();
    let cross_diag: Vec<Vector> = data
        .slices()
        .iter()
        .zip(b)
        .map(|(x, b_k)| (a.transpose() * x * b_k).diagonal())
        .collect();
    let inputs = DCycleInputs { a_gram: &a_gram, b_grams: &b_grams, cross_diag: &cross_diag };
    admm_cycle_d_from_products(&inputs, d, z_d, mu_d, rho_d, lambda_d);
    Ok(())
}

/// Scaled dual ascent for both `B` splits:
/// `μ_Z ← B − Z + μ_Z`, `μ_Δ ← B − Y + μ_Δ`.
pub fn dual_step_b(b_k: &Mat, z_bk: &Mat, y_bk: &Mat, mu_zbk: &Mat, mu_delta_bk: &Mat) -> (Mat, Mat) {
    (b_k - z_bk + mu_zbk, b_k - y_bk + mu_delta_bk)
}

fn check_bd(data: &TensorSlices, b: &[Mat], d: &[Vector]) -> Result<()> {
    if b.len() != data.k() || d.len() != data.k() {
        return Err(Error::Shape(format!("{} B_k / {} D_k for {} slices", b.len(), d.len(), data.k())));
    }
    if b.iter().any(|b_k| b_k.nrows() != data.j()) {
        return Err(Error::Shape("B_k row count differs from J".into()));
    }
    Ok(())
}
