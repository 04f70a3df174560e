//! Small dense helpers on top of `nalgebra` shared by the kernels.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative cutoff below which singular values are dropped by [`pinv`].
pub const PINV_RCOND: f64 = 1e-12;

/// Moore-Penrose pseudoinverse via SVD; singular values below
/// `PINV_RCOND * sigma_max` are treated as zero. Non-finite input gives an
/// all-NaN result so callers see the breakdown instead of a panic.
pub fn pinv(m: &Mat) -> Mat {
    if !all_finite(m) {
        return Mat::from_element(m.ncols(), m.nrows(), f64::NAN);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Mat::zeros(m.ncols(), m.nrows());
    }
    let cutoff = PINV_RCOND * smax;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut out = Mat::zeros(m.ncols(), m.nrows());
    for (s, sigma) in svd.singular_values.iter().enumerate() {
        if *sigma > cutoff {
            let vs = v_t.row(s).transpose();
            let us = u.column(s);
            out += (vs * us.transpose()) / *sigma;
        }
    }
    out
}

/// Orthogonal Procrustes factor `U V^T` of the thin SVD of `m` (J×R, J ≥ R).
/// Returns `None` when `m` is identically zero or not finite.
pub fn polar_factor(m: &Mat) -> Option<Mat> {
    if m.iter().all(|v| *v == 0.0) || !all_finite(m) {
        return None;
    }
    if let Some(p) = polar_via_gram(m) {
        return Some(p);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let p = u * v_t;
    if p.iter().all(|v| v.is_finite()) {
        Some(p)
    } else {
        None
    }
}

/// `m (m^T m)^{-1/2}` through the small symmetric eigenproblem; declines
/// ill-conditioned inputs so the caller can fall back to a full SVD.
fn polar_via_gram(m: &Mat) -> Option<Mat> {
    let s = inv_sqrt_spd(&(m.transpose() * m))?;
    let p = m * s;
    p.iter().all(|x| x.is_finite()).then_some(p)
}

/// `g^{-1/2}` for a symmetric positive definite `g` whose condition number
/// stays below `1e8`; `None` otherwise.
pub fn inv_sqrt_spd(g: &Mat) -> Option<Mat> {
    if !all_finite(g) {
        return None;
    }
    let eig = g.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0 && min > 1e-8 * max && max.is_finite()) {
        return None;
    }
    let v = &eig.eigenvectors;
    let inv_sqrt = Vector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()));
    Some(scale_columns(v, &inv_sqrt) * v.transpose())
}

/// First `r` columns of the `j`×`j` identity.
pub fn canonical_frame(j: usize, r: usize) -> Mat {
    Mat::from_fn(j, r, |row, col| if row == col { 1.0 } else { 0.0 })
}

/// `A^T A ∘ B^T B` style elementwise product of two square matrices.
pub fn hadamard(a: &Mat, b: &Mat) -> Mat {
    a.component_mul(b)
}

/// Scale column `r` of `m` by `d[r]`, i.e. `m · diag(d)`.
pub fn scale_columns(m: &Mat, d: &Vector) -> Mat {
    let mut out = m.clone();
    for (r, mut col) in out.column_iter_mut().enumerate() {
        col *= d[r];
    }
    out
}

/// Relative gap `‖x − z‖ / ‖z‖`, falling back to `‖x‖` when `z` vanishes.
pub fn relative_gap<'a, I>(x: I, z: I) -> f64
where
    I: IntoIterator<Item = &'a f64>,
{
    let (mut diff, mut norm_z, mut norm_x) = (0.0, 0.0, 0.0);
    for (a, b) in x.into_iter().zip(z) {
        diff += (a - b) * (a - b);
        norm_z += b * b;
        norm_x += a * a;
    }
    if norm_z > 0.0 {
        (diff / norm_z).sqrt()
    } else {
        norm_x.sqrt()
    }
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}
