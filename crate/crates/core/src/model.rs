//! Data and factor types for the slice-wise PARAFAC2 model `X_k ≈ A D_k B_k^T`,
//! together with reconstruction, the regularized objective and a scale-free
//! measure of how far a set of `B_k` is from sharing one cross-product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{scale_columns, Mat, Vector};

/// An ordered stack of `K` dense `I×J` frontal slices.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSlices {
    slices: Vec<Mat>,
}

impl TensorSlices {
    pub fn new(slices: Vec<Mat>) -> Result<Self> {
        let first = slices.first().ok_or(Error::Empty("tensor needs at least one slice"))?;
        let (i, j) = first.shape();
        if i == 0 || j == 0 {
            return Err(Error::Shape(format!("empty slice shape {i}x{j}")));
        }
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (i, j) {
                return Err(Error::Shape(format!(
                    "slice {k} is {}x{}, expected {i}x{j}",
                    s.nrows(),
                    s.ncols()
                )));
            }
            if !s.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("tensor slice"));
            }
        }
        Ok(Self { slices })
    }

    pub fn zeros(i: usize, j: usize, k: usize) -> Result<Self> {
        Self::new(vec![Mat::zeros(i, j); k])
    }

    pub fn i(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn j(&self) -> usize {
        self.slices[0].ncols()
    }

    pub fn k(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, k: usize) -> &Mat {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[Mat] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<Mat> {
        self.slices
    }

    /// Frobenius norm of the whole tensor.
    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.slices.iter().map(|s| s.norm_squared()).sum()
    }
}

/// `(A, {B_k}, {D_k})` with `D_k` stored as the length-`R` diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parafac2Factors {
    pub a: Mat,
    pub b: Vec<Mat>,
    pub d: Vec<Vector>,
}

impl Parafac2Factors {
    /// Builds factors and checks internal shape consistency and `D ≥ 0`.
    pub fn new(a: Mat, b: Vec<Mat>, d: Vec<Vector>) -> Result<Self> {
        let f = Self { a, b, d };
        f.check_internal()?;
        if f.d.iter().flat_map(|d| d.iter()).any(|v| *v < 0.0) {
            return Err(Error::InvalidConfig("D entries must be non-negative".into()));
        }
        Ok(f)
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn k(&self) -> usize {
        self.b.len()
    }

    fn check_internal(&self) -> Result<()> {
        let r = self.a.ncols();
        if self.b.is_empty() {
            return Err(Error::Empty("factor set needs at least one B_k"));
        }
        if self.b.len() != self.d.len() {
            return Err(Error::Shape(format!(
                "{} B_k matrices but {} D_k vectors",
                self.b.len(),
                self.d.len()
            )));
        }
        let j = self.b[0].nrows();
        for (k, (b, d)) in self.b.iter().zip(&self.d).enumerate() {
            if b.shape() != (j, r) {
                return Err(Error::Shape(format!("B_{k} is {:?}, expected ({j}, {r})", b.shape())));
            }
            if d.len() != r {
                return Err(Error::Shape(format!("D_{k} has length {}, expected {r}", d.len())));
            }
        }
        Ok(())
    }

    /// Checks the factors against a data tensor.
    pub fn check_against(&self, data: &TensorSlices) -> Result<()> {
        self.check_internal()?;
        if self.a.nrows() != data.i() || self.b[0].nrows() != data.j() || self.k() != data.k() {
            return Err(Error::Shape(format!(
                "factors imply {}x{}x{}, data is {}x{}x{}",
                self.a.nrows(),
                self.b[0].nrows(),
                self.k(),
                data.i(),
                data.j(),
                data.k()
            )));
        }
        Ok(())
    }

    /// The `K×R` matrix `C` whose k-th row is the diagonal of `D_k`.
    pub fn c_matrix(&self) -> Mat {
        let r = self.rank();
        Mat::from_fn(self.k(), r, |k, c| self.d[k][c])
    }

    pub fn reconstruct(&self, k: usize) -> Result<Mat> {
        reconstruct_slice(self, k)
    }

    /// Clean tensor implied by the factors.
    pub fn to_tensor(&self) -> Result<TensorSlices> {
        TensorSlices::new((0..self.k()).map(|k| slice_model(&self.a, &self.b[k], &self.d[k])).collect())
    }
}

/// Penalty weights for the tPARAFAC2 objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationConfig {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub lambda_d: f64,
    pub nonneg_d: bool,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        Self { lambda_a: 1e-3, lambda_b: 0.0, lambda_d: 1e-3, nonneg_d: true }
    }
}

impl RegularizationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_a", self.lambda_a), ("lambda_b", self.lambda_b), ("lambda_d", self.lambda_d)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn slice_model(a: &Mat, b_k: &Mat, d_k: &Vector) -> Mat {
    scale_columns(a, d_k) * b_k.transpose()
}

/// `A · diag(D_k) · B_k^T`.
pub fn reconstruct_slice(factors: &Parafac2Factors, k: usize) -> Result<Mat> {
    if k >= factors.k() {
        return Err(Error::IndexOutOfRange { index: k, len: factors.k() });
    }
    Ok(slice_model(&factors.a, &factors.b[k], &factors.d[k]))
}

/// Breakdown of the regularized objective into its terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveTerms {
    pub data_fit: f64,
    pub ridge_a: f64,
    pub ridge_d: f64,
    pub smoothness: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.data_fit + self.ridge_a + self.ridge_d + self.smoothness
    }
}

/// Objective terms computed from raw parts; `d` may hold the (possibly
/// slightly negative) primal iterate, so no sign check happens here.
pub(crate) fn objective_terms_parts(
    data: &TensorSlices,
    a: &Mat,
    b: &[Mat],
    d: &[Vector],
    reg: &RegularizationConfig,
) -> ObjectiveTerms {
    let data_fit = data
        .slices()
        .iter()
        .zip(b.iter().zip(d))
        .map(|(x, (b_k, d_k))| (x - slice_model(a, b_k, d_k)).norm_squared())
        .sum();
    ObjectiveTerms {
        data_fit,
        ridge_a: reg.lambda_a * a.norm_squared(),
        ridge_d: reg.lambda_d * d.iter().map(|v| v.norm_squared()).sum::<f64>(),
        smoothness: reg.lambda_b * smoothness_penalty(b),
    }
}

/// `Σ_{k≥2} ‖B_k − B_{k−1}‖²_F`.
pub fn smoothness_penalty(b: &[Mat]) -> f64 {
    b.windows(2).map(|w| (&w[1] - &w[0]).norm_squared()).sum()
}

pub fn objective_terms(
    data: &TensorSlices,
    factors: &Parafac2Factors,
    reg: &RegularizationConfig,
) -> Result<ObjectiveTerms> {
    factors.check_against(data)?;
    reg.validate()?;
    Ok(objective_terms_parts(data, &factors.a, &factors.b, &factors.d, reg))
}

/// Data fit plus ridge on `A` and `D`, plus the temporal smoothness penalty on `B`.
pub fn objective(data: &TensorSlices, factors: &Parafac2Factors, reg: &RegularizationConfig) -> Result<f64> {
    Ok(objective_terms(data, factors, reg)?.total())
}

/// `‖X − X̂‖_F / ‖X‖_F` over the whole tensor.
pub fn relative_error(data: &TensorSlices, factors: &Parafac2Factors) -> Result<f64> {
    factors.check_against(data)?;
    let resid: f64 = (0..data.k())
        .map(|k| (data.slice(k) - slice_model(&factors.a, &factors.b[k], &factors.d[k])).norm_squared())
        .sum();
    let norm = data.norm_squared();
    Ok(if norm > 0.0 { (resid / norm).sqrt() } else { resid.sqrt() })
}

/// Largest pairwise difference of the Gram matrices `B_k^T B_k`, scaled by
/// `max(1, ‖B_1^T B_1‖_F)`. Zero exactly when the `B_k` share a cross-product.
pub fn parafac2_residual_of(b: &[Mat]) -> f64 {
    if b.len() < 2 {
        return 0.0;
    }
    let grams: Vec<Mat> = b.iter().map(|m| m.transpose() * m).collect();
    let scale = grams[0].norm().max(1.0);
    let mut worst = 0.0_f64;
    for p in 0..grams.len() {
        for q in p + 1..grams.len() {
            worst = worst.max((&grams[p] - &grams[q]).norm());
        }
    }
    worst / scale
}

pub fn parafac2_residual(factors: &Parafac2Factors) -> f64 {
    parafac2_residual_of(&factors.b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_factors(rng: &mut ChaCha8Rng, i: usize, j: usize, k: usize, r: usize) -> Parafac2Factors {
        let a = Mat::from_fn(i, r, |_, _| rng.gen_range(-1.0..1.0));
        let b = (0..k).map(|_| Mat::from_fn(j, r, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let d = (0..k).map(|_| Vector::from_fn(r, |_, _| rng.gen_range(0.0..2.0))).collect();
        Parafac2Factors::new(a, b, d).unwrap()
    }

    fn brute_force_slice(f: &Parafac2Factors, k: usize) -> Mat {
        let (i, j, r) = (f.a.nrows(), f.b[k].nrows(), f.rank());
        let mut out = Mat::zeros(i, j);
        for ii in 0..i {
            for jj in 0..j {
                let mut s = 0.0;
                for rr in 0..r {
                    s += f.a[(ii, rr)] * f.d[k][rr] * f.b[k][(jj, rr)];
                }
                out[(ii, jj)] = s;
            }
        }
        out
    }

    #[test]
    fn reconstruct_identity_case() {
        let f = Parafac2Factors::new(
            Mat::identity(2, 2),
            vec![Mat::identity(2, 2)],
            vec![Vector::from_vec(vec![1.0, 1.0])],
        )
        .unwrap();
        assert_eq!(reconstruct_slice(&f, 0).unwrap(), Mat::identity(2, 2));
    }

    #[test]
    fn reconstruct_zero_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut f = random_factors(&mut rng, 4, 3, 2, 2);
        f.d[1] = Vector::zeros(2);
        assert_eq!(reconstruct_slice(&f, 1).unwrap(), Mat::zeros(4, 3));
    }

    #[test]
    fn reconstruct_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_factors(&mut rng, 4, 3, 2, 3);
        for k in 0..2 {
            let fast = reconstruct_slice(&f, k).unwrap();
            assert!((fast - brute_force_slice(&f, k)).norm() < 1e-13);
        }
    }

    #[test]
    fn reconstruct_index_out_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_factors(&mut rng, 3, 3, 2, 1);
        assert!(matches!(reconstruct_slice(&f, 2), Err(Error::IndexOutOfRange { index: 2, len: 2 })));
    }

    #[test]
    fn objective_perfect_fit_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_factors(&mut rng, 5, 4, 3, 2);
        let data = f.to_tensor().unwrap();
        let reg = RegularizationConfig { lambda_a: 0.0, lambda_b: 0.0, lambda_d: 0.0, nonneg_d: true };
        assert!(objective(&data, &f, &reg).unwrap() < 1e-24);
    }

    #[test]
    fn objective_zero_model_is_data_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_factors(&mut rng, 5, 4, 3, 2).to_tensor().unwrap();
        let zero = Parafac2Factors::new(Mat::zeros(5, 2), vec![Mat::zeros(4, 2); 3], vec![Vector::zeros(2); 3]).unwrap();
        let reg = RegularizationConfig { lambda_a: 0.0, lambda_b: 0.0, lambda_d: 0.0, nonneg_d: true };
        let obj = objective(&data, &zero, &reg).unwrap();
        assert!((obj - data.norm_squared()).abs() <= 1e-12 * obj);
    }

    #[test]
    fn objective_constant_b_has_no_smoothness_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut f = random_factors(&mut rng, 3, 3, 2, 2);
        f.b[1] = f.b[0].clone();
        let data = TensorSlices::zeros(3, 3, 2).unwrap();
        let terms = objective_terms(
            &data,
            &f,
            &RegularizationConfig { lambda_a: 0.0, lambda_b: 10.0, lambda_d: 0.0, nonneg_d: true },
        )
        .unwrap();
        assert_eq!(terms.smoothness, 0.0);
    }

    #[test]
    fn objective_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_factors(&mut rng, 3, 3, 2, 2);
        let data = TensorSlices::zeros(4, 3, 2).unwrap();
        assert!(matches!(objective(&data, &f, &RegularizationConfig::default()), Err(Error::Shape(_))));
    }

    #[test]
    fn residual_zero_for_shared_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = Mat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let b: Vec<Mat> = (0..4)
            .map(|_| {
                let g = Mat::from_fn(7, 3, |_, _| rng.gen_range(-1.0..1.0));
                g.qr().q() * &h
            })
            .collect();
        assert!(parafac2_residual_of(&b) < 1e-12);
    }

    #[test]
    fn residual_hand_computed() {
        let b = vec![Mat::identity(2, 2), Mat::identity(2, 2) * 2.0];
        // Grams I and 4I: ‖−3I‖_F = 3√2, normalized by ‖I‖_F = √2
        let direct = (Mat::identity(2, 2) - Mat::identity(2, 2) * 4.0).norm() / Mat::identity(2, 2).norm();
        assert!((parafac2_residual_of(&b) - 3.0).abs() < 1e-14);
        assert!((direct - 3.0).abs() < 1e-14);
        assert_eq!(parafac2_residual_of(&b[..1]), 0.0);
    }

    #[test]
    fn tensor_rejects_ragged_and_nonfinite() {
        assert!(TensorSlices::new(vec![Mat::zeros(2, 3), Mat::zeros(2, 4)]).is_err());
        let mut bad = Mat::zeros(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert!(matches!(TensorSlices::new(vec![bad]), Err(Error::NonFinite(_))));
        assert!(TensorSlices::new(vec![]).is_err());
    }

    #[test]
    fn factors_reject_negative_d() {
        let r = Parafac2Factors::new(Mat::zeros(2, 1), vec![Mat::zeros(2, 1)], vec![Vector::from_vec(vec![-1.0])]);
        assert!(r.is_err());
    }
}
