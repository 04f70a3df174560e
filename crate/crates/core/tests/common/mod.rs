#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tparafac2::model::{Parafac2Factors, TensorSlices};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

pub fn gauss_vec(r: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| r.sample(StandardNormal))
}

pub fn uniform_vec(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vector {
    Vector::from_fn(n, |_, _| r.gen_range(lo..hi))
}

/// Orthonormal columns from the QR factor of a Gaussian matrix.
pub fn orthonormal(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    let q = gauss(r, rows, cols).qr().q();
    q.columns(0, cols).into_owned()
}

pub fn random_factors(r: &mut ChaCha8Rng, i: usize, j: usize, k: usize, rank: usize) -> Parafac2Factors {
    let a = gauss(r, i, rank);
    let b = (0..k).map(|_| gauss(r, j, rank)).collect();
    let d = (0..k).map(|_| uniform_vec(r, rank, 0.1, 2.0)).collect();
    Parafac2Factors::new(a, b, d).unwrap()
}

/// Factors whose `B_k = P_k H` share one cross-product.
pub fn shared_gram_factors(r: &mut ChaCha8Rng, i: usize, j: usize, k: usize, rank: usize) -> Parafac2Factors {
    let a = gauss(r, i, rank);
    let h = gauss(r, rank, rank) + Mat::identity(rank, rank) * 2.0;
    let b = (0..k).map(|_| orthonormal(r, j, rank) * &h).collect();
    let d = (0..k).map(|_| uniform_vec(r, rank, 0.5, 1.5)).collect();
    Parafac2Factors::new(a, b, d).unwrap()
}

pub fn random_tensor(r: &mut ChaCha8Rng, i: usize, j: usize, k: usize) -> TensorSlices {
    TensorSlices::new((0..k).map(|_| gauss(r, i, j)).collect()).unwrap()
}

/// Dense `K·J·R` system for the smoothness auxiliaries, solved by LU.
pub fn dense_tridiagonal(lambda: f64, inputs: &[Mat], rho: &[f64]) -> Vec<Mat> {
    let k = inputs.len();
    let (j, r) = inputs[0].shape();
    let n = j * r;
    let mut lhs = Mat::zeros(k * n, k * n);
    let mut rhs = Vector::zeros(k * n);
    for t in 0..k {
        let neighbours = usize::from(t > 0) + usize::from(t + 1 < k);
        for e in 0..n {
            let row = t * n + e;
            lhs[(row, row)] = 2.0 * lambda * neighbours as f64 + rho[t];
            if t > 0 {
                lhs[(row, row - n)] = -2.0 * lambda;
            }
            if t + 1 < k {
                lhs[(row, row + n)] = -2.0 * lambda;
            }
            rhs[row] = rho[t] * inputs[t].as_slice()[e];
        }
    }
    let z = lhs.lu().solve(&rhs).unwrap();
    (0..k).map(|t| Mat::from_column_slice(j, r, &z.as_slice()[t * n..(t + 1) * n])).collect()
}

pub fn stack_rel(a: &[Mat], b: &[Mat]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y.norm_squared()).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn rel_mat(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

/// Property-test settings with a fixed RNG seed so runs are reproducible.
pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases: n,
        rng_seed: proptest::test_runner::RngSeed::Fixed(0x5eed_7a11),
        failure_persistence: None,
        ..Default::default()
    }
}
