//! The building blocks of one B sweep used on their own: the smoothness
//! solve and the projection onto factors sharing a cross-product.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tparafac2::kernels::{project_approx_p, solve_zb_tridiagonal};
use tparafac2::model::{parafac2_residual_of, smoothness_penalty};

fn main() -> tparafac2::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (j, r, k) = (12, 3, 8);
    let noisy: Vec<DMatrix<f64>> =
        (0..k).map(|_| DMatrix::from_fn(j, r, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
    let rho = vec![1.0; k];

    println!("{:>8} {:>12}", "lambda", "roughness");
    for lambda in [0.0, 0.1, 1.0, 10.0, 1000.0] {
        let z = solve_zb_tridiagonal(lambda, &noisy, &rho)?;
        println!("{lambda:>8} {:>12.4}", smoothness_penalty(&z));
    }

    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..2.0)).collect();
    let warm = DMatrix::identity(r, r);
    println!("cross-product spread of the input {:.3}", parafac2_residual_of(&noisy));
    for inner in [1, 3, 10] {
        let proj = project_approx_p(&noisy, &weights, None, &warm, inner)?;
        let dist: f64 = proj.y.iter().zip(&noisy).map(|(y, x)| (y - x).norm_squared()).sum::<f64>().sqrt();
        println!(
            "{inner:>2} alternations: spread {:.1e}, distance to input {:.4}",
            parafac2_residual_of(&proj.y),
            dist
        );
    }
    Ok(())
}
