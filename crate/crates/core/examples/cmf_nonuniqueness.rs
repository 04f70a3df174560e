//! A coupled matrix factorization is only determined up to a shared
//! rotation: the objective does not move while the factors, and their match
//! to the truth, do. Non-negativity on the shared mode pins the rotation.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tparafac2::cmf::{cmf_objective, fit_cmf, fms_cmf_vs_parafac2};
use tparafac2::solver::SolverConfig;
use tparafac2::synth::{generate, overlap_preset, PresetScale};

fn main() -> tparafac2::Result<()> {
    let data = generate(&overlap_preset(8, PresetScale::DESK, 0.5, 0.2)?)?;
    let lambda_b = 100.0;
    let config = SolverConfig { rank: 3, ..SolverConfig::default() };
    let plain = fit_cmf(&data.noisy, lambda_b, false, &config, None)?;
    let nonneg = fit_cmf(&data.noisy, lambda_b, true, &config, None)?;
    let lambda_a = config.reg.lambda_a;

    let base = cmf_objective(&data.noisy, &plain.factors, lambda_a, lambda_b)?;
    println!("tCMF   FMS {:.4}", fms_cmf_vs_parafac2(&plain.factors, &data.truth)?.fms);
    println!("NNtCMF FMS {:.4}", fms_cmf_vs_parafac2(&nonneg.factors, &data.truth)?.fms);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..5 {
        let g = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = g.qr().q();
        let moved = plain.factors.gauge_transform(&q)?;
        let obj = cmf_objective(&data.noisy, &moved, lambda_a, lambda_b)?;
        println!(
            "rotated: objective change {:.1e}, FMS {:.4}",
            (obj - base).abs() / base,
            fms_cmf_vs_parafac2(&moved, &data.truth)?.fms
        );
    }
    Ok(())
}
