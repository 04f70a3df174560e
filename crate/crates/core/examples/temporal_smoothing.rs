//! Sweep the smoothness weight on one noisy dataset. Each setting keeps the
//! lowest-loss fit out of a few random starts.

use tparafac2::eval::fms;
use tparafac2::model::smoothness_penalty;
use tparafac2::solver::{fit, SolverConfig};
use tparafac2::synth::{easy_preset, generate, PresetScale};

fn main() -> tparafac2::Result<()> {
    let data = generate(&easy_preset(3, PresetScale::DESK, 0.75))?;
    println!("{:>8} {:>8} {:>12} {:>8}", "lambda_b", "FMS", "roughness", "sweeps");
    for lambda_b in [0.0, 0.1, 1.0, 10.0, 100.0] {
        let mut best = None;
        for seed in 0..4 {
            let mut config = SolverConfig { rank: 3, seed, ..SolverConfig::default() };
            config.reg.lambda_b = lambda_b;
            let res = fit(&data.noisy, &config, None)?;
            if best.as_ref().map_or(true, |b: &tparafac2::solver::FitResult| res.final_loss() < b.final_loss()) {
                best = Some(res);
            }
        }
        let res = best.unwrap();
        println!(
            "{lambda_b:>8} {:>8.4} {:>12.4e} {:>8}",
            fms(&res.factors, &data.truth)?.fms,
            smoothness_penalty(&res.factors.b),
            res.outer_iters
        );
    }
    Ok(())
}
