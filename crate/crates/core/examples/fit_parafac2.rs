//! Fit an unregularized PARAFAC2 model to noiseless synthetic data and
//! compare it with the planted factors.

use tparafac2::eval::fms;
use tparafac2::model::{parafac2_residual, relative_error};
use tparafac2::solver::{fit, SolverConfig};
use tparafac2::synth::{easy_preset, generate, PresetScale};

fn main() -> tparafac2::Result<()> {
    let data = generate(&easy_preset(42, PresetScale::DESK, 0.0))?;
    let config = SolverConfig { rank: 3, seed: 1, ..SolverConfig::default() };
    let res = fit(&data.noisy, &config, None)?;

    println!("exit {:?} after {} sweeps", res.exit_reason, res.outer_iters);
    println!("loss {:.4e}", res.final_loss());
    println!("relative error {:.2e}", relative_error(&data.noisy, &res.factors)?);
    println!("cross-product spread {:.2e}", parafac2_residual(&res.factors));
    let report = fms(&res.factors, &data.truth)?;
    println!("FMS {:.4}, matched components {:?}", report.fms, report.permutation);
    Ok(())
}
