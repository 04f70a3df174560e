//! A reduced easy-group benchmark through the experiment harness: datasets,
//! multi-start fits, best-run selection and summary files.
//!
//! `cargo run --release --example reproduce_easy -- results/easy-small`

use std::path::PathBuf;

use tparafac2::experiments::{reproduce, ExperimentPlan, Group};
use tparafac2::synth::PresetScale;

fn main() -> tparafac2::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("tparafac2-easy"));
    let mut plan = ExperimentPlan::default_for(Group::Easy, 7);
    plan.n_datasets = 3;
    plan.n_inits = 3;
    plan.lambda_b_grid = vec![1.0, 100.0];
    plan.scale = PresetScale { i: 30, j: 24, k: 10, rank: 3, authors_per_concept: 10, words_per_concept: 4 };

    let rep = reproduce(&plan, &out, 0)?;
    println!("{} runs", rep.records.len());
    for row in &rep.summary.rows {
        println!(
            "{:<16} median FMS {:.3}  discarded {}/{}",
            row.label,
            row.fms_median.unwrap_or(f64::NAN),
            row.n_discarded,
            row.n_datasets
        );
    }
    println!("results in {}", out.display());
    Ok(())
}
