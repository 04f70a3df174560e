//! Write an almost-zero-strength dataset in the slab format and read it back.
//!
//! `cargo run --example generate_dataset -- /tmp/almostzero`

use std::path::PathBuf;

use tparafac2::slab::{read_dataset, write_dataset, SlabMeta};
use tparafac2::synth::{almostzero_preset, generate, PresetScale};

fn main() -> tparafac2::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("tparafac2-demo"));
    let config = almostzero_preset(11, PresetScale::DESK, 0.25, 2)?;
    let data = generate(&config)?;

    let meta = SlabMeta {
        i: config.i,
        j: config.j,
        k: config.k,
        r_true: Some(config.rank()),
        seed: config.seed,
        generator_config: Some(serde_json::to_value(&config)?),
    };
    write_dataset(&dir, &meta, &data.noisy, Some(&data.truth))?;

    let back = read_dataset(&dir)?;
    assert_eq!(back.data, data.noisy);
    println!("wrote {}x{}x{} tensor to {}", meta.i, meta.j, meta.k, dir.display());
    for (r, c) in config.concepts.iter().enumerate() {
        let strength: Vec<String> = c.strength.sequence(config.k).iter().map(|s| format!("{s:.2}")).collect();
        println!("concept {r} ({:?}): {}", c.drift.kind, strength.join(" "));
    }
    let noise = data.noisy.slices().iter().zip(data.clean.slices()).map(|(n, c)| (n - c).norm_squared()).sum::<f64>();
    println!("noise ratio {:.12}", noise.sqrt() / data.clean.norm());
    Ok(())
}
