//! On-disk dataset layout.
//!
//! ```text
//! <dir>/meta.json     {"I", "J", "K", "R_true"?, "seed", "generator_config"?}
//! <dir>/slices.bin    K·I·J little-endian f64, slice-major then row-major
//! <dir>/truth/A.bin   I·R   row-major
//! <dir>/truth/B.bin   K·J·R slice-major then row-major
//! <dir>/truth/D.bin   K·R   row-major
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{Parafac2Factors, TensorSlices};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabMeta {
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "R_true", default, skip_serializing_if = "Option::is_none")]
    pub r_true: Option<usize>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_config: Option<serde_json::Value>,
}

#[derive(Debug, Clone)]
pub struct SlabDataset {
    pub meta: SlabMeta,
    pub data: TensorSlices,
    pub truth: Option<Parafac2Factors>,
}

fn write_f64s(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(f64::to_le_bytes).collect();
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 8 {
        return Err(Error::Shape(format!(
            "{} holds {} bytes, expected {} ({} floats)",
            path.display(),
            bytes.len(),
            expected * 8,
            expected
        )));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

fn row_major(m: &Mat) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

pub fn write_tensor(path: &Path, data: &TensorSlices) -> Result<()> {
    write_f64s(path, data.slices().iter().flat_map(row_major))
}

pub fn read_tensor(path: &Path, i: usize, j: usize, k: usize) -> Result<TensorSlices> {
    let raw = read_f64s(path, i * j * k)?;
    TensorSlices::new(raw.chunks_exact(i * j).map(|c| Mat::from_row_slice(i, j, c)).collect())
}

/// Writes `A.bin`, `B.bin`, `D.bin` into `dir`.
pub fn write_factors(dir: &Path, f: &Parafac2Factors) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_f64s(&dir.join("A.bin"), row_major(&f.a))?;
    write_f64s(&dir.join("B.bin"), f.b.iter().flat_map(row_major))?;
    write_f64s(&dir.join("D.bin"), f.d.iter().flat_map(|d| d.iter().copied()))?;
    Ok(())
}

pub fn read_factors(dir: &Path, i: usize, j: usize, k: usize, r: usize) -> Result<Parafac2Factors> {
    let a = Mat::from_row_slice(i, r, &read_f64s(&dir.join("A.bin"), i * r)?);
    let b = read_f64s(&dir.join("B.bin"), k * j * r)?
        .chunks_exact(j * r)
        .map(|c| Mat::from_row_slice(j, r, c))
        .collect();
    let d = read_f64s(&dir.join("D.bin"), k * r)?.chunks_exact(r).map(Vector::from_row_slice).collect();
    Parafac2Factors::new(a, b, d)
}

/// Writes a dataset directory, creating it if needed.
pub fn write_dataset(dir: &Path, meta: &SlabMeta, data: &TensorSlices, truth: Option<&Parafac2Factors>) -> Result<()> {
    if (meta.i, meta.j, meta.k) != (data.i(), data.j(), data.k()) {
        return Err(Error::Shape("meta dimensions disagree with the tensor".into()));
    }
    fs::create_dir_all(dir)?;
    let mut meta = meta.clone();
    if let Some(t) = truth {
        t.check_against(data)?;
        meta.r_true = Some(t.rank());
        write_factors(&dir.join("truth"), t)?;
    }
    fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    write_tensor(&dir.join("slices.bin"), data)?;
    Ok(())
}

/// Reads a dataset; truth is loaded when `truth/` exists and `R_true` is set.
pub fn read_dataset(dir: &Path) -> Result<SlabDataset> {
    let meta: SlabMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
    let data = read_tensor(&dir.join("slices.bin"), meta.i, meta.j, meta.k)?;
    let truth_dir = dir.join("truth");
    let truth = match meta.r_true {
        Some(r) if truth_dir.is_dir() => Some(read_factors(&truth_dir, meta.i, meta.j, meta.k, r)?),
        _ => None,
    };
    Ok(SlabDataset { meta, data, truth })
}
