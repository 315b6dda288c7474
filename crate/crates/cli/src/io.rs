//! Reading and writing single tensors as CTNS or PPM, chosen by extension.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use coopforge::domains::{decode_ppm, save_ppm};
use coopforge::tensor::ctns;
use coopforge::{Scalar, Tensor};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Ctns,
    Ppm,
}

fn format_of(path: &Path) -> Option<Format> {
    match path.extension()?.to_str()? {
        "ctns" => Some(Format::Ctns),
        "ppm" | "pgm" => Some(Format::Ppm),
        _ => None,
    }
}

pub fn read_tensor(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let t = match format_of(path) {
        Some(Format::Ppm) => decode_ppm(&bytes)?,
        Some(Format::Ctns) if bytes.get(5) == Some(&<f64 as Scalar>::DTYPE) => ctns::decode::<f64>(&bytes)?.cast(),
        Some(Format::Ctns) => ctns::decode::<f32>(&bytes)?,
        None => bail!("{}: expected a .ctns, .ppm or .pgm file", path.display()),
    };
    Ok(t)
}

pub fn write_tensor(path: &Path, t: &Tensor<f32>) -> Result<()> {
    match format_of(path) {
        Some(Format::Ctns) => ctns::save(t, path)?,
        Some(Format::Ppm) => save_ppm(t, path)?,
        None => bail!("{}: output must end in .ctns, .ppm or .pgm", path.display()),
    }
    Ok(())
}

/// Frame files of a sequence directory, in name order.
pub fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| format_of(p).is_some())
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("{}: no .ctns or .ppm frames", dir.display());
    }
    Ok(files)
}
