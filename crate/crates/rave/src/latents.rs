//! Raw latent dumps from `rave invert`: `latent_%04d.f64` files holding
//! little-endian `f64` values in `[y][x][c]` order, plus `inversion.json`.

use std::fs;
use std::path::{Path, PathBuf};

use rave_core::grid::Permutation;
use rave_core::sampler::{AdapterIds, EditConfig};
use rave_core::{Shape, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INVERSION_MANIFEST: &str = "inversion.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionManifest {
    pub config: EditConfig,
    pub adapters: AdapterIds,
    pub frames: usize,
    /// Latent count including grid padding.
    pub padded_frames: usize,
    pub latent_shape: Shape,
    pub terminal_timestep: usize,
    pub permutations: Vec<Permutation>,
    pub files: Vec<String>,
}

pub fn latent_name(index: usize) -> String {
    format!("latent_{index:04}.f64")
}

pub fn write_latent(path: &Path, latent: &Tensor) -> Result<()> {
    let bytes: Vec<u8> = latent.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn read_latent(path: &Path, shape: Shape) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    if bytes.len() != shape.len() * 8 {
        return Err(Error::Format(format!(
            "{} holds {} bytes, expected {} for {shape}",
            path.display(),
            bytes.len(),
            shape.len() * 8
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Tensor::from_vec(shape, data)?)
}

/// Writes every latent and the manifest into `dir`.
pub fn write_inversion<'a>(
    dir: &Path,
    manifest: &InversionManifest,
    latents: impl IntoIterator<Item = &'a Tensor>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    for (name, latent) in manifest.files.iter().zip(latents) {
        write_latent(&dir.join(name), latent)?;
    }
    let path = dir.join(INVERSION_MANIFEST);
    let text = serde_json::to_string_pretty(manifest).map_err(Error::json(&path))?;
    fs::write(&path, text + "\n").map_err(Error::io(&path))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latent_bytes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let shape = Shape::new(2, 3, 4);
        let t = Tensor::from_fn(shape, |y, x, c| {
            (y as f64 - 0.3) * 1e-7 + x as f64 * 3.7 - c as f64
        });
        let path = dir.path().join(latent_name(0));
        write_latent(&path, &t).unwrap();
        assert_eq!(read_latent(&path, shape).unwrap(), t);
        assert!(read_latent(&path, Shape::new(1, 1, 1)).is_err());
    }
}
