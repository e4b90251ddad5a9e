//! Raw little-endian `float32` volumes with a JSON sidecar descriptor.
//!
//! `<name>.f32` holds the variables back to back, each row-major over `dims`.
//! `<name>.json` describes the payload.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grid::{Channel, GridSignal, NormMeta};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeDescriptor {
    pub dims: Vec<usize>,
    pub axes: Vec<String>,
    pub variables: Vec<String>,
    pub spacing: Vec<f64>,
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<Vec<NormMeta>>,
}

/// Payload and sidecar paths for a volume, accepting either file or the bare stem.
pub fn volume_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("f32") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut data = stem.clone().into_os_string();
    data.push(".f32");
    let mut side = stem.into_os_string();
    side.push(".json");
    (PathBuf::from(data), PathBuf::from(side))
}

pub fn load_volume(path: &Path) -> Result<GridSignal> {
    let (data_path, side_path) = volume_paths(path);
    if !side_path.exists() {
        return Err(Error::MissingSidecar(side_path));
    }
    let desc: VolumeDescriptor = serde_json::from_slice(&fs::read(&side_path)?)?;
    let dtype = desc.dtype.to_ascii_lowercase();
    if dtype != "float32" && dtype != "f32" {
        return Err(Error::UnknownDtype(desc.dtype));
    }
    let bytes = fs::read(&data_path)?;
    let n: usize = desc.dims.iter().product();
    let expected = (n * desc.variables.len() * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let variables = desc
        .variables
        .iter()
        .enumerate()
        .map(|(j, name)| Channel {
            name: name.clone(),
            data: values[j * n..(j + 1) * n].to_vec(),
        })
        .collect();
    let mut grid = GridSignal::new(desc.dims, desc.axes, desc.spacing, variables)?;
    grid.set_norm(desc.norm);
    Ok(grid)
}

/// Write `grid` as float32; values are rounded to the nearest `f32`.
pub fn save_volume(grid: &GridSignal, path: &Path) -> Result<()> {
    let (data_path, side_path) = volume_paths(path);
    if let Some(parent) = data_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut bytes = Vec::with_capacity(grid.n_points() * grid.n_vars() * 4);
    for v in grid.variables() {
        for &x in &v.data {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    fs::write(&data_path, bytes)?;
    let desc = VolumeDescriptor {
        dims: grid.dims().to_vec(),
        axes: grid.axes().to_vec(),
        variables: grid.variables().iter().map(|c| c.name.clone()).collect(),
        spacing: grid.spacing().to_vec(),
        dtype: "float32".into(),
        norm: grid.norm().map(|n| n.to_vec()),
    };
    fs::write(&side_path, serde_json::to_vec_pretty(&desc)?)?;
    Ok(())
}
