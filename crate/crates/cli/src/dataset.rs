//! Signals named by a dataset spec, plus reference gradients where known.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xfnf_core::io::{load_volume, save_volume, GridSignal};
use xfnf_core::synth::{generate_sequence, ToySequence, ToySequenceConfig};

use crate::config::DatasetSpec;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

/// Index of a synthesized sequence: one field volume and one gradient volume per timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ToySequenceConfig,
    /// Paths relative to the manifest directory.
    pub fields: Vec<PathBuf>,
    pub gradients: Vec<PathBuf>,
}

pub struct Dataset {
    pub name: String,
    pub signals: Vec<GridSignal>,
    /// Point-major `[N, C, d]` reference gradients in physical units.
    pub gradients: Vec<Option<Vec<f64>>>,
}

impl Dataset {
    pub fn from_sequence(seq: &ToySequence) -> CliResult<Self> {
        let grid = seq.to_grid()?;
        let t = seq.config.timesteps;
        Ok(Self {
            name: seq.config.transform.name().to_string(),
            signals: (0..t).map(|k| grid.select(0, k)).collect::<Result<_, _>>()?,
            gradients: (0..t).map(|k| Some(seq.grads(k).to_vec())).collect(),
        })
    }

    pub fn load(spec: &DatasetSpec) -> CliResult<Self> {
        match spec {
            DatasetSpec::Toy(toy) => Self::from_sequence(&generate_sequence(&toy.sequence_config())?),
            DatasetSpec::Manifest(path) => Self::from_manifest(path),
            DatasetSpec::Volumes(paths) => {
                if paths.is_empty() {
                    return Err(CliError::Config("dataset lists no volumes".into()));
                }
                let signals = paths.iter().map(|p| load_volume(p)).collect::<Result<Vec<_>, _>>()?;
                Ok(Self {
                    name: paths[0]
                        .file_stem()
                        .map_or_else(|| "volumes".into(), |s| s.to_string_lossy().into_owned()),
                    gradients: vec![None; signals.len()],
                    signals,
                })
            }
        }
    }

    fn from_manifest(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let signals = m.fields.iter().map(|p| load_volume(&dir.join(p))).collect::<Result<Vec<_>, _>>()?;
        let gradients = m
            .gradients
            .iter()
            .map(|p| load_volume(&dir.join(p)).map(|g| Some(g.point_major())))
            .collect::<Result<Vec<_>, _>>()?;
        if gradients.len() != signals.len() {
            return Err(CliError::Data(format!(
                "manifest lists {} fields but {} gradient volumes",
                signals.len(),
                gradients.len()
            )));
        }
        Ok(Self {
            name: m.config.transform.name().to_string(),
            signals,
            gradients,
        })
    }

    pub fn signal(&self, index: usize) -> CliResult<&GridSignal> {
        self.signals.get(index).ok_or_else(|| {
            CliError::Config(format!("signal {index} requested but the dataset has {}", self.signals.len()))
        })
    }
}

/// Write a sequence as per-timestep volumes plus a manifest; returns the manifest path.
pub fn write_sequence(seq: &ToySequence, dir: &Path) -> CliResult<PathBuf> {
    fs::create_dir_all(dir)?;
    let grid = seq.to_grid()?;
    let mut manifest = Manifest {
        config: seq.config.clone(),
        fields: Vec::new(),
        gradients: Vec::new(),
    };
    for t in 0..seq.config.timesteps {
        let field = PathBuf::from(format!("field_t{t}"));
        let grad = PathBuf::from(format!("grad_t{t}"));
        save_volume(&grid.select(0, t)?, &dir.join(&field))?;
        save_volume(&seq.grad_grid(t)?, &dir.join(&grad))?;
        manifest.fields.push(field.with_extension("json"));
        manifest.gradients.push(grad.with_extension("json"));
    }
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}
