//! Versioned JSON experiment config. Command-line flags override file values.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use xfnf_core::fields::{Arch, ArchConfig};
use xfnf_core::synth::{Schedules, ToySequenceConfig, Transform};
use xfnf_core::transfer::TrainConfig;

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySpec {
    pub transform: Transform,
    #[serde(default = "default_grid")]
    pub grid: (usize, usize),
    #[serde(default = "default_timesteps")]
    pub timesteps: usize,
    #[serde(default)]
    pub schedules: Option<Schedules>,
}

fn default_grid() -> (usize, usize) {
    (128, 128)
}

fn default_timesteps() -> usize {
    6
}

impl ToySpec {
    pub fn sequence_config(&self) -> ToySequenceConfig {
        let mut c = ToySequenceConfig::new(self.transform)
            .with_grid(self.grid.0, self.grid.1)
            .with_timesteps(self.timesteps);
        if let Some(s) = self.schedules {
            c.schedules = s;
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Generated in memory; analytic gradients available.
    Toy(ToySpec),
    /// Manifest written by `xfnf synth`.
    Manifest(PathBuf),
    /// One signal per volume descriptor.
    Volumes(Vec<PathBuf>),
}

/// How the encoder of a transfer fit is initialized.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum InitMode {
    Random,
    /// Pretrained on the first pretraining signal alone.
    PretrainT0,
    /// Pretrained jointly on every pretraining signal.
    PretrainJoint,
    /// Encoder read from a checkpoint.
    PretrainPath(PathBuf),
}

impl InitMode {
    /// Directory-safe label.
    pub fn label(&self) -> String {
        match self {
            InitMode::Random => "random".into(),
            InitMode::PretrainT0 => "pretrain_t0".into(),
            InitMode::PretrainJoint => "pretrain_joint".into(),
            InitMode::PretrainPath(p) => {
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let clean: String = stem
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
                    .collect();
                format!("pretrain_path_{clean}")
            }
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitMode::Random => f.write_str("random"),
            InitMode::PretrainT0 => f.write_str("pretrain:t0"),
            InitMode::PretrainJoint => f.write_str("pretrain:joint"),
            InitMode::PretrainPath(p) => write!(f, "pretrain:path={}", p.display()),
        }
    }
}

impl FromStr for InitMode {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim() {
            "random" => Ok(InitMode::Random),
            "pretrain:t0" => Ok(InitMode::PretrainT0),
            "pretrain:joint" => Ok(InitMode::PretrainJoint),
            other => match other.strip_prefix("pretrain:path=") {
                Some(p) if !p.is_empty() => Ok(InitMode::PretrainPath(PathBuf::from(p))),
                _ => Err(CliError::Config(format!(
                    "unknown init mode `{other}` (expected random, pretrain:t0, pretrain:joint or pretrain:path=FILE)"
                ))),
            },
        }
    }
}

impl Serialize for InitMode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InitMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "version")]
    pub version: u32,
    pub dataset: DatasetSpec,
    #[serde(default = "default_arch")]
    pub arch: ArchConfig,
    /// Resize `arch` to `target scalars / ratio` parameters.
    #[serde(default)]
    pub compression_ratio: Option<f64>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Pretraining schedule; `train` with its own iteration count when absent.
    #[serde(default)]
    pub pretrain_iters: Option<usize>,
    #[serde(default = "default_init")]
    pub init: Vec<InitMode>,
    #[serde(default = "default_pretrain_signals")]
    pub pretrain_signals: Vec<usize>,
    #[serde(default = "default_target")]
    pub target_signal: usize,
    /// PSNR thresholds in dB.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Iterations at which fits write slice images.
    #[serde(default)]
    pub snapshots: Vec<usize>,
}

fn version() -> u32 {
    CONFIG_VERSION
}

fn default_arch() -> ArchConfig {
    Arch::Siren.default_config()
}

fn default_init() -> Vec<InitMode> {
    vec![InitMode::Random, InitMode::PretrainJoint]
}

fn default_pretrain_signals() -> Vec<usize> {
    (0..5).collect()
}

fn default_target() -> usize {
    5
}

fn default_thresholds() -> Vec<f64> {
    vec![30.0, 40.0, 50.0]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn for_dataset(dataset: DatasetSpec) -> Self {
        Self {
            version: CONFIG_VERSION,
            dataset,
            arch: default_arch(),
            compression_ratio: None,
            train: TrainConfig::default(),
            pretrain_iters: None,
            init: default_init(),
            pretrain_signals: default_pretrain_signals(),
            target_signal: default_target(),
            thresholds: default_thresholds(),
            seeds: default_seeds(),
            output: default_output(),
            snapshots: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.thresholds.is_empty() {
            return Err(CliError::Config("thresholds must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        if self.init.is_empty() {
            return Err(CliError::Config("init must list at least one mode".into()));
        }
        self.train.validate()?;
        Ok(())
    }

    /// The training schedule shared by every fit, with the experiment thresholds.
    pub fn fit_schedule(&self) -> TrainConfig {
        TrainConfig {
            thresholds: self.thresholds.clone(),
            ..self.train.clone()
        }
    }

    pub fn pretrain_schedule(&self) -> TrainConfig {
        let fit = self.fit_schedule();
        let iters = self.pretrain_iters.unwrap_or(fit.iters);
        TrainConfig {
            iters,
            eval_every: fit.eval_every.min(iters.max(1)),
            stop_at_psnr: None,
            min_iters: 0,
            freeze_encoder: false,
            ..fit
        }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Parse `a,b,c` into a list.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

/// Parse `HxW`.
pub fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((p(h)?, p(w)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_modes_round_trip() {
        for s in ["random", "pretrain:t0", "pretrain:joint", "pretrain:path=/tmp/enc.ckpt"] {
            let m: InitMode = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("pretrain:path=".parse::<InitMode>().is_err());
        assert!("warm".parse::<InitMode>().is_err());
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"dataset": {"toy": {"transform": "warp"}}}"#).unwrap();
        assert_eq!(c.version, CONFIG_VERSION);
        assert_eq!(c.target_signal, 5);
        assert_eq!(c.train.lr, 1e-4);
        assert_eq!(c.arch, Arch::Siren.default_config());
        c.validate().unwrap();
    }

    #[test]
    fn empty_lists_rejected() {
        let mut c = ExperimentConfig::for_dataset(DatasetSpec::Volumes(vec![]));
        c.seeds.clear();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let mut c = ExperimentConfig::for_dataset(DatasetSpec::Volumes(vec![]));
        c.thresholds.clear();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_fields_rejected() {
        let r: Result<ExperimentConfig, _> = serde_json::from_str(r#"{"dataset": {"volumes": []}, "lr": 1}"#);
        assert!(r.is_err());
    }

    #[test]
    fn grid_and_list_parsing() {
        assert_eq!(parse_grid("64x32").unwrap(), (64, 32));
        assert!(parse_grid("64").is_err());
        assert_eq!(parse_list::<u64>("0, 1,2").unwrap(), vec![0, 1, 2]);
    }
}
