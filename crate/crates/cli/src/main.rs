//! `xfnf`: generate toy data, pretrain, fit, evaluate and report.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

mod commands;
mod config;
mod dataset;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xfnf_core::fields::Arch;
use xfnf_core::synth::Transform;
use xfnf_core::transfer::LossKind;

use config::{parse_grid, parse_list, DatasetSpec, ExperimentConfig, InitMode, ToySpec};
use dataset::Dataset;
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "xfnf", version, about = "Transferable neural fields: pretrain once, fit new signals faster")]
struct Cli {
    /// Worker threads for independent fits.
    #[arg(long, env = "XFNF_THREADS", default_value_t = 1, global = true)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a toy Schwefel sequence as volumes plus a manifest.
    Synth(SynthArgs),
    /// Jointly pretrain an encoder on the pretraining signals.
    Pretrain(PretrainArgs),
    /// Fit the target signal for every init mode and seed.
    Fit(FitArgs),
    /// Evaluate a checkpoint against one signal.
    Eval(EvalArgs),
    /// Summarize completed runs into tables and curves.
    Report(ReportArgs),
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Toy transform: rotation, warp, gaussian or wave.
    #[arg(long)]
    transform: Option<Transform>,
    /// Toy grid as HxW.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    /// Toy timestep count.
    #[arg(long, alias = "T")]
    timesteps: Option<usize>,
    /// Manifest written by `xfnf synth`.
    #[arg(long, conflicts_with_all = ["transform", "volumes"])]
    manifest: Option<PathBuf>,
    /// Comma-separated volume descriptors, one signal each.
    #[arg(long)]
    volumes: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct TrainArgs {
    #[arg(long)]
    arch: Option<Arch>,
    /// Size the architecture to signal scalars / ratio parameters.
    #[arg(long)]
    compression: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    pretrain_iters: Option<usize>,
    /// Comma-separated pretraining signal indices.
    #[arg(long)]
    signals: Option<String>,
    #[arg(long)]
    target: Option<usize>,
    /// Comma-separated PSNR thresholds.
    #[arg(long)]
    thresholds: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Stop once PSNR reaches this value.
    #[arg(long)]
    stop_at_psnr: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct PretrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// `joint` (all pretraining signals) or `t0` (the first one).
    #[arg(long, default_value = "joint")]
    mode: String,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Comma-separated init modes.
    #[arg(long)]
    init: Option<String>,
    /// Train only the decoder.
    #[arg(long)]
    freeze_encoder: bool,
    /// Comma-separated iterations at which slice images are written.
    #[arg(long)]
    snapshots: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Decoder checkpoint when `--checkpoint` holds only an encoder.
    #[arg(long)]
    decoder: Option<PathBuf>,
    /// Signal index; the config's target by default.
    #[arg(long)]
    signal: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding completed runs.
    runs: PathBuf,
}

fn list<T: std::str::FromStr>(s: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    parse_list(s).map_err(CliError::Config)
}

fn experiment(data: &DataArgs, train: &TrainArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match (&data.config, &data.manifest, &data.volumes, data.transform) {
        (Some(path), ..) => ExperimentConfig::load(path)?,
        (None, Some(m), ..) => ExperimentConfig::for_dataset(DatasetSpec::Manifest(m.clone())),
        (None, None, Some(v), _) => ExperimentConfig::for_dataset(DatasetSpec::Volumes(list(v)?)),
        (None, None, None, Some(t)) => ExperimentConfig::for_dataset(DatasetSpec::Toy(ToySpec {
            transform: t,
            grid: (128, 128),
            timesteps: 6,
            schedules: None,
        })),
        _ => {
            return Err(CliError::Config(
                "no dataset: pass --config, --transform, --manifest or --volumes".into(),
            ))
        }
    };
    if data.config.is_some() {
        if let Some(m) = &data.manifest {
            cfg.dataset = DatasetSpec::Manifest(m.clone());
        } else if let Some(v) = &data.volumes {
            cfg.dataset = DatasetSpec::Volumes(list(v)?);
        }
    }
    if data.transform.is_some() || data.grid.is_some() || data.timesteps.is_some() {
        match &mut cfg.dataset {
            DatasetSpec::Toy(toy) => {
                if let Some(t) = data.transform {
                    toy.transform = t;
                }
                if let Some(g) = data.grid {
                    toy.grid = g;
                }
                if let Some(t) = data.timesteps {
                    toy.timesteps = t;
                }
            }
            _ => return Err(CliError::Config("--transform, --grid and --timesteps need a toy dataset".into())),
        }
    }
    if let Some(out) = &data.out {
        cfg.output = out.clone();
    }

    if let Some(a) = train.arch {
        if cfg.arch.arch() != a {
            cfg.arch = a.default_config();
        }
    }
    if let Some(r) = train.compression {
        cfg.compression_ratio = Some(r);
    }
    let t = &mut cfg.train;
    if let Some(v) = train.lr {
        t.lr = v;
    }
    if let Some(v) = train.iters {
        t.iters = v;
    }
    if let Some(v) = train.batch {
        t.batch = v;
    }
    if let Some(v) = train.loss {
        t.loss = v;
    }
    if let Some(v) = train.eval_every {
        t.eval_every = v;
    }
    if let Some(v) = train.stop_at_psnr {
        t.stop_at_psnr = Some(v);
    }
    if let Some(v) = train.pretrain_iters {
        cfg.pretrain_iters = Some(v);
    }
    if let Some(s) = &train.signals {
        cfg.pretrain_signals = list(s)?;
    }
    if let Some(v) = train.target {
        cfg.target_signal = v;
    }
    if let Some(s) = &train.thresholds {
        cfg.thresholds = list(s)?;
    }
    if let Some(s) = &train.seeds {
        cfg.seeds = list(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(args) => {
            let cfg = experiment(&args.data, &TrainArgs::default())?;
            let DatasetSpec::Toy(toy) = &cfg.dataset else {
                return Err(CliError::Config("synth needs a toy dataset (--transform or a toy config)".into()));
            };
            let out = args.data.out.clone().unwrap_or_else(|| cfg.output.join("data"));
            let manifest = commands::cmd_synth(&toy.sequence_config(), &out)?;
            println!("{}", manifest.display());
        }
        Command::Pretrain(args) => {
            let cfg = experiment(&args.data, &args.train)?;
            let mode: InitMode = format!("pretrain:{}", args.mode).parse()?;
            if !matches!(mode, InitMode::PretrainJoint | InitMode::PretrainT0) {
                return Err(CliError::Config(format!("--mode must be joint or t0, got {}", args.mode)));
            }
            let data = Dataset::load(&cfg.dataset)?;
            let (run, dir) = commands::cmd_pretrain(&cfg, &data, &mode)?;
            let psnr = run.final_eval().map_or(f64::NAN, |e| e.psnr);
            println!("{} ({} iterations, mean PSNR {psnr:.2} dB)", dir.display(), run.iterations);
        }
        Command::Fit(args) => {
            let mut cfg = experiment(&args.data, &args.train)?;
            if let Some(s) = &args.init {
                cfg.init = list(s)?;
            }
            if let Some(s) = &args.snapshots {
                cfg.snapshots = list(s)?;
            }
            cfg.train.freeze_encoder |= args.freeze_encoder;
            cfg.validate()?;
            let data = Dataset::load(&cfg.dataset)?;
            let out = commands::cmd_fit(&cfg, &data, cli.threads)?;
            for r in &out.records {
                let crossings: Vec<String> =
                    r.crossings.iter().map(|(k, v)| format!("{k}: {}", v.map_or("-".into(), |i| i.to_string()))).collect();
                println!("{} seed {}: {}", r.init, r.seed, crossings.join(", "));
            }
            println!("{}\n{}", out.csv.display(), out.summary.display());
        }
        Command::Eval(args) => {
            let cfg = experiment(&args.data, &TrainArgs::default())?;
            let data = Dataset::load(&cfg.dataset)?;
            let model = commands::load_model(&args.checkpoint, args.decoder.as_deref())?;
            let out = commands::cmd_eval(&model, &data, args.signal.unwrap_or(cfg.target_signal))?;
            println!("{}", serde_json::to_string_pretty(&out).map_err(|e| CliError::Data(e.to_string()))?);
        }
        Command::Report(args) => {
            let files = report::cmd_report(&args.runs)?;
            println!("{}", files.markdown.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xfnf: {e}");
            e.exit_code()
        }
    }
}
