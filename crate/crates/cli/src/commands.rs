use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use xfnf_core::fields::{size_to_budget, ArchConfig, FieldModel, ParamBlock};
use xfnf_core::io::{write_pgm, write_results, Checkpoint, GridSignal, ModelMeta, RunRecord, Slice2, DECODER, ENCODER, MODEL_META};
use xfnf_core::synth::{generate_sequence, ToySequenceConfig};
use xfnf_core::transfer::{PreparedSignal, SharedTrainer, TrainConfig, TrainRun};

use crate::config::{ExperimentConfig, InitMode};
use crate::dataset::{write_sequence, Dataset};
use crate::error::{CliError, CliResult};

pub const ENCODER_FILE: &str = "encoder.ckpt";
pub const MODEL_FILE: &str = "model.ckpt";

/// Architecture after optional sizing against `target`.
pub fn resolve_arch(cfg: &ExperimentConfig, target: &GridSignal) -> CliResult<ArchConfig> {
    let arch = match cfg.compression_ratio {
        Some(ratio) => size_to_budget(
            &cfg.arch,
            target.n_axes(),
            target.n_vars(),
            target.n_points() * target.n_vars(),
            ratio,
        )?,
        None => cfg.arch.clone(),
    };
    arch.validate(target.n_axes())?;
    Ok(arch)
}

pub fn cmd_synth(seq_config: &ToySequenceConfig, out: &Path) -> CliResult<PathBuf> {
    let seq = generate_sequence(seq_config)?;
    write_sequence(&seq, out)
}

fn model_meta(arch: &ArchConfig, in_dim: usize, out_dim: usize) -> ModelMeta {
    ModelMeta {
        config: arch.clone(),
        in_dim,
        out_dim,
    }
}

/// Which signals a pretraining mode uses.
pub fn pretrain_signals(cfg: &ExperimentConfig, mode: &InitMode) -> CliResult<Vec<usize>> {
    let all = &cfg.pretrain_signals;
    if all.is_empty() {
        return Err(CliError::Config("pretraining needs at least one signal (pretrain_signals is empty)".into()));
    }
    Ok(match mode {
        InitMode::PretrainT0 => vec![all[0]],
        _ => all.clone(),
    })
}

pub fn pretrain_dir(cfg: &ExperimentConfig, mode: &InitMode) -> PathBuf {
    cfg.output.join(mode.label())
}

/// Joint pretraining; writes the encoder, one decoder per signal and the trace.
pub fn cmd_pretrain(cfg: &ExperimentConfig, data: &Dataset, mode: &InitMode) -> CliResult<(TrainRun, PathBuf)> {
    let indices = pretrain_signals(cfg, mode)?;
    let target = data.signal(cfg.target_signal)?;
    let arch = resolve_arch(cfg, target)?;
    let signals = indices
        .iter()
        .map(|&i| PreparedSignal::new(data.signal(i)?, arch.arch()).map_err(CliError::from))
        .collect::<CliResult<Vec<_>>>()?;
    let schedule = cfg.pretrain_schedule();
    let (in_dim, out_dim) = (signals[0].in_dim(), signals[0].channels);
    let mut trainer = SharedTrainer::new(arch.clone(), in_dim, out_dim, signals.len(), None, schedule)?;
    let run = trainer.train(&signals)?;

    let dir = pretrain_dir(cfg, mode);
    std::fs::create_dir_all(&dir)?;
    let meta = model_meta(&arch, in_dim, out_dim);
    let mut enc = Checkpoint::new();
    enc.put_json(MODEL_META, &meta)?;
    enc.put_params(ENCODER, &run.encoder);
    enc.save(&dir.join(ENCODER_FILE))?;
    for (j, (dec, &i)) in run.decoders.iter().zip(&indices).enumerate() {
        let mut c = Checkpoint::new();
        c.put_json(MODEL_META, &meta)?;
        c.put_params(DECODER, dec);
        c.save(&dir.join(format!("decoder_{j}_signal{i}.ckpt")))?;
    }
    let record = run.to_record(arch.arch().name(), &mode.to_string(), &data.name, None);
    write_results(&[record], &dir, "pretrain")?;
    cfg.save(&dir.join("config.json"))?;
    Ok((run, dir))
}

/// Model from a checkpoint holding an encoder and/or decoder, with an optional
/// separate decoder file.
pub fn load_model(path: &Path, decoder: Option<&Path>) -> CliResult<FieldModel<f32>> {
    let c = Checkpoint::load(path)?;
    let meta: ModelMeta = c.json(MODEL_META)?;
    let mut model = FieldModel::<f32>::init(meta.config, meta.in_dim, meta.out_dim, 0)?;
    if !c.has_prefix(ENCODER) {
        return Err(CliError::Data(format!("{} holds no encoder", path.display())));
    }
    model.encoder = c.params_like(ENCODER, &model.encoder)?;
    let dec_ckpt = match decoder {
        Some(p) => Checkpoint::load(p)?,
        None => c,
    };
    if !dec_ckpt.has_prefix(DECODER) {
        return Err(CliError::Config(format!(
            "{} holds no decoder; pass --decoder",
            decoder.unwrap_or(path).display()
        )));
    }
    model.decoder = dec_ckpt.params_like(DECODER, &model.decoder)?;
    Ok(model)
}

/// Encoder for `mode`, pretraining when no checkpoint exists yet.
fn encoder_for(
    cfg: &ExperimentConfig,
    data: &Dataset,
    mode: &InitMode,
    arch: &ArchConfig,
    in_dim: usize,
    out_dim: usize,
) -> CliResult<Option<ParamBlock<f32>>> {
    let path = match mode {
        InitMode::Random => return Ok(None),
        InitMode::PretrainPath(p) => p.clone(),
        _ => {
            let p = pretrain_dir(cfg, mode).join(ENCODER_FILE);
            if !p.exists() {
                cmd_pretrain(cfg, data, mode)?;
            }
            p
        }
    };
    let c = Checkpoint::load(&path)?;
    let meta: ModelMeta = c.json(MODEL_META)?;
    if meta.config.arch() != arch.arch() {
        return Err(CliError::Data(format!(
            "{} holds a {} encoder, the experiment uses {}",
            path.display(),
            meta.config.arch(),
            arch.arch()
        )));
    }
    let mut template = FieldModel::<f32>::init(arch.clone(), in_dim, out_dim, 0)?;
    c.load_encoder_into(&mut template)?;
    Ok(Some(template.encoder))
}

struct Job {
    mode: usize,
    seed: u64,
    config: TrainConfig,
}

/// Normalized target slice over the last two axes at index 0 of the others.
fn slice_points(signal: &PreparedSignal) -> Option<(usize, usize)> {
    let d = signal.dims.len();
    (d >= 2).then(|| (signal.dims[d - 2], signal.dims[d - 1]))
}

fn write_slice(model: &FieldModel<f32>, signal: &PreparedSignal, path: &Path) -> CliResult<()> {
    let Some((rows, cols)) = slice_points(signal) else {
        return Ok(());
    };
    let d = signal.in_dim();
    let coords = xfnf_core::DenseArray::new(vec![rows * cols, d], signal.coords.data()[..rows * cols * d].to_vec())?;
    let out = model.forward(&coords)?;
    let c = signal.channels;
    let values = out.data().iter().step_by(c).map(|&v| v as f64).collect();
    write_pgm(path, &Slice2 { rows, cols, values }, -1.0, 1.0)?;
    Ok(())
}

fn write_truth_slice(signal: &PreparedSignal, path: &Path) -> CliResult<()> {
    let Some((rows, cols)) = slice_points(signal) else {
        return Ok(());
    };
    let values = signal.targets_f64.iter().step_by(signal.channels).take(rows * cols).copied().collect();
    write_pgm(path, &Slice2 { rows, cols, values }, -1.0, 1.0)?;
    Ok(())
}

pub struct FitOutcome {
    pub records: Vec<RunRecord>,
    pub csv: PathBuf,
    pub summary: PathBuf,
}

/// Fit the target signal once per init mode and seed, all under one schedule.
pub fn cmd_fit(cfg: &ExperimentConfig, data: &Dataset, threads: usize) -> CliResult<FitOutcome> {
    let target = data.signal(cfg.target_signal)?;
    let arch = resolve_arch(cfg, target)?;
    let signal = PreparedSignal::new(target, arch.arch())?;
    let (in_dim, out_dim) = (signal.in_dim(), signal.channels);
    let encoders = cfg
        .init
        .iter()
        .map(|m| encoder_for(cfg, data, m, &arch, in_dim, out_dim))
        .collect::<CliResult<Vec<_>>>()?;

    let schedule = cfg.fit_schedule();
    let jobs: Vec<Job> = (0..cfg.init.len())
        .flat_map(|mode| {
            let schedule = &schedule;
            cfg.seeds.iter().map(move |&seed| Job {
                mode,
                seed,
                config: TrainConfig { seed, ..schedule.clone() },
            })
        })
        .collect();
    if let Some(j) = jobs.iter().find(|j| !j.config.same_schedule(&jobs[0].config)) {
        return Err(CliError::Config(format!(
            "init mode {} would train with a different schedule",
            cfg.init[j.mode]
        )));
    }

    let fit_dir = cfg.output.join("fit");
    std::fs::create_dir_all(&fit_dir)?;
    write_truth_slice(&signal, &fit_dir.join("truth.pgm"))?;
    let mut snapshots: Vec<usize> = cfg.snapshots.iter().copied().filter(|&s| s <= schedule.iters).collect();
    snapshots.sort_unstable();
    snapshots.dedup();

    let run_job = |job: &Job| -> CliResult<RunRecord> {
        let mode = &cfg.init[job.mode];
        let dir = fit_dir.join(mode.label()).join(format!("seed{}", job.seed));
        std::fs::create_dir_all(&dir)?;
        let signals = std::slice::from_ref(&signal);
        let mut trainer =
            SharedTrainer::new(arch.clone(), in_dim, out_dim, 1, encoders[job.mode].as_ref(), job.config.clone())?;
        let mut run = trainer.new_run();
        for &s in &snapshots {
            trainer.train_until(signals, s, &mut run)?;
            write_slice(&trainer.model(0), &signal, &dir.join(format!("slice_iter{s}.pgm")))?;
        }
        trainer.train_until(signals, job.config.iters, &mut run)?;
        let model = run.model(0);
        let grad_rmse = match &data.gradients[cfg.target_signal] {
            Some(g) => Some(signal.gradient_rmse(&model, g)?),
            None => None,
        };
        let mut c = Checkpoint::new();
        c.put_model(&model)?;
        c.save(&dir.join(MODEL_FILE))?;
        let record = run.to_record(arch.arch().name(), &mode.to_string(), &data.name, grad_rmse);
        write_results(std::slice::from_ref(&record), &dir, "trace")?;
        Ok(record)
    };

    let results: Vec<Mutex<Option<CliResult<RunRecord>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                *results[i].lock().expect("result slot") = Some(run_job(job));
            });
        }
    });
    let records = results
        .into_iter()
        .map(|slot| slot.into_inner().expect("result slot").expect("every job ran"))
        .collect::<CliResult<Vec<_>>>()?;
    let (csv, summary) = write_results(&records, &fit_dir, "fit")?;
    cfg.save(&cfg.output.join("config.json"))?;
    Ok(FitOutcome { records, csv, summary })
}

#[derive(Debug, Serialize)]
pub struct EvalOutput {
    pub signal: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub rmse: Vec<f64>,
    pub grad_rmse: Option<f64>,
}

pub fn cmd_eval(model: &FieldModel<f32>, data: &Dataset, index: usize) -> CliResult<EvalOutput> {
    let grid = data.signal(index)?;
    if grid.n_axes() != model.in_dim || grid.n_vars() != model.out_dim {
        return Err(CliError::Data(format!(
            "model maps {} inputs to {} outputs; signal {index} has {} axes and {} variables",
            model.in_dim,
            model.out_dim,
            grid.n_axes(),
            grid.n_vars()
        )));
    }
    let signal = PreparedSignal::new(grid, model.arch())?;
    let report = signal.evaluate(model, 0)?;
    let grad_rmse = match &data.gradients[index] {
        Some(g) => Some(signal.gradient_rmse(model, g)?),
        None => None,
    };
    Ok(EvalOutput {
        signal: index,
        psnr: report.mean_psnr,
        ssim: report.mean_ssim,
        rmse: report.rmse,
        grad_rmse,
    })
}
