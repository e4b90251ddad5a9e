use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::normalize::{normalize_coords, normalize_outputs};
use super::optim::{adam_step, loss, loss_value, Moments, TrainConfig};
use super::sampler::{batch_rng, sample_batch};
use crate::autodiff::{DenseArray, Tape};
use crate::error::{Error, Result};
use crate::fields::{Arch, ArchConfig, FieldModel, ParamBlock};
use crate::io::{Checkpoint, GridSignal, NormMeta, RunRecord, TraceRow};
use crate::metrics::{self, MetricReport};

/// A signal in training form: normalized coordinates and targets.
#[derive(Clone, Debug)]
pub struct PreparedSignal {
    pub dims: Vec<usize>,
    /// `[N, d]` in the architecture's coordinate range.
    pub coords: DenseArray<f32>,
    /// Point-major `[N, C]`, normalized to `[-1, 1]`.
    pub targets: Vec<f32>,
    pub targets_f64: Vec<f64>,
    pub channels: usize,
    pub norm: Vec<NormMeta>,
    /// Physical length `(n - 1) * spacing` of each axis.
    pub extents: Vec<f64>,
    pub arch: Arch,
}

impl PreparedSignal {
    pub fn new(grid: &GridSignal, arch: Arch) -> Result<Self> {
        Self::slice_of(grid, arch, None)
    }

    /// Points of `grid` with `axis == index`, keeping coordinates of the full grid
    /// so the fixed axis stays an input dimension.
    pub fn slice_of(grid: &GridSignal, arch: Arch, pick: Option<(usize, usize)>) -> Result<Self> {
        if grid.n_points() == 0 {
            return Err(Error::EmptyGrid);
        }
        let coords_all = normalize_coords(grid, arch);
        let d = grid.n_axes();
        let (source, keep): (GridSignal, Vec<usize>) = match pick {
            None => (grid.clone(), (0..grid.n_points()).collect()),
            Some((axis, index)) => {
                let sub = grid.slice_axis(axis, index..index + 1)?;
                let strides = grid.strides();
                let keep = (0..grid.n_points())
                    .filter(|&p| (p / strides[axis]) % grid.dims()[axis] == index)
                    .collect();
                (sub, keep)
            }
        };
        let (normalized, norm) = normalize_outputs(&source)?;
        let targets_f64 = normalized.point_major();
        let mut coords = Vec::with_capacity(keep.len() * d);
        for &p in &keep {
            coords.extend(coords_all.data()[p * d..(p + 1) * d].iter().map(|&v| v as f32));
        }
        Ok(Self {
            dims: source.dims().to_vec(),
            coords: DenseArray::new(vec![keep.len(), d], coords)?,
            targets: targets_f64.iter().map(|&v| v as f32).collect(),
            targets_f64,
            channels: source.n_vars(),
            norm,
            extents: grid
                .dims()
                .iter()
                .zip(grid.spacing())
                .map(|(&n, &h)| (n.saturating_sub(1)) as f64 * h)
                .collect(),
            arch,
        })
    }

    pub fn n_points(&self) -> usize {
        self.coords.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.coords.shape()[1]
    }

    fn gather(&self, idx: &[u32]) -> Result<(DenseArray<f32>, DenseArray<f32>)> {
        let (d, c) = (self.in_dim(), self.channels);
        let mut x = Vec::with_capacity(idx.len() * d);
        let mut y = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            let i = i as usize;
            x.extend_from_slice(&self.coords.data()[i * d..(i + 1) * d]);
            y.extend_from_slice(&self.targets[i * c..(i + 1) * c]);
        }
        Ok((DenseArray::new(vec![idx.len(), d], x)?, DenseArray::new(vec![idx.len(), c], y)?))
    }

    /// Full-grid metrics of `model` against the normalized targets.
    pub fn evaluate(&self, model: &FieldModel<f32>, iteration: usize) -> Result<MetricReport> {
        let pred: Vec<f64> = model.forward(&self.coords)?.data().iter().map(|&v| v as f64).collect();
        MetricReport::evaluate(iteration, &pred, &self.targets_f64, &self.dims, self.channels)
    }

    /// RMSE between model and reference gradients of the normalized field with
    /// respect to coordinates in `[-1, 1]` along every axis with more than one sample.
    ///
    /// `truth` is point-major `[N, C, d]` in physical units per axis.
    pub fn gradient_rmse(&self, model: &FieldModel<f32>, truth: &[f64]) -> Result<f64> {
        let (n, c, d) = (self.n_points(), self.channels, self.in_dim());
        if truth.len() != n * c * d {
            return Err(Error::ShapeMismatch {
                op: "gradient_rmse",
                shapes: vec![vec![truth.len()], vec![n, c, d]],
            });
        }
        let g = model.input_gradient(&self.coords)?;
        let (lo, hi) = self.arch.coord_range();
        let coord_scale = (hi - lo) / 2.0;
        let axes: Vec<usize> = (0..d).filter(|&k| self.extents[k] > 0.0).collect();
        let mut pred = Vec::with_capacity(n * c * axes.len());
        let mut reference = Vec::with_capacity(pred.capacity());
        for p in 0..n {
            for ch in 0..c {
                let m = &self.norm[ch];
                let value_scale = if m.constant { 0.0 } else { 2.0 / (m.max - m.min) };
                for &k in &axes {
                    let i = (p * c + ch) * d + k;
                    pred.push(g.data()[i] as f64 * coord_scale);
                    reference.push(truth[i] * self.extents[k] / 2.0 * value_scale);
                }
            }
        }
        metrics::gradient_rmse(&pred, &reference)
    }
}

/// Metrics of one evaluation, averaged over signals and variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub per_signal_psnr: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub arch: ArchConfig,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Training loss of the step ending at each evaluated iteration.
    pub loss_trace: Vec<(usize, f64)>,
    pub metric_trace: Vec<EvalPoint>,
    /// PSNR threshold to first crossing iteration.
    pub crossings: Vec<(f64, Option<usize>)>,
    pub encoder: ParamBlock<f32>,
    pub decoders: Vec<ParamBlock<f32>>,
    pub iterations: usize,
    pub stopped_early: bool,
    pub rng_word_pos: u128,
}

impl TrainRun {
    pub fn model(&self, signal: usize) -> FieldModel<f32> {
        FieldModel {
            config: self.arch.clone(),
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            encoder: self.encoder.clone(),
            decoder: self.decoders[signal].clone(),
        }
    }

    pub fn psnr_trace(&self) -> Vec<(usize, f64)> {
        self.metric_trace.iter().map(|e| (e.iteration, e.psnr)).collect()
    }

    pub fn crossing(&self, threshold: f64) -> Option<usize> {
        metrics::iterations_to_threshold(&self.psnr_trace(), threshold).ok().flatten()
    }

    /// Mean PSNR at the last evaluation not after `iteration`.
    pub fn psnr_at(&self, iteration: usize) -> Option<f64> {
        self.metric_trace.iter().rev().find(|e| e.iteration <= iteration).map(|e| e.psnr)
    }

    pub fn final_eval(&self) -> Option<&EvalPoint> {
        self.metric_trace.last()
    }

    /// Long-format record for results export.
    pub fn to_record(&self, model: &str, init: &str, dataset: &str, grad_rmse: Option<f64>) -> RunRecord {
        let losses: BTreeMap<usize, f64> = self.loss_trace.iter().copied().collect();
        let last = self.metric_trace.last().map(|e| e.iteration);
        let rows = self
            .metric_trace
            .iter()
            .map(|e| TraceRow {
                iteration: e.iteration,
                loss: losses.get(&e.iteration).copied(),
                psnr: Some(e.psnr),
                ssim: e.ssim.is_finite().then_some(e.ssim),
                grad_rmse: if Some(e.iteration) == last { grad_rmse } else { None },
            })
            .collect();
        let mut final_metrics = BTreeMap::new();
        if let Some(e) = self.final_eval() {
            final_metrics.insert("psnr".to_string(), e.psnr);
            final_metrics.insert("ssim".to_string(), e.ssim);
            final_metrics.insert("iteration".to_string(), e.iteration as f64);
        }
        if let Some(g) = grad_rmse {
            final_metrics.insert("grad_rmse".to_string(), g);
        }
        RunRecord {
            model: model.to_string(),
            init: init.to_string(),
            dataset: dataset.to_string(),
            seed: self.config.seed,
            rows,
            crossings: self
                .crossings
                .iter()
                .map(|(t, c)| (format!("psnr>={t}"), *c))
                .collect(),
            final_metrics,
        }
    }
}

/// Shared encoder, one decoder per signal, and Adam state.
#[derive(Clone, Debug)]
pub struct SharedTrainer {
    template: FieldModel<f32>,
    decoders: Vec<ParamBlock<f32>>,
    enc_moments: Moments<f32>,
    dec_moments: Vec<Moments<f32>>,
    step: usize,
    rng: ChaCha8Rng,
    config: TrainConfig,
    exhaustive: bool,
}

#[derive(Serialize, Deserialize)]
struct TrainerMeta {
    arch: ArchConfig,
    in_dim: usize,
    out_dim: usize,
    signals: usize,
    step: usize,
    config: TrainConfig,
    exhaustive: bool,
    rng_seed: [u8; 32],
    rng_stream: u64,
    rng_word_pos: String,
}

const TRAINER_META: &str = "trainer";

impl SharedTrainer {
    /// Every decoder starts from the decoder drawn for `config.seed`.
    pub fn new(
        arch: ArchConfig,
        in_dim: usize,
        out_dim: usize,
        signals: usize,
        encoder_init: Option<&ParamBlock<f32>>,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if signals == 0 {
            return Err(Error::InvalidConfig("need at least one training signal".into()));
        }
        let mut template = FieldModel::<f32>::init(arch, in_dim, out_dim, config.seed)?;
        if let Some(enc) = encoder_init {
            template.load_encoder(enc.clone())?;
        }
        let decoders = vec![template.decoder.clone(); signals];
        let enc_moments = Moments::zeros_like(template.encoder.arrays());
        let dec_moments = vec![Moments::zeros_like(template.decoder.arrays()); signals];
        Ok(Self {
            rng: batch_rng(config.seed),
            template,
            decoders,
            enc_moments,
            dec_moments,
            step: 0,
            config,
            exhaustive: false,
        })
    }

    /// Train on every grid point once per step instead of random batches.
    pub fn with_exhaustive_batches(mut self, on: bool) -> Self {
        self.exhaustive = on;
        self
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn encoder(&self) -> &ParamBlock<f32> {
        &self.template.encoder
    }

    pub fn decoders(&self) -> &[ParamBlock<f32>] {
        &self.decoders
    }

    pub fn model(&self, signal: usize) -> FieldModel<f32> {
        FieldModel {
            decoder: self.decoders[signal].clone(),
            ..self.template.clone()
        }
    }

    fn check_signals(&self, signals: &[PreparedSignal]) -> Result<()> {
        if signals.len() != self.decoders.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} signals for {} decoders",
                signals.len(),
                self.decoders.len()
            )));
        }
        for (j, s) in signals.iter().enumerate() {
            if s.in_dim() != self.template.in_dim || s.channels != self.template.out_dim {
                return Err(Error::DimensionMismatch(format!(
                    "signal {j} has in_dim {} / {} channels, model expects {} / {}",
                    s.in_dim(),
                    s.channels,
                    self.template.in_dim,
                    self.template.out_dim
                )));
            }
            if s.arch != self.template.arch() {
                return Err(Error::InvalidConfig(format!(
                    "signal {j} was prepared for {}, model is {}",
                    s.arch,
                    self.template.arch()
                )));
            }
        }
        Ok(())
    }

    /// One Adam step on the summed per-signal mean losses; returns that sum.
    pub fn step(&mut self, signals: &[PreparedSignal]) -> Result<f64> {
        self.check_signals(signals)?;
        let iteration = self.step + 1;
        let mut tape = Tape::<f32>::new();
        let train_enc = !self.config.freeze_encoder;
        let enc = self.template.encoder.bind(&mut tape, train_enc);
        let mut dec_vars = Vec::with_capacity(signals.len());
        let mut total = None;
        for (j, s) in signals.iter().enumerate() {
            let idx = sample_batch(s.n_points(), self.config.batch, self.exhaustive, &mut self.rng)?;
            let (x, y) = s.gather(&idx)?;
            let x = tape.constant(x);
            let y = tape.constant(y);
            let dec = self.decoders[j].bind(&mut tape, true);
            let h = self.template.encode(&mut tape, &enc, x)?;
            let out = self.template.decode(&mut tape, &dec, h)?;
            let l = loss(&mut tape, out, y, self.config.loss)?;
            total = Some(match total {
                None => l,
                Some(t) => tape.add(t, l)?,
            });
            dec_vars.push(dec);
        }
        let total = total.expect("at least one signal");
        let value = tape.value(total).data()[0] as f64;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { iteration });
        }
        let mut grads = tape.backward(total)?;
        let mut take = |vars: &[crate::autodiff::Var], block: &ParamBlock<f32>| -> Vec<DenseArray<f32>> {
            vars.iter()
                .zip(block.arrays())
                .map(|(&v, p)| grads.take(v).unwrap_or_else(|| DenseArray::zeros(p.shape().to_vec())))
                .collect()
        };
        let enc_grads = train_enc.then(|| take(&enc, &self.template.encoder));
        let dec_grads: Vec<_> = dec_vars.iter().zip(&self.decoders).map(|(v, b)| take(v, b)).collect();
        let map_err = |e: Error| match e {
            Error::NonFinite { .. } => Error::NonFiniteLoss { iteration },
            other => other,
        };
        if let Some(g) = enc_grads {
            adam_step(self.template.encoder.arrays_mut(), &g, &mut self.enc_moments, iteration, &self.config)
                .map_err(map_err)?;
        }
        for (j, g) in dec_grads.iter().enumerate() {
            adam_step(self.decoders[j].arrays_mut(), g, &mut self.dec_moments[j], iteration, &self.config)
                .map_err(map_err)?;
        }
        self.step = iteration;
        Ok(value)
    }

    pub fn evaluate(&self, signals: &[PreparedSignal]) -> Result<EvalPoint> {
        self.check_signals(signals)?;
        let mut psnr = Vec::with_capacity(signals.len());
        let mut ssim = Vec::with_capacity(signals.len());
        for (j, s) in signals.iter().enumerate() {
            let r = s.evaluate(&self.model(j), self.step)?;
            psnr.push(r.mean_psnr);
            ssim.push(r.mean_ssim);
        }
        Ok(EvalPoint {
            iteration: self.step,
            psnr: metrics::mean(&psnr),
            ssim: metrics::mean(&ssim),
            per_signal_psnr: psnr,
        })
    }

    pub fn new_run(&self) -> TrainRun {
        TrainRun {
            config: self.config.clone(),
            arch: self.template.config.clone(),
            in_dim: self.template.in_dim,
            out_dim: self.template.out_dim,
            loss_trace: Vec::new(),
            metric_trace: Vec::new(),
            crossings: Vec::new(),
            encoder: self.template.encoder.clone(),
            decoders: self.decoders.clone(),
            iterations: self.step,
            stopped_early: false,
            rng_word_pos: self.rng.get_word_pos(),
        }
    }

    fn should_stop(&self, e: &EvalPoint) -> bool {
        matches!(self.config.stop_at_psnr, Some(t) if e.psnr >= t && self.step >= self.config.min_iters)
    }

    /// Train until step `until` (capped at `config.iters`) or early stop,
    /// evaluating at step 0 and every `eval_every` steps.
    pub fn train_until(&mut self, signals: &[PreparedSignal], until: usize, run: &mut TrainRun) -> Result<()> {
        let until = until.min(self.config.iters);
        if self.step == 0 && run.metric_trace.is_empty() {
            let e = self.evaluate(signals)?;
            run.stopped_early = self.should_stop(&e);
            run.metric_trace.push(e);
        }
        while self.step < until && !run.stopped_early {
            let l = self.step(signals)?;
            if self.step % self.config.eval_every == 0 || self.step == self.config.iters {
                run.loss_trace.push((self.step, l));
                let e = self.evaluate(signals)?;
                run.stopped_early = self.should_stop(&e);
                run.metric_trace.push(e);
            }
        }
        self.finish(run);
        Ok(())
    }

    fn finish(&self, run: &mut TrainRun) {
        let trace = run.psnr_trace();
        run.crossings = self
            .config
            .thresholds
            .iter()
            .map(|&t| (t, metrics::iterations_to_threshold(&trace, t).ok().flatten()))
            .collect();
        run.encoder = self.template.encoder.clone();
        run.decoders = self.decoders.clone();
        run.iterations = self.step;
        run.rng_word_pos = self.rng.get_word_pos();
    }

    pub fn train(&mut self, signals: &[PreparedSignal]) -> Result<TrainRun> {
        let mut run = self.new_run();
        self.train_until(signals, self.config.iters, &mut run)?;
        Ok(run)
    }

    /// Full trainer state: parameters, moments, step and sampler position.
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut c = Checkpoint::new();
        c.put_json(
            TRAINER_META,
            &TrainerMeta {
                arch: self.template.config.clone(),
                in_dim: self.template.in_dim,
                out_dim: self.template.out_dim,
                signals: self.decoders.len(),
                step: self.step,
                config: self.config.clone(),
                exhaustive: self.exhaustive,
                rng_seed: self.rng.get_seed(),
                rng_stream: self.rng.get_stream(),
                rng_word_pos: self.rng.get_word_pos().to_string(),
            },
        )?;
        c.put_model(&self.model(0))?;
        let put_moments = |c: &mut Checkpoint, prefix: &str, block: &ParamBlock<f32>, m: &Moments<f32>| {
            for ((name, _), (mm, vv)) in block.iter().zip(m.m.iter().zip(&m.v)) {
                c.put_array(format!("{prefix}.m/{name}"), mm);
                c.put_array(format!("{prefix}.v/{name}"), vv);
            }
        };
        put_moments(&mut c, "adam.encoder", &self.template.encoder, &self.enc_moments);
        for (j, d) in self.decoders.iter().enumerate() {
            c.put_params(&format!("decoder{j}"), d);
            put_moments(&mut c, &format!("adam.decoder{j}"), d, &self.dec_moments[j]);
        }
        Ok(c)
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let meta: TrainerMeta = c.json(TRAINER_META)?;
        let template: FieldModel<f32> = c.model()?;
        let read_moments = |prefix: &str, block: &ParamBlock<f32>| -> Result<Moments<f32>> {
            Ok(Moments {
                m: c.params_like(&format!("{prefix}.m"), block)?.arrays().cloned().collect(),
                v: c.params_like(&format!("{prefix}.v"), block)?.arrays().cloned().collect(),
            })
        };
        let enc_moments = read_moments("adam.encoder", &template.encoder)?;
        let mut decoders = Vec::with_capacity(meta.signals);
        let mut dec_moments = Vec::with_capacity(meta.signals);
        for j in 0..meta.signals {
            let d = c.params_like(&format!("decoder{j}"), &template.decoder)?;
            dec_moments.push(read_moments(&format!("adam.decoder{j}"), &d)?);
            decoders.push(d);
        }
        let mut rng = ChaCha8Rng::from_seed(meta.rng_seed);
        rng.set_stream(meta.rng_stream);
        let pos: u128 = meta
            .rng_word_pos
            .parse()
            .map_err(|_| Error::Format(format!("bad rng position `{}`", meta.rng_word_pos)))?;
        rng.set_word_pos(pos);
        Ok(Self {
            template,
            decoders,
            enc_moments,
            dec_moments,
            step: meta.step,
            rng,
            config: meta.config,
            exhaustive: meta.exhaustive,
        })
    }
}

fn check_common(signals: &[PreparedSignal]) -> Result<(usize, usize)> {
    let first = signals
        .first()
        .ok_or_else(|| Error::InvalidConfig("need at least one training signal".into()))?;
    for (j, s) in signals.iter().enumerate() {
        if s.in_dim() != first.in_dim() || s.channels != first.channels {
            return Err(Error::DimensionMismatch(format!(
                "signal {j} has in_dim {} and {} channels; signal 0 has {} and {}",
                s.in_dim(),
                s.channels,
                first.in_dim(),
                first.channels
            )));
        }
    }
    Ok((first.in_dim(), first.channels))
}

/// Fit one encoder and `M` decoders jointly.
pub fn pretrain_joint(signals: &[PreparedSignal], arch: &ArchConfig, config: &TrainConfig) -> Result<TrainRun> {
    let (in_dim, out_dim) = check_common(signals)?;
    SharedTrainer::new(arch.clone(), in_dim, out_dim, signals.len(), None, config.clone())?.train(signals)
}

/// Fit a fresh decoder and the (optionally pretrained) encoder to one signal.
pub fn fit_new(
    signal: &PreparedSignal,
    encoder_init: Option<&ParamBlock<f32>>,
    arch: &ArchConfig,
    config: &TrainConfig,
) -> Result<TrainRun> {
    let signals = std::slice::from_ref(signal);
    let (in_dim, out_dim) = check_common(signals)?;
    SharedTrainer::new(arch.clone(), in_dim, out_dim, 1, encoder_init, config.clone())?.train(signals)
}

/// Training loss of `model` over every point of `signal`.
pub fn full_loss(model: &FieldModel<f32>, signal: &PreparedSignal, config: &TrainConfig) -> Result<f64> {
    let pred: Vec<f64> = model.forward(&signal.coords)?.data().iter().map(|&v| v as f64).collect();
    let target: Vec<f64> = signal.targets.iter().map(|&v| v as f64).collect();
    loss_value(&pred, &target, config.loss)
}
