//! Coordinate-network architectures, each split into a transferable encoder
//! and a signal-specific decoder.

mod check;
mod hashgrid;
mod kplanes;
mod params;
mod siren;
mod sizing;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use check::{check_gradients, GradientCheck};
pub use hashgrid::{HashGridConfig, HASH_PRIMES};
pub use kplanes::{plane_pairs, KPlanesConfig};
pub use params::ParamBlock;
pub use siren::SirenConfig;
pub use sizing::{size_to_budget, BUDGET_TOLERANCE};

use crate::autodiff::{DenseArray, Real, Tape, Var};
use crate::error::{Error, Result};

/// Rows evaluated per tape in whole-grid queries.
const EVAL_CHUNK: usize = 32_768;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Siren,
    Hashgrid,
    Kplanes,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Siren, Arch::Hashgrid, Arch::Kplanes];

    /// Normalized coordinate range the architecture accepts.
    pub fn coord_range(self) -> (f64, f64) {
        match self {
            Arch::Siren => (-1.0, 1.0),
            Arch::Hashgrid | Arch::Kplanes => (0.0, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::Siren => "siren",
            Arch::Hashgrid => "hashgrid",
            Arch::Kplanes => "kplanes",
        }
    }

    pub fn default_config(self) -> ArchConfig {
        match self {
            Arch::Siren => ArchConfig::Siren(SirenConfig::default()),
            Arch::Hashgrid => ArchConfig::Hashgrid(HashGridConfig::default()),
            Arch::Kplanes => ArchConfig::Kplanes(KPlanesConfig::default()),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "siren" => Ok(Arch::Siren),
            "hashgrid" | "hash" => Ok(Arch::Hashgrid),
            "kplanes" | "k-planes" => Ok(Arch::Kplanes),
            other => Err(Error::InvalidConfig(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum ArchConfig {
    Siren(SirenConfig),
    Hashgrid(HashGridConfig),
    Kplanes(KPlanesConfig),
}

impl ArchConfig {
    pub fn arch(&self) -> Arch {
        match self {
            ArchConfig::Siren(_) => Arch::Siren,
            ArchConfig::Hashgrid(_) => Arch::Hashgrid,
            ArchConfig::Kplanes(_) => Arch::Kplanes,
        }
    }

    pub fn validate(&self, in_dim: usize) -> Result<()> {
        match self {
            ArchConfig::Siren(c) => c.validate(),
            ArchConfig::Hashgrid(c) => c.validate(),
            ArchConfig::Kplanes(c) => c.validate(in_dim),
        }
    }

    /// Smallest distance, in cell units, from `point` to a face of any
    /// interpolation cell it falls in; `+inf` for SIREN.
    pub fn cell_face_distance(&self, point: &[f64]) -> f64 {
        let frac_dist = |p: f64| {
            let f = p - p.floor();
            f.min(1.0 - f)
        };
        match self {
            ArchConfig::Siren(_) => f64::INFINITY,
            ArchConfig::Hashgrid(c) => c
                .resolutions()
                .iter()
                .flat_map(|&r| point.iter().map(move |&x| frac_dist(x * r as f64)))
                .fold(f64::INFINITY, f64::min),
            ArchConfig::Kplanes(c) => match c.axis_res(point.len()) {
                Ok(res) => point
                    .iter()
                    .zip(res)
                    .map(|(&x, r)| frac_dist(x * (r - 1) as f64))
                    .fold(f64::INFINITY, f64::min),
                Err(_) => 0.0,
            },
        }
    }

    /// Parameter count of a model built from this config.
    pub fn param_count(&self, in_dim: usize, out_dim: usize) -> usize {
        match self {
            ArchConfig::Siren(c) => c.param_count(in_dim, out_dim),
            ArchConfig::Hashgrid(c) => c.param_count(out_dim),
            ArchConfig::Kplanes(c) => c.param_count(in_dim, out_dim),
        }
    }
}

/// A coordinate network `R^d -> R^C` as encoder `psi` plus decoder `phi`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldModel<T> {
    pub config: ArchConfig,
    pub in_dim: usize,
    pub out_dim: usize,
    pub encoder: ParamBlock<T>,
    pub decoder: ParamBlock<T>,
}

/// Deterministic parameter RNG for a model seed.
pub(crate) fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

impl<T: Real> FieldModel<T> {
    pub fn init(config: ArchConfig, in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if !(2..=5).contains(&in_dim) {
            return Err(Error::InvalidConfig(format!("in_dim must be in 2..=5, got {in_dim}")));
        }
        if out_dim == 0 {
            return Err(Error::InvalidConfig("out_dim must be positive".into()));
        }
        config.validate(in_dim)?;
        let mut rng = init_rng(seed);
        let (encoder, decoder) = match &config {
            ArchConfig::Siren(c) => c.init(&mut rng, in_dim, out_dim),
            ArchConfig::Hashgrid(c) => c.init(&mut rng, out_dim),
            ArchConfig::Kplanes(c) => c.init(&mut rng, in_dim, out_dim)?,
        };
        Ok(Self {
            config,
            in_dim,
            out_dim,
            encoder,
            decoder,
        })
    }

    pub fn arch(&self) -> Arch {
        self.config.arch()
    }

    pub fn param_count(&self) -> usize {
        self.encoder.count() + self.decoder.count()
    }

    /// Fresh decoder drawn exactly as `init` would for `seed`.
    pub fn fresh_decoder(&self, seed: u64) -> Result<ParamBlock<T>> {
        Ok(Self::init(self.config.clone(), self.in_dim, self.out_dim, seed)?.decoder)
    }

    /// Encoder and decoder blocks; together they hold every parameter exactly once.
    pub fn split(&self) -> (&ParamBlock<T>, &ParamBlock<T>) {
        (&self.encoder, &self.decoder)
    }

    /// Replace the encoder with a shape-compatible block.
    pub fn load_encoder(&mut self, encoder: ParamBlock<T>) -> Result<()> {
        self.encoder.check_compatible(&encoder, "encoder")?;
        self.encoder = encoder;
        Ok(())
    }

    pub fn load_decoder(&mut self, decoder: ParamBlock<T>) -> Result<()> {
        self.decoder.check_compatible(&decoder, "decoder")?;
        self.decoder = decoder;
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> FieldModel<U> {
        FieldModel {
            config: self.config.clone(),
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
        }
    }

    pub fn check_coords(&self, coords: &DenseArray<T>) -> Result<()> {
        if coords.shape().len() != 2 || coords.shape()[1] != self.in_dim {
            return Err(Error::ShapeMismatch {
                op: "forward",
                shapes: vec![coords.shape().to_vec(), vec![0, self.in_dim]],
            });
        }
        let (lo, hi) = self.arch().coord_range();
        for (index, v) in coords.data().iter().enumerate() {
            let v = v.to_f64_lossy();
            if !(v >= lo && v <= hi) {
                return Err(Error::CoordOutOfRange { index, value: v, lo, hi });
            }
        }
        Ok(())
    }

    /// Encoder features for coordinates already on the tape.
    pub fn encode(&self, tape: &mut Tape<T>, encoder: &[Var], x: Var) -> Result<Var> {
        match &self.config {
            ArchConfig::Siren(c) => c.encode(tape, encoder, x),
            ArchConfig::Hashgrid(c) => c.encode(tape, encoder, x),
            ArchConfig::Kplanes(c) => c.encode(tape, encoder, x),
        }
    }

    /// Decoder output for encoder features on the tape.
    pub fn decode(&self, tape: &mut Tape<T>, decoder: &[Var], h: Var) -> Result<Var> {
        match &self.config {
            ArchConfig::Siren(c) => c.decode(tape, decoder, h),
            ArchConfig::Hashgrid(c) => c.decode(tape, decoder, h),
            ArchConfig::Kplanes(c) => c.decode(tape, decoder, h),
        }
    }

    /// Record the full network on `tape` with the model's own parameters.
    pub fn record(&self, tape: &mut Tape<T>, x: Var, params_require_grad: bool) -> Result<(Var, Vec<Var>, Vec<Var>)> {
        self.check_coords(tape.value(x))?;
        let enc = self.encoder.bind(tape, params_require_grad);
        let dec = self.decoder.bind(tape, params_require_grad);
        let h = self.encode(tape, &enc, x)?;
        let y = self.decode(tape, &dec, h)?;
        Ok((y, enc, dec))
    }

    /// Outputs `[N, C]` for coordinates `[N, d]`.
    pub fn forward(&self, coords: &DenseArray<T>) -> Result<DenseArray<T>> {
        self.check_coords(coords)?;
        let n = coords.shape()[0];
        let d = self.in_dim;
        let mut out = Vec::with_capacity(n * self.out_dim);
        for start in (0..n).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(n);
            let chunk = DenseArray::new(vec![end - start, d], coords.data()[start * d..end * d].to_vec())?;
            let mut tape = Tape::new();
            let x = tape.constant(chunk);
            let (y, _, _) = self.record(&mut tape, x, false)?;
            out.extend_from_slice(tape.value(y).data());
        }
        DenseArray::new(vec![n, self.out_dim], out)
    }

    /// Jacobian of each output channel w.r.t. each coordinate: `[N, C, d]`.
    pub fn input_gradient(&self, coords: &DenseArray<T>) -> Result<DenseArray<T>> {
        self.check_coords(coords)?;
        let n = coords.shape()[0];
        let (d, c_out) = (self.in_dim, self.out_dim);
        let mut out = vec![T::zero(); n * c_out * d];
        for start in (0..n).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(n);
            let rows = end - start;
            let chunk = DenseArray::new(vec![rows, d], coords.data()[start * d..end * d].to_vec())?;
            let mut tape = Tape::new();
            let x = tape.leaf(chunk, true);
            let (y, _, _) = self.record(&mut tape, x, false)?;
            for c in 0..c_out {
                let mut e = DenseArray::zeros(vec![c_out, 1]);
                e.data_mut()[c] = T::one();
                let e = tape.constant(e);
                let yc = tape.matmul(y, e)?;
                let s = tape.sum(yc)?;
                let grads = tape.backward(s)?;
                let gx = grads.get(x).expect("coords require grad");
                for i in 0..rows {
                    for k in 0..d {
                        out[((start + i) * c_out + c) * d + k] = gx.data()[i * d + k];
                    }
                }
            }
        }
        DenseArray::new(vec![n, c_out, d], out)
    }
}
