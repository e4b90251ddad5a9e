//! Multiresolution hash encoding with a ReLU head.
//!
//! Level `l` has resolution `floor(base * growth^l)`. Levels whose full vertex
//! lattice fits the table are indexed densely; finer levels use the spatial
//! hash `xor_k(v_k * prime_k) mod T`. Features from all levels are
//! concatenated before the head.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{apply_relu_head, coordinate_columns, init_relu_head, relu_head_count, uniform, ParamBlock};
use crate::autodiff::{DenseArray, Real, Tape, Var};
use crate::error::{Error, Result};

pub const HASH_PRIMES: [u32; 5] = [1, 2_654_435_761, 805_459_861, 3_674_653_429, 2_097_192_037];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashGridConfig {
    pub levels: usize,
    pub features_per_level: usize,
    pub table_size_log2: u32,
    pub base_resolution: usize,
    pub max_resolution: usize,
    pub mlp_width: usize,
    pub mlp_layers: usize,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            features_per_level: 2,
            table_size_log2: 12,
            base_resolution: 4,
            max_resolution: 128,
            mlp_width: 32,
            mlp_layers: 2,
        }
    }
}

impl HashGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features_per_level == 0 {
            return Err(Error::InvalidConfig("hash grid needs levels and features".into()));
        }
        if self.base_resolution == 0 || self.max_resolution < self.base_resolution {
            return Err(Error::InvalidConfig(format!(
                "resolutions must satisfy 0 < base ({}) <= max ({})",
                self.base_resolution, self.max_resolution
            )));
        }
        if !(1..=30).contains(&self.table_size_log2) {
            return Err(Error::InvalidConfig(format!(
                "table_size_log2 {} out of range 1..=30",
                self.table_size_log2
            )));
        }
        if self.mlp_layers > 0 && self.mlp_width == 0 {
            return Err(Error::InvalidConfig("mlp_width must be positive".into()));
        }
        Ok(())
    }

    pub fn table_size(&self) -> usize {
        1 << self.table_size_log2
    }

    pub fn resolutions(&self) -> Vec<usize> {
        if self.levels == 1 {
            return vec![self.base_resolution];
        }
        let growth = ((self.max_resolution as f64).ln() - (self.base_resolution as f64).ln())
            / (self.levels - 1) as f64;
        (0..self.levels)
            .map(|l| {
                let r = (self.base_resolution as f64 * (growth * l as f64).exp() + 1e-9).floor() as usize;
                r.clamp(self.base_resolution, self.max_resolution)
            })
            .collect()
    }

    pub fn encoder_count(&self) -> usize {
        self.levels * self.table_size() * self.features_per_level
    }

    pub fn param_count(&self, out_dim: usize) -> usize {
        self.encoder_count()
            + relu_head_count(self.levels * self.features_per_level, self.mlp_width, self.mlp_layers, out_dim)
    }

    pub(crate) fn init<T: Real>(&self, rng: &mut ChaCha8Rng, out_dim: usize) -> (ParamBlock<T>, ParamBlock<T>) {
        let mut enc = ParamBlock::new();
        for l in 0..self.levels {
            enc.push(
                format!("level{l}.table"),
                uniform(rng, vec![self.table_size(), self.features_per_level], -1e-4, 1e-4),
            );
        }
        let mut dec = ParamBlock::new();
        init_relu_head(
            rng,
            &mut dec,
            self.levels * self.features_per_level,
            self.mlp_width,
            self.mlp_layers,
            out_dim,
        );
        (enc, dec)
    }

    /// Table slot of lattice vertex `v` at a level of resolution `res`.
    pub fn vertex_index(&self, v: &[usize], res: usize) -> usize {
        let t = self.table_size();
        let side = res + 1;
        let dense = side
            .checked_pow(v.len() as u32)
            .map(|n| n <= t)
            .unwrap_or(false);
        if dense {
            v.iter().rev().fold(0usize, |acc, &c| acc * side + c)
        } else {
            let h = v
                .iter()
                .zip(HASH_PRIMES)
                .fold(0u32, |acc, (&c, p)| acc ^ (c as u32).wrapping_mul(p));
            (h as usize) & (t - 1)
        }
    }

    pub(crate) fn encode<T: Real>(&self, tape: &mut Tape<T>, enc: &[Var], x: Var) -> Result<Var> {
        let d = tape.shape(x)[1];
        if d > HASH_PRIMES.len() {
            return Err(Error::InvalidConfig(format!("hash grid supports at most 5 input dims, got {d}")));
        }
        let n = tape.shape(x)[0];
        let coords: Vec<f64> = tape.value(x).to_f64_vec();
        let cols = coordinate_columns(tape, x)?;
        let mut level_feats = Vec::with_capacity(self.levels);
        let mut vertex = vec![0usize; d];
        for (l, &res) in self.resolutions().iter().enumerate() {
            let mut cell = vec![0usize; n * d];
            let mut t_vars = Vec::with_capacity(d);
            for k in 0..d {
                let mut offs = Vec::with_capacity(n);
                for i in 0..n {
                    let p = coords[i * d + k] * res as f64;
                    let c = (p.floor().max(0.0) as usize).min(res - 1);
                    cell[i * d + k] = c;
                    offs.push(-(c as f64));
                }
                let scaled = tape.scale(cols[k], res as f64)?;
                let off = tape.constant(DenseArray::from_f64(vec![n, 1], &offs)?);
                t_vars.push(tape.add(scaled, off)?);
            }
            let corners = 1usize << d;
            let mut vals = Vec::with_capacity(corners);
            for mask in 0..corners {
                let idx: Vec<u32> = (0..n)
                    .map(|i| {
                        for k in 0..d {
                            vertex[k] = cell[i * d + k] + ((mask >> k) & 1);
                        }
                        self.vertex_index(&vertex, res) as u32
                    })
                    .collect();
                vals.push(tape.gather(enc[l], Arc::<[u32]>::from(idx))?);
            }
            for t in t_vars.iter().take(d) {
                vals = vals
                    .chunks(2)
                    .map(|pair| tape.lerp(pair[0], pair[1], *t))
                    .collect::<Result<_>>()?;
            }
            level_feats.push(vals[0]);
        }
        tape.concat(&level_feats)
    }

    pub(crate) fn decode<T: Real>(&self, tape: &mut Tape<T>, dec: &[Var], h: Var) -> Result<Var> {
        apply_relu_head(tape, dec, h)
    }
}
