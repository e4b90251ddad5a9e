//! Sinusoidal coordinate MLP.
//!
//! Layer `i` computes `sin(omega0 * (h @ W_i + b_i))` for every layer but the
//! last, which is a plain linear read-out. The trailing `decoder_depth` layers
//! form the decoder; everything before them is the shared encoder.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{linear, uniform, ParamBlock};
use crate::autodiff::{Real, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirenConfig {
    /// Number of sine layers.
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub omega0: f64,
    /// Trailing linear layers owned by the decoder.
    pub decoder_depth: usize,
}

impl Default for SirenConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            hidden_width: 64,
            omega0: 10.0,
            decoder_depth: 1,
        }
    }
}

impl SirenConfig {
    pub fn total_layers(&self) -> usize {
        self.hidden_layers + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0) {
            return Err(Error::InvalidConfig(format!("omega0 must be > 0, got {}", self.omega0)));
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::InvalidConfig("SIREN needs at least one sine layer of non-zero width".into()));
        }
        if self.decoder_depth == 0 || self.decoder_depth >= self.total_layers() {
            return Err(Error::InvalidConfig(format!(
                "decoder_depth {} must be in 1..{}",
                self.decoder_depth,
                self.total_layers()
            )));
        }
        Ok(())
    }

    fn fans(&self, in_dim: usize, out_dim: usize) -> Vec<(usize, usize)> {
        let w = self.hidden_width;
        (0..self.total_layers())
            .map(|i| {
                let fin = if i == 0 { in_dim } else { w };
                let fout = if i == self.hidden_layers { out_dim } else { w };
                (fin, fout)
            })
            .collect()
    }

    pub fn param_count(&self, in_dim: usize, out_dim: usize) -> usize {
        self.fans(in_dim, out_dim).iter().map(|(i, o)| i * o + o).sum()
    }

    pub(crate) fn init<T: Real>(
        &self,
        rng: &mut ChaCha8Rng,
        in_dim: usize,
        out_dim: usize,
    ) -> (ParamBlock<T>, ParamBlock<T>) {
        let mut enc = ParamBlock::new();
        let mut dec = ParamBlock::new();
        let first_decoder = self.total_layers() - self.decoder_depth;
        for (i, (fin, fout)) in self.fans(in_dim, out_dim).into_iter().enumerate() {
            let bound = if i == 0 {
                1.0 / fin as f64
            } else {
                (6.0 / fin as f64).sqrt() / self.omega0
            };
            let block = if i < first_decoder { &mut enc } else { &mut dec };
            block.push(format!("layer{i}.weight"), uniform(rng, vec![fin, fout], -bound, bound));
            block.push(format!("layer{i}.bias"), uniform(rng, vec![1, fout], -bound, bound));
        }
        (enc, dec)
    }

    fn layers<T: Real>(&self, tape: &mut Tape<T>, params: &[Var], first: usize, mut h: Var) -> Result<Var> {
        for (k, wb) in params.chunks(2).enumerate() {
            let z = linear(tape, h, wb[0], wb[1])?;
            h = if first + k < self.hidden_layers {
                let z = tape.scale(z, self.omega0)?;
                tape.sin(z)?
            } else {
                z
            };
        }
        Ok(h)
    }

    pub(crate) fn encode<T: Real>(&self, tape: &mut Tape<T>, enc: &[Var], x: Var) -> Result<Var> {
        self.layers(tape, enc, 0, x)
    }

    pub(crate) fn decode<T: Real>(&self, tape: &mut Tape<T>, dec: &[Var], h: Var) -> Result<Var> {
        self.layers(tape, dec, self.total_layers() - self.decoder_depth, h)
    }
}
