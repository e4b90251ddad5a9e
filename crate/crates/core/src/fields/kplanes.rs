//! Factorized planar features: one bilinear feature plane per coordinate pair,
//! combined by elementwise product, followed by a ReLU head.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{apply_relu_head, coordinate_columns, init_relu_head, relu_head_count, uniform, ParamBlock};
use crate::autodiff::{DenseArray, Real, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KPlanesConfig {
    /// Vertices per axis, shared by every axis unless `axis_resolutions` is set.
    pub resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_resolutions: Option<Vec<usize>>,
    pub feature_dim: usize,
    pub mlp_width: usize,
    pub mlp_layers: usize,
}

impl Default for KPlanesConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            axis_resolutions: None,
            feature_dim: 16,
            mlp_width: 32,
            mlp_layers: 2,
        }
    }
}

/// Coordinate pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn plane_pairs(in_dim: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..in_dim {
        for j in i + 1..in_dim {
            out.push((i, j));
        }
    }
    out
}

impl KPlanesConfig {
    pub fn validate(&self, in_dim: usize) -> Result<()> {
        if in_dim < 2 {
            return Err(Error::InvalidConfig("K-Planes needs at least two input dims".into()));
        }
        let res = self.axis_res(in_dim)?;
        if res.iter().any(|&r| r < 2) {
            return Err(Error::InvalidConfig(format!("plane resolutions must be >= 2, got {res:?}")));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("feature_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn axis_res(&self, in_dim: usize) -> Result<Vec<usize>> {
        match &self.axis_resolutions {
            Some(r) if r.len() == in_dim => Ok(r.clone()),
            Some(r) => Err(Error::InvalidConfig(format!(
                "axis_resolutions has {} entries for {in_dim} input dims",
                r.len()
            ))),
            None => Ok(vec![self.resolution; in_dim]),
        }
    }

    pub fn encoder_count(&self, in_dim: usize) -> usize {
        let res = self.axis_res(in_dim).unwrap_or_default();
        plane_pairs(in_dim)
            .iter()
            .map(|&(i, j)| res.get(i).copied().unwrap_or(0) * res.get(j).copied().unwrap_or(0) * self.feature_dim)
            .sum()
    }

    pub fn param_count(&self, in_dim: usize, out_dim: usize) -> usize {
        self.encoder_count(in_dim) + relu_head_count(self.feature_dim, self.mlp_width, self.mlp_layers, out_dim)
    }

    pub(crate) fn init<T: Real>(
        &self,
        rng: &mut ChaCha8Rng,
        in_dim: usize,
        out_dim: usize,
    ) -> Result<(ParamBlock<T>, ParamBlock<T>)> {
        let res = self.axis_res(in_dim)?;
        let mut enc = ParamBlock::new();
        for (i, j) in plane_pairs(in_dim) {
            enc.push(
                format!("plane{i}{j}"),
                uniform(rng, vec![res[i] * res[j], self.feature_dim], 0.05, 0.15),
            );
        }
        let mut dec = ParamBlock::new();
        init_relu_head(rng, &mut dec, self.feature_dim, self.mlp_width, self.mlp_layers, out_dim);
        Ok((enc, dec))
    }

    pub(crate) fn encode<T: Real>(&self, tape: &mut Tape<T>, enc: &[Var], x: Var) -> Result<Var> {
        let (n, d) = (tape.shape(x)[0], tape.shape(x)[1]);
        let res = self.axis_res(d)?;
        let coords = tape.value(x).to_f64_vec();
        let cols = coordinate_columns(tape, x)?;

        // Per-axis containing cell and differentiable in-cell offset.
        let mut cells = vec![vec![0usize; n]; d];
        let mut t_vars = Vec::with_capacity(d);
        for k in 0..d {
            let span = (res[k] - 1) as f64;
            let mut offs = Vec::with_capacity(n);
            for i in 0..n {
                let p = coords[i * d + k] * span;
                let c = (p.floor().max(0.0) as usize).min(res[k] - 2);
                cells[k][i] = c;
                offs.push(-(c as f64));
            }
            let scaled = tape.scale(cols[k], span)?;
            let off = tape.constant(DenseArray::from_f64(vec![n, 1], &offs)?);
            t_vars.push(tape.add(scaled, off)?);
        }

        let mut combined: Option<Var> = None;
        for (p, (a, b)) in plane_pairs(d).into_iter().enumerate() {
            let mut corners = Vec::with_capacity(4);
            for mask in 0..4usize {
                let idx: Vec<u32> = (0..n)
                    .map(|i| {
                        let ca = cells[a][i] + (mask & 1);
                        let cb = cells[b][i] + ((mask >> 1) & 1);
                        (ca * res[b] + cb) as u32
                    })
                    .collect();
                corners.push(tape.gather(enc[p], Arc::<[u32]>::from(idx))?);
            }
            let lo = tape.lerp(corners[0], corners[1], t_vars[a])?;
            let hi = tape.lerp(corners[2], corners[3], t_vars[a])?;
            let feat = tape.lerp(lo, hi, t_vars[b])?;
            combined = Some(match combined {
                None => feat,
                Some(acc) => tape.mul(acc, feat)?,
            });
        }
        combined.ok_or_else(|| Error::InvalidConfig("K-Planes needs at least one plane".into()))
    }

    pub(crate) fn decode<T: Real>(&self, tape: &mut Tape<T>, dec: &[Var], h: Var) -> Result<Var> {
        apply_relu_head(tape, dec, h)
    }
}
