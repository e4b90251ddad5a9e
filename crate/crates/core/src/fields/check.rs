//! Finite-difference audit of a model's parameter and input gradients.

use serde::{Deserialize, Serialize};

use super::FieldModel;
use crate::autodiff::{DenseArray, Tape};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// `||autodiff - central|| / ||central||` over every parameter.
    pub param_rel: f64,
    /// Same, over every input coordinate.
    pub input_rel: f64,
    pub params_checked: usize,
    pub inputs_checked: usize,
}

fn readout_weights(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 + 0.5 * (1.7 * i as f64 + 0.3).sin()).collect()
}

fn readout(model: &FieldModel<f64>, coords: &DenseArray<f64>, w: &[f64]) -> Result<f64> {
    Ok(model.forward(coords)?.data().iter().zip(w).map(|(y, w)| y * w).sum())
}

fn rel(a: &[f64], c: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = c.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Central differences with step `h` of `L = sum_i w_i y_i` against the tape.
///
/// A coordinate whose one-sided slopes disagree yields [`Error::NonDifferentiable`];
/// callers choose points away from interpolation cell faces and ReLU kinks.
pub fn check_gradients(model: &FieldModel<f64>, coords: &DenseArray<f64>, h: f64) -> Result<GradientCheck> {
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("step h must be positive, got {h}")));
    }
    model.check_coords(coords)?;
    let n_out = coords.shape()[0] * model.out_dim;
    let w = readout_weights(n_out);

    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(coords.clone(), true);
    let (y, enc, dec) = model.record(&mut tape, x, true)?;
    let wv = tape.constant(DenseArray::new(tape.shape(y).to_vec(), w.clone())?);
    let prod = tape.mul(y, wv)?;
    let l = tape.sum(prod)?;
    let grads = tape.backward(l)?;
    let grad_of = |v| grads.get(v).map(|g| g.data().to_vec());

    let f0 = readout(model, coords, &w)?;
    let kink = |fp: f64, fm: f64, index: usize| -> Result<f64> {
        let (right, left) = ((fp - f0) / h, (f0 - fm) / h);
        if (right - left).abs() > 1e-3 * (1.0 + right.abs().max(left.abs())) {
            return Err(Error::NonDifferentiable { index, left, right });
        }
        Ok((fp - fm) / (2.0 * h))
    };

    let mut auto_p = Vec::new();
    let mut fd_p = Vec::new();
    let mut probe = model.clone();
    let vars: Vec<_> = enc.iter().chain(dec.iter()).copied().collect();
    let n_enc = enc.len();
    for (k, &v) in vars.iter().enumerate() {
        let len = if k < n_enc {
            model.encoder.arrays().nth(k).map(|a| a.len())
        } else {
            model.decoder.arrays().nth(k - n_enc).map(|a| a.len())
        }
        .unwrap_or(0);
        let g = grad_of(v).unwrap_or_else(|| vec![0.0; len]);
        for e in 0..len {
            let mut eval = |delta: f64| -> Result<f64> {
                {
                    let arr = if k < n_enc {
                        probe.encoder.arrays_mut().nth(k)
                    } else {
                        probe.decoder.arrays_mut().nth(k - n_enc)
                    }
                    .expect("parameter index in range");
                    arr.data_mut()[e] += delta;
                }
                let out = readout(&probe, coords, &w);
                let arr = if k < n_enc {
                    probe.encoder.arrays_mut().nth(k)
                } else {
                    probe.decoder.arrays_mut().nth(k - n_enc)
                }
                .expect("parameter index in range");
                arr.data_mut()[e] -= delta;
                out
            };
            let (fp, fm) = (eval(h)?, eval(-h)?);
            fd_p.push(kink(fp, fm, auto_p.len())?);
            auto_p.push(g[e]);
        }
    }

    let gx = grad_of(x).unwrap_or_else(|| vec![0.0; coords.len()]);
    let mut fd_x = Vec::with_capacity(coords.len());
    for i in 0..coords.len() {
        let mut p = coords.clone();
        p.data_mut()[i] += h;
        let fp = readout(model, &p, &w)?;
        p.data_mut()[i] -= 2.0 * h;
        let fm = readout(model, &p, &w)?;
        fd_x.push(kink(fp, fm, i)?);
    }

    Ok(GradientCheck {
        param_rel: rel(&auto_p, &fd_p),
        input_rel: rel(&gx, &fd_x),
        params_checked: auto_p.len(),
        inputs_checked: fd_x.len(),
    })
}
