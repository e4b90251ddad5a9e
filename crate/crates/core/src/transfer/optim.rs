use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{DenseArray, Real, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    L1,
    L2,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "mae" => Ok(LossKind::L1),
            "l2" | "mse" => Ok(LossKind::L2),
            other => Err(Error::InvalidConfig(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub iters: usize,
    pub batch: usize,
    pub loss: LossKind,
    pub eval_every: usize,
    pub seed: u64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Train only the decoder(s).
    pub freeze_encoder: bool,
    /// PSNR thresholds whose first crossing is recorded.
    pub thresholds: Vec<f64>,
    /// Stop once mean PSNR reaches this value and `min_iters` have run.
    pub stop_at_psnr: Option<f64>,
    pub min_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            iters: 4000,
            batch: 65_536,
            loss: LossKind::L1,
            eval_every: 1,
            seed: 0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            freeze_encoder: false,
            thresholds: vec![30.0, 40.0, 50.0],
            stop_at_psnr: None,
            min_iters: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be >= 1".into()));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::InvalidConfig(format!("Adam betas must lie in [0, 1), got {:?}", self.adam_betas)));
        }
        if !(self.adam_eps >= 0.0) {
            return Err(Error::InvalidConfig("adam_eps must be >= 0".into()));
        }
        Ok(())
    }

    /// Same optimization schedule (everything except the seed).
    pub fn same_schedule(&self, other: &TrainConfig) -> bool {
        TrainConfig { seed: 0, ..self.clone() } == TrainConfig { seed: 0, ..other.clone() }
    }
}

/// First and second moment estimates for a list of parameter arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub m: Vec<DenseArray<T>>,
    pub v: Vec<DenseArray<T>>,
}

impl<T: Real> Moments<T> {
    pub fn zeros_like<'a>(params: impl IntoIterator<Item = &'a DenseArray<T>>) -> Self {
        let m: Vec<DenseArray<T>> = params.into_iter().map(|p| DenseArray::zeros(p.shape().to_vec())).collect();
        Self { v: m.clone(), m }
    }
}

/// One bias-corrected Adam update of every array in `params`; `step` counts from 1.
pub fn adam_step<'a, T: Real>(
    params: impl IntoIterator<Item = &'a mut DenseArray<T>>,
    grads: &[DenseArray<T>],
    moments: &mut Moments<T>,
    step: usize,
    config: &TrainConfig,
) -> Result<()> {
    if step == 0 {
        return Err(Error::InvalidConfig("Adam step counts from 1".into()));
    }
    let params: Vec<&mut DenseArray<T>> = params.into_iter().collect();
    if params.len() != grads.len() || params.len() != moments.m.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            moments.m.len()
        )));
    }
    for (k, g) in grads.iter().enumerate() {
        if params[k].shape() != g.shape() || moments.m[k].shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam",
                shapes: vec![params[k].shape().to_vec(), g.shape().to_vec()],
            });
        }
        if let Some(index) = g.first_non_finite() {
            return Err(Error::NonFinite {
                context: format!("gradient of parameter {k}"),
                index,
            });
        }
    }
    let (b1, b2) = config.adam_betas;
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    let f = T::from_f64_lossy;
    let (b1t, b2t, c1t, c2t, lr, eps) = (f(b1), f(b2), f(c1), f(c2), f(config.lr), f(config.adam_eps));
    let one = T::one();
    for (k, p) in params.into_iter().enumerate() {
        let g = grads[k].data();
        let m = moments.m[k].data_mut();
        for (mi, &gi) in m.iter_mut().zip(g) {
            *mi = b1t * *mi + (one - b1t) * gi;
        }
        let v = moments.v[k].data_mut();
        for (vi, &gi) in v.iter_mut().zip(g) {
            *vi = b2t * *vi + (one - b2t) * gi * gi;
        }
        let (m, v) = (moments.m[k].data(), moments.v[k].data());
        for ((pi, &mi), &vi) in p.data_mut().iter_mut().zip(m).zip(v) {
            let mhat = mi / c1t;
            let vhat = vi / c2t;
            *pi = *pi - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Mean absolute or squared error over all elements, recorded on the tape.
pub fn loss<T: Real>(tape: &mut Tape<T>, pred: Var, target: Var, kind: LossKind) -> Result<Var> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(Error::ShapeMismatch {
            op: "loss",
            shapes: vec![tape.shape(pred).to_vec(), tape.shape(target).to_vec()],
        });
    }
    let diff = tape.sub(pred, target)?;
    let e = match kind {
        LossKind::L1 => tape.abs(diff)?,
        LossKind::L2 => tape.mul(diff, diff)?,
    };
    tape.mean(e)
}

/// Loss of plain buffers, without a tape.
pub fn loss_value(pred: &[f64], target: &[f64], kind: LossKind) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch {
            op: "loss",
            shapes: vec![vec![pred.len()], vec![target.len()]],
        });
    }
    let s: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| match kind {
            LossKind::L1 => (p - t).abs(),
            LossKind::L2 => (p - t) * (p - t),
        })
        .sum();
    Ok(s / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64) -> TrainConfig {
        TrainConfig {
            lr,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn first_step_with_unit_gradient() {
        let mut p = vec![DenseArray::<f64>::from_vec(vec![0.5, -2.0, 0.0])];
        let g = vec![DenseArray::from_vec(vec![1.0; 3])];
        let mut mom = Moments::zeros_like(p.iter());
        adam_step(p.iter_mut(), &g, &mut mom, 1, &cfg(1e-3)).unwrap();
        let expected = 1e-3 * (1.0 / (1.0 + 1e-8));
        for (after, before) in p[0].data().iter().zip([0.5, -2.0, 0.0]) {
            assert!((before - after - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut p = vec![DenseArray::<f64>::from_vec(vec![1.0, 2.0])];
        let mut mom = Moments::zeros_like(p.iter());
        mom.m[0] = DenseArray::from_vec(vec![0.0, 0.0]);
        mom.v[0] = DenseArray::from_vec(vec![0.4, 0.2]);
        let g = vec![DenseArray::from_vec(vec![0.0, 0.0])];
        adam_step(p.iter_mut(), &g, &mut mom, 3, &cfg(1e-2)).unwrap();
        assert_eq!(p[0].data(), &[1.0, 2.0]);
        assert!((mom.v[0].data()[0] - 0.999 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn first_step_invariant_to_loss_scale() {
        let run = |c: f64| {
            let mut p = vec![DenseArray::<f64>::from_vec(vec![0.3, -0.7])];
            let mut mom = Moments::zeros_like(p.iter());
            let g = vec![DenseArray::from_vec(vec![0.25 * c, -4.0 * c])];
            let mut cf = cfg(1e-3);
            cf.adam_eps = 0.0;
            adam_step(p.iter_mut(), &g, &mut mom, 1, &cf).unwrap();
            p[0].data().to_vec()
        };
        let (a, b) = (run(1.0), run(1000.0));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_betas_is_sign_like() {
        let mut p = vec![DenseArray::<f64>::from_vec(vec![0.0, 0.0])];
        let mut mom = Moments::zeros_like(p.iter());
        let g = vec![DenseArray::from_vec(vec![0.5, -3.0])];
        let mut c = cfg(0.1);
        c.adam_betas = (0.0, 0.0);
        adam_step(p.iter_mut(), &g, &mut mom, 4, &c).unwrap();
        for (pi, gi) in p[0].data().iter().zip([0.5f64, -3.0]) {
            assert!((pi + 0.1 * gi / (gi.abs() + 1e-8)).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = vec![DenseArray::<f32>::from_vec(vec![0.0])];
        let mut mom = Moments::zeros_like(p.iter());
        let g = vec![DenseArray::from_vec(vec![f32::NAN])];
        assert!(adam_step(p.iter_mut(), &g, &mut mom, 1, &cfg(1e-3)).is_err());
    }

    #[test]
    fn loss_cases() {
        let t = [0.0, 1.0, -1.0, 2.0];
        let p: Vec<f64> = t.iter().map(|x| x + 0.5).collect();
        assert_eq!(loss_value(&t, &t, LossKind::L1).unwrap(), 0.0);
        assert_eq!(loss_value(&p, &t, LossKind::L1).unwrap(), 0.5);
        assert_eq!(loss_value(&p, &t, LossKind::L2).unwrap(), 0.25);

        let mut tape = Tape::<f64>::new();
        let a = tape.constant(DenseArray::new(vec![2, 2], p.clone()).unwrap());
        let b = tape.constant(DenseArray::new(vec![2, 2], t.to_vec()).unwrap());
        let l = loss(&mut tape, a, b, LossKind::L2).unwrap();
        assert_eq!(tape.value(l).data(), &[0.25]);
        let c = tape.constant(DenseArray::from_vec(vec![0.0; 4]));
        assert!(loss(&mut tape, a, c, LossKind::L1).is_err());
    }
}
