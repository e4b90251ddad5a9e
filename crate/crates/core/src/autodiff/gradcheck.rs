use super::array::DenseArray;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Compare tape gradients of a scalar function with central differences.
///
/// `f` builds the function on a fresh tape from its input variable. Returns the
/// largest `|autograd - central| / (|central| + 1e-12)` over all coordinates.
/// A coordinate whose one-sided slopes disagree (a kink such as `|x|` at 0) is
/// reported as [`Error::NonDifferentiable`] instead of being compared.
pub fn grad_check<F>(f: F, point: &DenseArray<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let (auto, fd) = paired(f, point, h)?;
    Ok(auto
        .iter()
        .zip(&fd)
        .map(|(a, c)| (a - c).abs() / (c.abs() + 1e-12))
        .fold(0.0, f64::max))
}

/// As [`grad_check`], but returns `||autograd - central|| / ||central||`.
pub fn grad_check_norm<F>(f: F, point: &DenseArray<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let (auto, fd) = paired(f, point, h)?;
    let num = auto.iter().zip(&fd).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
    let den = fd.iter().map(|c| c * c).sum::<f64>().sqrt();
    Ok(if den == 0.0 { num } else { num / den })
}

fn paired<F>(f: F, point: &DenseArray<f64>, h: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("step h must be positive, got {h}")));
    }
    if let Some(index) = point.first_non_finite() {
        return Err(Error::NonFinite {
            context: "grad_check point".into(),
            index,
        });
    }
    let eval = |p: &DenseArray<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(p.clone(), false);
        let y = f(&mut tape, x)?;
        let v = tape.value(y);
        if v.len() != 1 {
            return Err(Error::NonScalarLoss(v.shape().to_vec()));
        }
        Ok(v.data()[0])
    };

    let mut tape = Tape::new();
    let x = tape.leaf(point.clone(), true);
    let y = f(&mut tape, x)?;
    let f0 = tape.value(y).data().first().copied().unwrap_or(f64::NAN);
    let grads = tape.backward(y)?;
    let auto = grads
        .get(x)
        .cloned()
        .unwrap_or_else(|| DenseArray::zeros(point.shape().to_vec()));

    let mut out_auto = Vec::with_capacity(point.len());
    let mut out_fd = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += h;
        let mut minus = point.clone();
        minus.data_mut()[i] -= h;
        let (fp, fm) = (eval(&plus)?, eval(&minus)?);
        let a = auto.data()[i];
        if !(fp.is_finite() && fm.is_finite() && f0.is_finite() && a.is_finite()) {
            return Err(Error::NonFinite {
                context: "grad_check".into(),
                index: i,
            });
        }
        let right = (fp - f0) / h;
        let left = (f0 - fm) / h;
        if (right - left).abs() > 1e-3 * (1.0 + right.abs().max(left.abs())) {
            return Err(Error::NonDifferentiable { index: i, left, right });
        }
        let central = (fp - fm) / (2.0 * h);
        out_auto.push(a);
        out_fd.push(central);
    }
    Ok((out_auto, out_fd))
}
