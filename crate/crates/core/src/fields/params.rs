use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{DenseArray, Real, Tape, Var};
use crate::error::{Error, Result};

/// Ordered collection of named parameter arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock<T> {
    entries: Vec<(String, DenseArray<T>)>,
}

impl<T> Default for ParamBlock<T> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<T: Real> ParamBlock<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: DenseArray<T>) {
        self.entries.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<&DenseArray<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DenseArray<T>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseArray<T>)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn arrays(&self) -> impl Iterator<Item = &DenseArray<T>> {
        self.entries.iter().map(|(_, v)| v)
    }

    pub fn arrays_mut(&mut self) -> impl Iterator<Item = &mut DenseArray<T>> {
        self.entries.iter_mut().map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamBlock<U> {
        ParamBlock {
            entries: self
                .entries
                .iter()
                .map(|(n, v)| (n.clone(), v.cast()))
                .collect(),
        }
    }

    /// Check that `other` has the same names and shapes, in order.
    pub fn check_compatible(&self, other: &ParamBlock<T>, block: &str) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "{block} block has {} arrays, expected {}",
                other.len(),
                self.len()
            )));
        }
        for ((n, a), (m, b)) in self.entries.iter().zip(&other.entries) {
            if n != m {
                return Err(Error::MissingBlock(format!("{block}/{n}")));
            }
            if a.shape() != b.shape() {
                return Err(Error::BlockShape {
                    block: format!("{block}/{n}"),
                    expected: a.shape().to_vec(),
                    found: b.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Put every array on the tape as a leaf.
    pub fn bind(&self, tape: &mut Tape<T>, requires_grad: bool) -> Vec<Var> {
        self.entries
            .iter()
            .map(|(_, v)| tape.leaf(v.clone(), requires_grad))
            .collect()
    }
}

pub(crate) fn uniform<T: Real>(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> DenseArray<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_lossy(lo + (hi - lo) * rng.gen::<f64>()))
        .collect();
    DenseArray::new(shape, data).expect("sized by shape")
}

/// Dense layer `x @ W + b` with `W: [fan_in, fan_out]`, `b: [1, fan_out]`.
pub(crate) fn linear<T: Real>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    tape.add(xw, b)
}

/// ReLU head: `layers` hidden layers of `width`, then a linear output.
pub(crate) fn init_relu_head<T: Real>(
    rng: &mut ChaCha8Rng,
    block: &mut ParamBlock<T>,
    in_dim: usize,
    width: usize,
    layers: usize,
    out_dim: usize,
) {
    let mut fan_in = in_dim;
    for i in 0..layers {
        let bound = (6.0 / fan_in as f64).sqrt();
        block.push(format!("head{i}.weight"), uniform(rng, vec![fan_in, width], -bound, bound));
        block.push(format!("head{i}.bias"), DenseArray::zeros(vec![1, width]));
        fan_in = width;
    }
    let bound = (1.0 / fan_in as f64).sqrt();
    block.push(format!("head{layers}.weight"), uniform(rng, vec![fan_in, out_dim], -bound, bound));
    block.push(format!("head{layers}.bias"), DenseArray::zeros(vec![1, out_dim]));
}

pub(crate) fn relu_head_count(in_dim: usize, width: usize, layers: usize, out_dim: usize) -> usize {
    if layers == 0 {
        return in_dim * out_dim + out_dim;
    }
    (in_dim * width + width) + (layers - 1) * (width * width + width) + (width * out_dim + out_dim)
}

pub(crate) fn apply_relu_head<T: Real>(tape: &mut Tape<T>, params: &[Var], mut h: Var) -> Result<Var> {
    let n_layers = params.len() / 2;
    for (i, wb) in params.chunks(2).enumerate() {
        h = linear(tape, h, wb[0], wb[1])?;
        if i + 1 < n_layers {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}

/// One-hot column selectors `e_k: [d, 1]`, used to slice coordinate columns on the tape.
pub(crate) fn coordinate_columns<T: Real>(tape: &mut Tape<T>, x: Var) -> Result<Vec<Var>> {
    let d = tape.shape(x)[1];
    (0..d)
        .map(|k| {
            let mut e = DenseArray::zeros(vec![d, 1]);
            e.data_mut()[k] = T::one();
            let e = tape.constant(e);
            tape.matmul(x, e)
        })
        .collect()
}
