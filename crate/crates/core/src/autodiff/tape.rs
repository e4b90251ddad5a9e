//! Eager reverse-mode tape.
//!
//! Every primitive computes its value immediately and appends a node. Node ids
//! are assigned in recording order, so inputs always precede outputs and the
//! backward sweep is a single reverse pass over the node list.

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::array::{dims2, DenseArray, Real};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// A recorded primitive together with its attributes.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Sin,
    Exp,
    Abs,
    Relu,
    Sum,
    Mean,
    /// Concatenate along the last axis.
    Concat,
    /// Select rows of a 2-D table.
    Gather(Arc<[u32]>),
    /// `a + t * (b - a)` with broadcasting.
    Lerp,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Sin => "sin",
            Op::Exp => "exp",
            Op::Abs => "abs",
            Op::Relu => "relu",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::Concat => "concat",
            Op::Gather(_) => "gather",
            Op::Lerp => "lerp",
        }
    }
}

impl FromStr for Op {
    type Err = Error;

    /// Parses attribute-free primitives by name.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "matmul" => Op::MatMul,
            "add" => Op::Add,
            "sub" => Op::Sub,
            "mul" => Op::Mul,
            "sin" => Op::Sin,
            "exp" => Op::Exp,
            "abs" => Op::Abs,
            "relu" => Op::Relu,
            "sum" => Op::Sum,
            "mean" => Op::Mean,
            "concat" => Op::Concat,
            "lerp" => Op::Lerp,
            other => return Err(Error::UnknownPrimitive(other.to_string())),
        })
    }
}

/// Handle to a node on the tape that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    id: usize,
    tape: u64,
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }
}

struct Node<T> {
    op: Op,
    inputs: Vec<usize>,
    value: DenseArray<T>,
    /// Extra forward state kept for backward (cos for sin).
    saved: Option<Vec<T>>,
    requires_grad: bool,
}

pub struct Tape<T: Real> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward sweep.
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<DenseArray<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&DenseArray<T>> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<DenseArray<T>> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }
}

/// Broadcast geometry for a binary elementwise op over 2-D views.
#[derive(Clone, Copy)]
struct Bcast {
    rows: usize,
    cols: usize,
}

impl Bcast {
    fn of(op: &'static str, shapes: &[&[usize]]) -> Result<Self> {
        let mut rows = 1;
        let mut cols = 1;
        for s in shapes {
            let (r, c) = dims2(s);
            rows = rows.max(r);
            cols = cols.max(c);
        }
        for s in shapes {
            let (r, c) = dims2(s);
            if (r != rows && r != 1) || (c != cols && c != 1) {
                return Err(Error::ShapeMismatch {
                    op,
                    shapes: shapes.iter().map(|s| s.to_vec()).collect(),
                });
            }
        }
        Ok(Self { rows, cols })
    }

    fn out_shape(&self, shapes: &[&[usize]]) -> Vec<usize> {
        shapes
            .iter()
            .find(|s| dims2(s) == (self.rows, self.cols))
            .map(|s| s.to_vec())
            .unwrap_or_else(|| vec![self.rows, self.cols])
    }
}

#[inline]
fn bidx(shape: (usize, usize), i: usize, j: usize) -> usize {
    let (r, c) = shape;
    (if r == 1 { 0 } else { i }) * c + if c == 1 { 0 } else { j }
}

/// Sum a full `rows × cols` gradient down to a broadcast operand shape.
fn reduce_to<T: Real>(full: Vec<T>, b: Bcast, target: &[usize]) -> DenseArray<T> {
    let (tr, tc) = dims2(target);
    if (tr, tc) == (b.rows, b.cols) {
        return DenseArray::new(target.to_vec(), full).expect("reduced shape");
    }
    let mut out = vec![T::zero(); tr * tc];
    for i in 0..b.rows {
        let row = &full[i * b.cols..(i + 1) * b.cols];
        for (j, &g) in row.iter().enumerate() {
            let k = bidx((tr, tc), i, j);
            out[k] = out[k] + g;
        }
    }
    DenseArray::new(target.to_vec(), out).expect("reduced shape")
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.id >= self.nodes.len() {
            return Err(Error::ForeignVariable);
        }
        Ok(v.id)
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, value: DenseArray<T>, saved: Option<Vec<T>>) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            inputs,
            value,
            saved,
            requires_grad,
        });
        Var { id, tape: self.id }
    }

    /// Input value; `requires_grad` marks it for gradient collection.
    pub fn leaf(&mut self, value: DenseArray<T>, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value,
            saved: None,
            requires_grad,
        });
        Var { id, tape: self.id }
    }

    pub fn constant(&mut self, value: DenseArray<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &DenseArray<T> {
        &self.nodes[self.check(v).expect("variable from this tape")].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.check(v).map(|i| self.nodes[i].requires_grad).unwrap_or(false)
    }

    /// Record `op` applied to `inputs`, computing its value eagerly.
    pub fn record(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        let ids = inputs
            .iter()
            .map(|&v| self.check(v))
            .collect::<Result<Vec<_>>>()?;
        let arity = match op {
            Op::Leaf => return Err(Error::UnknownPrimitive("leaf".into())),
            Op::MatMul | Op::Add | Op::Sub | Op::Mul => Some(2),
            Op::Lerp => Some(3),
            Op::Concat => None,
            _ => Some(1),
        };
        if let Some(n) = arity {
            if ids.len() != n {
                return Err(Error::Shape(format!(
                    "{} takes {n} inputs, got {}",
                    op.name(),
                    ids.len()
                )));
            }
        }
        let (value, saved) = self.forward(&op, &ids)?;
        Ok(self.push(op, ids, value, saved))
    }

    fn forward(&self, op: &Op, ids: &[usize]) -> Result<(DenseArray<T>, Option<Vec<T>>)> {
        let val = |k: usize| &self.nodes[ids[k]].value;
        let out = match op {
            Op::Leaf => unreachable!(),
            Op::MatMul => {
                let (a, b) = (val(0), val(1));
                if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
                    return Err(Error::ShapeMismatch {
                        op: "matmul",
                        shapes: vec![a.shape().to_vec(), b.shape().to_vec()],
                    });
                }
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                let mut c = vec![T::zero(); m * n];
                if m > 0 && n > 0 {
                    // SAFETY: row-major buffers sized m×k, k×n, m×n.
                    unsafe {
                        T::gemm(
                            m,
                            k,
                            n,
                            T::one(),
                            a.data().as_ptr(),
                            k as isize,
                            1,
                            b.data().as_ptr(),
                            n as isize,
                            1,
                            T::zero(),
                            c.as_mut_ptr(),
                            n as isize,
                            1,
                        );
                    }
                }
                (DenseArray::new(vec![m, n], c)?, None)
            }
            Op::Add | Op::Sub | Op::Mul => {
                let (a, b) = (val(0), val(1));
                let name = op.name();
                let bc = Bcast::of(name, &[a.shape(), b.shape()])?;
                let (sa, sb) = (a.dims2(), b.dims2());
                let (ad, bd) = (a.data(), b.data());
                let mut out = Vec::with_capacity(bc.rows * bc.cols);
                let f: fn(T, T) -> T = match op {
                    Op::Add => |x, y| x + y,
                    Op::Sub => |x, y| x - y,
                    _ => |x, y| x * y,
                };
                if sa == sb {
                    out.extend(ad.iter().zip(bd).map(|(&x, &y)| f(x, y)));
                } else {
                    for i in 0..bc.rows {
                        for j in 0..bc.cols {
                            out.push(f(ad[bidx(sa, i, j)], bd[bidx(sb, i, j)]));
                        }
                    }
                }
                (DenseArray::new(bc.out_shape(&[a.shape(), b.shape()]), out)?, None)
            }
            Op::Lerp => {
                let (a, b, t) = (val(0), val(1), val(2));
                let shapes = [a.shape(), b.shape(), t.shape()];
                let bc = Bcast::of("lerp", &shapes)?;
                let (sa, sb, st) = (a.dims2(), b.dims2(), t.dims2());
                let mut out = Vec::with_capacity(bc.rows * bc.cols);
                for i in 0..bc.rows {
                    for j in 0..bc.cols {
                        let x = a.data()[bidx(sa, i, j)];
                        let y = b.data()[bidx(sb, i, j)];
                        let w = t.data()[bidx(st, i, j)];
                        out.push(x + w * (y - x));
                    }
                }
                (DenseArray::new(bc.out_shape(&shapes), out)?, None)
            }
            Op::Scale(c) => {
                let c = T::from_f64_lossy(*c);
                (val(0).map(|x| x * c), None)
            }
            Op::Sin => {
                let x = val(0);
                let mut s = Vec::with_capacity(x.len());
                let mut co = Vec::with_capacity(x.len());
                for &v in x.data() {
                    let (sv, cv) = v.sin_cos();
                    s.push(sv);
                    co.push(cv);
                }
                (DenseArray::new(x.shape().to_vec(), s)?, Some(co))
            }
            Op::Exp => (val(0).map(|x| x.exp()), None),
            Op::Abs => (val(0).map(|x| x.abs()), None),
            Op::Relu => (val(0).map(|x| if x > T::zero() { x } else { T::zero() }), None),
            Op::Sum | Op::Mean => {
                let x = val(0);
                let s: T = x.data().iter().copied().sum();
                let s = if matches!(op, Op::Mean) {
                    s / T::from_usize(x.len().max(1)).unwrap()
                } else {
                    s
                };
                (DenseArray::scalar(s), None)
            }
            Op::Concat => {
                if ids.is_empty() {
                    return Err(Error::Shape("concat needs at least one input".into()));
                }
                let rows = val(0).dims2().0;
                let mut widths = Vec::with_capacity(ids.len());
                for k in 0..ids.len() {
                    let (r, c) = val(k).dims2();
                    if r != rows || val(k).shape().len() != 2 {
                        return Err(Error::ShapeMismatch {
                            op: "concat",
                            shapes: (0..ids.len()).map(|k| val(k).shape().to_vec()).collect(),
                        });
                    }
                    widths.push(c);
                }
                let total: usize = widths.iter().sum();
                let mut out = Vec::with_capacity(rows * total);
                for i in 0..rows {
                    for (k, &w) in widths.iter().enumerate() {
                        out.extend_from_slice(&val(k).data()[i * w..(i + 1) * w]);
                    }
                }
                (DenseArray::new(vec![rows, total], out)?, None)
            }
            Op::Gather(idx) => {
                let table = val(0);
                if table.shape().len() != 2 {
                    return Err(Error::ShapeMismatch {
                        op: "gather",
                        shapes: vec![table.shape().to_vec()],
                    });
                }
                let (rows, f) = (table.shape()[0], table.shape()[1]);
                let mut out = Vec::with_capacity(idx.len() * f);
                for &r in idx.iter() {
                    let r = r as usize;
                    if r >= rows {
                        return Err(Error::Shape(format!(
                            "gather index {r} out of range for table with {rows} rows"
                        )));
                    }
                    out.extend_from_slice(&table.data()[r * f..(r + 1) * f]);
                }
                (DenseArray::new(vec![idx.len(), f], out)?, None)
            }
        };
        Ok(out)
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Gradients are summed over every consumer of a node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = self.check(loss)?;
        if self.nodes[root].value.len() != 1 {
            return Err(Error::NonScalarLoss(self.nodes[root].value.shape().to_vec()));
        }
        let mut grads: Vec<Option<DenseArray<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(DenseArray::full(
            self.nodes[root].value.shape().to_vec(),
            T::one(),
        ));
        for id in (0..=root).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || node.inputs.is_empty() {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn propagate(&self, node: &Node<T>, g: &DenseArray<T>, grads: &mut [Option<DenseArray<T>>]) {
        let needs = |k: usize| self.nodes[node.inputs[k]].requires_grad;
        let inp = |k: usize| &self.nodes[node.inputs[k]].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul => {
                let (a, b) = (inp(0), inp(1));
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                if needs(0) {
                    // dA = G · Bᵀ
                    let slot = &mut grads[node.inputs[0]];
                    let beta = if slot.is_some() { T::one() } else { T::zero() };
                    let target = slot.get_or_insert_with(|| DenseArray::zeros(vec![m, k]));
                    unsafe {
                        T::gemm(
                            m,
                            n,
                            k,
                            T::one(),
                            g.data().as_ptr(),
                            n as isize,
                            1,
                            b.data().as_ptr(),
                            1,
                            n as isize,
                            beta,
                            target.data_mut().as_mut_ptr(),
                            k as isize,
                            1,
                        );
                    }
                }
                if needs(1) {
                    // dB = Aᵀ · G
                    let slot = &mut grads[node.inputs[1]];
                    let beta = if slot.is_some() { T::one() } else { T::zero() };
                    let target = slot.get_or_insert_with(|| DenseArray::zeros(vec![k, n]));
                    unsafe {
                        T::gemm(
                            k,
                            m,
                            n,
                            T::one(),
                            a.data().as_ptr(),
                            1,
                            k as isize,
                            g.data().as_ptr(),
                            n as isize,
                            1,
                            beta,
                            target.data_mut().as_mut_ptr(),
                            n as isize,
                            1,
                        );
                    }
                }
            }
            Op::Add | Op::Sub | Op::Mul => {
                let (a, b) = (inp(0), inp(1));
                let bc = Bcast::of("grad", &[a.shape(), b.shape()]).expect("checked in forward");
                let (sa, sb) = (a.dims2(), b.dims2());
                let gd = g.data();
                for k in 0..2 {
                    if !needs(k) {
                        continue;
                    }
                    let full: Vec<T> = match (&node.op, k) {
                        (Op::Add, _) | (Op::Sub, 0) => gd.to_vec(),
                        (Op::Sub, _) => gd.iter().map(|&x| -x).collect(),
                        (_, 0) => bc_mul(gd, b.data(), sb, bc),
                        _ => bc_mul(gd, a.data(), sa, bc),
                    };
                    let target = if k == 0 { a.shape() } else { b.shape() };
                    accumulate(grads, node.inputs[k], reduce_to(full, bc, target));
                }
            }
            Op::Lerp => {
                let (a, b, t) = (inp(0), inp(1), inp(2));
                let bc = Bcast::of("lerp", &[a.shape(), b.shape(), t.shape()]).expect("checked");
                let (sa, sb, st) = (a.dims2(), b.dims2(), t.dims2());
                let gd = g.data();
                let n = bc.rows * bc.cols;
                let mut ga = if needs(0) { Some(Vec::with_capacity(n)) } else { None };
                let mut gb = if needs(1) { Some(Vec::with_capacity(n)) } else { None };
                let mut gt = if needs(2) { Some(Vec::with_capacity(n)) } else { None };
                for i in 0..bc.rows {
                    for j in 0..bc.cols {
                        let gv = gd[i * bc.cols + j];
                        let w = t.data()[bidx(st, i, j)];
                        if let Some(v) = ga.as_mut() {
                            v.push(gv * (T::one() - w));
                        }
                        if let Some(v) = gb.as_mut() {
                            v.push(gv * w);
                        }
                        if let Some(v) = gt.as_mut() {
                            let diff = b.data()[bidx(sb, i, j)] - a.data()[bidx(sa, i, j)];
                            v.push(gv * diff);
                        }
                    }
                }
                for (k, full) in [ga, gb, gt].into_iter().enumerate() {
                    if let Some(full) = full {
                        let target = inp(k).shape();
                        accumulate(grads, node.inputs[k], reduce_to(full, bc, target));
                    }
                }
            }
            Op::Scale(c) => {
                if needs(0) {
                    let c = T::from_f64_lossy(*c);
                    accumulate(grads, node.inputs[0], g.map(|x| x * c));
                }
            }
            Op::Sin => {
                if needs(0) {
                    let cos = node.saved.as_ref().expect("sin saves cos");
                    let d = g.data().iter().zip(cos).map(|(&x, &c)| x * c).collect();
                    accumulate(grads, node.inputs[0], DenseArray::new(g.shape().to_vec(), d).unwrap());
                }
            }
            Op::Exp => {
                if needs(0) {
                    let d = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(&x, &e)| x * e)
                        .collect();
                    accumulate(grads, node.inputs[0], DenseArray::new(g.shape().to_vec(), d).unwrap());
                }
            }
            Op::Abs | Op::Relu => {
                if needs(0) {
                    let x = inp(0);
                    let relu = matches!(node.op, Op::Relu);
                    let d = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(&gv, &xv)| {
                            if xv > T::zero() {
                                gv
                            } else if xv < T::zero() && !relu {
                                -gv
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    accumulate(grads, node.inputs[0], DenseArray::new(x.shape().to_vec(), d).unwrap());
                }
            }
            Op::Sum | Op::Mean => {
                if needs(0) {
                    let x = inp(0);
                    let mut v = g.data()[0];
                    if matches!(node.op, Op::Mean) {
                        v = v / T::from_usize(x.len().max(1)).unwrap();
                    }
                    accumulate(grads, node.inputs[0], DenseArray::full(x.shape().to_vec(), v));
                }
            }
            Op::Concat => {
                let rows = g.shape()[0];
                let total = g.shape()[1];
                let mut offset = 0;
                for k in 0..node.inputs.len() {
                    let w = inp(k).dims2().1;
                    if needs(k) {
                        let mut part = Vec::with_capacity(rows * w);
                        for i in 0..rows {
                            part.extend_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                        }
                        accumulate(grads, node.inputs[k], DenseArray::new(vec![rows, w], part).unwrap());
                    }
                    offset += w;
                }
            }
            Op::Gather(idx) => {
                if needs(0) {
                    let table = inp(0);
                    let f = table.shape()[1];
                    let slot = &mut grads[node.inputs[0]];
                    let target = slot.get_or_insert_with(|| DenseArray::zeros(table.shape().to_vec()));
                    let td = target.data_mut();
                    // Scatter-add: colliding indices accumulate.
                    for (row, &r) in idx.iter().enumerate() {
                        let dst = &mut td[r as usize * f..(r as usize + 1) * f];
                        for (d, &s) in dst.iter_mut().zip(&g.data()[row * f..(row + 1) * f]) {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
    }

    // Convenience wrappers.

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::MatMul, &[a, b])
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Mul, &[a, b])
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.record(Op::Scale(c), &[a])
    }
    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sin, &[a])
    }
    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Exp, &[a])
    }
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Abs, &[a])
    }
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Relu, &[a])
    }
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sum, &[a])
    }
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Mean, &[a])
    }
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.record(Op::Concat, parts)
    }
    pub fn gather(&mut self, table: Var, indices: impl Into<Arc<[u32]>>) -> Result<Var> {
        self.record(Op::Gather(indices.into()), &[table])
    }
    pub fn lerp(&mut self, a: Var, b: Var, t: Var) -> Result<Var> {
        self.record(Op::Lerp, &[a, b, t])
    }
}

fn bc_mul<T: Real>(g: &[T], other: &[T], so: (usize, usize), bc: Bcast) -> Vec<T> {
    if so == (bc.rows, bc.cols) {
        return g.iter().zip(other).map(|(&x, &y)| x * y).collect();
    }
    let mut out = Vec::with_capacity(g.len());
    for i in 0..bc.rows {
        for j in 0..bc.cols {
            out.push(g[i * bc.cols + j] * other[bidx(so, i, j)]);
        }
    }
    out
}

fn accumulate<T: Real>(grads: &mut [Option<DenseArray<T>>], id: usize, g: DenseArray<T>) {
    match &mut grads[id] {
        Some(existing) => {
            for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                *e = *e + *v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(shape: &[usize], v: &[f64]) -> DenseArray<f64> {
        DenseArray::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn sin_of_zero() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(arr(&[1], &[0.0]));
        let y = t.sin(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.0]);
    }

    #[test]
    fn identity_matmul() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(arr(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = t.constant(arr(&[2, 1], &[1.0, 2.0]));
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).data(), &[1.0, 2.0]);
        assert_eq!(t.shape(c), &[2, 1]);
    }

    #[test]
    fn scalar_broadcast_add() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(arr(&[2], &[1.0, 2.0]));
        let b = t.constant(DenseArray::scalar(3.0));
        let c = t.add(a, b).unwrap();
        assert_eq!(t.value(c).data(), &[4.0, 5.0]);
        assert_eq!(t.shape(c), &[2]);
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(arr(&[2, 3], &[0.0; 6]));
        let b = t.constant(arr(&[2, 2], &[0.0; 4]));
        let err = t.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("matmul"), "{err}");
        let err = t.add(a, b).unwrap_err();
        assert!(err.to_string().contains("add"), "{err}");
    }

    #[test]
    fn unknown_primitive_name() {
        assert!(matches!("conv3d".parse::<Op>(), Err(Error::UnknownPrimitive(_))));
        assert_eq!("sin".parse::<Op>().unwrap(), Op::Sin);
    }

    #[test]
    fn scaled_sine_derivative() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(arr(&[1], &[0.0]), true);
        let wx = t.scale(x, 10.0).unwrap();
        let y = t.sin(wx).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[10.0]);
    }

    #[test]
    fn matmul_weight_gradient() {
        let mut t = Tape::<f64>::new();
        let w = t.leaf(arr(&[2, 2], &[1.0, 1.0, 1.0, 1.0]), true);
        let x = t.constant(arr(&[2, 1], &[1.0, 1.0]));
        let y = t.matmul(w, x).unwrap();
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(arr(&[2], &[1.0, 2.0]), true);
        assert!(matches!(t.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn foreign_variable_rejected() {
        let mut t1 = Tape::<f64>::new();
        let mut t2 = Tape::<f64>::new();
        let x = t1.leaf(arr(&[1], &[1.0]), true);
        let _ = t2.leaf(arr(&[1], &[1.0]), true);
        assert!(matches!(t2.sin(x), Err(Error::ForeignVariable)));
    }

    #[test]
    fn fan_out_accumulates() {
        // y = x*x + x → dy/dx = 2x + 1
        let mut t = Tape::<f64>::new();
        let x = t.leaf(arr(&[1], &[3.0]), true);
        let sq = t.mul(x, x).unwrap();
        let y = t.add(sq, x).unwrap();
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[7.0]);
    }

    #[test]
    fn gather_collisions_accumulate() {
        let mut t = Tape::<f64>::new();
        let table = t.leaf(arr(&[3, 2], &[0.0; 6]), true);
        let rows = t.gather(table, vec![1u32, 1, 2]).unwrap();
        let s = t.sum(rows).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(table).unwrap().data(), &[0.0, 0.0, 2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn gather_index_out_of_range() {
        let mut t = Tape::<f64>::new();
        let table = t.leaf(arr(&[2, 1], &[0.0; 2]), true);
        assert!(t.gather(table, vec![2u32]).is_err());
    }

    #[test]
    fn broadcast_bias_gradient_sums_rows() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(arr(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = t.leaf(arr(&[1, 2], &[0.0, 0.0]), true);
        let y = t.add(x, b).unwrap();
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(b).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn lerp_endpoints_and_gradient() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(arr(&[1, 2], &[1.0, 2.0]), true);
        let b = t.leaf(arr(&[1, 2], &[3.0, 6.0]), true);
        let w = t.leaf(arr(&[1, 1], &[0.25]), true);
        let y = t.lerp(a, b, w).unwrap();
        assert_eq!(t.value(y).data(), &[1.5, 3.0]);
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[0.75, 0.75]);
        assert_eq!(g.get(b).unwrap().data(), &[0.25, 0.25]);
        assert_eq!(g.get(w).unwrap().data(), &[6.0]);
    }

    #[test]
    fn concat_splits_gradient() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(arr(&[2, 1], &[1.0, 2.0]), true);
        let b = t.leaf(arr(&[2, 2], &[3.0, 4.0, 5.0, 6.0]), true);
        let c = t.concat(&[a, b]).unwrap();
        assert_eq!(t.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let w = t.constant(arr(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let p = t.mul(c, w).unwrap();
        let s = t.sum(p).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[1.0, 4.0]);
        assert_eq!(g.get(b).unwrap().data(), &[2.0, 3.0, 5.0, 6.0]);
    }
}
