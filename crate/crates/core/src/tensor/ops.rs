//! Forward and backward rules for every [`OpKind`].
//!
//! Kernels are plain functions over row-major buffers so that the graph and
//! the finite-difference checker share one forward implementation.

use std::cmp::Ordering;

use super::dense::numel;
use super::scalar::gemm;
use super::{Scalar, TensorError};

/// Operator set of the autodiff engine. Attributes travel with the kind.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    /// `[m,k] · [k,n] -> [m,n]`.
    MatMul,
    /// Elementwise sum; the second operand may broadcast over leading axes.
    Add,
    /// Elementwise product with the same broadcasting rule as `Add`.
    Mul,
    Scale(f64),
    Concat { axis: usize },
    Slice { axis: usize, start: usize, end: usize },
    /// Selects rows along axis 0; repeated rows are allowed.
    Gather { rows: Vec<usize> },
    /// Rank-2 transpose.
    Transpose,
    Reshape { shape: Vec<usize> },
    Relu,
    /// Tanh approximation: `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
    Gelu,
    Softmax { axis: usize },
    /// Normalisation without affine parameters.
    LayerNorm { axis: usize, eps: f64 },
    /// Removes `axis`; ties resolve to the lowest index.
    MaxReduce { axis: usize },
    /// Replaces `axis` by the `k` largest entries in descending order;
    /// ties resolve to the lowest index.
    TopkReduce { axis: usize, k: usize },
    MeanReduce { axis: usize },
    /// Mean cross-entropy over a `[C]` or `[B,C]` logit tensor.
    CrossEntropyWithLogits { labels: Vec<usize> },
    /// `[P,D], [Q,D] -> [P,Q]` of squared Euclidean distances.
    SquaredDistanceMatrix,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Scale(_) => "scale",
            OpKind::Concat { .. } => "concat",
            OpKind::Slice { .. } => "slice",
            OpKind::Gather { .. } => "gather",
            OpKind::Transpose => "transpose",
            OpKind::Reshape { .. } => "reshape",
            OpKind::Relu => "relu",
            OpKind::Gelu => "gelu",
            OpKind::Softmax { .. } => "softmax",
            OpKind::LayerNorm { .. } => "layernorm",
            OpKind::MaxReduce { .. } => "max_reduce",
            OpKind::TopkReduce { .. } => "topk_reduce",
            OpKind::MeanReduce { .. } => "mean_reduce",
            OpKind::CrossEntropyWithLogits { .. } => "cross_entropy_with_logits",
            OpKind::SquaredDistanceMatrix => "squared_distance_matrix",
        }
    }

    /// Number of tensor operands, `None` for variadic kinds.
    pub fn arity(&self) -> Option<usize> {
        match self {
            OpKind::MatMul | OpKind::Add | OpKind::Mul | OpKind::SquaredDistanceMatrix => Some(2),
            OpKind::Concat { .. } => None,
            _ => Some(1),
        }
    }
}

/// Borrowed operand.
#[derive(Clone, Copy)]
pub(crate) struct In<'a, T> {
    pub shape: &'a [usize],
    pub data: &'a [T],
}

/// Data a backward rule needs beyond the operand and output values.
#[derive(Clone, Debug, Default)]
pub(crate) enum Saved<T> {
    #[default]
    Nothing,
    Indices(Vec<usize>),
    Values(Vec<T>),
}

pub(crate) struct Out<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub saved: Saved<T>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn mismatch(kind: &OpKind, detail: String) -> TensorError {
    TensorError::ShapeMismatch {
        op: kind.name(),
        detail,
    }
}

/// `(outer, len, inner)` decomposition of `shape` around `axis`.
fn lanes(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let len = shape[axis];
    let inner = numel(&shape[axis + 1..]);
    (outer, len, inner)
}

fn check_axis(kind: &OpKind, shape: &[usize], axis: usize) -> Result<(), TensorError> {
    if axis >= shape.len() {
        return Err(TensorError::InvalidAxis {
            op: kind.name(),
            axis,
            rank: shape.len(),
        });
    }
    Ok(())
}

fn broadcast_ok(a: &[usize], b: &[usize]) -> bool {
    a == b || (!b.is_empty() && b.len() <= a.len() && a[a.len() - b.len()..] == *b)
}

pub(crate) fn forward<T: Scalar>(kind: &OpKind, inputs: &[In<'_, T>]) -> Result<Out<T>, TensorError> {
    if let Some(n) = kind.arity() {
        if inputs.len() != n {
            return Err(mismatch(
                kind,
                format!("expected {n} operands, got {}", inputs.len()),
            ));
        }
    } else if inputs.is_empty() {
        return Err(mismatch(kind, "no operands".into()));
    }
    let plain = |shape: Vec<usize>, data: Vec<T>| Out {
        shape,
        data,
        saved: Saved::Nothing,
    };
    match kind {
        OpKind::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
                return Err(mismatch(kind, format!("{:?} x {:?}", a.shape, b.shape)));
            }
            let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
            let mut c = vec![T::zero(); m * n];
            gemm(m, k, n, a.data, false, b.data, false, &mut c, false);
            Ok(plain(vec![m, n], c))
        }
        OpKind::Add | OpKind::Mul => {
            let (a, b) = (inputs[0], inputs[1]);
            if !broadcast_ok(a.shape, b.shape) {
                return Err(mismatch(kind, format!("{:?} with {:?}", a.shape, b.shape)));
            }
            let nb = b.data.len();
            let mut c = a.data.to_vec();
            let add = matches!(kind, OpKind::Add);
            for chunk in c.chunks_exact_mut(nb) {
                if add {
                    chunk.iter_mut().zip(b.data).for_each(|(x, &y)| *x += y);
                } else {
                    chunk.iter_mut().zip(b.data).for_each(|(x, &y)| *x *= y);
                }
            }
            Ok(plain(a.shape.to_vec(), c))
        }
        OpKind::Scale(s) => {
            let s = T::of(*s);
            let a = inputs[0];
            Ok(plain(a.shape.to_vec(), a.data.iter().map(|&v| v * s).collect()))
        }
        OpKind::Concat { axis } => {
            let first = inputs[0].shape;
            check_axis(kind, first, *axis)?;
            let mut total = 0;
            for x in inputs {
                if x.shape.len() != first.len()
                    || x.shape
                        .iter()
                        .zip(first)
                        .enumerate()
                        .any(|(i, (p, q))| i != *axis && p != q)
                {
                    return Err(mismatch(kind, format!("{:?} vs {:?} on axis {axis}", x.shape, first)));
                }
                total += x.shape[*axis];
            }
            let mut shape = first.to_vec();
            shape[*axis] = total;
            let (outer, _, inner) = lanes(first, *axis);
            let mut data = Vec::with_capacity(numel(&shape));
            for o in 0..outer {
                for x in inputs {
                    let block = x.shape[*axis] * inner;
                    data.extend_from_slice(&x.data[o * block..(o + 1) * block]);
                }
            }
            Ok(plain(shape, data))
        }
        OpKind::Slice { axis, start, end } => {
            let a = inputs[0];
            check_axis(kind, a.shape, *axis)?;
            if start > end || *end > a.shape[*axis] {
                return Err(mismatch(
                    kind,
                    format!("range {start}..{end} on axis {axis} of {:?}", a.shape),
                ));
            }
            let (outer, len, inner) = lanes(a.shape, *axis);
            let mut shape = a.shape.to_vec();
            shape[*axis] = end - start;
            let mut data = Vec::with_capacity(numel(&shape));
            for o in 0..outer {
                let base = o * len * inner;
                data.extend_from_slice(&a.data[base + start * inner..base + end * inner]);
            }
            Ok(plain(shape, data))
        }
        OpKind::Gather { rows } => {
            let a = inputs[0];
            if a.shape.is_empty() {
                return Err(mismatch(kind, "gather on a scalar".into()));
            }
            let r = a.shape[0];
            let width = numel(&a.shape[1..]);
            let mut data = Vec::with_capacity(rows.len() * width);
            for &i in rows {
                if i >= r {
                    return Err(TensorError::IndexOutOfRange { index: i, len: r });
                }
                data.extend_from_slice(&a.data[i * width..(i + 1) * width]);
            }
            let mut shape = a.shape.to_vec();
            shape[0] = rows.len();
            Ok(plain(shape, data))
        }
        OpKind::Transpose => {
            let a = inputs[0];
            if a.shape.len() != 2 {
                return Err(mismatch(kind, format!("rank-2 required, got {:?}", a.shape)));
            }
            let (r, c) = (a.shape[0], a.shape[1]);
            let mut data = vec![T::zero(); r * c];
            for i in 0..r {
                for j in 0..c {
                    data[j * r + i] = a.data[i * c + j];
                }
            }
            Ok(plain(vec![c, r], data))
        }
        OpKind::Reshape { shape } => {
            let a = inputs[0];
            if numel(shape) != a.data.len() {
                return Err(mismatch(kind, format!("{:?} -> {:?}", a.shape, shape)));
            }
            Ok(plain(shape.clone(), a.data.to_vec()))
        }
        OpKind::Relu => {
            let a = inputs[0];
            let data = a
                .data
                .iter()
                .map(|&v| if v > T::zero() { v } else { T::zero() })
                .collect();
            Ok(plain(a.shape.to_vec(), data))
        }
        OpKind::Gelu => {
            let a = inputs[0];
            Ok(plain(a.shape.to_vec(), a.data.iter().map(|&v| gelu(v)).collect()))
        }
        OpKind::Softmax { axis } => {
            let a = inputs[0];
            check_axis(kind, a.shape, *axis)?;
            let (outer, len, inner) = lanes(a.shape, *axis);
            let mut data = vec![T::zero(); a.data.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |l: usize| o * len * inner + l * inner + i;
                    let mut mx = T::neg_infinity();
                    for l in 0..len {
                        mx = mx.max(a.data[at(l)]);
                    }
                    let mut sum = T::zero();
                    for l in 0..len {
                        let e = (a.data[at(l)] - mx).exp();
                        data[at(l)] = e;
                        sum += e;
                    }
                    let inv = T::one() / sum;
                    for l in 0..len {
                        data[at(l)] *= inv;
                    }
                }
            }
            Ok(plain(a.shape.to_vec(), data))
        }
        OpKind::LayerNorm { axis, eps } => {
            let a = inputs[0];
            check_axis(kind, a.shape, *axis)?;
            let (outer, len, inner) = lanes(a.shape, *axis);
            let eps = T::of(*eps);
            let n = T::of(len as f64);
            let mut data = vec![T::zero(); a.data.len()];
            let mut rstd = Vec::with_capacity(outer * inner);
            for o in 0..outer {
                for i in 0..inner {
                    let at = |l: usize| o * len * inner + l * inner + i;
                    let mut mean = T::zero();
                    for l in 0..len {
                        mean += a.data[at(l)];
                    }
                    mean = mean / n;
                    let mut var = T::zero();
                    for l in 0..len {
                        let d = a.data[at(l)] - mean;
                        var += d * d;
                    }
                    var = var / n;
                    let r = T::one() / (var + eps).sqrt();
                    for l in 0..len {
                        data[at(l)] = (a.data[at(l)] - mean) * r;
                    }
                    rstd.push(r);
                }
            }
            Ok(Out {
                shape: a.shape.to_vec(),
                data,
                saved: Saved::Values(rstd),
            })
        }
        OpKind::MaxReduce { axis } => {
            let a = inputs[0];
            check_axis(kind, a.shape, *axis)?;
            let (outer, len, inner) = lanes(a.shape, *axis);
            if len == 0 {
                return Err(mismatch(kind, "reduction over an empty axis".into()));
            }
            let mut data = Vec::with_capacity(outer * inner);
            let mut idx = Vec::with_capacity(outer * inner);
            for o in 0..outer {
                for i in 0..inner {
                    let mut best = o * len * inner + i;
                    for l in 1..len {
                        let at = o * len * inner + l * inner + i;
                        if a.data[at] > a.data[best] {
                            best = at;
                        }
                    }
                    data.push(a.data[best]);
                    idx.push(best);
                }
            }
            let mut shape = a.shape.to_vec();
            shape.remove(*axis);
            Ok(Out {
                shape,
                data,
                saved: Saved::Indices(idx),
            })
        }
        OpKind::TopkReduce { axis, k } => {
            let a = inputs[0];
            check_axis(kind, a.shape, *axis)?;
            let (outer, len, inner) = lanes(a.shape, *axis);
            if *k == 0 || *k > len {
                return Err(mismatch(kind, format!("k={k} on axis of length {len}")));
            }
            let mut shape = a.shape.to_vec();
            shape[*axis] = *k;
            let mut data = vec![T::zero(); outer * k * inner];
            let mut idx = vec![0usize; outer * k * inner];
            let mut order: Vec<usize> = Vec::with_capacity(len);
            for o in 0..outer {
                for i in 0..inner {
                    let at = |l: usize| o * len * inner + l * inner + i;
                    order.clear();
                    order.extend(0..len);
                    order.sort_by(|&x, &y| {
                        a.data[at(y)]
                            .partial_cmp(&a.data[at(x)])
                            .unwrap_or(Ordering::Equal)
                            .then(x.cmp(&y))
                    });
                    for (r, &l) in order.iter().take(*k).enumerate() {
                        let dst = o * k * inner + r * inner + i;
                        data[dst] = a.data[at(l)];
                        idx[dst] = at(l);
                    }
                }
            }
            Ok(Out {
                shape,
                data,
                saved: Saved::Indices(idx),
            })
        }
        OpKind::MeanReduce { axis } => {
            let a = inputs[0];
            check_axis(kind, a.shape, *axis)?;
            let (outer, len, inner) = lanes(a.shape, *axis);
            if len == 0 {
                return Err(mismatch(kind, "reduction over an empty axis".into()));
            }
            let n = T::of(len as f64);
            let mut data = vec![T::zero(); outer * inner];
            for o in 0..outer {
                for l in 0..len {
                    let src = &a.data[o * len * inner + l * inner..o * len * inner + (l + 1) * inner];
                    data[o * inner..(o + 1) * inner]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(d, &s)| *d += s);
                }
            }
            data.iter_mut().for_each(|v| *v = *v / n);
            let mut shape = a.shape.to_vec();
            shape.remove(*axis);
            Ok(plain(shape, data))
        }
        OpKind::CrossEntropyWithLogits { labels } => {
            let a = inputs[0];
            let (rows, classes) = match a.shape {
                [c] => (1, *c),
                [b, c] => (*b, *c),
                _ => return Err(mismatch(kind, format!("logits must be [C] or [B,C], got {:?}", a.shape))),
            };
            if labels.len() != rows {
                return Err(mismatch(kind, format!("{} labels for {rows} rows", labels.len())));
            }
            let mut probs = vec![T::zero(); a.data.len()];
            let mut total = T::zero();
            for (r, &label) in labels.iter().enumerate() {
                if label >= classes {
                    return Err(TensorError::IndexOutOfRange {
                        index: label,
                        len: classes,
                    });
                }
                let row = &a.data[r * classes..(r + 1) * classes];
                let mx = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                let mut sum = T::zero();
                for (p, &v) in probs[r * classes..(r + 1) * classes].iter_mut().zip(row) {
                    *p = (v - mx).exp();
                    sum += *p;
                }
                let lse = mx + sum.ln();
                total += lse - row[label];
                let inv = T::one() / sum;
                probs[r * classes..(r + 1) * classes]
                    .iter_mut()
                    .for_each(|p| *p *= inv);
            }
            Ok(Out {
                shape: Vec::new(),
                data: vec![total / T::of(rows as f64)],
                saved: Saved::Values(probs),
            })
        }
        OpKind::SquaredDistanceMatrix => {
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[1] {
                return Err(mismatch(kind, format!("{:?} vs {:?}", a.shape, b.shape)));
            }
            let (p, q, d) = (a.shape[0], b.shape[0], a.shape[1]);
            let mut data = Vec::with_capacity(p * q);
            for i in 0..p {
                let ai = &a.data[i * d..(i + 1) * d];
                for j in 0..q {
                    let bj = &b.data[j * d..(j + 1) * d];
                    let mut s = T::zero();
                    for (&x, &y) in ai.iter().zip(bj) {
                        let t = x - y;
                        s += t * t;
                    }
                    data.push(s);
                }
            }
            Ok(plain(vec![p, q], data))
        }
    }
}

#[inline]
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    half * x * (T::one() + tanh(c * (x + a * x * x * x)))
}

/// `tanh` through one `exp`, several times cheaper than libm's `tanh` and
/// accurate to a few ulps in absolute terms.
#[inline]
fn tanh<T: Scalar>(u: T) -> T {
    let two = T::of(2.0);
    T::one() - two / ((two * u).exp() + T::one())
}

#[inline]
fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    let t = tanh(c * (x + a * x * x * x));
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * x * x)
}

/// Gradients for each operand flagged in `needs`; `g` is the output gradient.
pub(crate) fn backward<T: Scalar>(
    kind: &OpKind,
    inputs: &[In<'_, T>],
    output: In<'_, T>,
    saved: &Saved<T>,
    g: &[T],
    needs: &[bool],
) -> Vec<Option<Vec<T>>> {
    let mut grads: Vec<Option<Vec<T>>> = vec![None; inputs.len()];
    match kind {
        OpKind::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
            if needs[0] {
                let mut da = vec![T::zero(); m * k];
                gemm(m, n, k, g, false, b.data, true, &mut da, false);
                grads[0] = Some(da);
            }
            if needs[1] {
                let mut db = vec![T::zero(); k * n];
                gemm(k, m, n, a.data, true, g, false, &mut db, false);
                grads[1] = Some(db);
            }
        }
        OpKind::Add => {
            if needs[0] {
                grads[0] = Some(g.to_vec());
            }
            if needs[1] {
                let nb = inputs[1].data.len();
                let mut db = vec![T::zero(); nb];
                for chunk in g.chunks_exact(nb) {
                    db.iter_mut().zip(chunk).for_each(|(d, &v)| *d += v);
                }
                grads[1] = Some(db);
            }
        }
        OpKind::Mul => {
            let (a, b) = (inputs[0], inputs[1]);
            let nb = b.data.len();
            if needs[0] {
                let mut da = g.to_vec();
                for chunk in da.chunks_exact_mut(nb) {
                    chunk.iter_mut().zip(b.data).for_each(|(d, &y)| *d *= y);
                }
                grads[0] = Some(da);
            }
            if needs[1] {
                let mut db = vec![T::zero(); nb];
                for (gc, ac) in g.chunks_exact(nb).zip(a.data.chunks_exact(nb)) {
                    for ((d, &gv), &av) in db.iter_mut().zip(gc).zip(ac) {
                        *d += gv * av;
                    }
                }
                grads[1] = Some(db);
            }
        }
        OpKind::Scale(s) => {
            if needs[0] {
                let s = T::of(*s);
                grads[0] = Some(g.iter().map(|&v| v * s).collect());
            }
        }
        OpKind::Concat { axis } => {
            let (outer, _, inner) = lanes(inputs[0].shape, *axis);
            let total: usize = inputs.iter().map(|x| x.shape[*axis]).sum();
            let mut offset = 0;
            for (j, x) in inputs.iter().enumerate() {
                let len = x.shape[*axis];
                if needs[j] {
                    let mut dx = Vec::with_capacity(x.data.len());
                    for o in 0..outer {
                        let base = o * total * inner + offset * inner;
                        dx.extend_from_slice(&g[base..base + len * inner]);
                    }
                    grads[j] = Some(dx);
                }
                offset += len;
            }
        }
        OpKind::Slice { axis, start, end } => {
            if needs[0] {
                let a = inputs[0];
                let (outer, len, inner) = lanes(a.shape, *axis);
                let mut da = vec![T::zero(); a.data.len()];
                let width = (end - start) * inner;
                for o in 0..outer {
                    let dst = o * len * inner + start * inner;
                    da[dst..dst + width].copy_from_slice(&g[o * width..(o + 1) * width]);
                }
                grads[0] = Some(da);
            }
        }
        OpKind::Gather { rows } => {
            if needs[0] {
                let a = inputs[0];
                let width = numel(&a.shape[1..]);
                let mut da = vec![T::zero(); a.data.len()];
                for (r, &i) in rows.iter().enumerate() {
                    da[i * width..(i + 1) * width]
                        .iter_mut()
                        .zip(&g[r * width..(r + 1) * width])
                        .for_each(|(d, &v)| *d += v);
                }
                grads[0] = Some(da);
            }
        }
        OpKind::Transpose => {
            if needs[0] {
                let (r, c) = (inputs[0].shape[0], inputs[0].shape[1]);
                let mut da = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] = g[j * r + i];
                    }
                }
                grads[0] = Some(da);
            }
        }
        OpKind::Reshape { .. } => {
            if needs[0] {
                grads[0] = Some(g.to_vec());
            }
        }
        OpKind::Relu => {
            if needs[0] {
                grads[0] = Some(
                    inputs[0]
                        .data
                        .iter()
                        .zip(g)
                        .map(|(&x, &gv)| if x > T::zero() { gv } else { T::zero() })
                        .collect(),
                );
            }
        }
        OpKind::Gelu => {
            if needs[0] {
                grads[0] = Some(
                    inputs[0]
                        .data
                        .iter()
                        .zip(g)
                        .map(|(&x, &gv)| gv * gelu_grad(x))
                        .collect(),
                );
            }
        }
        OpKind::Softmax { axis } => {
            if needs[0] {
                let (outer, len, inner) = lanes(inputs[0].shape, *axis);
                let y = output.data;
                let mut dx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| o * len * inner + l * inner + i;
                        let mut dot = T::zero();
                        for l in 0..len {
                            dot += g[at(l)] * y[at(l)];
                        }
                        for l in 0..len {
                            dx[at(l)] = y[at(l)] * (g[at(l)] - dot);
                        }
                    }
                }
                grads[0] = Some(dx);
            }
        }
        OpKind::LayerNorm { axis, .. } => {
            if needs[0] {
                let (outer, len, inner) = lanes(inputs[0].shape, *axis);
                let y = output.data;
                let rstd = match saved {
                    Saved::Values(v) => v,
                    _ => unreachable!("layernorm saves rstd"),
                };
                let n = T::of(len as f64);
                let mut dx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| o * len * inner + l * inner + i;
                        let mut mg = T::zero();
                        let mut mgy = T::zero();
                        for l in 0..len {
                            mg += g[at(l)];
                            mgy += g[at(l)] * y[at(l)];
                        }
                        mg = mg / n;
                        mgy = mgy / n;
                        let r = rstd[o * inner + i];
                        for l in 0..len {
                            dx[at(l)] = r * (g[at(l)] - mg - y[at(l)] * mgy);
                        }
                    }
                }
                grads[0] = Some(dx);
            }
        }
        OpKind::MaxReduce { .. } | OpKind::TopkReduce { .. } => {
            if needs[0] {
                let idx = match saved {
                    Saved::Indices(v) => v,
                    _ => unreachable!("selection ops save indices"),
                };
                let mut dx = vec![T::zero(); inputs[0].data.len()];
                for (&i, &gv) in idx.iter().zip(g) {
                    dx[i] += gv;
                }
                grads[0] = Some(dx);
            }
        }
        OpKind::MeanReduce { axis } => {
            if needs[0] {
                let (outer, len, inner) = lanes(inputs[0].shape, *axis);
                let n = T::of(len as f64);
                let mut dx = vec![T::zero(); inputs[0].data.len()];
                for o in 0..outer {
                    for l in 0..len {
                        let dst = o * len * inner + l * inner;
                        dx[dst..dst + inner]
                            .iter_mut()
                            .zip(&g[o * inner..(o + 1) * inner])
                            .for_each(|(d, &v)| *d = v / n);
                    }
                }
                grads[0] = Some(dx);
            }
        }
        OpKind::CrossEntropyWithLogits { labels } => {
            if needs[0] {
                let probs = match saved {
                    Saved::Values(v) => v,
                    _ => unreachable!("cross entropy saves probabilities"),
                };
                let rows = labels.len();
                let classes = probs.len() / rows;
                let scale = g[0] / T::of(rows as f64);
                let mut dx: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (r, &label) in labels.iter().enumerate() {
                    dx[r * classes + label] -= scale;
                }
                grads[0] = Some(dx);
            }
        }
        OpKind::SquaredDistanceMatrix => {
            let (a, b) = (inputs[0], inputs[1]);
            let (p, q, d) = (a.shape[0], b.shape[0], a.shape[1]);
            let two = T::of(2.0);
            let mut da = needs[0].then(|| vec![T::zero(); p * d]);
            let mut db = needs[1].then(|| vec![T::zero(); q * d]);
            for i in 0..p {
                for j in 0..q {
                    let gv = g[i * q + j] * two;
                    if gv == T::zero() {
                        continue;
                    }
                    for c in 0..d {
                        let diff = a.data[i * d + c] - b.data[j * d + c];
                        if let Some(da) = da.as_mut() {
                            da[i * d + c] += gv * diff;
                        }
                        if let Some(db) = db.as_mut() {
                            db[j * d + c] -= gv * diff;
                        }
                    }
                }
            }
            grads[0] = da;
            grads[1] = db;
        }
    }
    grads
}
