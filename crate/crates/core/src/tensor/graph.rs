use std::collections::HashMap;
use std::sync::Arc;

use super::dense::numel;
use super::ops::{self, In, OpKind, Saved};
use super::{Scalar, Tensor, TensorError};

/// Handle to a tensor node inside a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Producer<T> {
    kind: OpKind,
    inputs: Vec<Var>,
    saved: Saved<T>,
}

struct Node<T> {
    shape: Vec<usize>,
    value: Arc<Vec<T>>,
    producer: Option<Producer<T>>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Reverse-mode autodiff graph.
///
/// Nodes are appended in creation order, so every producer's inputs precede it
/// and reverse creation order is a valid reverse topological order. A graph is
/// meant to live on one thread; leaf values are `Arc`-shared so frozen
/// parameters can be bound without copying.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

/// Accumulated leaf gradients returned by [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Gradients<T> {
    grads: HashMap<Var, Vec<T>>,
}

impl<T> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(&v).map(Vec::as_slice)
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.remove(&v)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_leaf(&mut self, shape: Vec<usize>, value: Arc<Vec<T>>, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            producer: None,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> Var {
        let shape = t.shape().to_vec();
        self.push_leaf(shape, Arc::new(t.into_data()), requires_grad)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t, false)
    }

    /// Leaf that shares an existing buffer (used to bind parameters).
    pub fn shared_leaf(&mut self, shape: &[usize], value: Arc<Vec<T>>, requires_grad: bool) -> Result<Var, TensorError> {
        if numel(shape) != value.len() {
            return Err(TensorError::DataLength {
                shape: shape.to_vec(),
                expected: numel(shape),
                got: value.len(),
            });
        }
        Ok(self.push_leaf(shape.to_vec(), value, requires_grad))
    }

    /// Applies `kind` to `inputs` and records the producer.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var, TensorError> {
        let out = {
            let views: Vec<In<'_, T>> = inputs
                .iter()
                .map(|v| {
                    let n = &self.nodes[v.0];
                    In {
                        shape: &n.shape,
                        data: &n.value,
                    }
                })
                .collect();
            ops::forward(&kind, &views)?
        };
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            shape: out.shape,
            value: Arc::new(out.data),
            producer: Some(Producer {
                kind,
                inputs: inputs.to_vec(),
                saved: if requires_grad { out.saved } else { Saved::Nothing },
            }),
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shared_value(&self, v: Var) -> Arc<Vec<T>> {
        Arc::clone(&self.nodes[v.0].value)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.to_vec()).expect("node invariant")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Kind of the op that produced `v`, `None` for leaves.
    pub fn producer(&self, v: Var) -> Option<&OpKind> {
        self.nodes[v.0].producer.as_ref().map(|p| &p.kind)
    }

    /// Accumulated gradient of a leaf.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Back-propagates from a scalar `loss`, accumulating into every leaf that
    /// requires grad, and returns the accumulated leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: root.shape.clone(),
            });
        }
        if !root.requires_grad {
            return Err(TensorError::DetachedGraph);
        }
        let mut pending: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        pending.resize_with(loss.0 + 1, || None);
        pending[loss.0] = Some(vec![T::one()]);
        let mut touched = Vec::new();

        for i in (0..=loss.0).rev() {
            let Some(g) = pending[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.producer {
                None => {
                    if node.requires_grad {
                        touched.push(i);
                        let node = &mut self.nodes[i];
                        match node.grad.as_mut() {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                            None => node.grad = Some(g),
                        }
                    }
                }
                Some(p) => {
                    let needs: Vec<bool> = p.inputs.iter().map(|v| self.nodes[v.0].requires_grad).collect();
                    let views: Vec<In<'_, T>> = p
                        .inputs
                        .iter()
                        .map(|v| {
                            let n = &self.nodes[v.0];
                            In {
                                shape: &n.shape,
                                data: &n.value,
                            }
                        })
                        .collect();
                    let output = In {
                        shape: &node.shape,
                        data: &node.value,
                    };
                    let grads = ops::backward(&p.kind, &views, output, &p.saved, &g, &needs);
                    for (v, gi) in p.inputs.iter().zip(grads) {
                        let Some(gi) = gi else { continue };
                        match pending[v.0].as_mut() {
                            Some(acc) => acc.iter_mut().zip(&gi).for_each(|(a, &b)| *a += b),
                            None => pending[v.0] = Some(gi),
                        }
                    }
                }
            }
        }

        let grads = touched
            .into_iter()
            .map(|i| (Var(i), self.nodes[i].grad.clone().expect("just accumulated")))
            .collect();
        Ok(Gradients { grads })
    }

    // Convenience wrappers over `apply`.

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, TensorError> {
        self.apply(OpKind::Scale(s), &[a])
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var, TensorError> {
        self.apply(OpKind::Concat { axis }, xs)
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var, TensorError> {
        self.apply(OpKind::Slice { axis, start, end }, &[a])
    }

    pub fn gather(&mut self, a: Var, rows: Vec<usize>) -> Result<Var, TensorError> {
        self.apply(OpKind::Gather { rows }, &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::Transpose, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        self.apply(OpKind::Reshape { shape }, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::Relu, &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::Gelu, &[a])
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.apply(OpKind::Softmax { axis }, &[a])
    }

    pub fn layernorm(&mut self, a: Var, axis: usize, eps: f64) -> Result<Var, TensorError> {
        self.apply(OpKind::LayerNorm { axis, eps }, &[a])
    }

    pub fn max_reduce(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.apply(OpKind::MaxReduce { axis }, &[a])
    }

    pub fn topk_reduce(&mut self, a: Var, axis: usize, k: usize) -> Result<Var, TensorError> {
        self.apply(OpKind::TopkReduce { axis, k }, &[a])
    }

    pub fn mean_reduce(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.apply(OpKind::MeanReduce { axis }, &[a])
    }

    pub fn cross_entropy(&mut self, logits: Var, labels: Vec<usize>) -> Result<Var, TensorError> {
        self.apply(OpKind::CrossEntropyWithLogits { labels }, &[logits])
    }

    pub fn squared_distances(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::SquaredDistanceMatrix, &[a, b])
    }

    /// Mean over every element, as a scalar.
    pub fn mean_all(&mut self, a: Var) -> Result<Var, TensorError> {
        let n = self.nodes[a.0].value.len();
        let flat = self.reshape(a, vec![n])?;
        self.mean_reduce(flat, 0)
    }

    /// Sum over every element, as a scalar.
    pub fn sum_all(&mut self, a: Var) -> Result<Var, TensorError> {
        let n = self.nodes[a.0].value.len();
        let mean = self.mean_all(a)?;
        self.scale(mean, n as f64)
    }

    /// `x · w + b` for `x: [n, in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let y = self.matmul(x, w)?;
        self.add(y, b)
    }
}
