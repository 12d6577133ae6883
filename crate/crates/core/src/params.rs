//! Named parameter registry and per-pass graph binding.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{numel, Graph, Scalar, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-parameter gradients of one loss.
pub type Grads<T> = Vec<(ParamId, Vec<T>)>;

/// Which part of the model a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    Backbone,
    /// Static prompt matrices.
    Prompt,
    /// Dynamic prompt generator.
    Generator,
    Head,
    /// Mask token and decoder, used only while pretraining.
    Pretrain,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Backbone => "backbone",
            Group::Prompt => "prompt",
            Group::Generator => "generator",
            Group::Head => "head",
            Group::Pretrain => "pretrain",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Arc<Vec<T>>,
    pub group: Group,
    pub trainable: bool,
}

impl<T> Param<T> {
    pub fn numel(&self) -> usize {
        numel(&self.shape)
    }
}

/// Ordered, name-unique parameter table.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Registers a new trainable parameter. Panics on a duplicate name, which
    /// is always a construction bug.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, group: Group) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        let shape = value.shape().to_vec();
        self.params.push(Param {
            name,
            shape,
            value: Arc::new(value.into_data()),
            group,
            trainable: true,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[T] {
        &self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Replaces a value, keeping the shape.
    pub fn set(&mut self, id: ParamId, value: Vec<T>) -> Result<(), TensorError> {
        let p = &mut self.params[id.0];
        if value.len() != p.numel() {
            return Err(TensorError::DataLength {
                shape: p.shape.clone(),
                expected: p.numel(),
                got: value.len(),
            });
        }
        p.value = Arc::new(value);
        Ok(())
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Vec<T> {
        Arc::make_mut(&mut self.params[id.0].value)
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn set_group_trainable(&mut self, group: Group, trainable: bool) {
        for p in &mut self.params {
            if p.group == group {
                p.trainable = trainable;
            }
        }
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect()
    }

    pub fn group_ids(&self, group: Group) -> Vec<ParamId> {
        self.iter().filter(|(_, p)| p.group == group).map(|(id, _)| id).collect()
    }

    pub fn count(&self, pred: impl Fn(&Param<T>) -> bool) -> usize {
        self.params.iter().filter(|p| pred(p)).map(Param::numel).sum()
    }

    /// Deep copy of the values of `ids`, for before/after comparisons.
    pub fn snapshot(&self, ids: &[ParamId]) -> Vec<Vec<T>> {
        ids.iter().map(|&id| self.value(id).to_vec()).collect()
    }
}

/// A forward pass in progress: a graph plus lazily bound parameters.
///
/// Parameters enter the graph as leaves sharing the store's buffers;
/// trainable ones require grad, the rest are constants.
pub struct Session<'a, T: Scalar> {
    pub g: Graph<T>,
    store: &'a ParamStore<T>,
    bound: Vec<Option<Var>>,
}

impl<'a, T: Scalar> Session<'a, T> {
    pub fn new(store: &'a ParamStore<T>) -> Self {
        Self {
            g: Graph::new(),
            store,
            bound: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'a ParamStore<T> {
        self.store
    }

    pub fn p(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let param = self.store.get(id);
        let v = self
            .g
            .shared_leaf(&param.shape, Arc::clone(&param.value), param.trainable)
            .expect("stored shape matches buffer");
        self.bound[id.0] = Some(v);
        v
    }

    pub fn input(&mut self, shape: Vec<usize>, data: Vec<T>) -> Result<Var, TensorError> {
        Ok(self.g.constant(Tensor::new(shape, data)?))
    }

    /// Back-propagates `loss` and returns the gradient of every bound
    /// trainable parameter, in parameter order. Parameters the loss does not
    /// reach get zeros.
    pub fn gradients(&mut self, loss: Var) -> Result<Grads<T>, TensorError> {
        let mut grads = self.g.backward(loss)?;
        let mut out = Vec::new();
        for (i, v) in self.bound.iter().enumerate() {
            let Some(v) = *v else { continue };
            let p = &self.store.params[i];
            if !p.trainable {
                continue;
            }
            let g = grads.take(v).unwrap_or_else(|| vec![T::zero(); p.numel()]);
            out.push((ParamId(i), g));
        }
        Ok(out)
    }
}

/// `U(-1/√fan_in, 1/√fan_in)` init.
pub fn uniform_init<T: Scalar>(rng: &mut impl Rng, shape: Vec<usize>, fan_in: usize) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..numel(&shape)).map(|_| T::of(rng.random_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("sized buffer")
}

pub fn normal_init<T: Scalar>(rng: &mut impl Rng, shape: Vec<usize>, std: f64) -> Tensor<T> {
    let normal = Normal::new(0.0, std).expect("positive std");
    let data = (0..numel(&shape)).map(|_| T::of(normal.sample(rng))).collect();
    Tensor::new(shape, data).expect("sized buffer")
}

pub fn filled<T: Scalar>(shape: Vec<usize>, v: f64) -> Tensor<T> {
    let n = numel(&shape);
    Tensor::new(shape, vec![T::of(v); n]).expect("sized buffer")
}

/// Dense layer `x·W + b` with `W: [in, out]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Registers `{prefix}.weight` and `{prefix}.bias`.
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        group: Group,
    ) -> Self {
        let w = store.add(format!("{prefix}.weight"), uniform_init(rng, vec![fan_in, fan_out], fan_in), group);
        let b = store.add(format!("{prefix}.bias"), uniform_init(rng, vec![fan_out], fan_in), group);
        Self { w, b, fan_in, fan_out }
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var, TensorError> {
        let w = s.p(self.w);
        let b = s.p(self.b);
        s.g.linear(x, w, b)
    }

    pub fn numel(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }
}

/// Affine layer normalisation over the last axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, width: usize, group: Group) -> Self {
        let gamma = store.add(format!("{prefix}.weight"), filled(vec![width], 1.0), group);
        let beta = store.add(format!("{prefix}.bias"), filled(vec![width], 0.0), group);
        Self { gamma, beta }
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var, TensorError> {
        let axis = s.g.shape(x).len() - 1;
        let n = s.g.layernorm(x, axis, crate::tensor::LAYERNORM_EPS)?;
        let gamma = s.p(self.gamma);
        let beta = s.p(self.beta);
        let scaled = s.g.mul(n, gamma)?;
        s.g.add(scaled, beta)
    }
}
