use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::backbone::{roles, Seq};
use crate::data::row_seed;
use crate::error::{Error, Result};
use crate::geometry::{augment, AugmentSpec, PointCloud};
use crate::model::Model;
use crate::params::{ParamStore, Session};
use crate::tensor::{Scalar, Tensor, Var};

/// A cloud and its class index.
pub type Labeled<'a> = (&'a PointCloud, usize);

/// Outputs of the frozen prefix of a model, one per cloud. Valid while the
/// frozen parameters and the clouds stay unchanged.
#[derive(Clone, Debug)]
pub struct PrefixCache<T> {
    pub layer: usize,
    pub tokens: Vec<Tensor<T>>,
}

impl<T: Scalar> PrefixCache<T> {
    pub fn build(model: &Model, store: &ParamStore<T>, clouds: &[&PointCloud], layer: usize) -> Result<Self> {
        let tokens = clouds
            .par_iter()
            .map(|c| {
                let mut s = Session::new(store);
                let seq = model.prefix(&mut s, c, layer)?;
                Ok(s.g.tensor(seq.var))
            })
            .collect::<Result<_>>()?;
        Ok(Self { layer, tokens })
    }

    /// Replays cached sample `i` as a constant sequence.
    pub fn seq(&self, s: &mut Session<'_, T>, i: usize) -> Seq {
        let t = &self.tokens[i];
        let m = t.shape()[0] - 1;
        Seq {
            var: s.g.constant(t.clone()),
            roles: roles(0, m),
            layer: self.layer,
        }
    }
}

/// Builds a cache when the model has a frozen prefix, else `None`.
pub fn prefix_cache<T: Scalar>(model: &Model, store: &ParamStore<T>, clouds: &[&PointCloud]) -> Result<Option<PrefixCache<T>>> {
    match model.frozen_prefix() {
        Some(layer) => Ok(Some(PrefixCache::build(model, store, clouds, layer)?)),
        None => Ok(None),
    }
}

/// Logits of cloud `i`, through the cache when one is given.
pub(crate) fn sample_logits<T: Scalar>(
    model: &Model,
    s: &mut Session<'_, T>,
    cloud: &PointCloud,
    cache: Option<(&PrefixCache<T>, usize)>,
) -> Result<Var> {
    match cache {
        Some((c, i)) => {
            let seq = c.seq(s, i);
            model.logits_from(s, seq)
        }
        None => model.logits(s, cloud),
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-cloud logits averaged over `votes` passes. Pass `v` of cloud `i` sees
/// the `v`-th augmentation drawn from a stream seeded by `(seed, i)`. With an
/// empty augmentation every pass is the same, so one pass is run.
pub fn predict_logits<T: Scalar>(
    model: &Model,
    store: &ParamStore<T>,
    clouds: &[&PointCloud],
    votes: usize,
    aug: &AugmentSpec,
    seed: u64,
    cache: Option<&PrefixCache<T>>,
) -> Result<Vec<Vec<f64>>> {
    if votes == 0 {
        return Err(Error::Config("votes must be at least 1".into()));
    }
    let plain = votes == 1 || aug.is_empty();
    clouds
        .par_iter()
        .enumerate()
        .map(|(i, cloud)| {
            let one = |c: &PointCloud, cached: Option<(&PrefixCache<T>, usize)>| -> Result<Vec<f64>> {
                let mut s = Session::new(store);
                let l = sample_logits(model, &mut s, c, cached)?;
                Ok(s.g.value(l).iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
            };
            if plain {
                return one(cloud, cache.map(|c| (c, i)));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(row_seed(seed, i));
            let mut sum: Vec<f64> = Vec::new();
            for _ in 0..votes {
                let l = one(&augment(cloud, aug, &mut rng), None)?;
                if sum.is_empty() {
                    sum = l;
                } else {
                    sum.iter_mut().zip(&l).for_each(|(a, b)| *a += b);
                }
            }
            Ok(sum.into_iter().map(|v| v / votes as f64).collect())
        })
        .collect()
}

/// Argmax predictions and accuracy of a labeled set.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub predictions: Vec<usize>,
    pub accuracy: f64,
}

impl EvalReport {
    pub fn from_logits(logits: &[Vec<f64>], labels: &[usize]) -> Self {
        let predictions: Vec<usize> = logits.iter().map(|l| argmax(l)).collect();
        let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
        Self {
            accuracy: correct as f64 / labels.len().max(1) as f64,
            predictions,
        }
    }

    /// Accuracy over the samples `keep` selects.
    pub fn subset_accuracy(&self, labels: &[usize], keep: impl Fn(usize) -> bool) -> Option<f64> {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| keep(i)).collect();
        if idx.is_empty() {
            return None;
        }
        let hit = idx.iter().filter(|&&i| self.predictions[i] == labels[i]).count();
        Some(hit as f64 / idx.len() as f64)
    }
}

/// Test accuracy with optional voting.
pub fn evaluate<T: Scalar>(
    model: &Model,
    store: &ParamStore<T>,
    samples: &[Labeled<'_>],
    votes: usize,
    aug: &AugmentSpec,
    seed: u64,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set is empty".into()));
    }
    let clouds: Vec<&PointCloud> = samples.iter().map(|s| s.0).collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.1).collect();
    let cache = if votes == 1 || aug.is_empty() {
        prefix_cache(model, store, &clouds)?
    } else {
        None
    };
    let logits = predict_logits(model, store, &clouds, votes, aug, seed, cache.as_ref())?;
    Ok(EvalReport::from_logits(&logits, &labels))
}
