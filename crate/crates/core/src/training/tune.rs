use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::eval::{argmax, predict_logits, prefix_cache, sample_logits, EvalReport, Labeled, PrefixCache};
use super::optim::{AdamWConfig, CosineSchedule, OptimState};
use crate::data::row_seed;
use crate::error::{Error, Result};
use crate::geometry::{augment, AugmentSpec, PointCloud};
use crate::model::Model;
use crate::params::{Grads, ParamId, ParamStore, Session};
use crate::prompting::StrategyConfig;
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct TuneConfig {
    pub epochs: usize,
    pub lr: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub seed: u64,
    /// Training-time augmentation. Any augmentation disables the frozen
    /// prefix cache for the training split.
    pub augment: AugmentSpec,
    /// Test accuracy is measured every this many epochs and after the last;
    /// 0 measures only before and after training.
    pub eval_every: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-3,
            min_lr: 1e-6,
            weight_decay: 0.05,
            batch: 32,
            seed: 0,
            augment: AugmentSpec::none(),
            eval_every: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunMetrics {
    pub seed: u64,
    pub strategy: StrategyConfig,
    pub initial_test_accuracy: f64,
    pub epochs: Vec<EpochMetrics>,
    /// Test set predictions after the last epoch.
    pub final_test: EvalReport,
    pub wall_seconds: f64,
}

impl RunMetrics {
    pub fn final_test_accuracy(&self) -> f64 {
        self.final_test.accuracy
    }
}

/// Everything except wall time.
impl PartialEq for RunMetrics {
    fn eq(&self, o: &Self) -> bool {
        self.seed == o.seed
            && self.strategy == o.strategy
            && self.initial_test_accuracy.to_bits() == o.initial_test_accuracy.to_bits()
            && self.epochs == o.epochs
            && self.final_test == o.final_test
    }
}

/// Cross-entropy training of the store's trainable parameters.
///
/// Each mini-batch runs one graph per sample, in parallel, and sums the
/// gradients in sample order, so results do not depend on the thread count.
/// Frozen parameters are compared bitwise before and after.
pub fn tune<T: Scalar>(
    model: &Model,
    store: &mut ParamStore<T>,
    train: &[Labeled<'_>],
    test: &[Labeled<'_>],
    cfg: &TuneConfig,
) -> Result<RunMetrics> {
    let started = Instant::now();
    if train.is_empty() {
        return Err(Error::Empty("training split is empty".into()));
    }
    if test.is_empty() {
        return Err(Error::Empty("test split is empty".into()));
    }
    if cfg.batch == 0 {
        return Err(Error::Config("batch must be at least 1".into()));
    }
    let classes = model.head.layers.last().map_or(0, |l| l.fan_out);
    if let Some(&(_, l)) = train.iter().chain(test).find(|s| s.1 >= classes) {
        return Err(Error::Config(format!("label {l} outside the head's {classes} classes")));
    }

    let frozen: Vec<ParamId> = store.iter().filter(|(_, p)| !p.trainable).map(|(id, _)| id).collect();
    let frozen_before = store.snapshot(&frozen);
    let ids = store.trainable_ids();
    let mut slot = vec![usize::MAX; store.len()];
    for (j, id) in ids.iter().enumerate() {
        slot[id.index()] = j;
    }

    let train_clouds: Vec<&PointCloud> = train.iter().map(|s| s.0).collect();
    let test_clouds: Vec<&PointCloud> = test.iter().map(|s| s.0).collect();
    let test_labels: Vec<usize> = test.iter().map(|s| s.1).collect();
    let train_cache = if cfg.augment.is_empty() {
        prefix_cache(model, store, &train_clouds)?
    } else {
        None
    };
    let test_cache = prefix_cache(model, store, &test_clouds)?;
    let test_eval = |store: &ParamStore<T>, cache: Option<&PrefixCache<T>>| -> Result<EvalReport> {
        let logits = predict_logits(model, store, &test_clouds, 1, &AugmentSpec::none(), 0, cache)?;
        Ok(EvalReport::from_logits(&logits, &test_labels))
    };
    let initial = test_eval(store, test_cache.as_ref())?;

    let steps_per_epoch = train.len().div_ceil(cfg.batch);
    let schedule = CosineSchedule {
        base: cfg.lr,
        min: cfg.min_lr,
        total: cfg.epochs * steps_per_epoch,
    };
    let adam = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let mut opt = OptimState::new(store, ids.clone(), adam, schedule);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut last = initial.clone();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let aug_seed = row_seed(cfg.seed, epoch);
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch) {
            let shared: &ParamStore<T> = store;
            let results: Vec<Result<(f64, bool, Grads<T>)>> = batch
                .par_iter()
                .map(|&i| {
                    let (cloud, label) = train[i];
                    let mut s = Session::new(shared);
                    let logits = match &train_cache {
                        Some(c) => sample_logits(model, &mut s, cloud, Some((c, i)))?,
                        None => {
                            let mut rng = ChaCha8Rng::seed_from_u64(row_seed(aug_seed, i));
                            let c = augment(cloud, &cfg.augment, &mut rng);
                            sample_logits(model, &mut s, &c, None)?
                        }
                    };
                    let lv: Vec<f64> = s.g.value(logits).iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
                    let loss = s.g.cross_entropy(logits, vec![label])?;
                    let loss_v = s.g.value(loss)[0].to_f64().unwrap_or(f64::NAN);
                    Ok((loss_v, argmax(&lv) == label, s.gradients(loss)?))
                })
                .collect();
            let mut acc: Vec<Vec<T>> = ids.iter().map(|&id| vec![T::zero(); store.get(id).numel()]).collect();
            for r in results {
                let (l, hit, grads) = r?;
                loss_sum += l;
                hits += hit as usize;
                for (id, g) in grads {
                    let a = &mut acc[slot[id.index()]];
                    a.iter_mut().zip(&g).for_each(|(a, g)| *a += *g);
                }
            }
            let inv = T::of(1.0 / batch.len() as f64);
            acc.iter_mut().flatten().for_each(|v| *v *= inv);
            opt.step(store, &acc)?;
        }
        let due = epoch == cfg.epochs || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0);
        let test_accuracy = if due {
            last = test_eval(store, test_cache.as_ref())?;
            Some(last.accuracy)
        } else {
            None
        };
        epochs.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: hits as f64 / train.len() as f64,
            test_accuracy,
        });
    }

    for (id, before) in frozen.iter().zip(&frozen_before) {
        if store.value(*id) != &before[..] {
            return Err(Error::FrozenModified(store.get(*id).name.clone()));
        }
    }
    Ok(RunMetrics {
        seed: cfg.seed,
        strategy: model.strategy().clone(),
        initial_test_accuracy: initial.accuracy,
        epochs,
        final_test: last,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
