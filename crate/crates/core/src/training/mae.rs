use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::optim::{AdamWConfig, CosineSchedule, OptimState};
use crate::backbone::{roles, Backbone, Seq};
use crate::data::row_seed;
use crate::error::{Error, Result};
use crate::geometry::{augment, AugmentSpec, PointCloud};
use crate::params::{filled, Grads, Group, Linear, ParamId, ParamStore, Session};
use crate::tensor::{Scalar, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct MaeConfig {
    pub mask_ratio: f64,
    pub epochs: usize,
    pub lr: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub seed: u64,
    pub augment: AugmentSpec,
}

impl Default for MaeConfig {
    fn default() -> Self {
        Self {
            mask_ratio: 0.6,
            epochs: 30,
            lr: 1e-3,
            min_lr: 1e-6,
            weight_decay: 0.05,
            batch: 32,
            seed: 0,
            augment: AugmentSpec::none(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaeReport {
    /// Held-mask loss before the first update.
    pub initial_loss: f64,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Held-mask loss after the last update, same masks as `initial_loss`.
    pub final_loss: f64,
}

/// Learned mask token plus a two-layer decoder to `k×3` offsets per patch.
#[derive(Clone, Debug, PartialEq)]
pub struct MaeHead {
    pub mask_token: ParamId,
    pub dec1: Linear,
    pub dec2: Linear,
}

impl MaeHead {
    pub fn new<T: Scalar>(bb: &Backbone, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Self {
        let d = bb.cfg.width;
        let g = Group::Pretrain;
        Self {
            mask_token: store.add("pretrain.mask_token", filled(vec![d], 0.0), g),
            dec1: Linear::new(store, rng, "pretrain.decoder.fc1", d, d, g),
            dec2: Linear::new(store, rng, "pretrain.decoder.fc2", d, 3 * bb.cfg.patch_points, g),
        }
    }
}

/// `⌈ratio·m⌉` distinct patch indices, ascending.
pub fn mask_indices(m: usize, ratio: f64, rng: &mut impl Rng) -> Vec<usize> {
    let n = ((ratio * m as f64).ceil() as usize).min(m);
    let mut idx = rand::seq::index::sample(rng, m, n).into_vec();
    idx.sort_unstable();
    idx
}

/// Symmetric Chamfer distance between two `[n, 3]` point sets as graph ops.
pub fn chamfer_loss<T: Scalar>(s: &mut Session<'_, T>, a: Var, b: Var) -> Result<Var> {
    let d = s.g.squared_distances(a, b)?;
    let neg = s.g.scale(d, -1.0)?;
    let mut sides = Vec::with_capacity(2);
    for axis in [1, 0] {
        let nearest = s.g.max_reduce(neg, axis)?;
        let mean = s.g.mean_reduce(nearest, 0)?;
        sides.push(s.g.scale(mean, -1.0)?);
    }
    Ok(s.g.add(sides[0], sides[1])?)
}

/// Masked reconstruction loss of one cloud: masked patches enter the encoder
/// as `mask token + position`, visible ones as usual, and each masked output
/// token is decoded to its group's centre-relative points.
pub fn mae_loss<T: Scalar>(
    bb: &Backbone,
    head: &MaeHead,
    s: &mut Session<'_, T>,
    cloud: &PointCloud,
    masked: &[usize],
) -> Result<Var> {
    let (m, k) = (bb.cfg.patches, bb.cfg.patch_points);
    if masked.is_empty() {
        return Err(Error::Config("no patches masked".into()));
    }
    let patches = bb.patches(cloud)?;
    let visible: Vec<usize> = (0..m).filter(|i| masked.binary_search(i).is_err()).collect();
    let groups = s.input(vec![m * k, 3], patches.groups_flat())?;
    let centers = s.input(vec![m, 3], patches.centers_flat())?;
    let feat = bb.patch_features(s, groups, m, k)?;
    let pos = bb.position(s, centers)?;
    let mask_pos = s.g.gather(pos, masked.to_vec())?;
    let token = s.p(head.mask_token);
    let mask_rows = s.g.add(mask_pos, token)?;
    let cls = s.p(bb.cls);
    let mut parts = vec![cls];
    if !visible.is_empty() {
        let f = s.g.gather(feat, visible.clone())?;
        let p = s.g.gather(pos, visible.clone())?;
        parts.push(s.g.add(f, p)?);
    }
    parts.push(mask_rows);
    let seq = Seq {
        var: s.g.concat(&parts, 0)?,
        roles: roles(0, m),
        layer: 0,
    };
    let out = bb.encode(s, seq, 1..=bb.cfg.depth)?;
    let tail = s.g.slice(out.var, 0, 1 + visible.len(), 1 + m)?;
    let h = head.dec1.forward(s, tail)?;
    let h = s.g.gelu(h)?;
    let pred = head.dec2.forward(s, h)?;
    let pred = s.g.reshape(pred, vec![masked.len() * k, 3])?;
    let mut total = None;
    for (j, &p) in masked.iter().enumerate() {
        let rows = s.g.slice(pred, 0, j * k, (j + 1) * k)?;
        let truth: Vec<T> = patches.group(p).iter().flat_map(|q| q.map(T::of)).collect();
        let truth = s.input(vec![k, 3], truth)?;
        let c = chamfer_loss(s, rows, truth)?;
        total = Some(match total {
            None => c,
            Some(t) => s.g.add(t, c)?,
        });
    }
    Ok(s.g.scale(total.expect("non-empty mask"), 1.0 / masked.len() as f64)?)
}

fn masks_for(seed: u64, n: usize, m: usize, ratio: f64) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| mask_indices(m, ratio, &mut ChaCha8Rng::seed_from_u64(row_seed(seed, i))))
        .collect()
}

fn mean_loss<T: Scalar>(bb: &Backbone, head: &MaeHead, store: &ParamStore<T>, clouds: &[&PointCloud], masks: &[Vec<usize>]) -> Result<f64> {
    let losses = clouds
        .par_iter()
        .zip(masks)
        .map(|(c, mask)| {
            let mut s = Session::new(store);
            let l = mae_loss(bb, head, &mut s, c, mask)?;
            Ok(s.g.value(l)[0].to_f64().unwrap_or(f64::NAN))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Masked-autoencoder pretraining of the backbone in `store`. Mask token and
/// decoder live in a private copy of the store and are discarded; only the
/// backbone values are written back.
pub fn pretrain_mae<T: Scalar>(
    bb: &Backbone,
    store: &mut ParamStore<T>,
    clouds: &[&PointCloud],
    cfg: &MaeConfig,
) -> Result<MaeReport> {
    if clouds.is_empty() {
        return Err(Error::Empty("pretraining set is empty".into()));
    }
    if !(0.0..=1.0).contains(&cfg.mask_ratio) {
        return Err(Error::Config(format!("mask_ratio {} outside [0, 1]", cfg.mask_ratio)));
    }
    if cfg.batch == 0 {
        return Err(Error::Config("batch must be at least 1".into()));
    }
    let m = bb.cfg.patches;
    if (cfg.mask_ratio * m as f64).ceil() as usize == 0 {
        return Ok(MaeReport {
            initial_loss: 0.0,
            epoch_losses: vec![0.0; cfg.epochs],
            final_loss: 0.0,
        });
    }

    let mut work = store.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let head = MaeHead::new(bb, &mut work, &mut rng);
    let bb_ids = bb.param_ids(&work);
    for id in work.ids().collect::<Vec<_>>() {
        work.set_trainable(id, false);
    }
    work.set_group_trainable(Group::Backbone, true);
    work.set_group_trainable(Group::Pretrain, true);
    let ids = work.trainable_ids();
    let mut slot = vec![usize::MAX; work.len()];
    for (j, id) in ids.iter().enumerate() {
        slot[id.index()] = j;
    }

    let held = masks_for(row_seed(cfg.seed, usize::MAX), clouds.len(), m, cfg.mask_ratio);
    let initial_loss = mean_loss(bb, &head, &work, clouds, &held)?;

    let steps = clouds.len().div_ceil(cfg.batch);
    let adam = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let schedule = CosineSchedule {
        base: cfg.lr,
        min: cfg.min_lr,
        total: cfg.epochs * steps,
    };
    let mut opt = OptimState::new(&work, ids.clone(), adam, schedule);
    let mut order: Vec<usize> = (0..clouds.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let epoch_seed = row_seed(cfg.seed, epoch);
        let masks = masks_for(epoch_seed, clouds.len(), m, cfg.mask_ratio);
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch) {
            let shared = &work;
            let results: Vec<Result<(f64, Grads<T>)>> = batch
                .par_iter()
                .map(|&i| {
                    let mut s = Session::new(shared);
                    let cloud = if cfg.augment.is_empty() {
                        clouds[i].clone()
                    } else {
                        let mut arng = ChaCha8Rng::seed_from_u64(row_seed(epoch_seed ^ 0x9e37_79b9, i));
                        augment(clouds[i], &cfg.augment, &mut arng)
                    };
                    let l = mae_loss(bb, &head, &mut s, &cloud, &masks[i])?;
                    let v = s.g.value(l)[0].to_f64().unwrap_or(f64::NAN);
                    Ok((v, s.gradients(l)?))
                })
                .collect();
            let mut acc: Vec<Vec<T>> = ids.iter().map(|&id| vec![T::zero(); work.get(id).numel()]).collect();
            for r in results {
                let (l, grads) = r?;
                sum += l;
                for (id, g) in grads {
                    acc[slot[id.index()]].iter_mut().zip(&g).for_each(|(a, g)| *a += *g);
                }
            }
            let inv = T::of(1.0 / batch.len() as f64);
            acc.iter_mut().flatten().for_each(|v| *v *= inv);
            opt.step(&mut work, &acc)?;
        }
        epoch_losses.push(sum / clouds.len() as f64);
    }
    let final_loss = mean_loss(bb, &head, &work, clouds, &held)?;
    for &id in &bb_ids {
        let v = work.value(id).to_vec();
        store.set(id, v)?;
    }
    Ok(MaeReport {
        initial_loss,
        epoch_losses,
        final_loss,
    })
}
