use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Scalar;

/// Cosine decay from `base` at step 0 to `min` at step `total - 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineSchedule {
    pub base: f64,
    pub min: f64,
    pub total: usize,
}

impl CosineSchedule {
    pub fn lr(&self, step: usize) -> f64 {
        if self.total <= 1 {
            return self.base;
        }
        let t = step.min(self.total - 1) as f64 / (self.total - 1) as f64;
        self.min + 0.5 * (self.base - self.min) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// AdamW moments for a fixed parameter list. Weight decay is decoupled and
/// applies to rank ≥ 2 tensors only, so biases and norm scales are not decayed.
#[derive(Clone, Debug)]
pub struct OptimState<T> {
    pub cfg: AdamWConfig,
    pub schedule: CosineSchedule,
    pub ids: Vec<ParamId>,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: usize,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(store: &ParamStore<T>, ids: Vec<ParamId>, cfg: AdamWConfig, schedule: CosineSchedule) -> Self {
        let zeros = |id: &ParamId| vec![T::zero(); store.get(*id).numel()];
        Self {
            m: ids.iter().map(zeros).collect(),
            v: ids.iter().map(zeros).collect(),
            ids,
            cfg,
            schedule,
            step: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.schedule.lr(self.step)
    }

    /// One update from gradients listed in the same order as `ids`.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Vec<T>]) -> Result<()> {
        if grads.len() != self.ids.len() {
            return Err(Error::Dim(format!("{} gradients for {} parameters", grads.len(), self.ids.len())));
        }
        let lr = self.lr();
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (j, &id) in self.ids.iter().enumerate() {
            let g = &grads[j];
            if g.len() != self.m[j].len() {
                return Err(Error::Dim(format!("gradient of {} has {} entries", store.get(id).name, g.len())));
            }
            let decay = if store.get(id).shape.len() >= 2 { c.weight_decay } else { 0.0 };
            let (m, v) = (&mut self.m[j], &mut self.v[j]);
            let w = store.value_mut(id);
            for i in 0..w.len() {
                let gi = g[i].to_f64().unwrap_or(0.0);
                let mi = c.beta1 * m[i].to_f64().unwrap_or(0.0) + (1.0 - c.beta1) * gi;
                let vi = c.beta2 * v[i].to_f64().unwrap_or(0.0) + (1.0 - c.beta2) * gi * gi;
                m[i] = T::of(mi);
                v[i] = T::of(vi);
                let wi = w[i].to_f64().unwrap_or(0.0);
                let upd = (mi / bc1) / ((vi / bc2).sqrt() + c.eps) + decay * wi;
                if upd != 0.0 {
                    w[i] = T::of(wi - lr * upd);
                }
            }
        }
        Ok(())
    }
}
