use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::StrategyConfig;
use crate::backbone::BackboneConfig;
use crate::error::Result;
use crate::model::Model;
use crate::params::{Group, ParamStore};
use crate::training::HeadConfig;

/// Parameter counts of one strategy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamBreakdown {
    /// Trainable backbone parameters (all of them under full fine-tuning, else 0).
    pub backbone: usize,
    pub prompts: usize,
    pub generator: usize,
    pub head: usize,
    pub total_trainable: usize,
    /// Backbone plus head: the model full fine-tuning trains.
    pub total_all: usize,
    pub ratio: f64,
}

/// Counts by building the model and walking its parameter registry.
pub fn count_trainable(strategy: &StrategyConfig, cfg: &BackboneConfig, head: &HeadConfig) -> Result<ParamBreakdown> {
    let mut store = ParamStore::<f32>::new();
    Model::build(*cfg, strategy, head, &mut store, &mut ChaCha8Rng::seed_from_u64(0))?;
    let trainable_in = |g: Group| store.count(|p| p.group == g && p.trainable);
    let backbone = trainable_in(Group::Backbone);
    let prompts = trainable_in(Group::Prompt);
    let generator = trainable_in(Group::Generator);
    let head = trainable_in(Group::Head);
    let total_trainable = store.count(|p| p.trainable);
    let total_all = store.count(|p| p.group == Group::Backbone || p.group == Group::Head);
    Ok(ParamBreakdown {
        backbone,
        prompts,
        generator,
        head,
        total_trainable,
        total_all,
        ratio: total_trainable as f64 / total_all as f64,
    })
}
