//! Backbone, prompt module and head wired together under one strategy.

use rand::Rng;

use crate::backbone::{Backbone, BackboneConfig, Seq};
use crate::error::Result;
use crate::geometry::PointCloud;
use crate::params::{Group, ParamStore, Session};
use crate::prompting::{PromptModule, StrategyConfig};
use crate::tensor::{Scalar, Var};
use crate::training::{Head, HeadConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub backbone: Backbone,
    pub prompt: PromptModule,
    pub head: Head,
}

impl Model {
    /// Registers backbone, prompt and head parameters (in that order) and
    /// applies the strategy's freeze set.
    pub fn build<T: Scalar>(
        cfg: BackboneConfig,
        strategy: &StrategyConfig,
        head: &HeadConfig,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let backbone = Backbone::new(cfg, store, rng)?;
        Self::attach(backbone, strategy, head, store, rng)
    }

    /// Adds prompt and head parameters on top of an already registered backbone.
    pub fn attach<T: Scalar>(
        backbone: Backbone,
        strategy: &StrategyConfig,
        head: &HeadConfig,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let prompt = PromptModule::new(strategy, &backbone.cfg, store, rng)?;
        let head = Head::new(head, backbone.cfg.width, &strategy.resolved_head_inputs(), store, rng)?;
        let model = Self { backbone, prompt, head };
        model.apply_freeze(store);
        Ok(model)
    }

    pub fn strategy(&self) -> &StrategyConfig {
        &self.prompt.strategy
    }

    /// Backbone trainable only under full fine-tuning; everything else trainable.
    pub fn apply_freeze<T: Scalar>(&self, store: &mut ParamStore<T>) {
        store.set_group_trainable(Group::Backbone, self.strategy().kind.trains_backbone());
        for g in [Group::Prompt, Group::Generator, Group::Head] {
            store.set_group_trainable(g, true);
        }
        store.set_group_trainable(Group::Pretrain, false);
    }

    /// Deepest layer whose output depends on frozen parameters only, or
    /// `None` when the backbone itself trains.
    pub fn frozen_prefix(&self) -> Option<usize> {
        if self.strategy().kind.trains_backbone() {
            None
        } else {
            Some(self.prompt.prefix_layer(self.backbone.cfg.depth))
        }
    }

    /// Embedding plus layers `1..=layer`.
    pub fn prefix<T: Scalar>(&self, s: &mut Session<'_, T>, cloud: &PointCloud, layer: usize) -> Result<Seq> {
        let patches = self.backbone.patches(cloud)?;
        let seq = self.backbone.embed(s, &patches)?;
        self.backbone.encode(s, seq, 1..=layer)
    }

    /// Final-layer tokens `[c_N; P_N; E_N]`.
    pub fn tokens<T: Scalar>(&self, s: &mut Session<'_, T>, cloud: &PointCloud) -> Result<Seq> {
        self.prompt.forward_tuned(&self.backbone, s, cloud)
    }

    pub fn logits<T: Scalar>(&self, s: &mut Session<'_, T>, cloud: &PointCloud) -> Result<Var> {
        let seq = self.tokens(s, cloud)?;
        self.head.forward(s, &seq)
    }

    /// Logits from an intermediate sequence (e.g. a cached frozen prefix).
    pub fn logits_from<T: Scalar>(&self, s: &mut Session<'_, T>, seq: Seq) -> Result<Var> {
        let seq = self.prompt.forward_from(&self.backbone, s, seq)?;
        self.head.forward(s, &seq)
    }
}
