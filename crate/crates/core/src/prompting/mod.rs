//! Tuning strategies: static prompts, dynamic prompt generators, head-only
//! and full fine-tuning, plus trainable-parameter accounting.

mod count;
mod generator;
mod strategy;

pub use count::{count_trainable, ParamBreakdown};
pub use generator::{edgeconv_layer, generate_prompt, Generator};
pub use strategy::{GeneratorKind, HeadInput, Sharing, StrategyConfig, StrategyKind};

use rand::Rng;

use crate::backbone::{roles, Backbone, BackboneConfig, Role, Seq};
use crate::error::{Error, Result};
use crate::params::{normal_init, Group, ParamId, ParamStore, Session};
use crate::tensor::Scalar;

/// Standard deviation of static prompt init.
pub const PROMPT_INIT_STD: f64 = 0.02;

/// Prompt parameters of one strategy, plus where they go.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptModule {
    pub strategy: StrategyConfig,
    /// Resolved insert layers, ascending.
    pub insert_layers: Vec<usize>,
    /// `(layer, p×d matrix)` for static prompts.
    pub statics: Vec<(usize, ParamId)>,
    /// One generator when shared, one per insert layer when independent.
    pub generators: Vec<Generator>,
    knn_k: usize,
}

impl PromptModule {
    pub fn new<T: Scalar>(
        strategy: &StrategyConfig,
        cfg: &BackboneConfig,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        strategy.validate(cfg)?;
        let d = cfg.width;
        let insert_layers = strategy.resolved_insert_layers(cfg.depth);
        let mut statics = Vec::new();
        let mut generators = Vec::new();
        match strategy.kind {
            StrategyKind::VptShallow | StrategyKind::VptDeep => {
                for &l in &insert_layers {
                    let id = store.add(
                        format!("prompt.layer{l}.tokens"),
                        normal_init(rng, vec![strategy.prompts, d], PROMPT_INIT_STD),
                        Group::Prompt,
                    );
                    statics.push((l, id));
                }
            }
            StrategyKind::Idpt => {
                let count = match strategy.sharing {
                    Sharing::Shared => 1,
                    Sharing::Independent => insert_layers.len(),
                };
                for j in 0..count {
                    let prefix = match strategy.sharing {
                        Sharing::Shared => "prompt.generator".to_string(),
                        Sharing::Independent => format!("prompt.layer{}.generator", insert_layers[j]),
                    };
                    generators.push(Generator::new(strategy.generator, cfg, store, rng, &prefix));
                }
            }
            StrategyKind::HeadOnly | StrategyKind::FullFinetune => {}
        }
        Ok(Self {
            strategy: strategy.clone(),
            insert_layers,
            statics,
            generators,
            knn_k: strategy.resolved_knn_k(cfg.patches),
        })
    }

    /// Prompt tokens per sequence after insertion.
    pub fn block_len(&self) -> usize {
        self.strategy.prompt_block_len()
    }

    /// Deepest layer whose output does not depend on any prompt parameter.
    pub fn prefix_layer(&self, depth: usize) -> usize {
        match self.strategy.kind {
            StrategyKind::HeadOnly | StrategyKind::FullFinetune => depth,
            StrategyKind::VptShallow | StrategyKind::VptDeep => 0,
            StrategyKind::Idpt => self.insert_layers[0] - 1,
        }
    }

    fn generator_for(&self, layer: usize) -> &Generator {
        match self.strategy.sharing {
            Sharing::Shared => &self.generators[0],
            Sharing::Independent => {
                let j = self.insert_layers.iter().position(|&l| l == layer).expect("insert layer");
                &self.generators[j]
            }
        }
    }

    /// Inserts or replaces the prompt block if `layer` is an insert layer.
    fn insert<T: Scalar>(&self, s: &mut Session<'_, T>, seq: Seq, layer: usize) -> Result<Seq> {
        if !self.insert_layers.contains(&layer) {
            return Ok(seq);
        }
        let prompts = match self.strategy.kind {
            StrategyKind::VptShallow | StrategyKind::VptDeep => {
                let id = self.statics.iter().find(|(l, _)| *l == layer).expect("static prompt").1;
                s.p(id)
            }
            StrategyKind::Idpt => {
                let r = seq.patch_range();
                let patches = s.g.slice(seq.var, 0, r.start, r.end)?;
                generate_prompt(s, patches, self.generator_for(layer), self.strategy.top_k, self.knn_k)?
            }
            StrategyKind::HeadOnly | StrategyKind::FullFinetune => unreachable!("no insert layers"),
        };
        splice(s, seq, prompts)
    }

    /// Runs the remaining layers after `seq`, inserting or replacing the
    /// prompt block at each insert layer.
    pub fn forward_from<T: Scalar>(&self, bb: &Backbone, s: &mut Session<'_, T>, mut seq: Seq) -> Result<Seq> {
        for layer in seq.layer + 1..=bb.cfg.depth {
            seq = self.insert(s, seq, layer)?;
            seq = bb.encode(s, seq, layer..=layer)?;
        }
        Ok(seq)
    }

    /// The sequence layer `layer` consumes: earlier layers run, then any
    /// prompt insertion at `layer` itself.
    pub fn input_of<T: Scalar>(&self, bb: &Backbone, s: &mut Session<'_, T>, mut seq: Seq, layer: usize) -> Result<Seq> {
        for l in seq.layer + 1..layer {
            seq = self.insert(s, seq, l)?;
            seq = bb.encode(s, seq, l..=l)?;
        }
        self.insert(s, seq, layer)
    }

    /// Embedding plus every layer: the tuned forward pass.
    pub fn forward_tuned<T: Scalar>(&self, bb: &Backbone, s: &mut Session<'_, T>, cloud: &crate::geometry::PointCloud) -> Result<Seq> {
        let patches = bb.patches(cloud)?;
        let seq = bb.embed(s, &patches)?;
        self.forward_from(bb, s, seq)
    }
}

/// `[CLS; prompts; PATCH]`, dropping any prompt block `seq` already has.
pub fn splice<T: Scalar>(s: &mut Session<'_, T>, seq: Seq, prompts: crate::tensor::Var) -> Result<Seq> {
    let p = s.g.shape(prompts)[0];
    let r = seq.patch_range();
    let m = r.len();
    if s.g.shape(prompts)[1] != s.g.shape(seq.var)[1] {
        return Err(Error::Dim(format!(
            "prompt width {} differs from token width {}",
            s.g.shape(prompts)[1],
            s.g.shape(seq.var)[1]
        )));
    }
    let cls = s.g.slice(seq.var, 0, 0, 1)?;
    let patches = s.g.slice(seq.var, 0, r.start, r.end)?;
    let var = s.g.concat(&[cls, prompts, patches], 0)?;
    debug_assert_eq!(seq.roles[0], Role::Cls);
    Ok(Seq {
        var,
        roles: roles(p, m),
        layer: seq.layer,
    })
}

#[cfg(test)]
mod tests;
