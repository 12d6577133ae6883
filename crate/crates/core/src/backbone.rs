//! Patch embedding plus a pre-norm transformer encoder.

use std::ops::RangeInclusive;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{group_patches, PatchSet, PointCloud};
use crate::params::{filled, Group, LayerNorm, Linear, ParamId, ParamStore, Session};
use crate::tensor::{Graph, Scalar, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackboneConfig {
    pub depth: usize,
    pub width: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    /// Patches per cloud.
    pub patches: usize,
    /// Points per patch.
    pub patch_points: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl BackboneConfig {
    pub fn toy() -> Self {
        Self {
            depth: 4,
            width: 64,
            heads: 4,
            ffn_mult: 4,
            patches: 16,
            patch_points: 16,
        }
    }

    /// Dimensions of the 22M-parameter backbones, for parameter accounting.
    pub fn paper() -> Self {
        Self {
            depth: 12,
            width: 384,
            heads: 6,
            ffn_mult: 4,
            patches: 64,
            patch_points: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.depth < 2 {
            return bad(format!("backbone depth must be at least 2, got {}", self.depth));
        }
        if self.heads == 0 || !self.width.is_multiple_of(self.heads) {
            return bad(format!("width {} not divisible by {} heads", self.width, self.heads));
        }
        if self.width < 2 || !self.width.is_multiple_of(2) {
            return bad(format!("width must be even, got {}", self.width));
        }
        if self.ffn_mult == 0 || self.patches == 0 || self.patch_points == 0 {
            return bad("ffn_mult, patches and patch_points must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Cls,
    Prompt,
    Patch,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Cls => "cls",
            Role::Prompt => "prompt",
            Role::Patch => "patch",
        }
    }
}

/// Token block tracked through a graph. `layer` is the index of the encoder
/// layer whose output this is (0 for the embedding).
#[derive(Clone, Debug, PartialEq)]
pub struct Seq {
    pub var: Var,
    pub roles: Vec<Role>,
    pub layer: usize,
}

impl Seq {
    pub fn prompt_count(&self) -> usize {
        self.roles.iter().filter(|&&r| r == Role::Prompt).count()
    }

    pub fn patch_range(&self) -> std::ops::Range<usize> {
        let start = 1 + self.prompt_count();
        start..self.roles.len()
    }

    pub fn to_tokens<T: Scalar>(&self, g: &Graph<T>) -> TokenSequence<T> {
        TokenSequence {
            tokens: g.tensor(self.var),
            roles: self.roles.clone(),
            layer_index: self.layer,
        }
    }
}

/// Materialised token matrix with role tags.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence<T> {
    pub tokens: Tensor<T>,
    pub roles: Vec<Role>,
    pub layer_index: usize,
}

impl<T: Scalar> TokenSequence<T> {
    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.tokens.row(i)
    }
}

/// Role tags `[CLS, PROMPT×p, PATCH×m]`.
pub fn roles(prompts: usize, patches: usize) -> Vec<Role> {
    let mut r = vec![Role::Cls];
    r.extend(std::iter::repeat_n(Role::Prompt, prompts));
    r.extend(std::iter::repeat_n(Role::Patch, patches));
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer {
    pub norm1: LayerNorm,
    pub qkv: Linear,
    pub proj: Linear,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl EncoderLayer {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, rng: &mut impl Rng, prefix: &str, cfg: &BackboneConfig, group: Group) -> Self {
        let d = cfg.width;
        Self {
            norm1: LayerNorm::new(store, &format!("{prefix}.norm1"), d, group),
            qkv: Linear::new(store, rng, &format!("{prefix}.attn.qkv"), d, 3 * d, group),
            proj: Linear::new(store, rng, &format!("{prefix}.attn.proj"), d, d, group),
            norm2: LayerNorm::new(store, &format!("{prefix}.norm2"), d, group),
            fc1: Linear::new(store, rng, &format!("{prefix}.mlp.fc1"), d, cfg.ffn_mult * d, group),
            fc2: Linear::new(store, rng, &format!("{prefix}.mlp.fc2"), cfg.ffn_mult * d, d, group),
        }
    }

    /// `x + attn(norm1(x))`, then `+ mlp(norm2(·))`, for `x: [L, d]`.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var, heads: usize) -> Result<Var> {
        let d = s.g.shape(x)[1];
        let dh = d / heads;
        let h = self.norm1.forward(s, x)?;
        let qkv = self.qkv.forward(s, h)?;
        let mut outs = Vec::with_capacity(heads);
        for i in 0..heads {
            let q = s.g.slice(qkv, 1, i * dh, (i + 1) * dh)?;
            let k = s.g.slice(qkv, 1, d + i * dh, d + (i + 1) * dh)?;
            let v = s.g.slice(qkv, 1, 2 * d + i * dh, 2 * d + (i + 1) * dh)?;
            let kt = s.g.transpose(k)?;
            let scores = s.g.matmul(q, kt)?;
            let scores = s.g.scale(scores, 1.0 / (dh as f64).sqrt())?;
            let attn = s.g.softmax(scores, 1)?;
            outs.push(s.g.matmul(attn, v)?);
        }
        let cat = if heads == 1 { outs[0] } else { s.g.concat(&outs, 1)? };
        let a = self.proj.forward(s, cat)?;
        let x1 = s.g.add(x, a)?;
        let h2 = self.norm2.forward(s, x1)?;
        let f = self.fc1.forward(s, h2)?;
        let f = s.g.gelu(f)?;
        let f = self.fc2.forward(s, f)?;
        Ok(s.g.add(x1, f)?)
    }
}

/// Parameter handles of the backbone; values live in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    pub cfg: BackboneConfig,
    pub embed1: Linear,
    pub embed2: Linear,
    pub pos1: Linear,
    pub pos2: Linear,
    pub cls: ParamId,
    pub layers: Vec<EncoderLayer>,
}

impl Backbone {
    /// Registers every backbone tensor under `backbone.*`. Layers are named
    /// from 1, e.g. `backbone.layer3.attn.qkv.weight`.
    pub fn new<T: Scalar>(cfg: BackboneConfig, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.width;
        let g = Group::Backbone;
        let embed1 = Linear::new(store, rng, "backbone.embed.fc1", 3, d / 2, g);
        let embed2 = Linear::new(store, rng, "backbone.embed.fc2", d, d, g);
        let pos1 = Linear::new(store, rng, "backbone.pos.fc1", 3, d, g);
        let pos2 = Linear::new(store, rng, "backbone.pos.fc2", d, d, g);
        let cls = store.add("backbone.cls", filled(vec![1, d], 0.0), g);
        let layers = (1..=cfg.depth)
            .map(|i| EncoderLayer::new(store, rng, &format!("backbone.layer{i}"), &cfg, g))
            .collect();
        Ok(Self {
            cfg,
            embed1,
            embed2,
            pos1,
            pos2,
            cls,
            layers,
        })
    }

    pub fn patches(&self, cloud: &PointCloud) -> Result<PatchSet> {
        Ok(group_patches(cloud, self.cfg.patches, self.cfg.patch_points)?)
    }

    /// Mini-PointNet over `groups: [m·k, 3]`, giving `[m, d]`.
    pub fn patch_features<T: Scalar>(&self, s: &mut Session<'_, T>, groups: Var, m: usize, k: usize) -> Result<Var> {
        let d = self.cfg.width;
        let h1 = self.embed1.forward(s, groups)?;
        let h1 = s.g.gelu(h1)?;
        let per_patch = s.g.reshape(h1, vec![m, k, d / 2])?;
        let pooled = s.g.max_reduce(per_patch, 1)?;
        let spread = s.g.gather(pooled, (0..m * k).map(|i| i / k).collect())?;
        let cat = s.g.concat(&[spread, h1], 1)?;
        let h2 = self.embed2.forward(s, cat)?;
        let h2 = s.g.reshape(h2, vec![m, k, d])?;
        Ok(s.g.max_reduce(h2, 1)?)
    }

    /// Positional MLP on patch centres `[m, 3]`.
    pub fn position<T: Scalar>(&self, s: &mut Session<'_, T>, centers: Var) -> Result<Var> {
        let h = self.pos1.forward(s, centers)?;
        let h = s.g.gelu(h)?;
        Ok(self.pos2.forward(s, h)?)
    }

    /// Layer-0 sequence `[CLS; E₀]`.
    pub fn embed<T: Scalar>(&self, s: &mut Session<'_, T>, patches: &PatchSet) -> Result<Seq> {
        let (m, k) = (self.cfg.patches, self.cfg.patch_points);
        if patches.m != m || patches.k != k {
            return Err(Error::Dim(format!(
                "patch set is {}×{}, backbone expects {}×{}",
                patches.m, patches.k, m, k
            )));
        }
        let groups = s.input(vec![m * k, 3], patches.groups_flat())?;
        let centers = s.input(vec![m, 3], patches.centers_flat())?;
        let feat = self.patch_features(s, groups, m, k)?;
        let pos = self.position(s, centers)?;
        let e0 = s.g.add(feat, pos)?;
        let cls = s.p(self.cls);
        let var = s.g.concat(&[cls, e0], 0)?;
        Ok(Seq {
            var,
            roles: roles(0, m),
            layer: 0,
        })
    }

    /// Applies encoder layers `layers` (1-based, inclusive). The sequence must
    /// be the output of the layer just before the range.
    pub fn encode<T: Scalar>(&self, s: &mut Session<'_, T>, seq: Seq, layers: RangeInclusive<usize>) -> Result<Seq> {
        if layers.is_empty() {
            return Ok(seq);
        }
        let (from, to) = (*layers.start(), *layers.end());
        if from != seq.layer + 1 || from == 0 || to > self.cfg.depth {
            return Err(Error::Config(format!(
                "cannot apply layers {from}..={to} to the output of layer {}",
                seq.layer
            )));
        }
        let mut var = seq.var;
        for i in layers {
            var = self.layers[i - 1].forward(s, var, self.cfg.heads)?;
        }
        Ok(Seq {
            var,
            roles: seq.roles,
            layer: to,
        })
    }

    /// Group, embed and run all `N` layers: `[c_N; E_N]`.
    pub fn forward_plain<T: Scalar>(&self, s: &mut Session<'_, T>, cloud: &PointCloud) -> Result<Seq> {
        let patches = self.patches(cloud)?;
        let seq = self.embed(s, &patches)?;
        self.encode(s, seq, 1..=self.cfg.depth)
    }

    pub fn param_ids<T: Scalar>(&self, store: &ParamStore<T>) -> Vec<ParamId> {
        store.group_ids(Group::Backbone)
    }
}
