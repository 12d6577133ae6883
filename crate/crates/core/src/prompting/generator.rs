use rand::Rng;

use super::GeneratorKind;
use crate::backbone::{BackboneConfig, EncoderLayer};
use crate::error::{Error, Result};
use crate::geometry::knn;
use crate::params::{Group, Linear, ParamStore, Session};
use crate::tensor::{Scalar, Var};

/// Dynamic prompt generator weights.
#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    /// Stacked EdgeConvs (`W: [2d, d]` each) and a fusion layer `c·d → d`.
    EdgeConv { convs: Vec<Linear>, fusion: Linear },
    /// Per-patch `linear + GELU` layers.
    Mlp { layers: Vec<Linear> },
    /// One encoder layer over the patch tokens.
    Transformer { layer: EncoderLayer, heads: usize },
}

impl Generator {
    pub fn new<T: Scalar>(
        kind: GeneratorKind,
        cfg: &BackboneConfig,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        prefix: &str,
    ) -> Self {
        let d = cfg.width;
        let g = Group::Generator;
        match kind {
            GeneratorKind::EdgeConv(c) => {
                let convs = (1..=c)
                    .map(|i| Linear::new(store, rng, &format!("{prefix}.edgeconv{i}"), 2 * d, d, g))
                    .collect();
                let fusion = Linear::new(store, rng, &format!("{prefix}.fusion"), c * d, d, g);
                Generator::EdgeConv { convs, fusion }
            }
            GeneratorKind::Mlp1 | GeneratorKind::Mlp3 => {
                let n = if kind == GeneratorKind::Mlp1 { 1 } else { 3 };
                let layers = (1..=n)
                    .map(|i| Linear::new(store, rng, &format!("{prefix}.mlp{i}"), d, d, g))
                    .collect();
                Generator::Mlp { layers }
            }
            GeneratorKind::Transformer1 => Generator::Transformer {
                layer: EncoderLayer::new(store, rng, &format!("{prefix}.transformer"), cfg, g),
                heads: cfg.heads,
            },
        }
    }
}

/// One EdgeConv over `x: [m, d_in]`: a kNN graph is built on the current
/// feature values (self included), each edge `[xᵢ ‖ xⱼ − xᵢ]` goes through
/// `linear + GELU`, and the result is max-pooled over the neighbours.
///
/// The edge linear is evaluated without materialising edge features:
/// `[xᵢ ‖ xⱼ − xᵢ]·W = xᵢ·(W_top − W_bot) + xⱼ·W_bot`.
pub fn edgeconv_layer<T: Scalar>(s: &mut Session<'_, T>, x: Var, conv: &Linear, knn_k: usize) -> Result<Var> {
    let (m, d_in) = (s.g.shape(x)[0], s.g.shape(x)[1]);
    if conv.fan_in != 2 * d_in {
        return Err(Error::Dim(format!("edge weight expects {} inputs, features have {}", conv.fan_in, 2 * d_in)));
    }
    let nbrs = knn(s.g.value(x), s.g.value(x), d_in, knn_k)?;
    let w = s.p(conv.w);
    let b = s.p(conv.b);
    let w_top = s.g.slice(w, 0, 0, d_in)?;
    let w_bot = s.g.slice(w, 0, d_in, 2 * d_in)?;
    let p = s.g.matmul(x, w_top)?;
    let q = s.g.matmul(x, w_bot)?;
    let own = s.g.sub(p, q)?;
    let own = s.g.gather(own, (0..m * knn_k).map(|e| e / knn_k).collect())?;
    let other = s.g.gather(q, nbrs)?;
    let pre = s.g.add(own, other)?;
    let pre = s.g.add(pre, b)?;
    let act = s.g.gelu(pre)?;
    let act = s.g.reshape(act, vec![m, knn_k, conv.fan_out])?;
    Ok(s.g.max_reduce(act, 1)?)
}

/// Prompt tokens from patch tokens `[m, d]`: feature extraction, then a
/// per-feature max over the patches (`[1, d]`), or with `top_k = Some(K)` the
/// per-feature top-K (`[K, d]`).
pub fn generate_prompt<T: Scalar>(
    s: &mut Session<'_, T>,
    patches: Var,
    gen: &Generator,
    top_k: Option<usize>,
    knn_k: usize,
) -> Result<Var> {
    let d = s.g.shape(patches)[1];
    let feats = match gen {
        Generator::EdgeConv { convs, fusion } => {
            let mut x = patches;
            let mut outs = Vec::with_capacity(convs.len());
            for conv in convs {
                x = edgeconv_layer(s, x, conv, knn_k)?;
                outs.push(x);
            }
            let cat = if outs.len() == 1 { outs[0] } else { s.g.concat(&outs, 1)? };
            fusion.forward(s, cat)?
        }
        Generator::Mlp { layers } => {
            let mut x = patches;
            for l in layers {
                let h = l.forward(s, x)?;
                x = s.g.gelu(h)?;
            }
            x
        }
        Generator::Transformer { layer, heads } => layer.forward(s, patches, *heads)?,
    };
    let (pooled, rows) = match top_k {
        None => (s.g.max_reduce(feats, 0)?, 1),
        Some(k) => (s.g.topk_reduce(feats, 0, k)?, k),
    };
    Ok(s.g.reshape(pooled, vec![rows, d])?)
}
