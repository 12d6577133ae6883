use std::fmt;
use std::str::FromStr;

use crate::backbone::BackboneConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    FullFinetune,
    HeadOnly,
    VptShallow,
    VptDeep,
    Idpt,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::FullFinetune,
        StrategyKind::HeadOnly,
        StrategyKind::VptShallow,
        StrategyKind::VptDeep,
        StrategyKind::Idpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::FullFinetune => "full_finetune",
            StrategyKind::HeadOnly => "head_only",
            StrategyKind::VptShallow => "vpt_shallow",
            StrategyKind::VptDeep => "vpt_deep",
            StrategyKind::Idpt => "idpt",
        }
    }

    pub fn trains_backbone(self) -> bool {
        self == StrategyKind::FullFinetune
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    Mlp1,
    Mlp3,
    /// `c` stacked EdgeConvs, `c ∈ {1, 2, 3}`.
    EdgeConv(usize),
    Transformer1,
}

impl GeneratorKind {
    pub fn name(self) -> String {
        match self {
            GeneratorKind::Mlp1 => "mlp1".into(),
            GeneratorKind::Mlp3 => "mlp3".into(),
            GeneratorKind::EdgeConv(c) => format!("edgeconv{c}"),
            GeneratorKind::Transformer1 => "transformer1".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sharing {
    Shared,
    Independent,
}

impl Sharing {
    pub fn name(self) -> &'static str {
        match self {
            Sharing::Shared => "shared",
            Sharing::Independent => "independent",
        }
    }
}

/// Components the head may consume, always concatenated in this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeadInput {
    Cls,
    Prompt,
    PatchMaxpool,
}

impl HeadInput {
    pub fn name(self) -> &'static str {
        match self {
            HeadInput::Cls => "cls",
            HeadInput::Prompt => "prompt",
            HeadInput::PatchMaxpool => "patch_maxpool",
        }
    }
}

macro_rules! named_enum_io {
    ($t:ty, [$($v:expr),* $(,)?]) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.name())
            }
        }

        impl FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                [$($v),*]
                    .into_iter()
                    .find(|v: &$t| v.name() == s)
                    .ok_or_else(|| format!("unknown {} `{s}`", stringify!($t)))
            }
        }
    };
}

named_enum_io!(
    StrategyKind,
    [
        StrategyKind::FullFinetune,
        StrategyKind::HeadOnly,
        StrategyKind::VptShallow,
        StrategyKind::VptDeep,
        StrategyKind::Idpt
    ]
);
named_enum_io!(
    GeneratorKind,
    [
        GeneratorKind::Mlp1,
        GeneratorKind::Mlp3,
        GeneratorKind::EdgeConv(1),
        GeneratorKind::EdgeConv(2),
        GeneratorKind::EdgeConv(3),
        GeneratorKind::Transformer1
    ]
);
named_enum_io!(Sharing, [Sharing::Shared, Sharing::Independent]);
named_enum_io!(HeadInput, [HeadInput::Cls, HeadInput::Prompt, HeadInput::PatchMaxpool]);

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub generator: GeneratorKind,
    /// Static prompt count `p`.
    pub prompts: usize,
    /// `Some(K)` replaces the generator's max pooling with top-K pooling.
    pub top_k: Option<usize>,
    /// `None` selects the per-kind default.
    pub insert_layers: Option<Vec<usize>>,
    pub sharing: Sharing,
    /// Feature-space neighbourhood for EdgeConv; `None` means `min(8, m)`.
    pub knn_k: Option<usize>,
    /// `None` selects the per-kind default.
    pub head_inputs: Option<Vec<HeadInput>>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self::new(StrategyKind::Idpt)
    }
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            generator: GeneratorKind::EdgeConv(3),
            prompts: 4,
            top_k: None,
            insert_layers: None,
            sharing: Sharing::Shared,
            knn_k: None,
            head_inputs: None,
        }
    }

    pub fn resolved_insert_layers(&self, depth: usize) -> Vec<usize> {
        if let Some(l) = &self.insert_layers {
            let mut l = l.clone();
            l.sort_unstable();
            l.dedup();
            return l;
        }
        match self.kind {
            StrategyKind::Idpt => vec![depth],
            StrategyKind::VptShallow => vec![1],
            StrategyKind::VptDeep => (1..=depth).collect(),
            StrategyKind::HeadOnly | StrategyKind::FullFinetune => vec![],
        }
    }

    pub fn resolved_knn_k(&self, patches: usize) -> usize {
        self.knn_k.unwrap_or(8.min(patches))
    }

    /// Head inputs in canonical order.
    pub fn resolved_head_inputs(&self) -> Vec<HeadInput> {
        let mut h = match &self.head_inputs {
            Some(h) => h.clone(),
            None => match self.kind {
                StrategyKind::HeadOnly | StrategyKind::FullFinetune => vec![HeadInput::Cls, HeadInput::PatchMaxpool],
                _ => vec![HeadInput::Cls, HeadInput::Prompt, HeadInput::PatchMaxpool],
            },
        };
        h.sort_unstable();
        h.dedup();
        h
    }

    pub fn has_prompts(&self) -> bool {
        !matches!(self.kind, StrategyKind::HeadOnly | StrategyKind::FullFinetune)
    }

    /// Prompt tokens in the final sequence.
    pub fn prompt_block_len(&self) -> usize {
        match self.kind {
            StrategyKind::HeadOnly | StrategyKind::FullFinetune => 0,
            StrategyKind::VptShallow | StrategyKind::VptDeep => self.prompts,
            StrategyKind::Idpt => self.top_k.unwrap_or(1),
        }
    }

    pub fn validate(&self, cfg: &BackboneConfig) -> Result<()> {
        let mut errs = Vec::new();
        if self.prompts == 0 {
            errs.push("prompt count must be at least 1".to_string());
        }
        if self.top_k == Some(0) {
            errs.push("top_k must be at least 1".to_string());
        }
        if let GeneratorKind::EdgeConv(c) = self.generator {
            if !(1..=3).contains(&c) {
                errs.push(format!("edgeconv count {c} outside 1..=3"));
            }
        }
        let layers = self.resolved_insert_layers(cfg.depth);
        match self.kind {
            StrategyKind::Idpt => {
                if layers.is_empty() {
                    errs.push("idpt needs at least one insert layer".into());
                }
                for &l in &layers {
                    if l < 2 || l > cfg.depth {
                        errs.push(format!("idpt insert layer {l} outside 2..={}", cfg.depth));
                    }
                }
                if let Some(k) = self.top_k.filter(|&k| k > cfg.patches) {
                    errs.push(format!("top_k {k} exceeds {} patches", cfg.patches));
                }
                let k = self.resolved_knn_k(cfg.patches);
                if matches!(self.generator, GeneratorKind::EdgeConv(_)) && (k == 0 || k > cfg.patches) {
                    errs.push(format!("knn_k {k} outside 1..={}", cfg.patches));
                }
            }
            StrategyKind::VptShallow | StrategyKind::VptDeep => {
                if layers.is_empty() {
                    errs.push("static prompting needs at least one insert layer".into());
                }
                for &l in &layers {
                    if l < 1 || l > cfg.depth {
                        errs.push(format!("prompt insert layer {l} outside 1..={}", cfg.depth));
                    }
                }
                if self.kind == StrategyKind::VptShallow && layers.len() > 1 {
                    errs.push("vpt_shallow inserts at exactly one layer".into());
                }
            }
            StrategyKind::HeadOnly | StrategyKind::FullFinetune => {
                if self.insert_layers.as_ref().is_some_and(|l| !l.is_empty()) {
                    errs.push(format!("{} takes no insert layers", self.kind));
                }
            }
        }
        let heads = self.resolved_head_inputs();
        if heads.is_empty() {
            errs.push("head_inputs must not be empty".into());
        }
        if heads.contains(&HeadInput::Prompt) && !self.has_prompts() {
            errs.push(format!("head input `prompt` needs a prompting strategy, not {}", self.kind));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}
