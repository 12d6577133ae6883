//! Flat `section.key = value` run configuration.
//!
//! Every key has a default, so empty text is a complete configuration.
//! Parsing never stops at the first problem: all unknown keys, malformed
//! values and bound violations are collected with their line numbers.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::backbone::BackboneConfig;
use crate::data::{DatasetSpec, ShapeKind, Split, SubMode};
use crate::geometry::AugmentSpec;
use crate::prompting::{HeadInput, Sharing, StrategyConfig, StrategyKind};
use crate::training::{FewShotConfig, HeadConfig, MaeConfig, TuneConfig};

/// Which token block `export-embeddings` writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tap {
    /// Patch tokens entering the last encoder layer.
    InputN,
    /// Patch tokens leaving the last encoder layer.
    OutputN,
}

impl Tap {
    pub fn name(self) -> &'static str {
        match self {
            Tap::InputN => "input_n",
            Tap::OutputN => "output_n",
        }
    }
}

impl FromStr for Tap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "input_n" => Ok(Tap::InputN),
            "output_n" => Ok(Tap::OutputN),
            _ => Err(format!("unknown tap `{s}` (expected input_n or output_n)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub votes: usize,
    pub augment: AugmentSpec,
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            votes: 1,
            augment: AugmentSpec {
                scale: Some(AugmentSpec::SCALE_DEFAULT),
                translate: Some(AugmentSpec::TRANSLATE_DEFAULT),
                ..AugmentSpec::none()
            },
            split: Split::Test,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExportConfig {
    pub tap: Tap,
    pub split: Split,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            tap: Tap::OutputN,
            split: Split::Test,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data_dir: PathBuf,
    pub backbone: BackboneConfig,
    pub strategy: StrategyConfig,
    /// Head shape; its `classes` is replaced by [`RunConfig::head`].
    pub head: HeadConfig,
    /// `None` sizes the head to the dataset's class list.
    pub head_classes: Option<usize>,
    pub data: DatasetSpec,
    pub pretrain: MaeConfig,
    pub tune: TuneConfig,
    pub eval: EvalConfig,
    pub fewshot: FewShotConfig,
    pub export: ExportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: "runs".into(),
            data_dir: "data".into(),
            backbone: BackboneConfig::toy(),
            strategy: StrategyConfig::new(StrategyKind::Idpt),
            head: HeadConfig::default(),
            head_classes: None,
            data: DatasetSpec::default(),
            pretrain: MaeConfig::default(),
            tune: TuneConfig::default(),
            eval: EvalConfig::default(),
            fewshot: FewShotConfig::default(),
            export: ExportConfig::default(),
        }
    }
}

/// Where a configuration problem came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    /// 1-based line of the config text.
    Line(usize),
    /// 1-based index of a `--set` override.
    Override(usize),
    /// Consistency check across keys whose source is unknown.
    Check,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub origin: Origin,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.origin {
            Origin::Line(n) => write!(f, "line {n}: {}", self.message),
            Origin::Override(n) => write!(f, "--set #{n}: {}", self.message),
            Origin::Check => f.write_str(&self.message),
        }
    }
}

/// All problems found in one parse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Every key, in rendering order.
pub const KEYS: &[&str] = &[
    "run.seed",
    "run.output_dir",
    "run.data_dir",
    "backbone.depth",
    "backbone.width",
    "backbone.heads",
    "backbone.ffn_mult",
    "backbone.patches",
    "backbone.patch_points",
    "strategy.kind",
    "strategy.generator",
    "strategy.prompts",
    "strategy.top_k",
    "strategy.insert_layer",
    "strategy.sharing",
    "strategy.knn_k",
    "strategy.head_inputs",
    "head.hidden_width",
    "head.hidden_layers",
    "head.classes",
    "data.classes",
    "data.samples_per_cell",
    "data.points",
    "data.submodes",
    "data.train_fraction",
    "data.seed",
    "pretrain.mask_ratio",
    "pretrain.epochs",
    "pretrain.lr",
    "pretrain.min_lr",
    "pretrain.weight_decay",
    "pretrain.batch",
    "pretrain.augment",
    "tune.epochs",
    "tune.lr",
    "tune.min_lr",
    "tune.weight_decay",
    "tune.batch",
    "tune.augment",
    "tune.eval_every",
    "eval.votes",
    "eval.augment",
    "eval.split",
    "fewshot.n_way",
    "fewshot.m_shot",
    "fewshot.query",
    "fewshot.episodes",
    "export.tap",
    "export.split",
];

fn parse_num<N: FromStr>(v: &str, what: &str) -> Result<N, String> {
    v.parse().map_err(|_| format!("expected {what}, got `{v}`"))
}

fn at_least(v: &str, min: usize) -> Result<usize, String> {
    let n: usize = parse_num(v, "a non-negative integer")?;
    if n < min {
        return Err(format!("must be at least {min}, got {n}"));
    }
    Ok(n)
}

fn positive_f64(v: &str) -> Result<f64, String> {
    let x: f64 = parse_num(v, "a number")?;
    if !(x.is_finite() && x > 0.0) {
        return Err(format!("must be a positive number, got {v}"));
    }
    Ok(x)
}

fn non_negative_f64(v: &str) -> Result<f64, String> {
    let x: f64 = parse_num(v, "a number")?;
    if !(x.is_finite() && x >= 0.0) {
        return Err(format!("must be a non-negative number, got {v}"));
    }
    Ok(x)
}

fn unit_interval(v: &str) -> Result<f64, String> {
    let x: f64 = parse_num(v, "a number")?;
    if !(0.0..=1.0).contains(&x) {
        return Err(format!("must lie in [0, 1], got {v}"));
    }
    Ok(x)
}

/// `auto` or a value.
fn auto<X>(v: &str, f: impl Fn(&str) -> Result<X, String>) -> Result<Option<X>, String> {
    if v == "auto" { Ok(None) } else { f(v).map(Some) }
}

fn list<X>(v: &str, f: impl Fn(&str) -> Result<X, String>) -> Result<Vec<X>, String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn render_list<X>(xs: &[X], f: impl Fn(&X) -> String) -> String {
    xs.iter().map(f).collect::<Vec<_>>().join(",")
}

fn render_auto<X>(x: &Option<X>, f: impl Fn(&X) -> String) -> String {
    x.as_ref().map_or_else(|| "auto".to_string(), f)
}

impl RunConfig {
    /// Head configuration with the class count resolved.
    pub fn head(&self) -> HeadConfig {
        HeadConfig {
            classes: self.head_classes.unwrap_or(self.data.classes.len()),
            ..self.head
        }
    }

    /// Assigns one key. The message of an `Err` omits the key itself.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "run.seed" => self.seed = parse_num(v, "an unsigned integer")?,
            "run.output_dir" => self.output_dir = v.into(),
            "run.data_dir" => self.data_dir = v.into(),
            "backbone.depth" => self.backbone.depth = at_least(v, 2)?,
            "backbone.width" => self.backbone.width = at_least(v, 2)?,
            "backbone.heads" => self.backbone.heads = at_least(v, 1)?,
            "backbone.ffn_mult" => self.backbone.ffn_mult = at_least(v, 1)?,
            "backbone.patches" => self.backbone.patches = at_least(v, 1)?,
            "backbone.patch_points" => self.backbone.patch_points = at_least(v, 1)?,
            "strategy.kind" => self.strategy.kind = v.parse()?,
            "strategy.generator" => self.strategy.generator = v.parse()?,
            "strategy.prompts" => self.strategy.prompts = at_least(v, 1)?,
            "strategy.top_k" => {
                self.strategy.top_k = if v == "none" { None } else { Some(at_least(v, 1)?) };
            }
            "strategy.insert_layer" => self.strategy.insert_layers = auto(v, |s| list(s, |x| at_least(x, 1)))?,
            "strategy.sharing" => self.strategy.sharing = v.parse::<Sharing>()?,
            "strategy.knn_k" => self.strategy.knn_k = auto(v, |s| at_least(s, 1))?,
            "strategy.head_inputs" => {
                self.strategy.head_inputs = auto(v, |s| list(s, |x| x.parse::<HeadInput>()))?;
            }
            "head.hidden_width" => self.head.hidden_width = auto(v, |s| at_least(s, 1))?,
            "head.hidden_layers" => self.head.hidden_layers = parse_num(v, "a non-negative integer")?,
            "head.classes" => self.head_classes = auto(v, |s| at_least(s, 1))?,
            "data.classes" => {
                self.data.classes = if v == "all" {
                    ShapeKind::ALL.to_vec()
                } else {
                    list(v, |x| x.parse::<ShapeKind>().map_err(|e| e.to_string()))?
                };
            }
            "data.samples_per_cell" => self.data.samples_per_cell = at_least(v, 1)?,
            "data.points" => self.data.points = at_least(v, 16)?,
            "data.submodes" => {
                self.data.submodes = if v == "all" {
                    SubMode::ALL.to_vec()
                } else {
                    list(v, |x| x.parse::<SubMode>().map_err(|e| e.to_string()))?
                };
            }
            "data.train_fraction" => self.data.train_fraction = unit_interval(v)?,
            "data.seed" => self.data.seed = parse_num(v, "an unsigned integer")?,
            "pretrain.mask_ratio" => self.pretrain.mask_ratio = unit_interval(v)?,
            "pretrain.epochs" => self.pretrain.epochs = parse_num(v, "a non-negative integer")?,
            "pretrain.lr" => self.pretrain.lr = positive_f64(v)?,
            "pretrain.min_lr" => self.pretrain.min_lr = non_negative_f64(v)?,
            "pretrain.weight_decay" => self.pretrain.weight_decay = non_negative_f64(v)?,
            "pretrain.batch" => self.pretrain.batch = at_least(v, 1)?,
            "pretrain.augment" => self.pretrain.augment = AugmentSpec::parse(v)?,
            "tune.epochs" => self.tune.epochs = parse_num(v, "a non-negative integer")?,
            "tune.lr" => self.tune.lr = positive_f64(v)?,
            "tune.min_lr" => self.tune.min_lr = non_negative_f64(v)?,
            "tune.weight_decay" => self.tune.weight_decay = non_negative_f64(v)?,
            "tune.batch" => self.tune.batch = at_least(v, 1)?,
            "tune.augment" => self.tune.augment = AugmentSpec::parse(v)?,
            "tune.eval_every" => self.tune.eval_every = parse_num(v, "a non-negative integer")?,
            "eval.votes" => self.eval.votes = at_least(v, 1)?,
            "eval.augment" => self.eval.augment = AugmentSpec::parse(v)?,
            "eval.split" => self.eval.split = v.parse()?,
            "fewshot.n_way" => self.fewshot.n_way = at_least(v, 1)?,
            "fewshot.m_shot" => self.fewshot.m_shot = at_least(v, 1)?,
            "fewshot.query" => self.fewshot.query_per_class = at_least(v, 1)?,
            "fewshot.episodes" => self.fewshot.episodes = at_least(v, 1)?,
            "export.tap" => self.export.tap = v.parse()?,
            "export.split" => self.export.split = v.parse()?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Current value of `key` in the form [`RunConfig::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.strategy;
        Some(match key {
            "run.seed" => self.seed.to_string(),
            "run.output_dir" => self.output_dir.display().to_string(),
            "run.data_dir" => self.data_dir.display().to_string(),
            "backbone.depth" => self.backbone.depth.to_string(),
            "backbone.width" => self.backbone.width.to_string(),
            "backbone.heads" => self.backbone.heads.to_string(),
            "backbone.ffn_mult" => self.backbone.ffn_mult.to_string(),
            "backbone.patches" => self.backbone.patches.to_string(),
            "backbone.patch_points" => self.backbone.patch_points.to_string(),
            "strategy.kind" => s.kind.to_string(),
            "strategy.generator" => s.generator.to_string(),
            "strategy.prompts" => s.prompts.to_string(),
            "strategy.top_k" => s.top_k.map_or_else(|| "none".to_string(), |k| k.to_string()),
            "strategy.insert_layer" => render_auto(&s.insert_layers, |l| render_list(l, usize::to_string)),
            "strategy.sharing" => s.sharing.to_string(),
            "strategy.knn_k" => render_auto(&s.knn_k, usize::to_string),
            "strategy.head_inputs" => render_auto(&s.head_inputs, |h| render_list(h, HeadInput::to_string)),
            "head.hidden_width" => render_auto(&self.head.hidden_width, usize::to_string),
            "head.hidden_layers" => self.head.hidden_layers.to_string(),
            "head.classes" => render_auto(&self.head_classes, usize::to_string),
            "data.classes" => render_list(&self.data.classes, ShapeKind::to_string),
            "data.samples_per_cell" => self.data.samples_per_cell.to_string(),
            "data.points" => self.data.points.to_string(),
            "data.submodes" => render_list(&self.data.submodes, SubMode::to_string),
            "data.train_fraction" => self.data.train_fraction.to_string(),
            "data.seed" => self.data.seed.to_string(),
            "pretrain.mask_ratio" => self.pretrain.mask_ratio.to_string(),
            "pretrain.epochs" => self.pretrain.epochs.to_string(),
            "pretrain.lr" => self.pretrain.lr.to_string(),
            "pretrain.min_lr" => self.pretrain.min_lr.to_string(),
            "pretrain.weight_decay" => self.pretrain.weight_decay.to_string(),
            "pretrain.batch" => self.pretrain.batch.to_string(),
            "pretrain.augment" => self.pretrain.augment.render(),
            "tune.epochs" => self.tune.epochs.to_string(),
            "tune.lr" => self.tune.lr.to_string(),
            "tune.min_lr" => self.tune.min_lr.to_string(),
            "tune.weight_decay" => self.tune.weight_decay.to_string(),
            "tune.batch" => self.tune.batch.to_string(),
            "tune.augment" => self.tune.augment.render(),
            "tune.eval_every" => self.tune.eval_every.to_string(),
            "eval.votes" => self.eval.votes.to_string(),
            "eval.augment" => self.eval.augment.render(),
            "eval.split" => self.eval.split.to_string(),
            "fewshot.n_way" => self.fewshot.n_way.to_string(),
            "fewshot.m_shot" => self.fewshot.m_shot.to_string(),
            "fewshot.query" => self.fewshot.query_per_class.to_string(),
            "fewshot.episodes" => self.fewshot.episodes.to_string(),
            "export.tap" => self.export.tap.name().to_string(),
            "export.split" => self.export.split.to_string(),
            _ => return None,
        })
    }

    /// Every key, one per line, grouped by section.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for key in KEYS {
            let sec = key.split('.').next().unwrap_or_default();
            if sec != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = sec;
            }
            out.push_str(&format!("{key} = {}\n", self.get(key).expect("listed key")));
        }
        out
    }

    /// Copies `run.seed` into the per-stage seeds.
    fn propagate_seed(&mut self) {
        self.pretrain.seed = self.seed;
        self.tune.seed = self.seed;
        self.fewshot.seed = self.seed;
    }

    /// Cross-key checks that single values cannot catch.
    fn check(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = self.backbone.validate() {
            errs.push(e.to_string());
        } else if let Err(e) = self.strategy.validate(&self.backbone) {
            errs.push(e.to_string());
        }
        if let Err(e) = self.data.validate() {
            errs.push(e.to_string());
        }
        if self.data.points < self.backbone.patches.max(self.backbone.patch_points) {
            errs.push(format!(
                "data.points {} is smaller than backbone.patches or backbone.patch_points",
                self.data.points
            ));
        }
        if self.pretrain.min_lr > self.pretrain.lr || self.tune.min_lr > self.tune.lr {
            errs.push("min_lr must not exceed lr".into());
        }
        errs
    }
}

fn split_line(line: &str) -> Option<Result<(&str, &str), String>> {
    let line = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
    .trim();
    if line.is_empty() {
        return None;
    }
    Some(match line.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => Err(format!("expected `section.key = value`, got `{line}`")),
    })
}

/// Parses config text, then applies `overrides` (each `section.key=value`)
/// in order. Returns every problem found.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigErrors> {
    let mut cfg = RunConfig::default();
    let mut errs = Vec::new();
    let mut seen: Vec<(String, Origin)> = Vec::new();
    let lines = text.lines().enumerate().map(|(i, l)| (Origin::Line(i + 1), l));
    let sets = overrides.iter().enumerate().map(|(i, l)| (Origin::Override(i + 1), l.as_str()));
    for (origin, line) in lines.chain(sets) {
        let Some(parsed) = split_line(line) else { continue };
        let (key, value) = match parsed {
            Ok(kv) => kv,
            Err(message) => {
                errs.push(ConfigError { origin, message });
                continue;
            }
        };
        if matches!(origin, Origin::Line(_)) && seen.iter().any(|(k, o)| k == key && matches!(o, Origin::Line(_))) {
            errs.push(ConfigError {
                origin,
                message: format!("duplicate key `{key}`"),
            });
            continue;
        }
        match cfg.set(key, value) {
            Ok(()) => seen.push((key.to_string(), origin)),
            Err(m) => errs.push(ConfigError {
                origin,
                message: if m.starts_with("unknown key") { m } else { format!("{key}: {m}") },
            }),
        }
    }
    cfg.propagate_seed();
    if errs.is_empty() {
        let origin_of = |prefix: &str| {
            seen.iter()
                .rev()
                .find(|(k, _)| k.starts_with(prefix))
                .map_or(Origin::Check, |(_, o)| *o)
        };
        for message in cfg.check() {
            let origin = if message.contains("insert layer") {
                origin_of("strategy.insert_layer")
            } else {
                Origin::Check
            };
            errs.push(ConfigError { origin, message });
        }
    }
    if errs.is_empty() { Ok(cfg) } else { Err(ConfigErrors(errs)) }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    parse_config_with(text, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::GeneratorKind;
    use proptest::prelude::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(parse_config("# only a comment\n\n").unwrap(), cfg);
    }

    #[test]
    fn idpt_at_layer_one_is_rejected_with_its_line() {
        let e = parse_config("strategy.kind = idpt\nstrategy.insert_layer = 1\n").unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert_eq!(e.0[0].origin, Origin::Line(2));
        assert!(e.0[0].message.contains("insert layer 1"), "{e}");
    }

    #[test]
    fn collects_every_error() {
        let text = "run.seed = -3\nbogus.key = 1\nno equals sign\nbackbone.depth = 1\ntune.lr = 0\n";
        let e = parse_config(text).unwrap_err();
        let lines: Vec<Origin> = e.0.iter().map(|e| e.origin).collect();
        assert_eq!(lines, (1..=5).map(Origin::Line).collect::<Vec<_>>());
        assert!(e.to_string().contains("line 2: unknown key `bogus.key`"));
    }

    #[test]
    fn duplicates_and_overrides() {
        let e = parse_config("tune.epochs = 3\ntune.epochs = 4\n").unwrap_err();
        assert_eq!(e.0[0].origin, Origin::Line(2));
        let cfg = parse_config_with("tune.epochs = 3\nrun.seed = 5", &["tune.epochs=7".into()]).unwrap();
        assert_eq!(cfg.tune.epochs, 7);
        assert_eq!((cfg.tune.seed, cfg.pretrain.seed, cfg.fewshot.seed), (5, 5, 5));
        let e = parse_config_with("", &["tune.epochs=x".into()]).unwrap_err();
        assert_eq!(e.0[0].origin, Origin::Override(1));
    }

    #[test]
    fn list_and_auto_values() {
        let cfg = parse_config(
            "strategy.kind = vpt_deep\nstrategy.insert_layer = 1, 3\nstrategy.head_inputs = patch_maxpool,cls\n\
             strategy.top_k = 2\ndata.classes = sphere,cube\ndata.submodes = clean\nhead.hidden_width = 32\n",
        )
        .unwrap();
        assert_eq!(cfg.strategy.insert_layers, Some(vec![1, 3]));
        assert_eq!(cfg.strategy.resolved_head_inputs(), vec![HeadInput::Cls, HeadInput::PatchMaxpool]);
        assert_eq!(cfg.strategy.top_k, Some(2));
        assert_eq!(cfg.data.classes, vec![ShapeKind::Sphere, ShapeKind::Cube]);
        assert_eq!(cfg.head.hidden_width, Some(32));
        let again = parse_config(&cfg.render()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn every_key_renders_and_reparses() {
        let cfg = RunConfig::default();
        for key in KEYS {
            let v = cfg.get(key).unwrap();
            let mut c = RunConfig::default();
            c.set(key, &v).unwrap_or_else(|e| panic!("{key} = {v}: {e}"));
        }
        assert_eq!(cfg.render().lines().filter(|l| l.contains('=')).count(), KEYS.len());
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            any::<u64>(),
            prop::sample::select(vec![StrategyKind::HeadOnly, StrategyKind::VptShallow, StrategyKind::VptDeep, StrategyKind::Idpt]),
            prop::sample::select(vec![GeneratorKind::Mlp1, GeneratorKind::EdgeConv(1), GeneratorKind::EdgeConv(3), GeneratorKind::Transformer1]),
            1usize..6,
            prop::option::of(1usize..4),
            0.0f64..1.0,
            1e-5f64..1e-1,
            0usize..100,
            prop::sample::subsequence(vec!["scale", "translate", "rotate_z", "jitter"], 0..4),
        )
            .prop_map(|(seed, kind, generator, prompts, top_k, mask, lr, epochs, aug)| {
                let mut c = RunConfig {
                    seed,
                    ..RunConfig::default()
                };
                c.strategy.kind = kind;
                c.strategy.generator = generator;
                c.strategy.prompts = prompts;
                c.strategy.top_k = top_k;
                c.pretrain.mask_ratio = mask;
                c.tune.lr = lr;
                c.tune.epochs = epochs;
                c.tune.augment = AugmentSpec::parse(&aug.join(",")).unwrap();
                c.propagate_seed();
                c
            })
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(cfg in arb_config()) {
            let text = cfg.render();
            let parsed = parse_config(&text).unwrap();
            prop_assert_eq!(&parsed, &cfg);
            prop_assert_eq!(parsed.render(), text);
        }

        #[test]
        fn parsing_is_total(text in "\\PC{0,200}") {
            let _ = parse_config(&text);
        }

        #[test]
        fn parsing_key_soup_is_total(lines in prop::collection::vec(("[a-z_]{1,10}\\.[a-z_]{1,12}", "[-a-z0-9_.,]{0,8}"), 0..12)) {
            let text: String = lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
            let _ = parse_config(&text);
        }
    }
}
