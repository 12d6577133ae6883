use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::eval::Labeled;
use super::tune::{tune, RunMetrics, TuneConfig};
use super::HeadConfig;
use crate::backbone::Backbone;
use crate::data::{few_shot_split, row_seed, Dataset, Episode};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::ParamStore;
use crate::prompting::StrategyConfig;
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FewShotConfig {
    pub n_way: usize,
    pub m_shot: usize,
    pub query_per_class: usize,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        Self {
            n_way: 5,
            m_shot: 10,
            query_per_class: 10,
            episodes: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FewShotReport {
    pub episodes: Vec<Episode>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation across episodes; 0 for a single episode.
    pub std: f64,
}

impl FewShotReport {
    fn new(episodes: Vec<Episode>, accuracies: Vec<f64>) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let std = if accuracies.len() > 1 {
            (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            episodes,
            accuracies,
            mean,
            std,
        }
    }

    /// `mean ± std` in percent with one decimal, e.g. `91.4 ± 2.3`.
    pub fn summary(&self) -> String {
        format!("{:.1} ± {:.1}", 100.0 * self.mean, 100.0 * self.std)
    }
}

/// Episodes of n-way m-shot tuning. Each episode attaches a fresh prompt
/// module and head to a copy of `backbone_store`, tunes on the supports and
/// scores the queries.
pub fn few_shot_run<T: Scalar>(
    backbone: &Backbone,
    backbone_store: &ParamStore<T>,
    strategy: &StrategyConfig,
    head: &HeadConfig,
    data: &Dataset,
    cfg: &FewShotConfig,
    tune_cfg: &TuneConfig,
) -> Result<FewShotReport> {
    if cfg.episodes == 0 {
        return Err(Error::Config("few-shot needs at least one episode".into()));
    }
    let manifest = data.manifest();
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut accs = Vec::with_capacity(cfg.episodes);
    for e in 0..cfg.episodes {
        let ep_seed = row_seed(cfg.seed, e);
        let ep = few_shot_split(&manifest, cfg.n_way, cfg.m_shot, cfg.query_per_class, ep_seed)?;
        let labeled = |rows: &[usize]| -> Vec<Labeled<'_>> {
            rows.iter()
                .map(|&r| (&data.clouds[r], ep.local_label(data.label(r)).expect("episode class")))
                .collect()
        };
        let (support, query) = (labeled(&ep.support), labeled(&ep.query));
        let mut store = backbone_store.clone();
        let head_cfg = HeadConfig {
            classes: cfg.n_way,
            ..*head
        };
        let mut rng = ChaCha8Rng::seed_from_u64(ep_seed);
        let model = Model::attach(backbone.clone(), strategy, &head_cfg, &mut store, &mut rng)?;
        let tc = TuneConfig {
            seed: ep_seed,
            eval_every: 0,
            ..tune_cfg.clone()
        };
        let metrics: RunMetrics = tune(&model, &mut store, &support, &query, &tc)?;
        accs.push(metrics.final_test_accuracy());
        episodes.push(ep);
    }
    Ok(FewShotReport::new(episodes, accs))
}
