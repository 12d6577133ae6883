use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use idpt::backbone::Backbone;
use idpt::checkpoint::{load_checkpoint, save_checkpoint, Role};
use idpt::config::RunConfig;
use idpt::data::{build_dataset, row_seed, Dataset, Split, SubMode, MANIFEST_FILE};
use idpt::export::export_embeddings;
use idpt::model::Model;
use idpt::params::ParamStore;
use idpt::prompting::count_trainable;
use idpt::training::{evaluate, few_shot_run, pretrain_mae, tune as tune_run, EvalReport, HeadConfig, Labeled};

use crate::report::{opt_pct, pct, Table};

type Store = ParamStore<f32>;

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("run_config.txt"), cfg.render()).with_context(|| format!("writing into {}", dir.display()))?;
    Ok(dir)
}

/// The dataset in `run.data_dir`, or the configured one generated in memory
/// when that directory has no manifest.
fn dataset(cfg: &RunConfig) -> Result<Dataset> {
    if cfg.data_dir.join(MANIFEST_FILE).exists() {
        Ok(Dataset::load(&cfg.data_dir)?)
    } else {
        eprintln!("note: no dataset in {}, generating it in memory", cfg.data_dir.display());
        Ok(Dataset::generate(&cfg.data)?)
    }
}

fn labeled<'a>(data: &'a Dataset, rows: &[usize]) -> Vec<Labeled<'a>> {
    rows.iter().map(|&r| (&data.clouds[r], data.label(r))).collect()
}

fn head_for(cfg: &RunConfig, data: &Dataset) -> HeadConfig {
    HeadConfig {
        classes: cfg.head_classes.unwrap_or(data.num_classes()),
        ..cfg.head
    }
}

fn default_backbone(cfg: &RunConfig, tuned: bool) -> PathBuf {
    cfg.output_dir.join(if tuned { "tuned_backbone.ckpt" } else { "backbone.ckpt" })
}

/// Fresh backbone, overwritten by `path` when given.
fn backbone(cfg: &RunConfig, path: Option<&Path>) -> Result<(Backbone, Store)> {
    let mut store = Store::new();
    let bb = Backbone::new(cfg.backbone, &mut store, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    if let Some(p) = path {
        if !p.exists() {
            bail!("backbone checkpoint {} not found; run `idpt pretrain` first or pass --backbone", p.display());
        }
        load_checkpoint(p, Role::Backbone, &mut store)?;
    }
    Ok((bb, store))
}

fn attach(cfg: &RunConfig, bb: Backbone, store: &mut Store, head: &HeadConfig) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(row_seed(cfg.seed, 1));
    Ok(Model::attach(bb, &cfg.strategy, head, store, &mut rng)?)
}

fn submode_rows(report: &EvalReport, data: &Dataset, rows: &[usize], table: &mut Table) {
    let labels: Vec<usize> = rows.iter().map(|&r| data.label(r)).collect();
    let n = |keep: &dyn Fn(usize) -> bool| (0..rows.len()).filter(|&i| keep(i)).count().to_string();
    let corrupted = |i: usize| data.rows[rows[i]].submode.is_corrupted();
    table.push(vec!["all".into(), rows.len().to_string(), pct(report.accuracy)]);
    table.push(vec!["corrupted".into(), n(&corrupted), opt_pct(report.subset_accuracy(&labels, corrupted))]);
    for mode in SubMode::ALL {
        let keep = |i: usize| data.rows[rows[i]].submode == mode;
        if let Some(acc) = report.subset_accuracy(&labels, keep) {
            table.push(vec![mode.to_string(), n(&keep), pct(acc)]);
        }
    }
}

pub fn gen_data(cfg: &RunConfig) -> Result<()> {
    let manifest = build_dataset(&cfg.data, &cfg.data_dir)?;
    let dir = out_dir(cfg)?;
    let mut t = Table::new(format!("dataset in {}", cfg.data_dir.display()), &["split", "submode", "samples"]);
    for split in [Split::Train, Split::Test] {
        for mode in &cfg.data.submodes {
            let n = manifest.rows.iter().filter(|r| r.split == split && r.submode == *mode).count();
            t.push(vec![split.to_string(), mode.to_string(), n.to_string()]);
        }
    }
    t.emit(&dir, "gen_data_metrics.csv")
}

pub fn pretrain(cfg: &RunConfig, init: Option<&Path>) -> Result<()> {
    let data = dataset(cfg)?;
    let dir = out_dir(cfg)?;
    let (bb, mut store) = backbone(cfg, init)?;
    let train: Vec<_> = data.split(Split::Train).iter().map(|&r| &data.clouds[r]).collect();
    let report = pretrain_mae(&bb, &mut store, &train, &cfg.pretrain)?;
    let mut t = Table::new("masked reconstruction pretraining", &["epoch", "train_loss", "held_loss"]);
    t.push(vec!["0".into(), "-".into(), format!("{:.6}", report.initial_loss)]);
    let last = report.epoch_losses.len();
    for (e, l) in report.epoch_losses.iter().enumerate() {
        let held = if e + 1 == last { format!("{:.6}", report.final_loss) } else { "-".into() };
        t.push(vec![(e + 1).to_string(), format!("{l:.6}"), held]);
    }
    t.emit(&dir, "pretrain_metrics.csv")?;
    let path = dir.join("backbone.ckpt");
    let bytes = save_checkpoint(&path, Role::Backbone, &store, &cfg.render())?;
    println!("wrote {} ({bytes} bytes)", path.display());
    Ok(())
}

pub fn tune(cfg: &RunConfig, backbone_path: Option<&Path>) -> Result<()> {
    let data = dataset(cfg)?;
    let dir = out_dir(cfg)?;
    let path = backbone_path.map_or_else(|| default_backbone(cfg, false), Path::to_path_buf);
    let (bb, mut store) = backbone(cfg, Some(&path))?;
    let model = attach(cfg, bb, &mut store, &head_for(cfg, &data))?;
    let (train_rows, test_rows) = (data.split(Split::Train), data.split(Split::Test));
    let metrics = tune_run(&model, &mut store, &labeled(&data, &train_rows), &labeled(&data, &test_rows), &cfg.tune)?;

    let mut t = Table::new(
        format!("tuning {} ({} trainable parameters)", cfg.strategy.kind, store.count(|p| p.trainable)),
        &["epoch", "train_loss", "train_acc", "test_acc"],
    );
    t.push(vec!["0".into(), "-".into(), "-".into(), pct(metrics.initial_test_accuracy)]);
    for e in &metrics.epochs {
        t.push(vec![
            e.epoch.to_string(),
            format!("{:.6}", e.train_loss),
            pct(e.train_accuracy),
            opt_pct(e.test_accuracy),
        ]);
    }
    t.emit(&dir, "tune_metrics.csv")?;
    let mut s = Table::new(format!("test accuracy after tuning ({:.1} s)", metrics.wall_seconds), &["subset", "samples", "accuracy"]);
    submode_rows(&metrics.final_test, &data, &test_rows, &mut s);
    s.emit(&dir, "tune_summary.csv")?;

    let text = cfg.render();
    let tpath = dir.join("tunables.ckpt");
    let bytes = save_checkpoint(&tpath, Role::Tunables, &store, &text)?;
    println!("wrote {} ({bytes} bytes)", tpath.display());
    if cfg.strategy.kind.trains_backbone() {
        let bpath = default_backbone(cfg, true);
        let bytes = save_checkpoint(&bpath, Role::Backbone, &store, &text)?;
        println!("wrote {} ({bytes} bytes)", bpath.display());
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig, backbone_path: Option<&Path>, tunables: Option<&Path>) -> Result<()> {
    let data = dataset(cfg)?;
    let dir = out_dir(cfg)?;
    let tuned = cfg.strategy.kind.trains_backbone();
    let bpath = backbone_path.map_or_else(|| default_backbone(cfg, tuned), Path::to_path_buf);
    let tpath = tunables.map_or_else(|| cfg.output_dir.join("tunables.ckpt"), Path::to_path_buf);
    let (bb, mut store) = backbone(cfg, Some(&bpath))?;
    let model = attach(cfg, bb, &mut store, &head_for(cfg, &data))?;
    if !tpath.exists() {
        bail!("tunables checkpoint {} not found; run `idpt tune` first or pass --tunables", tpath.display());
    }
    load_checkpoint(&tpath, Role::Tunables, &mut store)?;
    let rows = data.split(cfg.eval.split);
    let report = evaluate(&model, &store, &labeled(&data, &rows), cfg.eval.votes, &cfg.eval.augment, cfg.seed)?;
    let mut t = Table::new(
        format!("{} split, {} vote(s), augment {}", cfg.eval.split, cfg.eval.votes, cfg.eval.augment.render()),
        &["subset", "samples", "accuracy"],
    );
    submode_rows(&report, &data, &rows, &mut t);
    t.emit(&dir, "eval_metrics.csv")
}

pub fn few_shot(cfg: &RunConfig, backbone_path: Option<&Path>) -> Result<()> {
    let data = dataset(cfg)?;
    let dir = out_dir(cfg)?;
    let path = backbone_path.map_or_else(|| default_backbone(cfg, false), Path::to_path_buf);
    let (bb, store) = backbone(cfg, Some(&path))?;
    let fs = &cfg.fewshot;
    let report = few_shot_run(&bb, &store, &cfg.strategy, &cfg.head, &data, fs, &cfg.tune)?;
    let mut t = Table::new(
        format!("{}-way {}-shot, {} queries per class", fs.n_way, fs.m_shot, fs.query_per_class),
        &["episode", "classes", "accuracy"],
    );
    for (i, (ep, acc)) in report.episodes.iter().zip(&report.accuracies).enumerate() {
        let classes: Vec<String> = ep.classes.iter().map(usize::to_string).collect();
        t.push(vec![(i + 1).to_string(), classes.join(" "), pct(*acc)]);
    }
    t.push(vec!["mean".into(), "-".into(), pct(report.mean)]);
    t.push(vec!["std".into(), "-".into(), pct(report.std)]);
    t.emit(&dir, "fewshot_metrics.csv")?;
    println!("few-shot accuracy {}", report.summary());
    Ok(())
}

pub fn count_params(cfg: &RunConfig) -> Result<()> {
    let b = count_trainable(&cfg.strategy, &cfg.backbone, &cfg.head())?;
    let dir = out_dir(cfg)?;
    let mut t = Table::new(format!("trainable parameters of {}", cfg.strategy.kind), &["component", "parameters"]);
    for (name, n) in [
        ("backbone", b.backbone),
        ("prompts", b.prompts),
        ("generator", b.generator),
        ("head", b.head),
        ("total_trainable", b.total_trainable),
        ("total_all", b.total_all),
    ] {
        t.push(vec![name.into(), n.to_string()]);
    }
    t.push(vec!["ratio".into(), format!("{:.4}", b.ratio)]);
    t.emit(&dir, "count_params.csv")
}

pub fn export(cfg: &RunConfig, backbone_path: Option<&Path>, tunables: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let data = dataset(cfg)?;
    let dir = out_dir(cfg)?;
    let (bb, mut store) = backbone(cfg, backbone_path)?;
    let model = attach(cfg, bb, &mut store, &head_for(cfg, &data))?;
    if let Some(p) = tunables {
        load_checkpoint(p, Role::Tunables, &mut store)?;
    }
    let path = out.map_or_else(|| dir.join(format!("embeddings_{}.csv", cfg.export.tap.name())), Path::to_path_buf);
    let rows = data.split(cfg.export.split);
    let n = export_embeddings(&model, &store, &data, &rows, cfg.export.tap, &path)?;
    println!("wrote {} ({n} rows, {} samples)", path.display(), rows.len());
    Ok(())
}
