//! Data on disk, pretraining, tuning and checkpoints working together.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use idpt::backbone::{Backbone, BackboneConfig};
use idpt::checkpoint::{load_checkpoint, save_checkpoint, Role};
use idpt::data::{build_dataset, Dataset, DatasetSpec, ShapeKind, Split, SubMode};
use idpt::geometry::{AugmentSpec, PointCloud};
use idpt::model::Model;
use idpt::params::ParamStore;
use idpt::prompting::{StrategyConfig, StrategyKind};
use idpt::training::{evaluate, pretrain_mae, tune, HeadConfig, Labeled, MaeConfig, TuneConfig};

fn small() -> BackboneConfig {
    BackboneConfig {
        depth: 2,
        width: 16,
        heads: 2,
        ffn_mult: 2,
        patches: 8,
        patch_points: 8,
    }
}

fn spec() -> DatasetSpec {
    DatasetSpec {
        classes: vec![ShapeKind::Sphere, ShapeKind::Cube, ShapeKind::Torus],
        samples_per_cell: 4,
        points: 64,
        submodes: vec![SubMode::Clean, SubMode::CropMissing],
        train_fraction: 0.5,
        seed: 11,
    }
}

fn labeled<'a>(data: &'a Dataset, split: Split) -> Vec<Labeled<'a>> {
    data.split(split).into_iter().map(|r| (&data.clouds[r], data.label(r))).collect()
}

#[test]
fn pretrain_tune_save_reload_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    build_dataset(&spec(), dir.path()).unwrap();
    let data = Dataset::load(dir.path()).unwrap();
    let memory = Dataset::generate(&spec()).unwrap();
    assert_eq!(data.rows, memory.rows);
    assert!(data.clouds.iter().zip(&memory.clouds).all(|(a, b)| a.points == b.points));

    let head = HeadConfig {
        classes: data.num_classes(),
        ..HeadConfig::default()
    };
    let mut store = ParamStore::<f32>::new();
    let backbone = Backbone::new(small(), &mut store, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let train_clouds: Vec<&PointCloud> = data.split(Split::Train).into_iter().map(|r| &data.clouds[r]).collect();
    let mae = MaeConfig {
        epochs: 2,
        batch: 4,
        ..MaeConfig::default()
    };
    pretrain_mae(&backbone, &mut store, &train_clouds, &mae).unwrap();
    let bb_path = dir.path().join("backbone.ckpt");
    save_checkpoint(&bb_path, Role::Backbone, &store, "").unwrap();

    let strategy = StrategyConfig::new(StrategyKind::Idpt);
    let model = Model::attach(backbone, &strategy, &head, &mut store, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let (train, test) = (labeled(&data, Split::Train), labeled(&data, Split::Test));
    let cfg = TuneConfig {
        epochs: 3,
        batch: 4,
        eval_every: 0,
        ..TuneConfig::default()
    };
    let metrics = tune(&model, &mut store, &train, &test, &cfg).unwrap();
    let tun_path = dir.path().join("tunables.ckpt");
    save_checkpoint(&tun_path, Role::Tunables, &store, "").unwrap();

    // A fresh model with unrelated weights, restored from the two files.
    let mut fresh = ParamStore::<f32>::new();
    let rebuilt = Model::build(small(), &strategy, &head, &mut fresh, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
    load_checkpoint(&bb_path, Role::Backbone, &mut fresh).unwrap();
    load_checkpoint(&tun_path, Role::Tunables, &mut fresh).unwrap();
    for ((_, a), (_, b)) in store.iter().zip(fresh.iter()) {
        assert_eq!(a.value, b.value, "{}", a.name);
    }
    let report = evaluate(&rebuilt, &fresh, &test, 1, &AugmentSpec::default(), 0).unwrap();
    assert_eq!(report.predictions, metrics.final_test.predictions);
    assert_eq!(report.accuracy, metrics.final_test_accuracy());
}

#[test]
fn tuning_is_reproducible_and_seed_sensitive() {
    let data = Dataset::generate(&spec()).unwrap();
    let (train, test) = (labeled(&data, Split::Train), labeled(&data, Split::Test));
    let head = HeadConfig {
        classes: data.num_classes(),
        ..HeadConfig::default()
    };
    let run = |seed: u64| {
        let mut store = ParamStore::<f32>::new();
        let strategy = StrategyConfig::new(StrategyKind::VptDeep);
        let model = Model::build(small(), &strategy, &head, &mut store, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let cfg = TuneConfig {
            epochs: 2,
            batch: 4,
            seed,
            ..TuneConfig::default()
        };
        let m = tune(&model, &mut store, &train, &test, &cfg).unwrap();
        (m, store)
    };
    let (m1, s1) = run(3);
    let (m2, s2) = run(3);
    let (_, s3) = run(4);
    assert_eq!(m1, m2);
    assert!(s1.iter().zip(s2.iter()).all(|((_, a), (_, b))| a.value == b.value));
    assert!(s1.iter().zip(s3.iter()).any(|((_, a), (_, b))| a.value != b.value));
}
