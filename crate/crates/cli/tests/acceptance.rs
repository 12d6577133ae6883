//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! ```text
//! cargo test --release -p idpt-cli --test acceptance          # all
//! cargo test --release -p idpt-cli --test acceptance -- 2 8   # a subset
//! ```

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use idpt::backbone::{Backbone, BackboneConfig};
use idpt::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Role};
use idpt::config::{parse_config, RunConfig, KEYS};
use idpt::data::{generate_shape, row_seed, Dataset, DatasetSpec, ShapeKind, Split, SubMode};
use idpt::geometry::{chamfer, farthest_point_sample, knn, PointCloud};
use idpt::model::Model;
use idpt::params::{Group, Linear, ParamStore, Session};
use idpt::prompting::{count_trainable, edgeconv_layer, HeadInput, StrategyConfig, StrategyKind};
use idpt::tensor::gradcheck::{check_buffers, finite_diff_check, random_case, KIND_NAMES};
use idpt::training::{
    chamfer_loss, few_shot_run, mae_loss, pretrain_mae, tune, FewShotConfig, HeadConfig, Labeled, MaeConfig, MaeHead,
    MaeReport, RunMetrics, TuneConfig,
};

// Pinned tolerances and budgets.
const FD_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;
const FD_CASES_PER_OP: usize = 100;
const C1_BUDGET_S: f64 = 120.0;
const C2_BUDGET_S: f64 = 5.0;
const C3_BUDGET_S: f64 = 900.0;
const C3_SEEDS: [u64; 3] = [0, 1, 2];
const C3_EPOCHS: usize = 50;
const C3A_MARGIN: f64 = 2.0;
const C3C_MARGIN: f64 = 4.0;
const SWEEP_EPOCHS: usize = 20;
const MAE_RATIO: f64 = 0.5;
const ORACLE_CASES: usize = 50;
const ORACLE_TOL: f64 = 1e-9;

type Outcome = (bool, String);

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn fd_backbone() -> BackboneConfig {
    BackboneConfig {
        depth: 2,
        width: 8,
        heads: 2,
        ffn_mult: 2,
        patches: 6,
        patch_points: 4,
    }
}

fn tune_cfg(seed: u64, epochs: usize) -> TuneConfig {
    TuneConfig {
        epochs,
        seed,
        eval_every: 0,
        ..TuneConfig::default()
    }
}

fn labeled<'a>(data: &'a Dataset, rows: &[usize]) -> Vec<Labeled<'a>> {
    rows.iter().map(|&r| (&data.clouds[r], data.label(r))).collect()
}

fn backbone_bytes(store: &ParamStore<f32>) -> Vec<u8> {
    Checkpoint::from_store(store, Role::Backbone, "").encode()
}

/// Default dataset and the MAE-pretrained toy backbone, built once.
struct Study {
    data: Dataset,
    backbone: Backbone,
    pretrained: ParamStore<f32>,
    mae: MaeReport,
    mae_seconds: f64,
}

impl Study {
    fn build() -> Study {
        let data = Dataset::generate(&DatasetSpec::default()).expect("dataset");
        let mut store = ParamStore::new();
        let backbone = Backbone::new(BackboneConfig::toy(), &mut store, &mut ChaCha8Rng::seed_from_u64(0)).expect("backbone");
        let train: Vec<&PointCloud> = data.split(Split::Train).iter().map(|&r| &data.clouds[r]).collect();
        let t = Instant::now();
        let mae = pretrain_mae(&backbone, &mut store, &train, &MaeConfig::default()).expect("pretraining");
        let mae_seconds = t.elapsed().as_secs_f64();
        println!(
            "  pretrained toy backbone: {} clouds, held loss {:.5} -> {:.5}, epoch loss {:.5} -> {:.5} ({mae_seconds:.1} s)",
            train.len(),
            mae.initial_loss,
            mae.final_loss,
            mae.epoch_losses[0],
            mae.epoch_losses.last().unwrap(),
        );
        Study {
            data,
            backbone,
            pretrained: store,
            mae,
            mae_seconds,
        }
    }

    /// Attaches `strategy` to a copy of the pretrained backbone.
    fn model(&self, strategy: &StrategyConfig, seed: u64) -> (Model, ParamStore<f32>) {
        let mut store = self.pretrained.clone();
        let head = HeadConfig {
            classes: self.data.num_classes(),
            ..HeadConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(row_seed(seed, 1));
        let model = Model::attach(self.backbone.clone(), strategy, &head, &mut store, &mut rng).expect("model");
        (model, store)
    }

    fn run(&self, strategy: &StrategyConfig, seed: u64, epochs: usize) -> (RunMetrics, ParamStore<f32>) {
        let (model, mut store) = self.model(strategy, seed);
        let train = labeled(&self.data, &self.data.split(Split::Train));
        let test = labeled(&self.data, &self.data.split(Split::Test));
        let m = tune(&model, &mut store, &train, &test, &tune_cfg(seed, epochs)).expect("tuning");
        (m, store)
    }
}

/// Accuracy over the whole test split and its sub-mode subsets.
#[derive(Default, Clone)]
struct Breakdown(BTreeMap<String, f64>);

impl Breakdown {
    fn of(m: &RunMetrics, data: &Dataset) -> Self {
        let rows = data.split(Split::Test);
        let labels: Vec<usize> = rows.iter().map(|&r| data.label(r)).collect();
        let mode = |i: usize| data.rows[rows[i]].submode;
        let mut b = BTreeMap::new();
        b.insert("all".to_string(), m.final_test_accuracy());
        b.insert("corrupted".into(), m.final_test.subset_accuracy(&labels, |i| mode(i).is_corrupted()).unwrap());
        for sm in SubMode::ALL {
            b.insert(sm.to_string(), m.final_test.subset_accuracy(&labels, |i| mode(i) == sm).unwrap());
        }
        Breakdown(b)
    }

    fn mean(runs: &[Breakdown]) -> Self {
        let mut b = BTreeMap::new();
        for k in runs[0].0.keys() {
            b.insert(k.clone(), runs.iter().map(|r| r.0[k]).sum::<f64>() / runs.len() as f64);
        }
        Breakdown(b)
    }

    fn get(&self, k: &str) -> f64 {
        100.0 * self.0[k]
    }

    fn line(&self) -> String {
        ["all", "clean", "corrupted", "crop_missing", "jitter_noise", "outlier_clutter"]
            .iter()
            .map(|k| format!("{k} {:.2}", self.get(k)))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

// 1. Gradient oracle.
fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_op = (0.0f64, "");
    for name in KIND_NAMES {
        for _ in 0..FD_CASES_PER_OP {
            let (kind, inputs) = random_case(name, &mut rng);
            let err = finite_diff_check(&kind, &inputs, FD_STEP).unwrap_or(f64::INFINITY);
            if err > worst_op.0 {
                worst_op = (err, name);
            }
        }
    }

    let cfg = fd_backbone();
    let cloud = generate_shape(ShapeKind::Torus, 32, &mut rng).unwrap();
    let mut worst_e2e = Vec::new();
    for kind in StrategyKind::ALL {
        let mut store = ParamStore::<f64>::new();
        let model = Model::build(cfg, &StrategyConfig::new(kind), &HeadConfig::default(), &mut store, &mut rng).unwrap();
        let ids = store.trainable_ids();
        let eval = |st: &ParamStore<f64>| -> (f64, Vec<Vec<f64>>) {
            let mut s = Session::new(st);
            let logits = model.logits(&mut s, &cloud).unwrap();
            let loss = s.g.cross_entropy(logits, vec![3]).unwrap();
            let v = s.g.value(loss)[0];
            (v, s.gradients(loss).unwrap().into_iter().map(|(_, g)| g).collect())
        };
        let (_, analytic) = eval(&store);
        let mut bufs = store.snapshot(&ids);
        let err = check_buffers(&mut bufs, &analytic, FD_STEP, |b| {
            let mut st = store.clone();
            for (id, v) in ids.iter().zip(b) {
                st.set(*id, v.clone())?;
            }
            Ok(eval(&st).0)
        })
        .unwrap_or(f64::INFINITY);
        worst_e2e.push((kind.to_string(), err));
    }

    let mut store = ParamStore::<f64>::new();
    let bb = Backbone::new(cfg, &mut store, &mut rng).unwrap();
    let head = MaeHead::new(&bb, &mut store, &mut rng);
    store.set_group_trainable(Group::Backbone, true);
    store.set_group_trainable(Group::Pretrain, true);
    let ids = store.trainable_ids();
    let masked = vec![1, 4];
    let eval = |st: &ParamStore<f64>| -> (f64, Vec<Vec<f64>>) {
        let mut s = Session::new(st);
        let l = mae_loss(&bb, &head, &mut s, &cloud, &masked).unwrap();
        let v = s.g.value(l)[0];
        (v, s.gradients(l).unwrap().into_iter().map(|(_, g)| g).collect())
    };
    let (_, analytic) = eval(&store);
    let mut bufs = store.snapshot(&ids);
    let err = check_buffers(&mut bufs, &analytic, FD_STEP, |b| {
        let mut st = store.clone();
        for (id, v) in ids.iter().zip(b) {
            st.set(*id, v.clone())?;
        }
        Ok(eval(&st).0)
    })
    .unwrap_or(f64::INFINITY);
    worst_e2e.push(("mae".into(), err));

    let secs = t.elapsed().as_secs_f64();
    let e2e_max = worst_e2e.iter().map(|e| e.1).fold(0.0, f64::max);
    let pass = worst_op.0 <= FD_TOL && e2e_max <= FD_TOL && secs < C1_BUDGET_S;
    let e2e: Vec<String> = worst_e2e.iter().map(|(k, e)| format!("{k} {e:.1e}")).collect();
    (
        pass,
        format!(
            "{} ops x {FD_CASES_PER_OP} cases, worst {:.1e} ({}); end-to-end [{}]; tol {FD_TOL:.0e}; {secs:.1} s < {C1_BUDGET_S} s",
            KIND_NAMES.len(),
            worst_op.0,
            worst_op.1,
            e2e.join(", ")
        ),
    )
}

// 2. Parameter accounting at reference dimensions.
fn criterion_2() -> Outcome {
    let t = Instant::now();
    let cfg = BackboneConfig::paper();
    let head = HeadConfig::paper();
    let idpt = count_trainable(&StrategyConfig::new(StrategyKind::Idpt), &cfg, &head).unwrap();
    let head_only = count_trainable(&StrategyConfig::new(StrategyKind::HeadOnly), &cfg, &head).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let head_ok = (head_only.head as f64 - 0.27e6).abs() <= 0.1 * 0.27e6;
    let total_ok = (1.4e6..=2.0e6).contains(&(idpt.total_trainable as f64));
    let ratio_ok = (0.06..=0.09).contains(&idpt.ratio);
    let full_ok = (20e6..=24e6).contains(&(idpt.total_all as f64));
    (
        head_ok && total_ok && ratio_ok && full_ok && secs < C2_BUDGET_S,
        format!(
            "head {} (cls+maxpool input; {} with the prompt token too), idpt trainable {} (generator {}), \
             ratio {:.2}%, full model {}; {secs:.2} s",
            head_only.head,
            idpt.head,
            idpt.total_trainable,
            idpt.generator,
            100.0 * idpt.ratio,
            idpt.total_all
        ),
    )
}

/// Per-strategy mean breakdowns from criterion 3, kept for criterion 4.
struct StudyRuns {
    means: BTreeMap<StrategyKind, Breakdown>,
    freeze_failures: Vec<String>,
    seconds: f64,
}

fn run_study(study: &Study) -> StudyRuns {
    let t = Instant::now();
    let pre = backbone_bytes(&study.pretrained);
    let mut means = BTreeMap::new();
    let mut freeze_failures = Vec::new();
    for kind in [StrategyKind::HeadOnly, StrategyKind::VptShallow, StrategyKind::VptDeep, StrategyKind::Idpt] {
        let mut runs = Vec::new();
        for seed in C3_SEEDS {
            let (m, store) = study.run(&StrategyConfig::new(kind), seed, C3_EPOCHS);
            let b = Breakdown::of(&m, &study.data);
            println!("  {kind:<11} seed {seed}: {} ({:.1} s)", b.line(), m.wall_seconds);
            if backbone_bytes(&store) != pre {
                freeze_failures.push(format!("{kind} seed {seed}: backbone bytes changed"));
            }
            let tun = Checkpoint::from_store(&store, Role::Tunables, "");
            if let Some(t) = tun.tensors.iter().find(|t| study.pretrained.id(&t.name).is_some()) {
                freeze_failures.push(format!("{kind} seed {seed}: tunables hold {}", t.name));
            }
            runs.push(b);
        }
        let mean = Breakdown::mean(&runs);
        println!("  {kind:<11} mean  : {}", mean.line());
        means.insert(kind, mean);
    }
    StudyRuns {
        means,
        freeze_failures,
        seconds: t.elapsed().as_secs_f64() + study.mae_seconds,
    }
}

// 3. Distribution-diversity study.
fn criterion_3(runs: &StudyRuns) -> Outcome {
    let m = &runs.means;
    let (idpt, deep, head) = (&m[&StrategyKind::Idpt], &m[&StrategyKind::VptDeep], &m[&StrategyKind::HeadOnly]);
    let gap_a = idpt.get("corrupted") - deep.get("corrupted");
    let a = gap_a >= C3A_MARGIN;
    let b_fail: Vec<String> = [StrategyKind::VptShallow, StrategyKind::VptDeep, StrategyKind::Idpt]
        .iter()
        .filter(|k| m[k].get("clean") < head.get("clean"))
        .map(|k| format!("{k} {:.2} < {:.2}", m[k].get("clean"), head.get("clean")))
        .collect();
    let b = b_fail.is_empty();
    let gap_c = idpt.get("all") - head.get("all");
    let c = gap_c >= C3C_MARGIN;
    let budget = runs.seconds < C3_BUDGET_S;
    if !a {
        println!("  (a) failed; per-sub-mode means for diagnosis:");
        for (k, v) in m {
            println!("    {k:<11} {}", v.line());
        }
    }
    (
        a && b && c && budget,
        format!(
            "(a) idpt - vpt_deep on corrupted {gap_a:+.2} pts (need >= {C3A_MARGIN}) {}; \
             (b) prompt strategies >= head_only on clean {}; \
             (c) idpt - head_only overall {gap_c:+.2} pts (need >= {C3C_MARGIN}) {}; {:.0} s < {C3_BUDGET_S} s",
            if a { "ok" } else { "FAIL" },
            if b { "ok".to_string() } else { format!("FAIL [{}]", b_fail.join("; ")) },
            if c { "ok" } else { "FAIL" },
            runs.seconds
        ),
    )
}

// 4. Freeze integrity.
fn criterion_4(runs: &StudyRuns) -> Outcome {
    let n = 3 * C3_SEEDS.len();
    if runs.freeze_failures.is_empty() {
        (
            true,
            format!("{n} prompt/head runs: backbone checkpoint bytes identical to the pretrained one; tunables hold no backbone tensor"),
        )
    } else {
        (false, runs.freeze_failures.join("; "))
    }
}

// 5. Ablation mechanics.
fn criterion_5(study: &Study) -> Outcome {
    let mut notes = Vec::new();
    let default = StrategyConfig::new(StrategyKind::Idpt);
    let top1 = StrategyConfig {
        top_k: Some(1),
        ..default.clone()
    };
    let (m0, s0) = study.model(&default, 7);
    let (m1, s1) = study.model(&top1, 7);
    let same_params = s0.iter().zip(s1.iter()).all(|((_, a), (_, b))| a.name == b.name && a.value == b.value);
    let test = study.data.split(Split::Test);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut identical = same_params;
    for _ in 0..20 {
        let cloud = &study.data.clouds[test[rng.random_range(0..test.len())]];
        let mut a = Session::new(&s0);
        let la = m0.logits(&mut a, cloud).unwrap();
        let mut b = Session::new(&s1);
        let lb = m1.logits(&mut b, cloud).unwrap();
        let va: Vec<u32> = a.g.value(la).iter().map(|v| v.to_bits()).collect();
        let vb: Vec<u32> = b.g.value(lb).iter().map(|v| v.to_bits()).collect();
        identical &= va == vb;
    }
    notes.push(format!("(i) top-1 logits bitwise equal on 20 samples: {identical}"));

    let mut sweep_ok = true;
    let mut positions = Vec::new();
    for layer in [2, 3, 4] {
        let st = StrategyConfig {
            insert_layers: Some(vec![layer]),
            ..default.clone()
        };
        let (m, _) = study.run(&st, 0, SWEEP_EPOCHS);
        sweep_ok &= m.final_test_accuracy().is_finite();
        positions.push(format!("L{layer} {}", pct(m.final_test_accuracy())));
    }
    notes.push(format!("(ii) insert position, {SWEEP_EPOCHS} epochs: {}", positions.join(", ")));

    let mut heads = Vec::new();
    use HeadInput::{Cls, PatchMaxpool, Prompt};
    for (tag, inputs) in [
        ("a cls", vec![Cls]),
        ("b prompt", vec![Prompt]),
        ("c cls+maxpool", vec![Cls, PatchMaxpool]),
        ("d all", vec![Cls, Prompt, PatchMaxpool]),
    ] {
        let st = StrategyConfig {
            head_inputs: Some(inputs),
            ..default.clone()
        };
        let (m, _) = study.run(&st, 0, SWEEP_EPOCHS);
        sweep_ok &= m.final_test_accuracy().is_finite();
        heads.push(format!("{tag} {}", pct(m.final_test_accuracy())));
    }
    notes.push(format!("(iii) head inputs: {}", heads.join(", ")));
    (identical && sweep_ok, notes.join("; "))
}

/// Brute-force symmetric Chamfer distance.
fn chamfer_oracle(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let d = |p: &[f64; 3], q: &[f64; 3]| (0..3).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>();
    let side = |x: &[[f64; 3]], y: &[[f64; 3]]| {
        let mut total = 0.0;
        for p in x {
            let mut best = f64::INFINITY;
            for q in y {
                best = best.min(d(p, q));
            }
            total += best;
        }
        total / x.len() as f64
    };
    side(a, b) + side(b, a)
}

fn random_points(rng: &mut impl Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()
}

/// Chamfer as graph ops and as a plain function against the oracle.
fn chamfer_checks(rng: &mut impl Rng) -> (f64, bool) {
    let mut worst = 0.0f64;
    let mut invariants = true;
    let store = ParamStore::<f64>::new();
    for _ in 0..ORACLE_CASES {
        let (na, nb) = (rng.random_range(1..12), rng.random_range(1..12));
        let (a, b) = (random_points(rng, na), random_points(rng, nb));
        let want = chamfer_oracle(&a, &b);
        let got = chamfer(&a, &b).unwrap();
        let mut s = Session::new(&store);
        let va = s.input(vec![na, 3], a.iter().flatten().copied().collect()).unwrap();
        let vb = s.input(vec![nb, 3], b.iter().flatten().copied().collect()).unwrap();
        let l = chamfer_loss(&mut s, va, vb).unwrap();
        let graph = s.g.value(l)[0];
        worst = worst.max((got - want).abs()).max((graph - want).abs());
        invariants &= (chamfer(&b, &a).unwrap() - got).abs() <= ORACLE_TOL;
        invariants &= chamfer(&a, &a).unwrap() == 0.0 && got >= 0.0;
        let mut shuffled = a.clone();
        shuffled.reverse();
        invariants &= (chamfer(&shuffled, &b).unwrap() - got).abs() <= ORACLE_TOL;
    }
    (worst, invariants)
}

// 6. Pretraining property.
fn criterion_6(study: &Study) -> Outcome {
    let r = &study.mae;
    // Same fixed masks before the first update and after the last one.
    let ratio = r.final_loss / r.initial_loss;
    let epoch_ratio = r.epoch_losses.last().unwrap() / r.epoch_losses[0];
    let (worst, invariants) = chamfer_checks(&mut ChaCha8Rng::seed_from_u64(6));
    (
        ratio <= MAE_RATIO && worst <= ORACLE_TOL && invariants,
        format!(
            "{} epochs: held-mask loss {:.5} -> {:.5}, ratio {ratio:.3} (need <= {MAE_RATIO}); \
             epoch-mean training loss ratio last/first {epoch_ratio:.3} (reported only); \
             chamfer oracle worst {worst:.1e} on {ORACLE_CASES} cases, invariants {invariants}",
            r.epoch_losses.len(),
            r.initial_loss,
            r.final_loss,
        ),
    )
}

// 7. Few-shot protocol.
fn criterion_7(study: &Study) -> Outcome {
    let fs = FewShotConfig {
        n_way: 5,
        m_shot: 10,
        query_per_class: 10,
        episodes: 5,
        seed: 0,
    };
    let mut lines = Vec::new();
    let mut means = BTreeMap::new();
    for kind in [StrategyKind::HeadOnly, StrategyKind::Idpt] {
        let r = few_shot_run(
            &study.backbone,
            &study.pretrained,
            &StrategyConfig::new(kind),
            &HeadConfig::default(),
            &study.data,
            &fs,
            &tune_cfg(0, C3_EPOCHS),
        )
        .expect("few-shot");
        lines.push(format!("{kind} {}", r.summary()));
        means.insert(kind, r.mean);
    }
    (
        means[&StrategyKind::Idpt] >= means[&StrategyKind::HeadOnly],
        format!("5-way 10-shot, 5 episodes: {}", lines.join(", ")),
    )
}

fn cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_idpt"))
        .current_dir(dir)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

/// Runs the same CLI pipeline in two directories and compares artefacts.
fn cli_determinism() -> (bool, String) {
    let root = tempfile::tempdir().unwrap();
    let cfg = "run.output_dir = out\nrun.data_dir = data\nbackbone.depth = 2\nbackbone.width = 16\n\
               backbone.patches = 8\nbackbone.patch_points = 8\ndata.classes = sphere,cube,torus\n\
               data.samples_per_cell = 4\ndata.points = 64\npretrain.epochs = 2\ntune.epochs = 3\ntune.batch = 8\n";
    let mut ok = true;
    for (name, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let dir = root.path().join(name);
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("run.cfg"), cfg).unwrap();
        for cmd in ["gen-data", "pretrain", "tune"] {
            ok &= cli(&dir, &["--config", "run.cfg", "--threads", "1", "--seed", seed, cmd]);
        }
    }
    let files = [
        "data/manifest.tsv",
        "out/pretrain_metrics.csv",
        "out/backbone.ckpt",
        "out/tune_metrics.csv",
        "out/tune_summary.csv",
        "out/tunables.ckpt",
    ];
    let read = |run: &str, f: &str| std::fs::read(root.path().join(run).join(f)).unwrap_or_default();
    let same = files.iter().all(|f| !read("a", f).is_empty() && read("a", f) == read("b", f));
    let differs = read("a", "out/tunables.ckpt") != read("c", "out/tunables.ckpt");
    (
        ok && same && differs,
        format!("CLI runs ok {ok}, {} artefacts identical {same}, other seed differs {differs}", files.len()),
    )
}

/// Random valid configurations survive render and parse.
fn config_round_trips(rng: &mut impl Rng) -> (bool, usize) {
    let choices: &[(&str, &[&str])] = &[
        ("strategy.kind", &["full_finetune", "head_only", "vpt_shallow", "vpt_deep", "idpt"]),
        ("strategy.generator", &["mlp1", "mlp3", "edgeconv1", "edgeconv2", "edgeconv3", "transformer1"]),
        ("strategy.top_k", &["none", "1", "2", "4"]),
        ("strategy.sharing", &["shared", "independent"]),
        ("strategy.knn_k", &["auto", "4", "8"]),
        ("head.hidden_width", &["auto", "32", "256"]),
        ("head.classes", &["auto", "3", "15"]),
        ("data.submodes", &["all", "clean", "clean,jitter_noise"]),
        ("tune.augment", &["none", "scale", "scale,translate", "rotate_z,jitter", "rotate_so3"]),
        ("eval.split", &["train", "test"]),
        ("export.tap", &["input_n", "output_n"]),
    ];
    let mut ok = true;
    let mut valid = 0;
    for _ in 0..200 {
        let mut lines = Vec::new();
        for (k, vs) in choices {
            if rng.random_bool(0.6) {
                lines.push(format!("{k} = {}", vs[rng.random_range(0..vs.len())]));
            }
        }
        lines.push(format!("run.seed = {}", rng.random::<u64>()));
        lines.push(format!("tune.lr = {}", rng.random_range(1e-5..1e-1)));
        lines.push(format!("pretrain.mask_ratio = {}", rng.random_range(0.0..1.0)));
        lines.push(format!("tune.epochs = {}", rng.random_range(0..200)));
        let Ok(cfg) = parse_config(&lines.join("\n")) else { continue };
        valid += 1;
        let text = cfg.render();
        ok &= parse_config(&text).as_ref() == Ok(&cfg) && parse_config(&text).unwrap().render() == text;
    }
    for _ in 0..200 {
        let n = rng.random_range(0..8);
        let junk: String = (0..n)
            .map(|_| {
                let key = KEYS[rng.random_range(0..KEYS.len())];
                let val: String = (0..rng.random_range(0..6)).map(|_| rng.random_range(b' '..=b'~') as char).collect();
                format!("{key} = {val}\n")
            })
            .collect();
        ok &= std::panic::catch_unwind(|| parse_config(&junk).is_ok() || parse_config(&junk).is_err()).unwrap_or(false);
    }
    ok &= parse_config("").unwrap() == RunConfig::default();
    (ok && valid > 20, valid)
}

fn checkpoint_round_trips(rng: &mut impl Rng) -> bool {
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    for i in 0..10 {
        let kind = StrategyKind::ALL[i % 5];
        let st = StrategyConfig::new(kind);
        let seed = rng.random::<u64>();
        let bits32 = |s: &ParamStore<f32>| s.iter().flat_map(|(_, p)| p.value.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>();
        let bits64 = |s: &ParamStore<f64>| s.iter().flat_map(|(_, p)| p.value.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>();
        let build32 = |seed| {
            let mut s = ParamStore::<f32>::new();
            Model::build(fd_backbone(), &st, &HeadConfig::default(), &mut s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            s
        };
        let build64 = |seed| {
            let mut s = ParamStore::<f64>::new();
            Model::build(fd_backbone(), &st, &HeadConfig::default(), &mut s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            s
        };
        let (src, mut dst) = (build32(seed), build32(seed ^ 1));
        let (src64, mut dst64) = (build64(seed), build64(seed ^ 1));
        for role in [Role::Backbone, Role::Tunables] {
            let p = dir.path().join(format!("{i}_{role}.ckpt"));
            save_checkpoint(&p, role, &src, "").unwrap();
            ok &= load_checkpoint(&p, role, &mut dst).is_ok();
            let p64 = dir.path().join(format!("{i}_{role}_64.ckpt"));
            save_checkpoint(&p64, role, &src64, "").unwrap();
            ok &= load_checkpoint(&p64, role, &mut dst64).is_ok();
            let mut bytes = std::fs::read(&p).unwrap();
            bytes.truncate(bytes.len() - 1);
            std::fs::write(&p, &bytes).unwrap();
            let before = bits32(&dst);
            ok &= load_checkpoint(&p, role, &mut dst).is_err() && bits32(&dst) == before;
        }
        ok &= bits32(&src) == bits32(&dst) && bits64(&src64) == bits64(&dst64);
    }
    ok
}

fn geometry_oracles(rng: &mut impl Rng) -> (bool, String) {
    let mut fps_ok = true;
    for _ in 0..ORACLE_CASES {
        let n = rng.random_range(1..40);
        let pts = random_points(rng, n);
        let m = rng.random_range(1..=n);
        let start = rng.random_range(0..n);
        let d = |a: &[f64; 3], b: &[f64; 3]| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>();
        let mut want = vec![start];
        while want.len() < m {
            let mut best = (f64::NEG_INFINITY, 0);
            for i in 0..n {
                if want.contains(&i) {
                    continue;
                }
                let near = want.iter().map(|&j| d(&pts[i], &pts[j])).fold(f64::INFINITY, f64::min);
                if near > best.0 {
                    best = (near, i);
                }
            }
            want.push(best.1);
        }
        fps_ok &= farthest_point_sample(&pts, m, start).unwrap() == want;
    }

    let mut knn_ok = true;
    for _ in 0..ORACLE_CASES {
        let dim = rng.random_range(1..6);
        let (nq, nr) = (rng.random_range(1..10), rng.random_range(1..20));
        let k = rng.random_range(1..=nr);
        let q: Vec<f64> = (0..nq * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..nr * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut want = Vec::new();
        for qi in 0..nq {
            let mut all: Vec<(f64, usize)> = (0..nr)
                .map(|ri| ((0..dim).map(|j| (q[qi * dim + j] - r[ri * dim + j]).powi(2)).sum(), ri))
                .collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            want.extend(all[..k].iter().map(|x| x.1));
        }
        knn_ok &= knn(&q, &r, dim, k).unwrap() == want;
    }

    let (chamfer_worst, chamfer_inv) = chamfer_checks(rng);

    let mut edge_worst = 0.0f64;
    for _ in 0..ORACLE_CASES {
        let (m, din, dout) = (rng.random_range(2..10), rng.random_range(1..6), rng.random_range(1..6));
        let kk = rng.random_range(1..=m);
        let mut store = ParamStore::<f64>::new();
        let conv = Linear::new(&mut store, rng, "edge", 2 * din, dout, Group::Generator);
        let x: Vec<Vec<f64>> = (0..m).map(|_| (0..din).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let (w, b) = (store.value(conv.w).to_vec(), store.value(conv.b).to_vec());
        let gelu = |v: f64| 0.5 * v * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (v + 0.044715 * v.powi(3))).tanh());
        let mut want = Vec::new();
        for i in 0..m {
            let mut order: Vec<(f64, usize)> =
                (0..m).map(|j| ((0..din).map(|c| (x[i][c] - x[j][c]).powi(2)).sum(), j)).collect();
            order.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for o in 0..dout {
                let mut best = f64::NEG_INFINITY;
                for &(_, j) in &order[..kk] {
                    let edge: Vec<f64> = x[i].iter().copied().chain((0..din).map(|c| x[j][c] - x[i][c])).collect();
                    let v = b[o] + (0..2 * din).map(|c| edge[c] * w[c * dout + o]).sum::<f64>();
                    best = best.max(gelu(v));
                }
                want.push(best);
            }
        }
        let mut s = Session::new(&store);
        let xv = s.input(vec![m, din], x.iter().flatten().copied().collect()).unwrap();
        let y = edgeconv_layer(&mut s, xv, &conv, kk).unwrap();
        for (a, b) in s.g.value(y).iter().zip(&want) {
            edge_worst = edge_worst.max((a - b).abs());
        }
    }
    let pass = fps_ok && knn_ok && chamfer_worst <= ORACLE_TOL && chamfer_inv && edge_worst <= ORACLE_TOL;
    (
        pass,
        format!(
            "oracles x{ORACLE_CASES}: fps {fps_ok}, knn {knn_ok}, chamfer worst {chamfer_worst:.1e}, edgeconv worst {edge_worst:.1e}"
        ),
    )
}

// 8. Determinism and I/O.
fn criterion_8(study: Option<&Study>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (cli_ok, cli_note) = cli_determinism();
    let lib_ok = study.is_none_or(|s| {
        let st = StrategyConfig::new(StrategyKind::Idpt);
        let (a, sa) = s.run(&st, 3, 2);
        let (b, sb) = s.run(&st, 3, 2);
        a == b && Checkpoint::from_store(&sa, Role::Tunables, "").encode() == Checkpoint::from_store(&sb, Role::Tunables, "").encode()
    });
    let (cfg_ok, valid) = config_round_trips(&mut rng);
    let ck_ok = checkpoint_round_trips(&mut rng);
    let (geo_ok, geo_note) = geometry_oracles(&mut rng);
    (
        cli_ok && lib_ok && cfg_ok && ck_ok && geo_ok,
        format!(
            "{cli_note}; in-process rerun identical {lib_ok}; config round trip {cfg_ok} ({valid} valid configs); \
             checkpoint round trip {ck_ok}; {geo_note}"
        ),
    )
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let on = |n: u32| wanted.is_empty() || wanted.contains(&n);
    let study = OnceCell::new();
    let study = || study.get_or_init(Study::build);
    let runs = OnceCell::new();
    let runs = || runs.get_or_init(|| run_study(study()));

    let names = [
        "gradient oracle",
        "parameter accounting",
        "distribution-diversity study",
        "freeze integrity",
        "ablation mechanics",
        "pretraining property",
        "few-shot protocol",
        "determinism and I/O",
    ];
    let mut results = Vec::new();
    for n in 1..=8u32 {
        if !on(n) {
            continue;
        }
        println!("criterion {n}: {}", names[n as usize - 1]);
        let t = Instant::now();
        let (pass, detail) = match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(runs()),
            4 => criterion_4(runs()),
            5 => criterion_5(study()),
            6 => criterion_6(study()),
            7 => criterion_7(study()),
            _ => criterion_8(if wanted.is_empty() || on(3) { Some(study()) } else { None }),
        };
        let line = format!(
            "{} criterion {n} ({}): {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            names[n as usize - 1],
            t.elapsed().as_secs_f64()
        );
        println!("{line}");
        results.push((pass, line));
    }
    println!("\nacceptance summary");
    for (_, line) in &results {
        println!("{line}");
    }
    let failed = results.iter().filter(|r| !r.0).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
