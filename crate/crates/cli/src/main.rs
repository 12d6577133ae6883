//! `idpt`: generate data, pretrain, tune, evaluate and inspect prompt-tuned
//! point-cloud transformers.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use idpt::config::{parse_config_with, ConfigErrors, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "idpt", version, about = "Prompt tuning laboratory for point-cloud transformers")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Flat `section.key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key after the file is read, e.g. `--set tune.epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Shorthand for `--set run.seed=S`, applied last.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 makes every command bit-reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct Checkpoints {
    /// Backbone checkpoint (default: `<output_dir>/backbone.ckpt`, or
    /// `tuned_backbone.ckpt` when the strategy trains the backbone).
    #[arg(long)]
    backbone: Option<PathBuf>,
    /// Tunables checkpoint (default: `<output_dir>/tunables.ckpt`).
    #[arg(long)]
    tunables: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic dataset to `run.data_dir`.
    GenData,
    /// Masked-autoencoder pretraining; writes `backbone.ckpt`.
    Pretrain {
        /// Start from this backbone instead of a fresh initialisation.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Tune a strategy on the train split; writes `tunables.ckpt`.
    Tune {
        /// Pretrained backbone (default: `<output_dir>/backbone.ckpt`).
        #[arg(long)]
        backbone: Option<PathBuf>,
    },
    /// Classify `eval.split` with a tuned model.
    Eval {
        #[command(flatten)]
        ckpt: Checkpoints,
    },
    /// Episodic n-way m-shot tuning and evaluation.
    FewShot {
        /// Pretrained backbone (default: `<output_dir>/backbone.ckpt`).
        #[arg(long)]
        backbone: Option<PathBuf>,
    },
    /// Trainable parameter counts of the configured strategy.
    CountParams,
    /// Token embeddings at `export.tap` as CSV.
    ExportEmbeddings {
        /// Backbone checkpoint; a fresh initialisation when absent.
        #[arg(long)]
        backbone: Option<PathBuf>,
        /// Tunables checkpoint; a fresh initialisation when absent.
        #[arg(long)]
        tunables: Option<PathBuf>,
        /// Output file (default: `<output_dir>/embeddings_<tap>.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Usage and configuration problems exit with 1, everything else with 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn load_config(g: &Global) -> anyhow::Result<RunConfig> {
    let text = match &g.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Usage(format!("cannot read config {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut sets = g.sets.clone();
    if let Some(s) = g.seed {
        sets.push(format!("run.seed={s}"));
    }
    Ok(parse_config_with(&text, &sets)?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(Usage("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::GenData => commands::gen_data(&cfg),
        Command::Pretrain { init } => commands::pretrain(&cfg, init.as_deref()),
        Command::Tune { backbone } => commands::tune(&cfg, backbone.as_deref()),
        Command::Eval { ckpt } => commands::eval(&cfg, ckpt.backbone.as_deref(), ckpt.tunables.as_deref()),
        Command::FewShot { backbone } => commands::few_shot(&cfg, backbone.as_deref()),
        Command::CountParams => commands::count_params(&cfg),
        Command::ExportEmbeddings { backbone, tunables, out } => {
            commands::export(&cfg, backbone.as_deref(), tunables.as_deref(), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(errs) = e.downcast_ref::<ConfigErrors>() {
                eprintln!("error: invalid configuration");
                for err in &errs.0 {
                    eprintln!("  {err}");
                }
                return ExitCode::from(1);
            }
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<Usage>() { 1 } else { 2 })
        }
    }
}
