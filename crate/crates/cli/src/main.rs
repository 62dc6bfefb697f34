//! Command-line front end: training runs, grids, init sweeps, transfer,
//! checkpoint evaluation, gradient checks and dataset conversion.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arelu_core::data::{convert_to_idx, idx_paths, load_idx};
use arelu_core::experiment::{
    evaluate_checkpoint, run_grid, run_init_sweep, run_train, run_transfer, GridSummary,
    RunSummary, TransferSummary, ARM_FINETUNE, ARM_NO_PRETRAIN, ARM_PRETRAIN_ONLY,
};
use arelu_core::gradcheck::{check_named, default_trials, op_names};
use arelu_core::{Error, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

/// Exit status for a rejected configuration or command line.
const EXIT_CONFIG: u8 = 1;
/// Exit status for a run that errored or diverged.
const EXIT_RUN: u8 = 2;
/// Exit status for a completed run that missed a requested threshold.
const EXIT_THRESHOLD: u8 = 3;

#[derive(Parser)]
#[command(
    name = "arelu",
    version,
    about = "Train and evaluate MNIST-Conv with AReLU and baseline activations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration for every seed.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Exit with status 3 if the mean final test accuracy is below this percentage.
        #[arg(long)]
        min_acc: Option<f64>,
    },
    /// Train every activation x optimizer x learning-rate cell.
    Grid {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated activations (default: the configured one).
        #[arg(long)]
        activations: Option<String>,
        /// Comma-separated optimizers.
        #[arg(long)]
        optimizers: Option<String>,
        /// Comma-separated learning rates.
        #[arg(long)]
        lrs: Option<String>,
    },
    /// Train AReLU from every (alpha, beta) initialization pair.
    InitSweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        alphas: Option<String>,
        #[arg(long)]
        betas: Option<String>,
    },
    /// Pretrain on the source dataset and compare the transfer arms on the target.
    Transfer {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        target_dataset: Option<String>,
        #[arg(long)]
        finetune_lr: Option<f64>,
        #[arg(long)]
        finetune_epochs: Option<usize>,
        /// Target training subset size.
        #[arg(long)]
        finetune_subset: Option<usize>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run configuration; defaults to config.txt next to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding the IDX files (default: <data_dir>/<dataset>).
        #[arg(long)]
        data: Option<PathBuf>,
        /// IDX file prefix: t10k or train.
        #[arg(long, default_value = "t10k")]
        split: String,
        #[arg(long)]
        min_acc: Option<f64>,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        /// Operation to check; repeatable. Defaults to every operation.
        #[arg(long = "op")]
        ops: Vec<String>,
        /// Trials per operation (default: 1000 for arelu, 100 otherwise).
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convert a folder-per-class image tree into an IDX pair.
    Convert {
        /// Directory with one subdirectory per class.
        #[arg(long)]
        src: PathBuf,
        /// Output prefix; writes <out>-images-idx3-ubyte and <out>-labels-idx1-ubyte.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 28)]
        size: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    data_dir: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Train on a seeded random subset of this many samples.
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long)]
    test_subset: Option<usize>,
    /// f32 or f64.
    #[arg(long)]
    precision: Option<String>,
}

impl RunArgs {
    fn config(&self, extra: &[(&str, Option<String>)]) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let named = [
            ("run_id", self.run_id.clone()),
            ("out_dir", self.out_dir.clone()),
            ("data_dir", self.data_dir.clone()),
            ("dataset", self.dataset.clone()),
            ("activation", self.activation.clone()),
            ("optimizer", self.optimizer.clone()),
            ("lr", self.lr.map(|v| v.to_string())),
            ("momentum", self.momentum.map(|v| v.to_string())),
            ("weight_decay", self.weight_decay.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("seeds", self.seeds.clone()),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("subset", self.subset.map(|v| v.to_string())),
            ("test_subset", self.test_subset.map(|v| v.to_string())),
            ("precision", self.precision.clone()),
        ];
        for (key, value) in named.iter().chain(extra) {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        Error::Config(_) => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_RUN),
    }
}

fn threshold(acc: Option<f64>, min: Option<f64>) -> ExitCode {
    match (acc, min) {
        (Some(a), Some(m)) if a < m => {
            eprintln!("accuracy {a:.2}% is below the required {m:.2}%");
            ExitCode::from(EXIT_THRESHOLD)
        }
        (None, Some(_)) => ExitCode::from(EXIT_RUN),
        _ => ExitCode::SUCCESS,
    }
}

fn report_run(s: &RunSummary) {
    for seed in &s.seeds {
        match (&seed.failure, seed.final_accuracy()) {
            (Some(reason), _) => println!("{} seed {}: FAILED ({reason})", s.run_id, seed.seed),
            (None, Some(acc)) => println!("{} seed {}: test_acc {acc:.2}%", s.run_id, seed.seed),
            (None, None) => println!("{} seed {}: no epochs", s.run_id, seed.seed),
        }
    }
    if let Some(mean) = s.mean_final_accuracy() {
        println!("{} mean test_acc {mean:.2}%", s.run_id);
    }
}

fn report_grid(g: &GridSummary) -> ExitCode {
    for cell in &g.cells {
        report_run(cell);
    }
    for (id, err) in &g.errors {
        println!("{id}: ERROR {err}");
    }
    println!("metrics: {}", g.dir.join("metrics.csv").display());
    if g.failures() > 0 || !g.errors.is_empty() {
        ExitCode::from(EXIT_RUN)
    } else {
        ExitCode::SUCCESS
    }
}

fn report_transfer(t: &TransferSummary, epochs: &[usize]) -> ExitCode {
    if let Some(acc) = t.arm_accuracy(ARM_PRETRAIN_ONLY, 0) {
        println!("{ARM_PRETRAIN_ONLY}: {acc:.2}%");
    }
    for &e in epochs {
        let fmt = |arm| {
            t.arm_accuracy(arm, e)
                .map_or("-".to_string(), |a| format!("{a:.2}%"))
        };
        println!(
            "epoch {e}: {ARM_FINETUNE} {} {ARM_NO_PRETRAIN} {}",
            fmt(ARM_FINETUNE),
            fmt(ARM_NO_PRETRAIN)
        );
    }
    for (seed, reason) in &t.failures {
        println!("seed {seed}: FAILED {reason}");
    }
    println!("metrics: {}", t.dir.join("metrics.csv").display());
    if t.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_RUN)
    }
}

fn sibling_config(checkpoint: &Path) -> Result<ExperimentConfig, Error> {
    let path = checkpoint
        .parent()
        .unwrap_or(Path::new("."))
        .join("config.txt");
    if path.exists() {
        ExperimentConfig::from_file(&path)
    } else {
        Ok(ExperimentConfig::default())
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Train { run, min_acc } => {
            let cfg = run.config(&[])?;
            let summary = run_train(&cfg)?;
            report_run(&summary);
            if summary.failures() > 0 {
                return Ok(ExitCode::from(EXIT_RUN));
            }
            Ok(threshold(summary.mean_final_accuracy(), min_acc))
        }
        Command::Grid {
            run,
            activations,
            optimizers,
            lrs,
        } => {
            let cfg = run.config(&[
                ("grid_activations", activations),
                ("grid_optimizers", optimizers),
                ("grid_lrs", lrs),
            ])?;
            Ok(report_grid(&run_grid(&cfg)?))
        }
        Command::InitSweep { run, alphas, betas } => {
            let cfg = run.config(&[("sweep_alphas", alphas), ("sweep_betas", betas)])?;
            Ok(report_grid(&run_init_sweep(&cfg)?))
        }
        Command::Transfer {
            run,
            target_dataset,
            finetune_lr,
            finetune_epochs,
            finetune_subset,
        } => {
            let cfg = run.config(&[
                ("target_dataset", target_dataset),
                ("finetune_lr", finetune_lr.map(|v| v.to_string())),
                ("finetune_epochs", finetune_epochs.map(|v| v.to_string())),
                ("finetune_subset", finetune_subset.map(|v| v.to_string())),
            ])?;
            let summary = run_transfer(&cfg)?;
            Ok(report_transfer(&summary, &cfg.finetune_checkpoints))
        }
        Command::Evaluate {
            checkpoint,
            config,
            data,
            split,
            min_acc,
        } => {
            let cfg = match config {
                Some(path) => ExperimentConfig::from_file(&path)?,
                None => sibling_config(&checkpoint)?,
            };
            let dir = data.unwrap_or_else(|| cfg.source_dir());
            let (images, labels) = idx_paths(&dir, &split);
            let dataset = load_idx(&images, &labels)?;
            let acc = evaluate_checkpoint(&cfg, &checkpoint, &dataset)?;
            println!(
                "{}: {acc:.2}% on {} samples",
                checkpoint.display(),
                dataset.len()
            );
            Ok(threshold(Some(acc), min_acc))
        }
        Command::Gradcheck { ops, trials, seed } => {
            let ops: Vec<String> = if ops.is_empty() {
                op_names().into_iter().map(String::from).collect()
            } else {
                ops
            };
            let mut all = true;
            for op in &ops {
                let report = check_named(op, trials.unwrap_or_else(|| default_trials(op)), seed)?;
                println!("{}", report.summary());
                all &= report.passed();
            }
            Ok(if all {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_THRESHOLD)
            })
        }
        Command::Convert { src, out, size } => {
            let r = convert_to_idx(&src, &out, size)?;
            println!(
                "wrote {} images in {} classes ({} skipped) to {} and {}",
                r.written,
                r.classes.len(),
                r.skipped.len(),
                r.images_path.display(),
                r.labels_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    run(cli.command).unwrap_or_else(|e| fail(&e))
}
