//! Training runs, grids, initialization sweeps and the transfer protocol.
//!
//! A run directory holds `config.txt` (a full snapshot that reparses to the
//! same configuration), `metrics.csv`, and one `seed-<s>.ckpt` per seed. A
//! seed that diverges gets a `seed-<s>.FAILED` marker instead of a checkpoint.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{batches, epoch_seed, idx_paths, load_idx, Dataset};
use crate::error::{Error, Result};
use crate::model::{build_mnist_conv, MnistConvSpec, SequentialModel};
use crate::optim::Optimizer;
use crate::tensor::Real;

use super::config::{ExperimentConfig, Precision};
use super::metrics::{MetricsRecord, MetricsWriter};

/// Train and test splits of one dataset.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

impl Splits {
    /// Loads `train-*` and `t10k-*` IDX pairs from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let (ti, tl) = idx_paths(dir, "train");
        let (vi, vl) = idx_paths(dir, "t10k");
        Ok(Splits {
            train: load_idx(&ti, &tl)?,
            test: load_idx(&vi, &vl)?,
        })
    }

    /// Applies the configured subsets.
    pub fn restrict(
        self,
        subset: Option<usize>,
        test_subset: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let train = match subset {
            Some(n) => self.train.subset(n, seed)?,
            None => self.train,
        };
        let test = match test_subset {
            Some(n) => self.test.subset(n, seed)?,
            None => self.test,
        };
        Ok(Splits { train, test })
    }

    fn check_for(&self, spec: &MnistConvSpec) -> Result<()> {
        if self.train.image_hw() != self.test.image_hw() {
            return Err(Error::config(format!(
                "train images are {:?} but test images are {:?}",
                self.train.image_hw(),
                self.test.image_hw()
            )));
        }
        let classes = self.train.classes().max(self.test.classes());
        if classes > spec.classes {
            return Err(Error::config(format!(
                "dataset has {classes} classes, model has {}",
                spec.classes
            )));
        }
        if self.train.is_empty() || self.test.is_empty() {
            return Err(Error::config("train and test splits must be non-empty"));
        }
        Ok(())
    }
}

fn spec_for(cfg: &ExperimentConfig, data: &Splits) -> Result<MnistConvSpec> {
    let mut spec = cfg.model_spec();
    spec.input_hw = data.train.image_hw();
    data.check_for(&spec)?;
    Ok(spec)
}

/// Percentage of argmax-correct predictions.
pub fn evaluate<T: Real>(
    model: &mut SequentialModel<T>,
    data: &Dataset,
    batch_size: usize,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("cannot evaluate on an empty dataset"));
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, y) = data.gather::<T>(chunk)?;
        let pred = model.predict(&x)?;
        correct += pred.iter().zip(&y).filter(|(p, t)| p == t).count();
    }
    Ok(100.0 * correct as f64 / data.len() as f64)
}

/// Builds the model described by `cfg`, loads `checkpoint` into it and
/// evaluates on `data`.
pub fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    data: &Dataset,
) -> Result<f64> {
    fn go<T: Real>(spec: &MnistConvSpec, ckpt: &Path, data: &Dataset, bs: usize) -> Result<f64> {
        let mut model = build_mnist_conv::<T>(spec, 0)?;
        model.load_checkpoint(ckpt)?;
        evaluate(&mut model, data, bs)
    }
    let mut spec = cfg.model_spec();
    spec.input_hw = data.image_hw();
    match cfg.precision {
        Precision::F32 => go::<f32>(&spec, checkpoint, data, cfg.eval_batch_size),
        Precision::F64 => go::<f64>(&spec, checkpoint, data, cfg.eval_batch_size),
    }
}

/// Trains `model` in place for `cfg.epochs` epochs, evaluating after each
/// one. Returns `Some(reason)` if training diverged; the failing epoch has
/// already been passed to `sink` as a failed record.
pub fn train_model<T: Real>(
    model: &mut SequentialModel<T>,
    cfg: &ExperimentConfig,
    data: &Splits,
    seed: u64,
    run_id: &str,
    sink: &mut dyn FnMut(MetricsRecord) -> Result<()>,
) -> Result<Option<String>> {
    let mut opt = Optimizer::<T>::new(cfg.optim_config())?;
    let start = Instant::now();
    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        let mut failure = None;
        for batch in batches(&data.train, cfg.batch_size, epoch_seed(seed, epoch))? {
            let (x, y) = data.train.gather::<T>(&batch)?;
            model.zero_grads();
            let (loss, _) = model.forward_loss(&x, &y)?;
            if !loss.is_finite() {
                failure = Some(format!(
                    "loss became {loss} at epoch {epoch}, step {}",
                    steps + 1
                ));
                break;
            }
            model.backward()?;
            match opt.step(&mut model.params_mut()) {
                Ok(()) => {}
                Err(Error::Training(msg)) => {
                    failure = Some(format!("epoch {epoch}, step {}: {msg}", steps + 1));
                    break;
                }
                Err(e) => return Err(e),
            }
            loss_sum += loss;
            steps += 1;
        }
        model.clear_contexts();
        let wall = cfg.wall_clock.then(|| start.elapsed().as_secs_f64());
        if let Some(reason) = failure {
            log::warn!("{run_id} seed {seed}: diverged ({reason})");
            sink(MetricsRecord {
                run_id: run_id.to_string(),
                seed,
                epoch,
                train_loss: Some(f64::NAN),
                test_acc: None,
                wall_s: wall,
                arelu: model.arelu_params(),
            })?;
            return Ok(Some(reason));
        }
        let acc = evaluate(model, &data.test, cfg.eval_batch_size)?;
        let train_loss = loss_sum / steps.max(1) as f64;
        log::info!("{run_id} seed {seed} epoch {epoch}: loss {train_loss:.4} acc {acc:.2}%");
        sink(MetricsRecord {
            run_id: run_id.to_string(),
            seed,
            epoch,
            train_loss: Some(train_loss),
            test_acc: Some(acc),
            wall_s: cfg.wall_clock.then(|| start.elapsed().as_secs_f64()),
            arelu: model.arelu_params(),
        })?;
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub failure: Option<String>,
}

impl SeedOutcome {
    pub fn final_accuracy(&self) -> Option<f64> {
        if self.failure.is_some() {
            return None;
        }
        self.records.last().and_then(|r| r.test_acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub dir: PathBuf,
    pub seeds: Vec<SeedOutcome>,
}

impl RunSummary {
    pub fn records(&self) -> impl Iterator<Item = &MetricsRecord> {
        self.seeds.iter().flat_map(|s| &s.records)
    }

    pub fn final_accuracies(&self) -> Vec<f64> {
        self.seeds
            .iter()
            .filter_map(SeedOutcome::final_accuracy)
            .collect()
    }

    /// Mean final accuracy over seeds that did not fail.
    pub fn mean_final_accuracy(&self) -> Option<f64> {
        let accs = self.final_accuracies();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }

    pub fn failures(&self) -> usize {
        self.seeds.iter().filter(|s| s.failure.is_some()).count()
    }
}

fn prepare_dir(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("config.txt");
    fs::write(&path, cfg.to_kv_string()).map_err(|e| Error::io(&path, e))
}

fn mark_failed(dir: &Path, seed: u64, reason: &str) -> Result<()> {
    let path = dir.join(format!("seed-{seed}.FAILED"));
    fs::write(&path, format!("{reason}\n")).map_err(|e| Error::io(&path, e))
}

fn run_train_typed<T: Real>(
    cfg: &ExperimentConfig,
    data: &Splits,
    mut extra: Option<&mut MetricsWriter>,
) -> Result<RunSummary> {
    let spec = spec_for(cfg, data)?;
    let dir = cfg.run_dir();
    prepare_dir(&dir, cfg)?;
    let mut writer = MetricsWriter::create(&dir.join("metrics.csv"))?;
    let mut seeds = Vec::new();
    for &seed in &cfg.seeds {
        let mut model = build_mnist_conv::<T>(&spec, seed)?;
        let mut records = Vec::new();
        let failure = train_model(&mut model, cfg, data, seed, &cfg.run_id, &mut |rec| {
            writer.write(&rec)?;
            if let Some(w) = extra.as_deref_mut() {
                w.write(&rec)?;
            }
            records.push(rec);
            Ok(())
        })?;
        match &failure {
            Some(reason) => mark_failed(&dir, seed, reason)?,
            None => model.save_checkpoint(&dir.join(format!("seed-{seed}.ckpt")))?,
        }
        seeds.push(SeedOutcome {
            seed,
            records,
            failure,
        });
    }
    Ok(RunSummary {
        run_id: cfg.run_id.clone(),
        dir,
        seeds,
    })
}

/// Trains with already loaded data (subsets are not applied again).
pub fn run_train_with(
    cfg: &ExperimentConfig,
    data: &Splits,
    extra: Option<&mut MetricsWriter>,
) -> Result<RunSummary> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F32 => run_train_typed::<f32>(cfg, data, extra),
        Precision::F64 => run_train_typed::<f64>(cfg, data, extra),
    }
}

pub fn load_source(cfg: &ExperimentConfig) -> Result<Splits> {
    Splits::load(&cfg.source_dir())?.restrict(cfg.subset, cfg.test_subset, cfg.subset_seed)
}

/// Trains MNIST-Conv once per seed, writing the run directory.
pub fn run_train(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let data = load_source(cfg)?;
    run_train_with(cfg, &data, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSummary {
    pub dir: PathBuf,
    pub cells: Vec<RunSummary>,
    /// Cells that could not run at all, with the error.
    pub errors: Vec<(String, String)>,
}

impl GridSummary {
    pub fn cell(&self, run_id: &str) -> Option<&RunSummary> {
        self.cells.iter().find(|c| c.run_id == run_id)
    }

    pub fn failures(&self) -> usize {
        self.errors.len() + self.cells.iter().map(RunSummary::failures).sum::<usize>()
    }
}

fn lr_tag(lr: f64) -> String {
    format!("{lr:e}")
}

/// Run id of the grid cell for one (activation, optimizer, lr) triple.
pub fn grid_cell_id(cfg: &ExperimentConfig) -> String {
    format!("{}_{}_lr{}", cfg.activation, cfg.optimizer, lr_tag(cfg.lr))
}

fn run_cells(base: &ExperimentConfig, cells: Vec<ExperimentConfig>) -> Result<GridSummary> {
    if cells.is_empty() {
        return Err(Error::config("grid has no cells"));
    }
    base.validate()?;
    let dir = base.run_dir();
    prepare_dir(&dir, base)?;
    let data = load_source(base)?;
    let mut combined = MetricsWriter::create(&dir.join("metrics.csv"))?;
    let mut summary = GridSummary {
        dir: dir.clone(),
        cells: Vec::new(),
        errors: Vec::new(),
    };
    for mut cell in cells {
        cell.out_dir = dir.clone();
        match run_train_with(&cell, &data, Some(&mut combined)) {
            Ok(run) => summary.cells.push(run),
            Err(e) => {
                log::warn!("grid cell {} failed: {e}", cell.run_id);
                summary.errors.push((cell.run_id.clone(), e.to_string()));
            }
        }
    }
    Ok(summary)
}

/// Cross product of `grid_activations × grid_optimizers × grid_lrs`, each
/// list falling back to the base value when unset. Writes a combined
/// long-format `metrics.csv` in `out_dir/run_id` plus one run directory per
/// cell below it.
pub fn run_grid(base: &ExperimentConfig) -> Result<GridSummary> {
    let acts = if base.grid_activations.is_empty() {
        vec![base.activation]
    } else {
        base.grid_activations.clone()
    };
    let opts = if base.grid_optimizers.is_empty() {
        vec![base.optimizer]
    } else {
        base.grid_optimizers.clone()
    };
    let lrs = if base.grid_lrs.is_empty() {
        vec![base.lr]
    } else {
        base.grid_lrs.clone()
    };
    let mut cells = Vec::new();
    for &activation in &acts {
        for &optimizer in &opts {
            for &lr in &lrs {
                let mut c = ExperimentConfig {
                    activation,
                    optimizer,
                    lr,
                    ..base.clone()
                };
                c.run_id = grid_cell_id(&c);
                cells.push(c);
            }
        }
    }
    run_cells(base, cells)
}

/// Run id of the sweep cell for one `(alpha_0, beta_0)` pair.
pub fn sweep_cell_id(alpha: f64, beta: f64) -> String {
    format!("alpha{alpha}_beta{beta}")
}

/// One AReLU run per `(alpha_0, beta_0)` in `sweep_alphas × sweep_betas`.
pub fn run_init_sweep(base: &ExperimentConfig) -> Result<GridSummary> {
    if base.sweep_alphas.is_empty() || base.sweep_betas.is_empty() {
        return Err(Error::config(
            "init sweep needs at least one alpha and one beta",
        ));
    }
    if base
        .sweep_alphas
        .iter()
        .chain(&base.sweep_betas)
        .any(|v| !v.is_finite())
    {
        return Err(Error::config("init sweep values must be finite"));
    }
    let mut cells = Vec::new();
    for &alpha_init in &base.sweep_alphas {
        for &beta_init in &base.sweep_betas {
            let mut c = ExperimentConfig {
                alpha_init,
                beta_init,
                ..base.clone()
            };
            c.run_id = sweep_cell_id(alpha_init, beta_init);
            cells.push(c);
        }
    }
    run_cells(base, cells)
}

pub const ARM_PRETRAIN: &str = "pretrain";
pub const ARM_NO_PRETRAIN: &str = "no-pretrain";
pub const ARM_PRETRAIN_ONLY: &str = "pretrain-only";
pub const ARM_FINETUNE: &str = "finetune";

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSummary {
    pub dir: PathBuf,
    pub run_id: String,
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<(u64, String)>,
}

impl TransferSummary {
    pub fn arm_run_id(run_id: &str, arm: &str) -> String {
        format!("{run_id}.{arm}")
    }

    /// Mean target-test accuracy of `arm` at `epoch` over seeds (epoch 0 for
    /// the pretrain-only arm).
    pub fn arm_accuracy(&self, arm: &str, epoch: usize) -> Option<f64> {
        let id = Self::arm_run_id(&self.run_id, arm);
        let accs: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.run_id == id && r.epoch == epoch)
            .filter_map(|r| r.test_acc)
            .collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }
}

fn run_transfer_typed<T: Real>(
    cfg: &ExperimentConfig,
    src: &Splits,
    tgt: &Splits,
) -> Result<TransferSummary> {
    let spec = spec_for(cfg, src)?;
    let tgt_spec = spec_for(cfg, tgt)?;
    if spec.input_hw != tgt_spec.input_hw {
        return Err(Error::config(format!(
            "source images are {:?} but target images are {:?}",
            spec.input_hw, tgt_spec.input_hw
        )));
    }
    let ft = cfg.finetune_config();
    ft.validate()?;
    let dir = cfg.run_dir();
    prepare_dir(&dir, cfg)?;
    let mut writer = MetricsWriter::create(&dir.join("metrics.csv"))?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let id = |arm| TransferSummary::arm_run_id(&cfg.run_id, arm);
    for &seed in &cfg.seeds {
        let mut sink = |rec: MetricsRecord| -> Result<()> {
            writer.write(&rec)?;
            records.push(rec);
            Ok(())
        };
        let mut model = build_mnist_conv::<T>(&spec, seed)?;
        if let Some(reason) = train_model(&mut model, cfg, src, seed, &id(ARM_PRETRAIN), &mut sink)?
        {
            mark_failed(&dir, seed, &reason)?;
            failures.push((seed, format!("{ARM_PRETRAIN}: {reason}")));
            continue;
        }
        model.save_checkpoint(&dir.join(format!("seed-{seed}-{ARM_PRETRAIN}.ckpt")))?;

        let acc = evaluate(&mut model, &tgt.test, cfg.eval_batch_size)?;
        sink(MetricsRecord {
            run_id: id(ARM_PRETRAIN_ONLY),
            seed,
            epoch: 0,
            train_loss: None,
            test_acc: Some(acc),
            wall_s: None,
            arelu: model.arelu_params(),
        })?;

        for (arm, mut m) in [
            (ARM_FINETUNE, model),
            (ARM_NO_PRETRAIN, build_mnist_conv::<T>(&spec, seed)?),
        ] {
            if let Some(reason) = train_model(&mut m, &ft, tgt, seed, &id(arm), &mut sink)? {
                failures.push((seed, format!("{arm}: {reason}")));
                continue;
            }
            m.save_checkpoint(&dir.join(format!("seed-{seed}-{arm}.ckpt")))?;
        }
    }
    if !failures.is_empty() {
        let text: Vec<String> = failures
            .iter()
            .map(|(s, r)| format!("seed {s}: {r}"))
            .collect();
        let path = dir.join("FAILED");
        fs::write(&path, text.join("\n") + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(TransferSummary {
        dir,
        run_id: cfg.run_id.clone(),
        records,
        failures,
    })
}

/// Transfer with already loaded data.
pub fn run_transfer_with(
    cfg: &ExperimentConfig,
    src: &Splits,
    tgt: &Splits,
) -> Result<TransferSummary> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F32 => run_transfer_typed::<f32>(cfg, src, tgt),
        Precision::F64 => run_transfer_typed::<f64>(cfg, src, tgt),
    }
}

/// The three transfer arms: pretrain on the source dataset, then evaluate on
/// the target test set (a) without target updates, (b) after finetuning, and
/// (c) for a fresh model trained only under the finetune budget.
pub fn run_transfer(cfg: &ExperimentConfig) -> Result<TransferSummary> {
    cfg.validate()?;
    let src = load_source(cfg)?;
    let tgt = Splits::load(&cfg.target_dir())?.restrict(
        cfg.finetune_subset,
        cfg.test_subset,
        cfg.subset_seed,
    )?;
    run_transfer_with(cfg, &src, &tgt)
}
