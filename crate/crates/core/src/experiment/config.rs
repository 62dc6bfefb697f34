//! Flat `key = value` experiment configuration.

use std::fmt::{Display, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::activations::{AReLUState, ActivationKind};
use crate::error::{Error, Result};
use crate::layers::Init;
use crate::model::MnistConvSpec;
use crate::optim::{ActivationRule, OptimConfig, OptimizerKind};

/// Environment variable naming the default dataset root.
pub const DATA_DIR_ENV: &str = "ARELU_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "f32" | "32" => Ok(Precision::F32),
            "f64" | "64" => Ok(Precision::F64),
            other => Err(Error::config(format!(
                "unknown precision '{other}' (f32 or f64)"
            ))),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

/// Default dataset root: `$ARELU_DATA_DIR`, else `./data`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub data_dir: PathBuf,
    /// Source dataset directory, relative to `data_dir` unless absolute.
    pub dataset: PathBuf,
    /// Transfer target dataset directory.
    pub target_dataset: PathBuf,
    pub out_dir: PathBuf,

    pub activation: ActivationKind,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub activation_rule: ActivationRule,
    pub decay_activation_params: bool,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub alpha_init: f64,
    pub beta_init: f64,
    pub widths: [usize; 3],
    pub init: Init,
    pub precision: Precision,
    /// Train on the first N samples after a shuffle seeded by `subset_seed`.
    pub subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub subset_seed: u64,
    /// When false the `wall_s` column is left empty so metrics files are
    /// byte-comparable between runs.
    pub wall_clock: bool,

    pub grid_activations: Vec<ActivationKind>,
    pub grid_optimizers: Vec<OptimizerKind>,
    pub grid_lrs: Vec<f64>,

    pub sweep_alphas: Vec<f64>,
    pub sweep_betas: Vec<f64>,

    pub finetune_optimizer: OptimizerKind,
    pub finetune_lr: f64,
    pub finetune_momentum: f64,
    pub finetune_epochs: usize,
    pub finetune_subset: Option<usize>,
    pub finetune_checkpoints: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            run_id: "run".into(),
            data_dir: default_data_dir(),
            dataset: "mnist".into(),
            target_dataset: "fashion-mnist".into(),
            out_dir: "runs".into(),
            activation: ActivationKind::AReLU,
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            momentum: 0.0,
            weight_decay: 0.0,
            activation_rule: ActivationRule::Shared,
            decay_activation_params: false,
            batch_size: 64,
            eval_batch_size: 500,
            epochs: 1,
            seeds: vec![1, 2, 3],
            alpha_init: AReLUState::<f32>::DEFAULT_ALPHA,
            beta_init: AReLUState::<f32>::DEFAULT_BETA,
            widths: [32, 64, 128],
            init: Init::KaimingUniform,
            precision: Precision::F32,
            subset: None,
            test_subset: None,
            subset_seed: 0,
            wall_clock: true,
            grid_activations: Vec::new(),
            grid_optimizers: Vec::new(),
            grid_lrs: Vec::new(),
            sweep_alphas: vec![0.25, 0.75],
            sweep_betas: vec![1.0, 2.0],
            finetune_optimizer: OptimizerKind::Sgd,
            finetune_lr: 1e-5,
            finetune_momentum: 0.0,
            finetune_epochs: 20,
            finetune_subset: None,
            finetune_checkpoints: vec![5, 10, 20],
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("bad value for {key}: '{value}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_opt(key: &str, value: &str) -> Result<Option<usize>> {
    match value.trim() {
        "" | "none" | "all" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::config(format!("bad boolean for {key}: '{value}'"))),
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "all".to_string(), |n| n.to_string())
}

impl ExperimentConfig {
    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "line {}: expected key = value, got '{raw}'",
                    lineno + 1
                ))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key. Unknown keys are configuration errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "run_id" => self.run_id = value.to_string(),
            "data_dir" => self.data_dir = value.into(),
            "dataset" => self.dataset = value.into(),
            "target_dataset" => self.target_dataset = value.into(),
            "out_dir" => self.out_dir = value.into(),
            "activation" => self.activation = parse(key, value)?,
            "optimizer" => self.optimizer = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "activation_rule" => self.activation_rule = parse(key, value)?,
            "decay_activation_params" => self.decay_activation_params = parse_bool(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "eval_batch_size" => self.eval_batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "alpha_init" => self.alpha_init = parse(key, value)?,
            "beta_init" => self.beta_init = parse(key, value)?,
            "widths" => {
                let w: Vec<usize> = parse_list(key, value)?;
                self.widths = w.try_into().map_err(|_| {
                    Error::config(format!("widths needs exactly three values, got '{value}'"))
                })?;
            }
            "init" => self.init = parse(key, value)?,
            "precision" => self.precision = parse(key, value)?,
            "subset" => self.subset = parse_opt(key, value)?,
            "test_subset" => self.test_subset = parse_opt(key, value)?,
            "subset_seed" => self.subset_seed = parse(key, value)?,
            "wall_clock" => self.wall_clock = parse_bool(key, value)?,
            "grid_activations" => self.grid_activations = parse_list(key, value)?,
            "grid_optimizers" => self.grid_optimizers = parse_list(key, value)?,
            "grid_lrs" => self.grid_lrs = parse_list(key, value)?,
            "sweep_alphas" => self.sweep_alphas = parse_list(key, value)?,
            "sweep_betas" => self.sweep_betas = parse_list(key, value)?,
            "finetune_optimizer" => self.finetune_optimizer = parse(key, value)?,
            "finetune_lr" => self.finetune_lr = parse(key, value)?,
            "finetune_momentum" => self.finetune_momentum = parse(key, value)?,
            "finetune_epochs" => self.finetune_epochs = parse(key, value)?,
            "finetune_subset" => self.finetune_subset = parse_opt(key, value)?,
            "finetune_checkpoints" => self.finetune_checkpoints = parse_list(key, value)?,
            other => return Err(Error::config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Every key with its current value; parsing the result reproduces `self`.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("run_id", self.run_id.clone());
        kv("data_dir", self.data_dir.display().to_string());
        kv("dataset", self.dataset.display().to_string());
        kv("target_dataset", self.target_dataset.display().to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("activation", self.activation.to_string());
        kv("optimizer", self.optimizer.to_string());
        kv("lr", self.lr.to_string());
        kv("momentum", self.momentum.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("activation_rule", self.activation_rule.to_string());
        kv(
            "decay_activation_params",
            self.decay_activation_params.to_string(),
        );
        kv("batch_size", self.batch_size.to_string());
        kv("eval_batch_size", self.eval_batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv("seeds", join(&self.seeds));
        kv("alpha_init", self.alpha_init.to_string());
        kv("beta_init", self.beta_init.to_string());
        kv("widths", join(&self.widths));
        kv("init", self.init.name());
        kv("precision", self.precision.to_string());
        kv("subset", opt(self.subset));
        kv("test_subset", opt(self.test_subset));
        kv("subset_seed", self.subset_seed.to_string());
        kv("wall_clock", self.wall_clock.to_string());
        kv("grid_activations", join(&self.grid_activations));
        kv("grid_optimizers", join(&self.grid_optimizers));
        kv("grid_lrs", join(&self.grid_lrs));
        kv("sweep_alphas", join(&self.sweep_alphas));
        kv("sweep_betas", join(&self.sweep_betas));
        kv("finetune_optimizer", self.finetune_optimizer.to_string());
        kv("finetune_lr", self.finetune_lr.to_string());
        kv("finetune_momentum", self.finetune_momentum.to_string());
        kv("finetune_epochs", self.finetune_epochs.to_string());
        kv("finetune_subset", opt(self.finetune_subset));
        kv("finetune_checkpoints", join(&self.finetune_checkpoints));
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if !(self.alpha_init > 0.0 && self.alpha_init < 1.0) {
            return Err(Error::config(format!(
                "alpha_init must lie in (0, 1), got {}",
                self.alpha_init
            )));
        }
        if !self.beta_init.is_finite() {
            return Err(Error::config("beta_init must be finite"));
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::config("batch sizes must be >= 1"));
        }
        if self.widths.contains(&0) {
            return Err(Error::config("channel widths must be >= 1"));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\', ',']) {
            return Err(Error::config(format!(
                "run_id '{}' must be non-empty without / \\ or ,",
                self.run_id
            )));
        }
        if [self.subset, self.test_subset, self.finetune_subset].contains(&Some(0)) {
            return Err(Error::config("subset sizes must be >= 1"));
        }
        self.optim_config().validate()
    }

    pub fn optim_config(&self) -> OptimConfig {
        let mut o = match self.optimizer {
            OptimizerKind::Sgd => OptimConfig::sgd(self.lr, self.momentum),
            OptimizerKind::Adam => OptimConfig::adam(self.lr),
        };
        o.momentum = self.momentum;
        o.weight_decay = self.weight_decay;
        o.decay_activation_params = self.decay_activation_params;
        o.activation_rule = self.activation_rule;
        o
    }

    pub fn model_spec(&self) -> MnistConvSpec {
        MnistConvSpec {
            activation: self.activation,
            widths: self.widths,
            alpha_init: self.alpha_init,
            beta_init: self.beta_init,
            init: self.init,
            ..MnistConvSpec::default()
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        self.data_dir.join(p)
    }

    pub fn source_dir(&self) -> PathBuf {
        self.resolve(&self.dataset)
    }

    pub fn target_dir(&self) -> PathBuf {
        self.resolve(&self.target_dataset)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(&self.run_id)
    }

    /// The configuration the finetune arms train under.
    pub fn finetune_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            optimizer: self.finetune_optimizer,
            lr: self.finetune_lr,
            momentum: self.finetune_momentum,
            epochs: self.finetune_epochs,
            subset: self.finetune_subset,
            dataset: self.target_dataset.clone(),
            ..self.clone()
        }
    }
}
