//! Experiment settings, read from `key = value` files and overridden by
//! command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kprior::mlp::Activation;
use kprior::optimizer::SgdConfig;
use kprior::{Method, OptimizerConfig};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    AddData,
    RemoveData,
    ChangeRegularizer,
    ChangeModelClass,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::AddData => "add-data",
            TaskKind::RemoveData => "remove-data",
            TaskKind::ChangeRegularizer => "change-regularizer",
            TaskKind::ChangeModelClass => "change-model-class",
        }
    }
}

impl FromStr for TaskKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add-data" | "add" => Ok(TaskKind::AddData),
            "remove-data" | "remove" => Ok(TaskKind::RemoveData),
            "change-regularizer" | "change-reg" => Ok(TaskKind::ChangeRegularizer),
            "change-model-class" | "change-model" => Ok(TaskKind::ChangeModelClass),
            other => Err(BenchError::Config(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionKind {
    Memorable,
    Random,
}

impl SelectionKind {
    pub fn name(self) -> &'static str {
        match self {
            SelectionKind::Memorable => "memorable",
            SelectionKind::Random => "random",
        }
    }
}

impl FromStr for SelectionKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "memorable" => Ok(SelectionKind::Memorable),
            "random" => Ok(SelectionKind::Random),
            other => Err(BenchError::Config(format!("unknown selection '{other}'"))),
        }
    }
}

/// `glm[:degree]` or `mlp:H1xH2[:relu|tanh]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    /// Logistic regression on per-coordinate polynomial features.
    Glm { degree: usize },
    Mlp { hidden: Vec<usize>, activation: Activation },
}

impl ModelSpec {
    pub fn label(&self) -> String {
        match self {
            ModelSpec::Glm { degree } => format!("glm:{degree}"),
            ModelSpec::Mlp { hidden, activation } => {
                let h: Vec<String> = hidden.iter().map(usize::to_string).collect();
                let act = match activation {
                    Activation::Relu => "relu",
                    Activation::Tanh => "tanh",
                };
                format!("mlp:{}:{act}", h.join("x"))
            }
        }
    }

    pub fn is_glm(&self) -> bool {
        matches!(self, ModelSpec::Glm { .. })
    }

    /// Parses the model syntax, taking the degree from `default_degree` when
    /// a bare `glm` is given.
    pub fn parse(s: &str, default_degree: usize) -> Result<Self> {
        let bad = || BenchError::Config(format!("cannot parse model '{s}'"));
        let mut parts = s.split(':');
        match parts.next() {
            Some("glm") => {
                let degree = match parts.next() {
                    Some(d) => d.parse().map_err(|_| bad())?,
                    None => default_degree,
                };
                if parts.next().is_some() || degree == 0 {
                    return Err(bad());
                }
                Ok(ModelSpec::Glm { degree })
            }
            Some("mlp") => {
                let hidden = parts
                    .next()
                    .ok_or_else(bad)?
                    .split('x')
                    .map(|h| h.parse::<usize>().ok().filter(|&v| v > 0))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(bad)?;
                let activation = match parts.next() {
                    None | Some("tanh") => Activation::Tanh,
                    Some("relu") => Activation::Relu,
                    Some(_) => return Err(bad()),
                };
                if parts.next().is_some() {
                    return Err(bad());
                }
                Ok(ModelSpec::Mlp { hidden, activation })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Two-moons draw with `n` points split into five x-ordered blocks.
    Moons { n: usize, noise: f64 },
    /// Sparse `label idx:val` file.
    Sparse(PathBuf),
    /// Dense CSV with a named label column.
    Csv { path: PathBuf, label_column: String },
}

impl DataSource {
    /// `moons[:n[:noise]]`, `svm:PATH` or `csv:PATH`.
    pub fn parse(s: &str, label_column: &str) -> Result<Self> {
        let bad = || BenchError::Config(format!("cannot parse data source '{s}'"));
        if let Some(path) = s.strip_prefix("svm:") {
            return Ok(DataSource::Sparse(PathBuf::from(path)));
        }
        if let Some(path) = s.strip_prefix("csv:") {
            return Ok(DataSource::Csv {
                path: PathBuf::from(path),
                label_column: label_column.to_string(),
            });
        }
        let mut parts = s.split(':');
        if parts.next() != Some("moons") {
            return Err(bad());
        }
        let n = parts.next().map(|v| v.parse().map_err(|_| bad())).transpose()?.unwrap_or(500);
        let noise = parts.next().map(|v| v.parse().map_err(|_| bad())).transpose()?.unwrap_or(0.1);
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(DataSource::Moons { n, noise })
    }

    pub fn label(&self) -> String {
        match self {
            DataSource::Moons { n, noise } => format!("moons:{n}:{noise}"),
            DataSource::Sparse(p) => format!("svm:{}", p.display()),
            DataSource::Csv { path, .. } => format!("csv:{}", path.display()),
        }
    }
}

/// One experiment grid: a task crossed with methods, memory fractions and
/// seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub methods: Vec<Method>,
    pub memory_fracs: Vec<f64>,
    pub selection: SelectionKind,
    pub tau: f64,
    pub delta: f64,
    pub delta_new: f64,
    pub model: ModelSpec,
    /// Target class for Change Model Class.
    pub model_new: Option<ModelSpec>,
    /// Fraction of old rows deleted by Remove Data.
    pub remove_frac: f64,
    pub seeds: usize,
    pub master_seed: u64,
    pub data: DataSource,
    pub targets: Vec<f64>,
    pub random_init: bool,
    pub optimizer: OptimizerConfig,
    /// Minibatch training instead of quasi-Newton; the seed is set per run.
    pub sgd: Option<SgdConfig>,
    pub out_csv: Option<PathBuf>,
    pub plot_dir: Option<PathBuf>,
    pub plot_y: String,
    /// Adds the non-deterministic `wall_ms` column.
    pub timing: bool,
    pub threads: Option<usize>,
}

pub const DEFAULT_FRACS: [f64; 6] = [0.02, 0.05, 0.10, 0.25, 0.50, 1.0];
pub const KEYS: [&str; 23] = [
    "task",
    "method",
    "memory-frac",
    "selection",
    "tau",
    "delta",
    "delta-new",
    "degree",
    "model",
    "model-new",
    "remove-frac",
    "seeds",
    "master-seed",
    "data",
    "label-column",
    "out-csv",
    "plot-dir",
    "plot-y",
    "targets",
    "random-init",
    "tol",
    "max-iters",
    "timing",
];
const EXTRA_KEYS: [&str; 4] = ["threads", "batch-size", "learning-rate", "epochs"];
/// Keys whose values accumulate into a list.
const LIST_KEYS: [&str; 3] = ["method", "memory-frac", "targets"];

/// Raw settings: each key maps to the values given for it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, Vec<String>>,
}

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines; `#` starts a comment. Repeating a list key
    /// appends, repeating any other key is an error.
    pub fn from_file_contents(text: &str) -> Result<Self> {
        let mut s = Settings::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| BenchError::Config(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim().trim_start_matches("--");
            check_key(k)?;
            let entry = s.values.entry(k.to_string()).or_default();
            if !entry.is_empty() && !LIST_KEYS.contains(&k) {
                return Err(BenchError::Config(format!("line {}: '{k}' given twice", i + 1)));
            }
            entry.extend(split_list(k, v.trim()));
        }
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(path.display().to_string(), e))?;
        Self::from_file_contents(&text)
    }

    /// Replaces every value for `key`; later sources override earlier ones.
    pub fn set(&mut self, key: &str, values: Vec<String>) -> Result<()> {
        check_key(key)?;
        let v = values.iter().flat_map(|v| split_list(key, v)).collect();
        self.values.insert(key.to_string(), v);
        Ok(())
    }

    /// Applies every key of `other` over `self`.
    pub fn overlay(&mut self, other: Settings) {
        for (k, v) in other.values {
            self.values.insert(k, v);
        }
    }

    fn one(&self, key: &str) -> Result<Option<&str>> {
        match self.values.get(key).map(Vec::as_slice) {
            None | Some([]) => Ok(None),
            Some([v]) => Ok(Some(v.as_str())),
            Some(_) => Err(BenchError::Config(format!("'{key}' takes a single value"))),
        }
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.one(key)?
            .map(|v| v.parse().map_err(|_| BenchError::Config(format!("bad value '{v}' for '{key}'"))))
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.values
            .get(key)
            .map(|vs| {
                vs.iter()
                    .map(|v| v.parse().map_err(|_| BenchError::Config(format!("bad value '{v}' for '{key}'"))))
                    .collect()
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool> {
        match self.one(key)? {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(v) => Err(BenchError::Config(format!("'{key}' expects true or false, got '{v}'"))),
        }
    }
}

fn check_key(k: &str) -> Result<()> {
    if KEYS.contains(&k) || EXTRA_KEYS.contains(&k) {
        Ok(())
    } else {
        Err(BenchError::Config(format!("unknown setting '{k}'")))
    }
}

fn split_list(key: &str, v: &str) -> Vec<String> {
    if LIST_KEYS.contains(&key) {
        v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    } else {
        vec![v.to_string()]
    }
}

impl ExperimentConfig {
    /// Builds and validates a configuration; unset keys take defaults.
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let task: TaskKind = s.parsed("task")?.unwrap_or(TaskKind::AddData);
        let methods = match s.values.get("method") {
            Some(vs) => vs
                .iter()
                .map(|v| v.parse::<Method>().map_err(|e| BenchError::Config(e.to_string())))
                .collect::<Result<Vec<_>>>()?,
            None => vec![Method::Batch, Method::Replay, Method::KPrior],
        };
        let degree: usize = s.parsed("degree")?.unwrap_or(3);
        let model = ModelSpec::parse(s.one("model")?.unwrap_or("glm"), degree)?;
        let model_new = s.one("model-new")?.map(|m| ModelSpec::parse(m, degree)).transpose()?;
        let model_new = match (task, model_new, &model) {
            (TaskKind::ChangeModelClass, None, ModelSpec::Glm { degree }) if *degree > 1 => Some(ModelSpec::Glm { degree: degree - 1 }),
            (_, m, _) => m,
        };
        // regularizer pairs used for the change-regularizer experiments
        let (delta_default, delta_new_default) = match (task, model.is_glm()) {
            (TaskKind::ChangeRegularizer, true) => (50.0, 5.0),
            (TaskKind::ChangeRegularizer, false) => (5.0, 10.0),
            _ => (5.0, f64::NAN),
        };
        let delta: f64 = s.parsed("delta")?.unwrap_or(delta_default);
        let delta_new = match s.parsed::<f64>("delta-new")? {
            Some(d) => d,
            None if task == TaskKind::ChangeRegularizer && s.one("delta")?.is_none() => delta_new_default,
            None if task == TaskKind::ChangeRegularizer => {
                return Err(BenchError::Config("change-regularizer needs delta-new when delta is set".into()))
            }
            None => delta,
        };
        let label_column = s.one("label-column")?.unwrap_or("label").to_string();
        let data = DataSource::parse(s.one("data")?.unwrap_or("moons"), &label_column)?;
        let mut optimizer = OptimizerConfig::default();
        if let Some(t) = s.parsed("tol")? {
            optimizer.grad_tol = t;
        }
        if let Some(m) = s.parsed("max-iters")? {
            optimizer.max_iters = m;
        }
        let sgd = match s.parsed::<usize>("batch-size")? {
            Some(batch_size) => Some(SgdConfig {
                batch_size,
                learning_rate: s.parsed("learning-rate")?.unwrap_or(0.1),
                epochs: s.parsed("epochs")?.unwrap_or(50),
                seed: 0,
            }),
            None if s.one("learning-rate")?.is_some() || s.one("epochs")?.is_some() => {
                return Err(BenchError::Config("learning-rate and epochs need batch-size".into()))
            }
            None => None,
        };
        let cfg = ExperimentConfig {
            task,
            methods,
            memory_fracs: s.list("memory-frac")?.unwrap_or_else(|| DEFAULT_FRACS.to_vec()),
            selection: s.parsed("selection")?.unwrap_or(SelectionKind::Memorable),
            tau: s.parsed("tau")?.unwrap_or(1.0),
            delta,
            delta_new,
            model,
            model_new,
            remove_frac: s.parsed("remove-frac")?.unwrap_or(0.1),
            seeds: s.parsed("seeds")?.unwrap_or(5),
            master_seed: s.parsed("master-seed")?.unwrap_or(0),
            data,
            targets: s.list("targets")?.unwrap_or_default(),
            random_init: s.flag("random-init")?,
            optimizer,
            sgd,
            out_csv: s.one("out-csv")?.map(PathBuf::from),
            plot_dir: s.one("plot-dir")?.map(PathBuf::from),
            plot_y: s.one("plot-y")?.unwrap_or("test_acc").to_string(),
            timing: s.flag("timing")?,
            threads: s.parsed("threads")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Rejects combinations that cannot run, before any work starts.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(BenchError::Config(m));
        if self.methods.is_empty() {
            return err("no methods selected".into());
        }
        if self.methods.contains(&Method::WeightPrior) {
            if self.task != TaskKind::AddData {
                return err("weight-prior only supports the add-data task".into());
            }
            if !self.model.is_glm() {
                return err("weight-prior needs a glm model".into());
            }
        }
        if self.memory_fracs.is_empty() || self.memory_fracs.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return err("memory fractions must lie in (0, 1]".into());
        }
        if self.targets.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return err("accuracy targets must lie in (0, 1]".into());
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return err(format!("tau must be nonnegative, got {}", self.tau));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) || !(self.delta_new > 0.0 && self.delta_new.is_finite()) {
            return err("regularizer strengths must be positive".into());
        }
        if self.task == TaskKind::ChangeRegularizer && self.delta_new == self.delta {
            return err("change-regularizer needs delta-new different from delta".into());
        }
        if self.task == TaskKind::RemoveData && !(self.remove_frac > 0.0 && self.remove_frac < 1.0) {
            return err("remove-frac must lie in (0, 1)".into());
        }
        if self.task == TaskKind::ChangeModelClass {
            match &self.model_new {
                None => return err("change-model-class needs model-new".into()),
                Some(m) if *m == self.model => return err("model-new equals model".into()),
                Some(_) => {}
            }
        }
        if self.seeds == 0 {
            return err("seeds must be at least 1".into());
        }
        if let DataSource::Moons { n, noise } = self.data {
            if n < 10 || !n.is_multiple_of(10) || noise.is_nan() || noise < 0.0 {
                return err("moons needs n a positive multiple of 10 and noise ≥ 0".into());
            }
        }
        if self.threads == Some(0) {
            return err("threads must be at least 1".into());
        }
        if let Some(sgd) = &self.sgd {
            sgd.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        }
        self.optimizer.validate().map_err(|e| BenchError::Config(e.to_string()))
    }
}
