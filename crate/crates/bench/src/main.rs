use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;

use kprior_bench::{emit_plot_data, run_grid, to_csv, ExperimentConfig, Settings};

/// Runs a seeded adaptation grid and writes a CSV table.
///
/// Every flag may also be given in a `key = value` file passed with
/// `--config`; flags on the command line win.
#[derive(Debug, Parser)]
#[command(name = "kprior-bench", version)]
struct Cli {
    /// Settings file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// add-data, remove-data, change-regularizer or change-model-class.
    #[arg(long)]
    task: Option<String>,
    /// batch, replay, kprior or weight-prior; repeatable or comma-separated.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// Memory size as a fraction of the old data; repeatable.
    #[arg(long = "memory-frac", value_delimiter = ',')]
    memory_frac: Vec<String>,
    /// memorable or random.
    #[arg(long)]
    selection: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    /// Regularizer strength of the base model.
    #[arg(long)]
    delta: Option<String>,
    /// Regularizer strength after Change Regularizer.
    #[arg(long = "delta-new")]
    delta_new: Option<String>,
    /// Polynomial degree for a bare `glm` model.
    #[arg(long)]
    degree: Option<String>,
    /// glm[:degree] or mlp:H1xH2[:relu|tanh].
    #[arg(long)]
    model: Option<String>,
    /// Target model class for change-model-class.
    #[arg(long = "model-new")]
    model_new: Option<String>,
    /// Fraction of old rows deleted by remove-data.
    #[arg(long = "remove-frac")]
    remove_frac: Option<String>,
    /// Number of replicates.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long = "master-seed")]
    master_seed: Option<String>,
    /// moons[:n[:noise]], svm:PATH or csv:PATH.
    #[arg(long)]
    data: Option<String>,
    /// Label column for csv data.
    #[arg(long = "label-column")]
    label_column: Option<String>,
    /// Output CSV; standard output when absent.
    #[arg(long = "out-csv")]
    out_csv: Option<String>,
    /// Directory for per-method plot series.
    #[arg(long = "plot-dir")]
    plot_dir: Option<String>,
    /// Record field plotted against memory_frac.
    #[arg(long = "plot-y")]
    plot_y: Option<String>,
    /// Test-accuracy targets for the evals_to columns.
    #[arg(long, value_delimiter = ',')]
    targets: Vec<String>,
    /// Start every method from a seeded random point.
    #[arg(long = "random-init")]
    random_init: bool,
    /// Gradient infinity-norm tolerance.
    #[arg(long)]
    tol: Option<String>,
    #[arg(long = "max-iters")]
    max_iters: Option<String>,
    /// Adds a wall_ms column; the CSV is then no longer reproducible.
    #[arg(long)]
    timing: bool,
    /// Train with seeded minibatches of this size.
    #[arg(long = "batch-size")]
    batch_size: Option<String>,
    /// Minibatch step size (default 0.1).
    #[arg(long = "learning-rate")]
    learning_rate: Option<String>,
    /// Minibatch passes over the data (default 50).
    #[arg(long)]
    epochs: Option<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<String>,
}

impl Cli {
    fn settings(&self) -> anyhow::Result<Settings> {
        let mut s = Settings::new();
        let singles = [
            ("task", &self.task),
            ("selection", &self.selection),
            ("tau", &self.tau),
            ("delta", &self.delta),
            ("delta-new", &self.delta_new),
            ("degree", &self.degree),
            ("model", &self.model),
            ("model-new", &self.model_new),
            ("remove-frac", &self.remove_frac),
            ("seeds", &self.seeds),
            ("master-seed", &self.master_seed),
            ("data", &self.data),
            ("label-column", &self.label_column),
            ("out-csv", &self.out_csv),
            ("plot-dir", &self.plot_dir),
            ("plot-y", &self.plot_y),
            ("tol", &self.tol),
            ("max-iters", &self.max_iters),
            ("threads", &self.threads),
            ("batch-size", &self.batch_size),
            ("learning-rate", &self.learning_rate),
            ("epochs", &self.epochs),
        ];
        for (k, v) in singles {
            if let Some(v) = v {
                s.set(k, vec![v.clone()])?;
            }
        }
        for (k, v) in [("method", &self.method), ("memory-frac", &self.memory_frac), ("targets", &self.targets)] {
            if !v.is_empty() {
                s.set(k, v.clone())?;
            }
        }
        for (k, on) in [("random-init", self.random_init), ("timing", self.timing)] {
            if on {
                s.set(k, vec!["true".into()])?;
            }
        }
        Ok(s)
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let mut settings = match &cli.config {
        Some(p) => Settings::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => Settings::new(),
    };
    settings.overlay(cli.settings()?);
    let cfg = ExperimentConfig::from_settings(&settings)?;
    let records = run_grid(&cfg)?;
    let csv = to_csv(&records, &cfg.targets, cfg.timing)?;
    match &cfg.out_csv {
        Some(p) => std::fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    if let Some(dir) = &cfg.plot_dir {
        let paths = emit_plot_data(&records, "memory_frac", &cfg.plot_y, &["method"], dir)?;
        for p in paths {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}
