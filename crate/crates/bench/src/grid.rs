//! Seeded experiment grids.
//!
//! Replicate `s` draws its data with seed `splitmix64(splitmix64(master) + s)`.
//! Cells are numbered `(s·F + k)·M + j` for fraction `k` of `F` and method
//! `j` of `M`; a cell's random initialization uses
//! `splitmix64(master + cell)`. The memory for `(s, k)` is shared by all
//! methods, and the Batch reference is solved once per replicate.

use rayon::prelude::*;

use kprior::adapt::{adapt_kprior, adapt_replay, adapt_weight_prior, distance_to_batch, solve_batch, train, true_objective};
use kprior::memory::{select_memorable, select_random, MemorySet};
use kprior::optimizer::SgdConfig;
use kprior::{AdaptConfig, AdaptOutcome, AnyModel, BaseContext, Init, LabeledData, Method};

use crate::config::{ExperimentConfig, SelectionKind};
use crate::error::{BenchError, Result};
use crate::protocol::{batch_data, build_replicate, load_source, make_task, model_kind, splitmix64, Replicate};
use crate::record::ResultRecord;

pub fn replicate_seed(master: u64, s: usize) -> u64 {
    splitmix64(splitmix64(master).wrapping_add(s as u64))
}

pub fn cell_seed(master: u64, cell: usize) -> u64 {
    splitmix64(master.wrapping_add(cell as u64))
}

/// Memory size for a fraction of `n` old rows: rounded, at least one row.
pub fn memory_size(frac: f64, n: usize) -> usize {
    ((frac * n as f64).round() as usize).clamp(n.min(1), n)
}

/// Runs every cell and returns the records sorted by cell index.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let loaded = load_source(&cfg.data)?;
    let work = || -> Result<Vec<ResultRecord>> {
        let per_rep: Vec<Vec<ResultRecord>> = (0..cfg.seeds)
            .into_par_iter()
            .map(|s| run_replicate(cfg, loaded.as_ref(), s))
            .collect::<Result<_>>()?;
        let mut all: Vec<ResultRecord> = per_rep.into_iter().flatten().collect();
        all.sort_by_key(|r| r.cell);
        Ok(all)
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| BenchError::Config(e.to_string()))?
            .install(work),
        None => work(),
    }
}

fn method_cfg(cfg: &ExperimentConfig, test: &LabeledData, seed: u64) -> AdaptConfig {
    AdaptConfig {
        optimizer: cfg.optimizer,
        sgd: cfg.sgd.map(|c| SgdConfig { seed, ..c }),
        tau: cfg.tau,
        targets: cfg.targets.clone(),
        probe: (!cfg.targets.is_empty()).then(|| test.clone()),
        init: if cfg.random_init { Init::Random(seed) } else { Init::Warm },
        ..AdaptConfig::default()
    }
}

/// Everything one replicate's cells share.
struct Shared<'a> {
    cfg: &'a ExperimentConfig,
    rep: Replicate,
    base: AnyModel,
    task: kprior::AdaptationTask,
    batch: AdaptOutcome,
    batch_data: LabeledData,
    s: usize,
}

fn run_replicate(cfg: &ExperimentConfig, loaded: Option<&LabeledData>, s: usize) -> Result<Vec<ResultRecord>> {
    let seed = replicate_seed(cfg.master_seed, s);
    let rep = build_replicate(cfg, loaded, seed)?;
    let all_labels = rep.old.concat(&rep.new)?.concat(&rep.test)?;
    let kind = model_kind(&cfg.model, &all_labels)?;
    let base = train(&kind, &rep.old, cfg.delta, &method_cfg(cfg, &rep.test, seed)).map(|o| o.model)?;
    let task = make_task(cfg, &rep)?;
    let ctx = BaseContext {
        old_data: &rep.old,
        base: &base,
        delta: cfg.delta,
    };
    let batch = solve_batch(&task, &ctx, &method_cfg(cfg, &rep.test, splitmix64(seed)))?;
    let batch_data = batch_data(cfg, &rep)?;
    let shared = Shared {
        cfg,
        rep,
        base,
        task,
        batch,
        batch_data,
        s,
    };

    let nm = cfg.methods.len();
    let nf = cfg.memory_fracs.len();
    let memories: Vec<MemorySet> = (0..nf)
        .map(|k| {
            let m = memory_size(cfg.memory_fracs[k], shared.rep.old.len());
            match cfg.selection {
                SelectionKind::Memorable => select_memorable(&shared.base, &shared.rep.old, m),
                SelectionKind::Random => {
                    select_random(&shared.base, &shared.rep.old, m, splitmix64(seed.wrapping_add(1 + k as u64)))
                }
            }
        })
        .collect::<kprior::Result<_>>()?;
    (0..nf * nm)
        .into_par_iter()
        .map(|c| {
            let (k, j) = (c / nm, c % nm);
            run_cell(&shared, &memories[k], k, j, (s * nf + k) * nm + j)
        })
        .collect()
}

fn run_cell(sh: &Shared<'_>, memory: &MemorySet, k: usize, j: usize, cell: usize) -> Result<ResultRecord> {
    let cfg = sh.cfg;
    let method = cfg.methods[j];
    let ctx = BaseContext {
        old_data: &sh.rep.old,
        base: &sh.base,
        delta: cfg.delta,
    };
    let mcfg = method_cfg(cfg, &sh.rep.test, cell_seed(cfg.master_seed, cell));
    let out = match method {
        Method::Batch => sh.batch.clone(),
        Method::Replay => adapt_replay(&sh.task, &ctx, memory, &mcfg)?,
        Method::KPrior => adapt_kprior(&sh.task, &ctx, memory, &mcfg)?,
        Method::WeightPrior => {
            let AnyModel::Glm(g) = &sh.base else {
                return Err(BenchError::Config("weight-prior needs a glm model".into()));
            };
            // curvature over the memory rows, matching the K-prior's cost
            let ggn = g.ggn(memory.inputs())?;
            adapt_weight_prior(&sh.task, &ctx, &ggn, &mcfg)?
        }
    };
    let kind_new = sh.batch.model.kind();
    let dist = distance_to_batch(out.weights(), sh.batch.weights(), &sh.rep.test, &kind_new)?;
    let model = out.model.as_predictor();
    Ok(ResultRecord {
        cell,
        task: cfg.task.name().into(),
        method: method.name().into(),
        memory_frac: cfg.memory_fracs[k],
        memory_size: if method == Method::Batch { sh.rep.old.len() } else { memory.len() },
        selection: cfg.selection.name().into(),
        tau: cfg.tau,
        delta: cfg.delta,
        delta_new: cfg.delta_new,
        model: cfg.model.label(),
        data: cfg.data.label(),
        random_init: cfg.random_init,
        seed: sh.s,
        train_acc: model.accuracy(&sh.batch_data.inputs, &sh.batch_data.labels)?,
        test_acc: model.accuracy(&sh.rep.test.inputs, &sh.rep.test.labels)?,
        final_objective: true_objective(&sh.task, &ctx, out.weights())?,
        l2_to_batch: dist.l2,
        linf_to_batch: dist.linf,
        pred_disagreement: dist.pred_disagreement,
        grad_evals: out.grad_evals,
        backprops: out.backprops,
        evals_to_target: out.backprops_to_target.clone(),
        wall_ms: out.wall_time_ms,
        converged: out.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_sizes() {
        assert_eq!(memory_size(0.02, 300), 6);
        assert_eq!(memory_size(0.001, 300), 1);
        assert_eq!(memory_size(1.0, 300), 300);
        assert_eq!(memory_size(0.5, 0), 0);
    }

    #[test]
    fn seeds_differ_between_streams() {
        assert_ne!(replicate_seed(0, 0), cell_seed(0, 0));
        assert_ne!(replicate_seed(0, 1), replicate_seed(0, 0));
        assert_ne!(cell_seed(1, 0), cell_seed(0, 0));
    }
}
