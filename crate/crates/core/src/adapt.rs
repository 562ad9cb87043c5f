//! Adaptation tasks solved by Batch retraining, Replay, K-priors and
//! quadratic weight-priors.

use std::ops::ControlFlow;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledData;
use crate::error::{check_dim, Error, Result};
use crate::features::Nesting;
use crate::glm::{GlmLoss, GlmModel};
use crate::kprior::{KPrior, KPriorSpec, WeightDivergence};
use crate::memory::MemorySet;
use crate::mlp::{MlpLoss, MlpParams};
use crate::model::{AnyModel, ModelKind, Predictor};
use crate::objective::{FiniteSum, QuadraticForm, QuadraticWeight, SumObjective};
use crate::optimizer::{minimize_observed, minimize_sgd, OptimizerConfig, SgdConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum AdaptationTask {
    AddData(LabeledData),
    /// Row indices into the old data.
    RemoveData(Vec<usize>),
    ChangeRegularizer(f64),
    ChangeModelClass(ModelKind),
    /// Any mix of the above, applied together.
    Combined {
        add: Option<LabeledData>,
        remove: Vec<usize>,
        delta_new: Option<f64>,
        model: Option<ModelKind>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Batch,
    Replay,
    KPrior,
    WeightPrior,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Batch => "batch",
            Method::Replay => "replay",
            Method::KPrior => "kprior",
            Method::WeightPrior => "weight-prior",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(Method::Batch),
            "replay" => Ok(Method::Replay),
            "kprior" | "k-prior" => Ok(Method::KPrior),
            "weight-prior" | "weightprior" => Ok(Method::WeightPrior),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// Starting point of an adaptation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// `w*` (or `A·w*`) for priors; zeros or a fixed-seed network for Batch.
    Warm,
    Random(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    pub optimizer: OptimizerConfig,
    /// Replaces the quasi-Newton solver when set.
    pub sgd: Option<SgdConfig>,
    pub init: Init,
    /// A run whose objective drops below this is stopped and flagged.
    pub objective_floor: f64,
    /// Weight on the K-prior's weight-space term.
    pub tau: f64,
    /// Accuracy thresholds tracked on `probe`.
    pub targets: Vec<f64>,
    pub probe: Option<LabeledData>,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            sgd: None,
            init: Init::Warm,
            objective_floor: -1e6,
            tau: 1.0,
            targets: Vec::new(),
            probe: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOutcome {
    pub model: AnyModel,
    pub grad_evals: usize,
    /// Oracle calls times the rows each call touches.
    pub backprops: usize,
    pub wall_time_ms: f64,
    pub converged: bool,
    /// The objective fell below the floor.
    pub diverged: bool,
    pub method: Method,
    pub memory_fraction: f64,
    /// Value of the method's own objective at the returned weights.
    pub objective: f64,
    /// Per target: backprops at the first iterate reaching it.
    pub backprops_to_target: Vec<(f64, Option<usize>)>,
}

impl AdaptOutcome {
    pub fn weights(&self) -> &DVector<f64> {
        self.model.weights()
    }
}

/// The trained base model and what it was trained on.
#[derive(Debug, Clone, Copy)]
pub struct BaseContext<'a> {
    pub old_data: &'a LabeledData,
    pub base: &'a AnyModel,
    /// L2 strength the base was trained with.
    pub delta: f64,
}

/// A task flattened into its four ingredients.
#[derive(Debug, Clone)]
struct Plan {
    added: Option<LabeledData>,
    removed: Vec<usize>,
    delta_new: f64,
    kind_new: ModelKind,
}

impl Plan {
    fn build(task: &AdaptationTask, ctx: &BaseContext<'_>) -> Result<Self> {
        let (add, remove, delta_new, model) = match task {
            AdaptationTask::AddData(d) => (Some(d.clone()), Vec::new(), None, None),
            AdaptationTask::RemoveData(r) => (None, r.clone(), None, None),
            AdaptationTask::ChangeRegularizer(d) => (None, Vec::new(), Some(*d), None),
            AdaptationTask::ChangeModelClass(k) => (None, Vec::new(), None, Some(k.clone())),
            AdaptationTask::Combined {
                add,
                remove,
                delta_new,
                model,
            } => (add.clone(), remove.clone(), *delta_new, model.clone()),
        };
        let mut sorted = remove.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != remove.len() {
            return Err(Error::InvalidArgument("removed rows must be unique".into()));
        }
        if let Some(&bad) = sorted.iter().find(|&&i| i >= ctx.old_data.len()) {
            return Err(Error::InvalidArgument(format!("removed row {bad} out of range")));
        }
        let kind_new = model.unwrap_or_else(|| ctx.base.kind());
        if let Some(d) = &add {
            check_dim("added data", kind_new.input_dim(), d.input_dim())?;
        }
        check_dim("old data", ctx.base.kind().input_dim(), ctx.old_data.input_dim())?;
        let delta_new = delta_new.unwrap_or(ctx.delta);
        if !(delta_new >= 0.0 && delta_new.is_finite()) {
            return Err(Error::InvalidArgument(format!("regularizer {delta_new} must be nonnegative")));
        }
        Ok(Self {
            added: add,
            removed: sorted,
            delta_new,
            kind_new,
        })
    }

    fn is_add_only(&self, ctx: &BaseContext<'_>) -> bool {
        self.removed.is_empty() && self.delta_new == ctx.delta && self.kind_new == ctx.base.kind()
    }

    /// Data of the retrained problem: old rows minus removed, plus added.
    fn batch_data(&self, ctx: &BaseContext<'_>) -> Result<LabeledData> {
        let kept = ctx.old_data.without(&self.removed)?;
        match &self.added {
            Some(a) => kept.concat(a),
            None => Ok(kept),
        }
    }
}

fn data_loss(kind: &ModelKind, data: &LabeledData) -> Result<Box<dyn FiniteSum>> {
    Ok(match kind {
        ModelKind::Glm { family, map } => {
            data.validate(*family)?;
            Box::new(GlmLoss::labels(*family, map.design(&data.inputs)?, data)?)
        }
        ModelKind::Mlp(spec) => Box::new(MlpLoss::labels(spec.clone(), data)?),
    })
}

fn negated_loss(kind: &ModelKind, data: &LabeledData) -> Result<Box<dyn FiniteSum>> {
    Ok(match kind {
        ModelKind::Glm { family, map } => {
            data.validate(*family)?;
            Box::new(GlmLoss::labels(*family, map.design(&data.inputs)?, data)?.negated())
        }
        ModelKind::Mlp(spec) => Box::new(MlpLoss::labels(spec.clone(), data)?.scaled(-1.0)),
    })
}

fn default_start(kind: &ModelKind) -> DVector<f64> {
    match kind {
        ModelKind::Glm { .. } => DVector::zeros(kind.num_params()),
        ModelKind::Mlp(spec) => MlpParams::init(spec, 0).into_flat(),
    }
}

fn random_start(kind: &ModelKind, seed: u64) -> DVector<f64> {
    match kind {
        ModelKind::Glm { .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            DVector::from_fn(kind.num_params(), |_, _| rng.random_range(-1.0..1.0))
        }
        ModelKind::Mlp(spec) => MlpParams::init(spec, seed).into_flat(),
    }
}

/// How the base weights carry into the new parameter space.
enum Transfer {
    Same,
    Map(DMatrix<f64>),
    /// No weight-space correspondence; only the functional term applies.
    None,
}

fn transfer(ctx: &BaseContext<'_>, kind_new: &ModelKind) -> Transfer {
    let kind_old = ctx.base.kind();
    if &kind_old == kind_new {
        return Transfer::Same;
    }
    match (&kind_old, kind_new) {
        (ModelKind::Glm { family: f0, map: m0 }, ModelKind::Glm { family: f1, map: m1 }) if f0 == f1 => {
            match m0.nesting(m1) {
                Nesting::NotNested => Transfer::None,
                _ => m0.transfer_matrix(m1).map_or(Transfer::None, Transfer::Map),
            }
        }
        _ => Transfer::None,
    }
}

fn warm_start(ctx: &BaseContext<'_>, kind_new: &ModelKind) -> DVector<f64> {
    match transfer(ctx, kind_new) {
        Transfer::Same => ctx.base.weights().clone(),
        Transfer::Map(a) => a * ctx.base.weights(),
        Transfer::None => default_start(kind_new),
    }
}

/// Runs the solver over `obj` and packages the result.
fn run(
    obj: &dyn FiniteSum,
    kind: &ModelKind,
    w0: DVector<f64>,
    cfg: &AdaptConfig,
    method: Method,
    memory_fraction: f64,
) -> Result<AdaptOutcome> {
    let start = Instant::now();
    let rows = obj.num_rows().max(1);
    let floor = cfg.objective_floor;
    let mut diverged = false;
    let mut hits: Vec<(f64, Option<usize>)> = cfg.targets.iter().map(|&t| (t, None)).collect();

    let (weights, grad_evals, backprops, converged, objective) = match &cfg.sgd {
        Some(sgd) => {
            let r = minimize_sgd(obj, w0, sgd)?;
            diverged = r.value < floor;
            let batch = sgd.batch_size.min(obj.num_rows()).max(1);
            (r.weights, r.grad_evals, r.grad_evals * batch, r.converged, r.value)
        }
        None => {
            let oracle = |w: &DVector<f64>| obj.value_grad(w);
            let r = minimize_observed(oracle, w0, &cfg.optimizer, |w, value, evals| {
                if value < floor {
                    diverged = true;
                    return ControlFlow::Break(());
                }
                if let Some(probe) = &cfg.probe {
                    if hits.iter().any(|(_, h)| h.is_none()) {
                        let acc = kind
                            .with_weights(w.clone())
                            .and_then(|m| m.accuracy(&probe.inputs, &probe.labels))
                            .unwrap_or(0.0);
                        for (t, h) in hits.iter_mut() {
                            if h.is_none() && acc >= *t {
                                *h = Some(evals * rows);
                            }
                        }
                    }
                }
                ControlFlow::Continue(())
            })?;
            (r.weights, r.grad_evals, r.grad_evals * rows, r.converged, r.value)
        }
    };
    Ok(AdaptOutcome {
        model: kind.with_weights(weights)?,
        grad_evals,
        backprops,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        converged: converged && !diverged,
        diverged,
        method,
        memory_fraction,
        objective,
        backprops_to_target: hits,
    })
}

fn start_point(cfg: &AdaptConfig, warm: impl FnOnce() -> DVector<f64>, kind: &ModelKind) -> DVector<f64> {
    match cfg.init {
        Init::Warm => warm(),
        Init::Random(seed) => random_start(kind, seed),
    }
}

/// Trains a model of class `kind` on `data` with `(δ/2)‖w‖²`.
pub fn train(kind: &ModelKind, data: &LabeledData, delta: f64, cfg: &AdaptConfig) -> Result<AdaptOutcome> {
    let obj = SumObjective::new(kind.num_params())
        .with(data_loss(kind, data)?)?
        .with(QuadraticWeight::ridge(kind.num_params(), delta))?;
    let w0 = start_point(cfg, || default_start(kind), kind);
    run(&obj, kind, w0, cfg, Method::Batch, 1.0)
}

/// Retrains from scratch on the task's resulting data, regularizer and
/// model class.
pub fn solve_batch(task: &AdaptationTask, ctx: &BaseContext<'_>, cfg: &AdaptConfig) -> Result<AdaptOutcome> {
    let plan = Plan::build(task, ctx)?;
    train(&plan.kind_new, &plan.batch_data(ctx)?, plan.delta_new, cfg)
}

/// Value of the retrained problem's objective at `w`.
pub fn true_objective(task: &AdaptationTask, ctx: &BaseContext<'_>, w: &DVector<f64>) -> Result<f64> {
    let plan = Plan::build(task, ctx)?;
    check_dim("objective weights", plan.kind_new.num_params(), w.len())?;
    let data = plan.batch_data(ctx)?;
    let loss = data_loss(&plan.kind_new, &data)?;
    Ok(loss.value(w) + 0.5 * plan.delta_new * w.norm_squared())
}

/// Terms shared by the prior-based methods: `ℓ_added − ℓ_removed`.
fn task_terms<'a>(plan: &Plan, ctx: &BaseContext<'_>, obj: &mut SumObjective<'a>) -> Result<()> {
    if let Some(a) = &plan.added {
        obj.push(data_loss(&plan.kind_new, a)?)?;
    }
    if !plan.removed.is_empty() {
        let removed = ctx.old_data.select(&plan.removed)?;
        obj.push(negated_loss(&plan.kind_new, &removed)?)?;
    }
    Ok(())
}

fn memory_fraction(memory: &MemorySet, ctx: &BaseContext<'_>) -> f64 {
    if ctx.old_data.is_empty() {
        1.0
    } else {
        memory.len() as f64 / ctx.old_data.len() as f64
    }
}

/// Minimizes the task terms plus a K-prior built from `memory`.
///
/// The weight term is `(δ/2)‖w − w*‖²` when neither the regularizer nor
/// the model class changes, the two-generator divergence
/// `½(γ‖w‖² + δ‖Aw*‖² − 2δ wᵀAw*)` otherwise. Without a weight-space
/// correspondence (non-nested maps, new architectures) the prior keeps only
/// its functional term and the new model gets its own `(γ/2)‖w‖²`.
pub fn adapt_kprior(task: &AdaptationTask, ctx: &BaseContext<'_>, memory: &MemorySet, cfg: &AdaptConfig) -> Result<AdaptOutcome> {
    let plan = Plan::build(task, ctx)?;
    let kind = &plan.kind_new;
    let p = kind.num_params();
    let mut obj = SumObjective::new(p);
    task_terms(&plan, ctx, &mut obj)?;

    let t = transfer(ctx, kind);
    let weight_div = match t {
        Transfer::Same if plan.delta_new == ctx.delta => WeightDivergence::L2Shift { delta: ctx.delta },
        Transfer::Same | Transfer::Map(_) => WeightDivergence::TwoGenerator {
            gamma_new: plan.delta_new,
            delta_old: ctx.delta,
        },
        Transfer::None => WeightDivergence::None,
    };
    let anchor = match &t {
        Transfer::Same => Some(ctx.base.weights().clone()),
        Transfer::Map(a) => Some(a * ctx.base.weights()),
        Transfer::None => None,
    };
    match kind {
        ModelKind::Glm { family, map } => {
            if let AnyModel::Glm(b) = ctx.base {
                if b.family() != *family {
                    return Err(Error::UnsupportedTask {
                        method: "kprior",
                        reason: "changing the exponential family".into(),
                    });
                }
            }
            let spec = KPriorSpec {
                // without a correspondence the anchor is unused
                base_weights: if anchor.is_some() { ctx.base.weights().clone() } else { DVector::zeros(p) },
                memory: memory.clone(),
                tau: cfg.tau,
                weight_div,
                family: *family,
                feature_map_new: *map,
                model_map: match t {
                    Transfer::Map(a) => Some(a),
                    _ => None,
                },
            };
            obj.push(KPrior::new(&spec)?)?;
        }
        ModelKind::Mlp(spec) => {
            if !memory.is_empty() {
                let targets = spec.soft_targets(memory.soft_logits(), 1.0)?;
                obj.push(MlpLoss::new(spec.clone(), memory.inputs().clone(), targets)?)?;
            }
            if let Some(a) = &anchor {
                let q = match weight_div {
                    WeightDivergence::L2Shift { delta } => QuadraticWeight::shifted(delta, a),
                    WeightDivergence::TwoGenerator { gamma_new, delta_old } => QuadraticWeight::two_generator(gamma_new, delta_old, a),
                    WeightDivergence::None => QuadraticWeight::ridge(p, 0.0),
                };
                obj.push(q.scaled(cfg.tau))?;
            }
        }
    }
    if anchor.is_none() {
        obj.push(QuadraticWeight::ridge(p, plan.delta_new))?;
    }
    let w0 = start_point(cfg, || warm_start(ctx, kind), kind);
    run(&obj, kind, w0, cfg, Method::KPrior, memory_fraction(memory, ctx))
}

/// Minimizes the task terms plus the memory's true-label loss and
/// `(γ/2)‖w‖²` centered at zero. Removed rows are dropped from the memory
/// instead of being subtracted.
pub fn adapt_replay(task: &AdaptationTask, ctx: &BaseContext<'_>, memory: &MemorySet, cfg: &AdaptConfig) -> Result<AdaptOutcome> {
    let plan = Plan::build(task, ctx)?;
    let kind = &plan.kind_new;
    let p = kind.num_params();
    let mut obj = SumObjective::new(p);
    if let Some(a) = &plan.added {
        obj.push(data_loss(kind, a)?)?;
    }
    let kept = memory.without_rows(&plan.removed);
    obj.push(data_loss(kind, &kept.labeled())?)?;
    obj.push(QuadraticWeight::ridge(p, plan.delta_new))?;
    let w0 = start_point(cfg, || warm_start(ctx, kind), kind);
    run(&obj, kind, w0, cfg, Method::Replay, memory_fraction(memory, ctx))
}

/// Minimizes `ℓ_new(w) + ½(w−w*)ᵀ[G+δI](w−w*)`. Only Add Data is supported.
pub fn adapt_weight_prior(task: &AdaptationTask, ctx: &BaseContext<'_>, ggn_full: &DMatrix<f64>, cfg: &AdaptConfig) -> Result<AdaptOutcome> {
    let plan = Plan::build(task, ctx)?;
    if !plan.is_add_only(ctx) {
        return Err(Error::UnsupportedTask {
            method: "weight-prior",
            reason: "only Add Data is supported".into(),
        });
    }
    if !matches!(ctx.base, AnyModel::Glm(_)) {
        return Err(Error::UnsupportedTask {
            method: "weight-prior",
            reason: "needs a GLM base model".into(),
        });
    }
    let kind = &plan.kind_new;
    let p = kind.num_params();
    check_dim("ggn rows", p, ggn_full.nrows())?;
    check_dim("ggn cols", p, ggn_full.ncols())?;
    let mut obj = SumObjective::new(p);
    task_terms(&plan, ctx, &mut obj)?;
    obj.push(QuadraticForm {
        hessian: ggn_full + DMatrix::identity(p, p) * ctx.delta,
        anchor: ctx.base.weights().clone(),
    })?;
    let w0 = start_point(cfg, || ctx.base.weights().clone(), kind);
    run(&obj, kind, w0, cfg, Method::WeightPrior, 1.0)
}

/// Pairs `(h'(f_{w*}^i), h'(f_w^i))` for every row of `data`.
pub fn stale_mean_diagnostic(base: &GlmModel, candidate_w: &DVector<f64>, data: &LabeledData) -> Result<Vec<(f64, f64)>> {
    let candidate = base.with_weights(candidate_w.clone())?;
    let stale = base.logits(&data.inputs)?;
    let fresh = candidate.logits(&data.inputs)?;
    let fam = base.family();
    Ok(stale.iter().zip(fresh.iter()).map(|(&a, &b)| (fam.mean_deriv(a), fam.mean_deriv(b))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distance {
    pub linf: f64,
    pub l2: f64,
    /// Fraction of evaluation rows with different hard predictions.
    pub pred_disagreement: f64,
}

pub fn distance_to_batch(w_a: &DVector<f64>, w_b: &DVector<f64>, eval_data: &LabeledData, kind: &ModelKind) -> Result<Distance> {
    check_dim("distance weights", w_a.len(), w_b.len())?;
    let d = w_a - w_b;
    let linf = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pred_disagreement = if eval_data.is_empty() {
        0.0
    } else {
        let a = kind.with_weights(w_a.clone())?;
        let b = kind.with_weights(w_b.clone())?;
        let fa = a.predict_logits(&eval_data.inputs)?;
        let fb = b.predict_logits(&eval_data.inputs)?;
        let rows_a: Vec<Vec<f64>> = fa.row_iter().map(|r| r.iter().copied().collect()).collect();
        let rows_b: Vec<Vec<f64>> = fb.row_iter().map(|r| r.iter().copied().collect()).collect();
        let differ = rows_a.iter().zip(&rows_b).filter(|(x, y)| a.hard_label(x) != b.hard_label(y)).count();
        differ as f64 / eval_data.len() as f64
    };
    Ok(Distance {
        linf,
        l2: d.norm(),
        pred_disagreement,
    })
}
