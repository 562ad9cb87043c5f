use kprior::adapt::{adapt_kprior, adapt_replay, distance_to_batch, solve_batch, train, true_objective};
use kprior::memory::{select_memorable, select_random, MemorySet};
use kprior::{AdaptConfig, AdaptationTask, AnyModel, BaseContext, ExpFamily, FeatureMap, Init, LabeledData, ModelKind, OptimizerConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn logistic(seed: u64, n: usize) -> LabeledData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-2.0f64..2.0));
    let labels = DVector::from_fn(n, |i, _| {
        let z = 1.5 * inputs[(i, 0)] - inputs[(i, 1)] + 0.5 * inputs[(i, 1)].powi(2) - 0.5 + rng.random_range(-1.5f64..1.5);
        if z > 0.0 {
            1.0
        } else {
            0.0
        }
    });
    LabeledData::new(inputs, labels).unwrap()
}

fn glm(degree: usize) -> ModelKind {
    ModelKind::Glm {
        family: ExpFamily::Bernoulli,
        map: FeatureMap::new(degree, true, 2).unwrap(),
    }
}

fn tight() -> AdaptConfig {
    AdaptConfig {
        optimizer: OptimizerConfig::default().with_tol(1e-10),
        ..AdaptConfig::default()
    }
}

struct Setup {
    old: LabeledData,
    base: AnyModel,
    delta: f64,
}

impl Setup {
    fn new(seed: u64, n: usize, kind: &ModelKind, delta: f64) -> Self {
        let old = logistic(seed, n);
        let base = train(kind, &old, delta, &tight()).unwrap().model;
        Self { old, base, delta }
    }

    fn ctx(&self) -> BaseContext<'_> {
        BaseContext {
            old_data: &self.old,
            base: &self.base,
            delta: self.delta,
        }
    }

    fn full_memory(&self) -> MemorySet {
        MemorySet::full(&self.base, &self.old).unwrap()
    }
}

fn assert_matches_batch(task: &AdaptationTask, s: &Setup) {
    let ctx = s.ctx();
    let batch = solve_batch(task, &ctx, &tight()).unwrap();
    let kp = adapt_kprior(task, &ctx, &s.full_memory(), &tight()).unwrap();
    assert!(batch.converged && kp.converged, "{task:?}");
    let gap = (batch.weights() - kp.weights()).amax();
    assert!(gap <= 1e-5, "full-memory gap {gap:e} for {task:?}");
}

#[test]
fn full_memory_add_data() {
    for seed in 0..3 {
        let s = Setup::new(seed, 40, &glm(2), 0.5);
        assert_matches_batch(&AdaptationTask::AddData(logistic(100 + seed, 15)), &s);
    }
}

#[test]
fn full_memory_remove_data() {
    for seed in 0..3 {
        let s = Setup::new(seed + 10, 50, &glm(2), 1.0);
        assert_matches_batch(&AdaptationTask::RemoveData(vec![0, 3, 7, 11, 20, 21, 40]), &s);
    }
}

#[test]
fn full_memory_change_regularizer() {
    for (from, to) in [(50.0, 5.0), (0.5, 3.0), (2.0, 0.2)] {
        let s = Setup::new(20, 45, &glm(3), from);
        assert_matches_batch(&AdaptationTask::ChangeRegularizer(to), &s);
    }
}

#[test]
fn full_memory_change_model_class_nested() {
    for (from, to) in [(2, 1), (3, 1), (3, 2)] {
        let s = Setup::new(30 + from as u64, 40, &glm(from), 0.7);
        assert_matches_batch(&AdaptationTask::ChangeModelClass(glm(to)), &s);
    }
}

#[test]
fn full_memory_combined_tasks() {
    let s = Setup::new(40, 40, &glm(2), 1.5);
    let task = AdaptationTask::Combined {
        add: Some(logistic(41, 12)),
        remove: vec![1, 2, 30],
        delta_new: Some(0.6),
        model: Some(glm(1)),
    };
    assert_matches_batch(&task, &s);
}

#[test]
fn full_memory_replay_is_batch() {
    let s = Setup::new(50, 40, &glm(2), 0.5);
    let task = AdaptationTask::AddData(logistic(51, 10));
    let batch = solve_batch(&task, &s.ctx(), &tight()).unwrap();
    let rep = adapt_replay(&task, &s.ctx(), &s.full_memory(), &tight()).unwrap();
    assert!((batch.weights() - rep.weights()).amax() <= 1e-6);
}

#[test]
fn random_init_reaches_same_solution() {
    let s = Setup::new(60, 40, &glm(2), 0.5);
    let task = AdaptationTask::AddData(logistic(61, 10));
    let mem = select_memorable(&s.base, &s.old, 8).unwrap();
    let warm = adapt_kprior(&task, &s.ctx(), &mem, &tight()).unwrap();
    let cold = adapt_kprior(&task, &s.ctx(), &mem, &AdaptConfig { init: Init::Random(3), ..tight() }).unwrap();
    assert!((warm.weights() - cold.weights()).amax() <= 1e-5);
}

#[test]
fn kprior_beats_replay_on_true_objective_with_small_memory() {
    let mut wins = 0;
    for seed in 0..5 {
        let s = Setup::new(70 + seed, 60, &glm(2), 0.5);
        let task = AdaptationTask::AddData(logistic(170 + seed, 20));
        let mem = select_memorable(&s.base, &s.old, 6).unwrap();
        let kp = adapt_kprior(&task, &s.ctx(), &mem, &tight()).unwrap();
        let rep = adapt_replay(&task, &s.ctx(), &mem, &tight()).unwrap();
        let f_kp = true_objective(&task, &s.ctx(), kp.weights()).unwrap();
        let f_rep = true_objective(&task, &s.ctx(), rep.weights()).unwrap();
        if f_rep >= f_kp {
            wins += 1;
        }
    }
    assert!(wins >= 4, "kprior won {wins} of 5");
}

#[test]
fn distance_to_batch_shrinks_with_memory() {
    let fractions = [0.02, 0.05, 0.10, 0.25, 0.50, 1.0];
    let mut mean = vec![0.0; fractions.len()];
    for seed in 0..5 {
        let s = Setup::new(80 + seed, 60, &glm(2), 0.5);
        let task = AdaptationTask::AddData(logistic(180 + seed, 20));
        let batch = solve_batch(&task, &s.ctx(), &tight()).unwrap();
        for (k, f) in fractions.iter().enumerate() {
            let m = (f * 60.0f64).round() as usize;
            let mem = select_memorable(&s.base, &s.old, m).unwrap();
            let kp = adapt_kprior(&task, &s.ctx(), &mem, &tight()).unwrap();
            mean[k] += distance_to_batch(kp.weights(), batch.weights(), &s.old, &glm(2)).unwrap().l2 / 5.0;
        }
    }
    for w in mean.windows(2) {
        assert!(w[1] <= w[0] * 1.10 + 1e-9, "{mean:?}");
    }
    assert!(mean[fractions.len() - 1] <= 1e-5);
}

#[test]
fn random_selection_also_exact_at_full_memory() {
    let s = Setup::new(90, 30, &glm(1), 0.8);
    let task = AdaptationTask::AddData(logistic(91, 10));
    let mem = select_random(&s.base, &s.old, 30, 4).unwrap();
    let batch = solve_batch(&task, &s.ctx(), &tight()).unwrap();
    let kp = adapt_kprior(&task, &s.ctx(), &mem, &tight()).unwrap();
    assert!((batch.weights() - kp.weights()).amax() <= 1e-5);
}

#[test]
fn remove_everything_with_full_memory_matches_batch() {
    let s = Setup::new(99, 20, &glm(1), 2.0);
    let all: Vec<usize> = (0..20).collect();
    let task = AdaptationTask::RemoveData(all);
    let kp = adapt_kprior(&task, &s.ctx(), &s.full_memory(), &tight()).unwrap();
    assert!(kp.weights().amax() <= 1e-5);
}
