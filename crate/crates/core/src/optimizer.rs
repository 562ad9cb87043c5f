//! Deterministic L-BFGS with a strong-Wolfe line search, plus a seeded
//! minibatch gradient method for finite sums.

use std::collections::VecDeque;
use std::ops::ControlFlow;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::objective::FiniteSum;

const MAX_LINE_SEARCH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Convergence threshold on the gradient ∞-norm.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Number of stored curvature pairs.
    pub history: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iters: 5000,
            history: 10,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
        }
    }
}

impl OptimizerConfig {
    pub fn with_tol(mut self, grad_tol: f64) -> Self {
        self.grad_tol = grad_tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let OptimizerConfig {
            grad_tol,
            history,
            wolfe_c1: c1,
            wolfe_c2: c2,
            ..
        } = *self;
        if !(grad_tol > 0.0 && grad_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("grad_tol {grad_tol} must be positive")));
        }
        if !(0.0 < c1 && c1 < c2 && c2 < 1.0) {
            return Err(Error::InvalidArgument(format!("Wolfe constants need 0 < c1 < c2 < 1, got {c1}, {c2}")));
        }
        if history == 0 {
            return Err(Error::InvalidArgument("history must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub weights: DVector<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iters: usize,
    /// Every oracle call, line-search trials included.
    pub grad_evals: usize,
    pub converged: bool,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

struct Counted<F> {
    oracle: F,
    evals: usize,
    iter: usize,
}

impl<F: FnMut(&DVector<f64>) -> (f64, DVector<f64>)> Counted<F> {
    /// `None` for an infinite value or gradient, an error for NaN.
    fn eval(&mut self, w: &DVector<f64>) -> Result<Option<(f64, DVector<f64>)>> {
        let (f, g) = (self.oracle)(w);
        self.evals += 1;
        if f.is_nan() {
            return Err(Error::NonFiniteOracle {
                what: "value",
                iter: self.iter,
            });
        }
        if g.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFiniteOracle {
                what: "gradient",
                iter: self.iter,
            });
        }
        if f.is_infinite() || g.iter().any(|v| v.is_infinite()) {
            return Ok(None);
        }
        Ok(Some((f, g)))
    }
}

struct Point {
    x: DVector<f64>,
    f: f64,
    g: DVector<f64>,
}

enum Search {
    Accepted(Point),
    Failed,
}

/// Strong-Wolfe line search along `d` from `p`.
fn line_search<F>(oracle: &mut Counted<F>, p: &Point, d: &DVector<f64>, a_init: f64, cfg: &OptimizerConfig) -> Result<Search>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let (c1, c2) = (cfg.wolfe_c1, cfg.wolfe_c2);
    let f0 = p.f;
    let dphi0 = p.g.dot(d);
    // below this the sufficient-decrease test is decided by rounding
    let noise = 1e-13 * f0.abs().max(1.0);
    let armijo = |a: f64, fa: f64| fa <= f0 + c1 * a * dphi0 || (fa <= f0 + noise && c1 * a * dphi0.abs() <= noise);
    let curvature = |dphi: f64| dphi.abs() <= -c2 * dphi0;

    let probe = |oracle: &mut Counted<F>, a: f64| -> Result<Option<Point>> {
        let x = &p.x + d * a;
        Ok(oracle.eval(&x)?.map(|(f, g)| Point { x, f, g }))
    };

    // bracketing phase
    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut dphi_prev = dphi0;
    let mut a = a_init;
    let mut bracket = None;
    for i in 0..MAX_LINE_SEARCH {
        let Some(pt) = probe(oracle, a)? else {
            a = 0.5 * (a_prev + a);
            continue;
        };
        let dphi = pt.g.dot(d);
        if !armijo(a, pt.f) || (i > 0 && pt.f >= f_prev) {
            bracket = Some((a_prev, f_prev, dphi_prev, a, pt.f, None));
            break;
        }
        if curvature(dphi) {
            return Ok(Search::Accepted(pt));
        }
        if dphi >= 0.0 {
            bracket = Some((a, pt.f, dphi, a_prev, f_prev, Some(pt)));
            break;
        }
        a_prev = a;
        f_prev = pt.f;
        dphi_prev = dphi;
        a *= 2.0;
        if i + 1 == MAX_LINE_SEARCH {
            // never bracketed: accept the last sufficient-decrease point
            return Ok(Search::Accepted(pt));
        }
    }
    let Some((mut lo, mut f_lo, mut dphi_lo, mut hi, mut f_hi, mut best)) = bracket else {
        return Ok(Search::Failed);
    };
    if best.is_none() && lo > 0.0 {
        best = probe(oracle, lo)?;
    }

    // zoom phase
    for _ in 0..MAX_LINE_SEARCH {
        let width = hi - lo;
        // minimizer of the quadratic through (lo, f_lo, dphi_lo) and (hi, f_hi)
        let denom = 2.0 * (f_hi - f_lo - dphi_lo * width);
        let mut a = if denom > 0.0 && f_hi.is_finite() {
            lo - dphi_lo * width * width / denom
        } else {
            lo + 0.5 * width
        };
        let (left, right) = if lo < hi { (lo, hi) } else { (hi, lo) };
        let margin = 0.1 * (right - left);
        if !(a > left + margin && a < right - margin) {
            a = lo + 0.5 * width;
        }
        let Some(pt) = probe(oracle, a)? else {
            hi = a;
            f_hi = f64::INFINITY;
            continue;
        };
        let dphi = pt.g.dot(d);
        if !armijo(a, pt.f) || pt.f >= f_lo {
            hi = a;
            f_hi = pt.f;
        } else {
            if curvature(dphi) {
                return Ok(Search::Accepted(pt));
            }
            if dphi * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
            }
            lo = a;
            f_lo = pt.f;
            dphi_lo = dphi;
            best = Some(pt);
        }
        if (hi - lo).abs() <= 1e-16 * lo.abs().max(1.0) {
            break;
        }
    }
    // the best sufficient-decrease point is still progress
    Ok(match best {
        Some(pt) if pt.f <= f0 => Search::Accepted(pt),
        _ => Search::Failed,
    })
}

/// Two-loop recursion: `−H·g` for the stored pairs.
fn direction(g: &DVector<f64>, pairs: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        q *= s.dot(y) / y.norm_squared();
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    -q
}

pub fn minimize<F>(oracle: F, w0: DVector<f64>, cfg: &OptimizerConfig) -> Result<OptimResult>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    minimize_observed(oracle, w0, cfg, |_, _, _| ControlFlow::Continue(()))
}

/// Like [`minimize`], calling `observer(w, value, grad_evals)` at the start
/// point (with `grad_evals = 0`) and after every accepted step. Returning
/// `Break` stops the run at that iterate.
pub fn minimize_observed<F, O>(oracle: F, w0: DVector<f64>, cfg: &OptimizerConfig, mut observer: O) -> Result<OptimResult>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
    O: FnMut(&DVector<f64>, f64, usize) -> ControlFlow<()>,
{
    cfg.validate()?;
    let mut oracle = Counted {
        oracle,
        evals: 0,
        iter: 0,
    };
    let Some((f, g)) = oracle.eval(&w0)? else {
        return Err(Error::NonFiniteOracle {
            what: "value at the start point",
            iter: 0,
        });
    };
    let mut p = Point { x: w0, f, g };
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(cfg.history);
    let mut iters = 0;
    let mut stopped = observer(&p.x, p.f, 0).is_break();

    while !stopped && iters < cfg.max_iters && inf_norm(&p.g) > cfg.grad_tol {
        oracle.iter = iters;
        let mut d = direction(&p.g, &pairs);
        if p.g.dot(&d) >= 0.0 {
            pairs.clear();
            d = -&p.g;
        }
        let a_init = if pairs.is_empty() { (1.0 / inf_norm(&p.g)).min(1.0) } else { 1.0 };
        let next = match line_search(&mut oracle, &p, &d, a_init, cfg)? {
            Search::Accepted(pt) => pt,
            Search::Failed if !pairs.is_empty() => {
                // retry once along the steepest descent direction
                pairs.clear();
                let d = -&p.g;
                match line_search(&mut oracle, &p, &d, (1.0 / inf_norm(&p.g)).min(1.0), cfg)? {
                    Search::Accepted(pt) => pt,
                    Search::Failed => break,
                }
            }
            Search::Failed => break,
        };
        let s = &next.x - &p.x;
        let y = &next.g - &p.g;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() && sy > 0.0 {
            if pairs.len() == cfg.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let stalled = next.x == p.x;
        p = next;
        iters += 1;
        stopped = observer(&p.x, p.f, oracle.evals).is_break();
        if stalled {
            break;
        }
    }

    let grad_inf_norm = inf_norm(&p.g);
    Ok(OptimResult {
        weights: p.x,
        value: p.f,
        grad_inf_norm,
        iters,
        grad_evals: oracle.evals,
        converged: grad_inf_norm <= cfg.grad_tol,
    })
}

/// Runs [`minimize`] and records, for each target accuracy, the cumulative
/// oracle calls at the first iterate whose `probe` reaches it.
pub fn target_accuracy_run<F, P>(
    oracle: F,
    w0: DVector<f64>,
    cfg: &OptimizerConfig,
    mut probe: P,
    targets: &[f64],
) -> Result<(OptimResult, Vec<(f64, Option<usize>)>)>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
    P: FnMut(&DVector<f64>) -> f64,
{
    let mut hits: Vec<(f64, Option<usize>)> = targets.iter().map(|&t| (t, None)).collect();
    let result = minimize_observed(oracle, w0, cfg, |w, _, evals| {
        let acc = probe(w);
        for (t, hit) in hits.iter_mut() {
            if hit.is_none() && acc >= *t {
                *hit = Some(evals);
            }
        }
        ControlFlow::Continue(())
    })?;
    Ok((result, hits))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub batch_size: usize,
    /// Step size on the per-row mean objective.
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

/// Constant-step minibatch gradient descent on `Σ_rows + global`.
///
/// Each epoch shuffles the rows with ChaCha8 and walks them in batches of
/// `batch_size` (the trailing partial batch is dropped unless it is the
/// only one). Every step uses the unbiased estimate
/// `(N/B)·Σ_batch ∇row + ∇global`, divided by `max(N, 1)`.
/// `grad_evals` counts minibatch evaluations.
pub fn minimize_sgd<O: FiniteSum + ?Sized>(obj: &O, w0: DVector<f64>, cfg: &SgdConfig) -> Result<OptimResult> {
    cfg.validate()?;
    let n = obj.num_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = w0;
    let mut evals = 0;
    let b = cfg.batch_size.min(n.max(1));
    let scale = 1.0 / n.max(1) as f64;
    let mut iters = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let batches: Vec<&[usize]> = if n == 0 { vec![&order[..]] } else { order.chunks_exact(b).collect() };
        for batch in batches {
            let mut g = DVector::zeros(w.len());
            let v = obj.rows_value_grad(&w, batch, &mut g);
            if !batch.is_empty() {
                g *= n as f64 / batch.len() as f64;
            }
            let vg = obj.global_value_grad(&w, &mut g);
            evals += 1;
            if (v + vg).is_nan() || g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteOracle {
                    what: "minibatch gradient",
                    iter: epoch,
                });
            }
            w.axpy(-cfg.learning_rate * scale, &g, 1.0);
            iters += 1;
        }
    }
    let (value, g) = obj.value_grad(&w);
    Ok(OptimResult {
        weights: w,
        value,
        grad_inf_norm: inf_norm(&g),
        iters,
        grad_evals: evals,
        // a constant-step method has no convergence certificate
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledData;
    use crate::family::ExpFamily;
    use crate::features::FeatureMap;
    use crate::glm::GlmModel;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn quadratic(c: DVector<f64>) -> impl FnMut(&DVector<f64>) -> (f64, DVector<f64>) {
        move |w| {
            let d = w - &c;
            (0.5 * d.norm_squared(), d)
        }
    }

    fn logistic(seed: u64) -> (GlmModel, LabeledData) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = DMatrix::from_fn(40, 2, |_, _| rng.random_range(-2.0..2.0));
        let labels = DVector::from_fn(40, |i, _| if inputs[(i, 0)] + 0.3 * rng.random_range(-1.0..1.0) > 0.0 { 1.0 } else { 0.0 });
        let map = FeatureMap::new(2, true, 2).unwrap();
        (GlmModel::zeros(map, ExpFamily::Bernoulli), LabeledData::new(inputs, labels).unwrap())
    }

    #[test]
    fn quadratic_converges_to_center() {
        let c = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        let r = minimize(quadratic(c.clone()), DVector::zeros(3), &OptimizerConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.grad_inf_norm <= 1e-8);
        assert!((r.weights - c).amax() <= 1e-8);
    }

    #[test]
    fn zero_budget_returns_start() {
        let oracle = |w: &DVector<f64>| ((w[0] - 3.0).powi(2), DVector::from_element(1, 2.0 * (w[0] - 3.0)));
        let cfg = OptimizerConfig::default().with_max_iters(0);
        let r = minimize(oracle, DVector::zeros(1), &cfg).unwrap();
        assert_eq!(r.weights[0], 0.0);
        assert!(!r.converged);
        assert_eq!(r.iters, 0);
    }

    #[test]
    fn logistic_optimum_independent_of_start() {
        let (m, d) = logistic(3);
        let delta = 0.5;
        let oracle = |w: &DVector<f64>| {
            let mm = m.with_weights(w.clone()).unwrap();
            (mm.objective(&d, delta).unwrap(), mm.gradient(&d, delta).unwrap())
        };
        let cfg = OptimizerConfig::default().with_tol(1e-10);
        let a = minimize(oracle, DVector::zeros(5), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w0 = DVector::from_fn(5, |_, _| rng.random_range(-3.0..3.0));
        let b = minimize(oracle, w0, &cfg).unwrap();
        assert!(a.converged && b.converged);
        assert!((&a.weights - &b.weights).amax() <= 1e-6);
        let g = m.with_weights(a.weights.clone()).unwrap().gradient(&d, delta).unwrap();
        assert!(g.amax() <= 1e-9);
    }

    #[test]
    fn bitwise_deterministic() {
        let (m, d) = logistic(5);
        let oracle = |w: &DVector<f64>| {
            let mm = m.with_weights(w.clone()).unwrap();
            (mm.objective(&d, 0.1).unwrap(), mm.gradient(&d, 0.1).unwrap())
        };
        let cfg = OptimizerConfig::default();
        let a = minimize(oracle, DVector::zeros(5), &cfg).unwrap();
        let b = minimize(oracle, DVector::zeros(5), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn objective_non_increasing() {
        let (m, d) = logistic(8);
        let oracle = |w: &DVector<f64>| {
            let mm = m.with_weights(w.clone()).unwrap();
            (mm.objective(&d, 0.2).unwrap(), mm.gradient(&d, 0.2).unwrap())
        };
        let mut values = Vec::new();
        minimize_observed(oracle, DVector::zeros(5), &OptimizerConfig::default().with_tol(1e-11), |_, f, _| {
            values.push(f);
            ControlFlow::Continue(())
        })
        .unwrap();
        for w in values.windows(2) {
            assert!(w[1] <= w[0] + 1e-13 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn nan_is_an_error_and_infinity_backtracks() {
        let nan = |_: &DVector<f64>| (f64::NAN, DVector::zeros(1));
        assert!(matches!(
            minimize(nan, DVector::zeros(1), &OptimizerConfig::default()),
            Err(Error::NonFiniteOracle { .. })
        ));
        // barrier: +∞ beyond w = 1, minimum at 0.9
        let barrier = |w: &DVector<f64>| {
            if w[0] >= 1.0 {
                (f64::INFINITY, DVector::zeros(1))
            } else {
                let x = w[0];
                (0.5 * (x - 0.9).powi(2) - 0.01 * (1.0 - x).ln(), DVector::from_element(1, x - 0.9 + 0.01 / (1.0 - x)))
            }
        };
        let r = minimize(barrier, DVector::from_element(1, -5.0), &OptimizerConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.weights[0] < 1.0);
    }

    #[test]
    fn invalid_configs() {
        let bad = OptimizerConfig {
            wolfe_c1: 0.95,
            ..OptimizerConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(OptimizerConfig::default().with_tol(0.0).validate().is_err());
    }

    #[test]
    fn targets_met_at_start_and_unreachable() {
        let c = DVector::from_vec(vec![2.0]);
        let (_, hits) = target_accuracy_run(quadratic(c), DVector::zeros(1), &OptimizerConfig::default(), |w| w[0] / 2.0, &[0.0, 0.5, 1.0, 2.0]).unwrap();
        assert_eq!(hits[0], (0.0, Some(0)));
        assert!(hits[1].1.unwrap() <= hits[2].1.unwrap());
        assert_eq!(hits[3].1, None);
    }

    #[test]
    fn sgd_is_seeded() {
        let (m, d) = logistic(2);
        let design = m.feature_map().design(&d.inputs).unwrap();
        let loss = crate::glm::GlmLoss::labels(ExpFamily::Bernoulli, design, &d).unwrap();
        let cfg = SgdConfig {
            batch_size: 8,
            learning_rate: 0.5,
            epochs: 20,
            seed: 1,
        };
        let a = minimize_sgd(&loss, DVector::zeros(5), &cfg).unwrap();
        let b = minimize_sgd(&loss, DVector::zeros(5), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.grad_evals, 20 * 5);
        assert!(a.value < loss.value(&DVector::zeros(5)));
    }
}
