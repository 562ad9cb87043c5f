//! K-priors for GLMs: a functional Bregman term over a memory plus a
//! weight-space divergence anchored at the base weights.

use nalgebra::{DMatrix, DVector};

use crate::data::LabeledData;
use crate::error::{check_dim, Error, Result};
use crate::family::ExpFamily;
use crate::features::FeatureMap;
use crate::glm::GlmModel;
use crate::memory::MemorySet;
use crate::objective::{FiniteSum, QuadraticWeight};

/// Weight-space part of a K-prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightDivergence {
    /// `(δ/2)‖w − a‖²`.
    L2Shift { delta: f64 },
    /// Bregman divergence built from two L2 generators,
    /// `½(γ‖w‖² + δ‖a‖² − 2δ wᵀa)`. Its gradient `γw − δa` is the new
    /// regularizer's gradient minus the old one's at the anchor.
    TwoGenerator { gamma_new: f64, delta_old: f64 },
    None,
}

impl WeightDivergence {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            WeightDivergence::L2Shift { delta } => delta >= 0.0,
            WeightDivergence::TwoGenerator { gamma_new, delta_old } => gamma_new >= 0.0 && delta_old >= 0.0,
            WeightDivergence::None => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("negative coefficient in {self:?}")))
        }
    }

    fn quadratic(&self, anchor: &DVector<f64>) -> QuadraticWeight {
        match *self {
            WeightDivergence::L2Shift { delta } => QuadraticWeight::shifted(delta, anchor),
            WeightDivergence::TwoGenerator { gamma_new, delta_old } => QuadraticWeight::two_generator(gamma_new, delta_old, anchor),
            WeightDivergence::None => QuadraticWeight::ridge(anchor.len(), 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KPriorSpec {
    /// `w*`, in the old model's parameter space.
    pub base_weights: DVector<f64>,
    /// Inputs with logits recorded under `w*` and the old feature map.
    pub memory: MemorySet,
    /// Multiplies the weight term only.
    pub tau: f64,
    pub weight_div: WeightDivergence,
    pub family: ExpFamily,
    pub feature_map_new: FeatureMap,
    /// `A` (P_new × P_old); the weight term is anchored at `A·w*`.
    pub model_map: Option<DMatrix<f64>>,
}

impl KPriorSpec {
    /// Same model class, `(δ/2)‖w − w*‖²` weight term, τ = 1.
    pub fn same_class(base: &GlmModel, memory: MemorySet, delta: f64) -> Self {
        Self {
            base_weights: base.weights().clone(),
            memory,
            tau: 1.0,
            weight_div: WeightDivergence::L2Shift { delta },
            family: base.family(),
            feature_map_new: *base.feature_map(),
            model_map: None,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_weight_div(mut self, weight_div: WeightDivergence) -> Self {
        self.weight_div = weight_div;
        self
    }

    /// Moves the prior to a new feature map with transfer matrix `a`.
    pub fn with_model_map(mut self, feature_map_new: FeatureMap, a: Option<DMatrix<f64>>) -> Self {
        self.feature_map_new = feature_map_new;
        self.model_map = a;
        self
    }

    /// The point the weight term is anchored at: `A·w*` or `w*`.
    pub fn anchor(&self) -> DVector<f64> {
        match &self.model_map {
            Some(a) => a * &self.base_weights,
            None => self.base_weights.clone(),
        }
    }
}

/// A [`KPriorSpec`] with its memory design and anchor precomputed.
///
/// Rows are the memory points; the weight term is the global part.
#[derive(Debug, Clone)]
pub struct KPrior {
    family: ExpFamily,
    design: DMatrix<f64>,
    soft_logits: DVector<f64>,
    soft_means: DVector<f64>,
    weight: QuadraticWeight,
}

impl KPrior {
    pub fn new(spec: &KPriorSpec) -> Result<Self> {
        spec.weight_div.validate()?;
        if !(spec.tau >= 0.0 && spec.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau {} must be nonnegative", spec.tau)));
        }
        let p_new = spec.feature_map_new.output_dim();
        match &spec.model_map {
            Some(a) => {
                check_dim("model map rows", p_new, a.nrows())?;
                check_dim("model map cols", spec.base_weights.len(), a.ncols())?;
            }
            None => check_dim("base weights", p_new, spec.base_weights.len())?,
        }
        if spec.memory.soft_logits().ncols() != 1 && !spec.memory.is_empty() {
            return Err(Error::InvalidArgument("GLM K-priors need scalar soft logits".into()));
        }
        let design = spec.feature_map_new.design(spec.memory.inputs())?;
        let soft_logits = spec.memory.scalar_logits();
        let soft_means = soft_logits.map(|f| spec.family.mean(f));
        let weight = spec.weight_div.quadratic(&spec.anchor()).scaled(spec.tau);
        Ok(Self {
            family: spec.family,
            design,
            soft_logits,
            soft_means,
            weight,
        })
    }
}

impl FiniteSum for KPrior {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn num_rows(&self) -> usize {
        self.design.nrows()
    }

    fn rows_value_grad(&self, w: &DVector<f64>, rows: &[usize], grad: &mut DVector<f64>) -> f64 {
        let mut v = 0.0;
        for &i in rows {
            let row = self.design.row(i);
            let f = row.dot(&w.transpose());
            v += self.family.bregman_unchecked(f, self.soft_logits[i]);
            grad.axpy(self.family.mean(f) - self.soft_means[i], &row.transpose(), 1.0);
        }
        v
    }

    fn all_rows_value_grad(&self, w: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        if self.design.nrows() == 0 {
            return 0.0;
        }
        let f = &self.design * w;
        let mut v = 0.0;
        let mut resid = DVector::zeros(f.len());
        for i in 0..f.len() {
            v += self.family.bregman_unchecked(f[i], self.soft_logits[i]);
            resid[i] = self.family.mean(f[i]) - self.soft_means[i];
        }
        grad.gemv_tr(1.0, &self.design, &resid, 1.0);
        v
    }

    fn global_value_grad(&self, w: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        self.weight.eval_into(w, grad)
    }
}

/// `Σ_{i∈𝓜} B_A(f_w^i ‖ f*^i) + τ·𝔻_w(w ‖ w*)`.
pub fn kprior_value(spec: &KPriorSpec, w: &DVector<f64>) -> Result<f64> {
    let k = KPrior::new(spec)?;
    check_dim("kprior weights", k.dim(), w.len())?;
    Ok(k.value(w))
}

/// `Σ_{i∈𝓜} φ_i [h(f_w^i) − h(f*^i)] + τ·∇𝔻_w`.
pub fn kprior_grad(spec: &KPriorSpec, w: &DVector<f64>) -> Result<DVector<f64>> {
    let k = KPrior::new(spec)?;
    check_dim("kprior weights", k.dim(), w.len())?;
    Ok(k.value_grad(w).1)
}

/// `∇ℓ̄(w) − ∇𝒦(w)`, with `ℓ̄` the full regularized objective over
/// `full_data` under the prior's new feature map.
///
/// Equals `Σ_{𝒳∖𝓜} φ_i [h(f_w^i) − h(f*^i)] + ∇ℓ̄(w*)`; the last term
/// vanishes when `w*` is optimal.
pub fn grad_reconstruction_error(spec: &KPriorSpec, w: &DVector<f64>, full_data: &LabeledData, delta: f64) -> Result<DVector<f64>> {
    let mem = &spec.memory;
    for (k, &i) in mem.indices().iter().enumerate() {
        if i >= full_data.len() || full_data.inputs.row(i) != mem.inputs().row(k) {
            return Err(Error::MemoryNotSubset(i));
        }
    }
    let model = GlmModel::new(w.clone(), spec.feature_map_new, spec.family)?;
    Ok(model.gradient(full_data, delta)? - kprior_grad(spec, w)?)
}

/// `G·(w − w*)` for a GGN built at `w*` over the points left out of memory.
pub fn taylor_error_estimate(leftover_ggn: &DMatrix<f64>, w: &DVector<f64>, w_star: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("taylor estimate", leftover_ggn.ncols(), w.len())?;
    check_dim("taylor estimate", w.len(), w_star.len())?;
    Ok(leftover_ggn * (w - w_star))
}

/// `½(w−w*)ᵀ[G+δI](w−w*)` and its gradient `[G+δI](w−w*)`.
pub fn weight_prior_quad(w: &DVector<f64>, w_star: &DVector<f64>, ggn_full: &DMatrix<f64>, delta: f64) -> Result<(f64, DVector<f64>)> {
    check_dim("weight prior", ggn_full.ncols(), w.len())?;
    check_dim("weight prior", w.len(), w_star.len())?;
    let d = w - w_star;
    let g = ggn_full * &d + &d * delta;
    Ok((0.5 * d.dot(&g), g))
}

/// Thin SVD of `Φᵀ = U·diag(S)·Vᵀ`, truncated to its numerical rank.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdBasis {
    /// P×K left singular vectors (feature space).
    pub u: DMatrix<f64>,
    /// K singular values, descending.
    pub s: DVector<f64>,
    /// N×K right singular vectors (data space).
    pub v: DMatrix<f64>,
}

impl SvdBasis {
    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

/// SVD of the transposed design matrix; singular values at or below
/// `1e-10·s_max` are dropped.
pub fn svd_basis(design: &DMatrix<f64>) -> Result<SvdBasis> {
    let (n, p) = design.shape();
    if design.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("svd input"));
    }
    if n == 0 || p == 0 {
        return Ok(SvdBasis {
            u: DMatrix::zeros(p, 0),
            s: DVector::zeros(0),
            v: DMatrix::zeros(n, 0),
        });
    }
    let svd = design.transpose().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let s_max = s[order[0]];
    order.retain(|&j| s[j] > 1e-10 * s_max);
    Ok(SvdBasis {
        u: u.select_columns(&order),
        s: DVector::from_iterator(order.len(), order.iter().map(|&j| s[j])),
        v: v_t.select_rows(&order).transpose(),
    })
}

fn prediction_gap(design: &DMatrix<f64>, family: ExpFamily, w: &DVector<f64>, w_star: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("optimal kprior weights", design.ncols(), w.len())?;
    check_dim("optimal kprior weights", design.ncols(), w_star.len())?;
    let f = design * w;
    let fs = design * w_star;
    Ok(DVector::from_fn(f.len(), |i, _| family.mean(f[i]) - family.mean(fs[i])))
}

fn check_rank(basis: &SvdBasis, m: usize) -> Result<()> {
    if m > basis.rank() {
        return Err(Error::RankExceeded {
            requested: m,
            rank: basis.rank(),
        });
    }
    Ok(())
}

/// `U_{1:m} S_{1:m} V_{1:m}ᵀ d_x + δ(w − w*)` with
/// `d_x = h(Φw) − h(Φw*)` over the full design `Φ`.
pub fn optimal_kprior_grad(
    basis: &SvdBasis,
    m: usize,
    w: &DVector<f64>,
    w_star: &DVector<f64>,
    delta: f64,
    design: &DMatrix<f64>,
    family: ExpFamily,
) -> Result<DVector<f64>> {
    check_rank(basis, m)?;
    check_dim("svd basis rows", design.nrows(), basis.v.nrows())?;
    let d = prediction_gap(design, family, w, w_star)?;
    let a = basis.v.columns(0, m).tr_mul(&d);
    let sa = a.component_mul(&basis.s.rows(0, m));
    Ok(basis.u.columns(0, m) * sa + (w - w_star) * delta)
}

/// `sqrt(Σ_{j>m} s_j² a_j²)` with `a = Vᵀ d_x`.
pub fn optimal_error_norm(
    basis: &SvdBasis,
    m: usize,
    w: &DVector<f64>,
    w_star: &DVector<f64>,
    design: &DMatrix<f64>,
    family: ExpFamily,
) -> Result<f64> {
    check_rank(basis, m)?;
    check_dim("svd basis rows", design.nrows(), basis.v.nrows())?;
    let d = prediction_gap(design, family, w, w_star)?;
    let a = basis.v.tr_mul(&d);
    Ok((m..basis.rank()).map(|j| (basis.s[j] * a[j]).powi(2)).sum::<f64>().sqrt())
}

/// Per-direction weights `β* = D_u⁻¹ S Vᵀ d_x`, where `D_u` holds
/// `h(u_jᵀw) − h(u_jᵀw*)` for the left singular vectors `u_j`.
///
/// Depends on `w`, so it is only a diagnostic; fails when an entry of
/// `D_u` is zero.
pub fn optimal_beta(
    basis: &SvdBasis,
    w: &DVector<f64>,
    w_star: &DVector<f64>,
    design: &DMatrix<f64>,
    family: ExpFamily,
) -> Result<DVector<f64>> {
    check_dim("svd basis rows", design.nrows(), basis.v.nrows())?;
    let d = prediction_gap(design, family, w, w_star)?;
    let a = basis.v.tr_mul(&d).component_mul(&basis.s);
    let du = prediction_gap(&basis.u.transpose(), family, w, w_star)?;
    let mut beta = DVector::zeros(basis.rank());
    for j in 0..basis.rank() {
        if du[j] == 0.0 {
            return Err(Error::SingularWeighting(j));
        }
        beta[j] = a[j] / du[j];
    }
    Ok(beta)
}
