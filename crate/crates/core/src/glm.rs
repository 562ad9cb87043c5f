//! Generalized linear models `f(x) = φ(x)ᵀw` with exponential-family losses.

use nalgebra::{DMatrix, DVector};

use crate::data::LabeledData;
use crate::error::{check_dim, Result};
use crate::family::ExpFamily;
use crate::features::FeatureMap;
use crate::model::Predictor;
use crate::objective::FiniteSum;

#[derive(Debug, Clone, PartialEq)]
pub struct GlmModel {
    weights: DVector<f64>,
    feature_map: FeatureMap,
    family: ExpFamily,
}

impl GlmModel {
    pub fn new(weights: DVector<f64>, feature_map: FeatureMap, family: ExpFamily) -> Result<Self> {
        check_dim("glm weights", feature_map.output_dim(), weights.len())?;
        Ok(Self {
            weights,
            feature_map,
            family,
        })
    }

    pub fn zeros(feature_map: FeatureMap, family: ExpFamily) -> Self {
        Self {
            weights: DVector::zeros(feature_map.output_dim()),
            feature_map,
            family,
        }
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.feature_map
    }

    pub fn family(&self) -> ExpFamily {
        self.family
    }

    pub fn with_weights(&self, weights: DVector<f64>) -> Result<Self> {
        Self::new(weights, self.feature_map, self.family)
    }

    /// Natural parameters `f_i = φ(x_i)ᵀw` for every input row.
    pub fn logits(&self, inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.feature_map.design(inputs)? * &self.weights)
    }

    /// `Σ_i [A(f_i) − y_i f_i] + (δ/2)‖w‖²`.
    pub fn objective(&self, data: &LabeledData, delta: f64) -> Result<f64> {
        let loss = GlmLoss::labels(self.family, self.feature_map.design(&data.inputs)?, data)?;
        let mut grad = DVector::zeros(self.weights.len());
        let v = loss.all_rows_value_grad(&self.weights, &mut grad);
        Ok(v + 0.5 * delta * self.weights.norm_squared())
    }

    /// `Σ_i φ_i [h(f_i) − y_i] + δw`.
    pub fn gradient(&self, data: &LabeledData, delta: f64) -> Result<DVector<f64>> {
        let loss = GlmLoss::labels(self.family, self.feature_map.design(&data.inputs)?, data)?;
        let mut grad = self.weights.clone() * delta;
        loss.all_rows_value_grad(&self.weights, &mut grad);
        Ok(grad)
    }

    /// GGN matrix `Σ_i φ_i h'(f_i) φ_iᵀ` over the given input rows.
    pub fn ggn(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let phi = self.feature_map.design(inputs)?;
        Ok(ggn_from_design(self.family, &phi, &self.weights))
    }
}

/// `Φᵀ diag(h'(Φw)) Φ`.
pub fn ggn_from_design(family: ExpFamily, phi: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let f = phi * w;
    let mut scaled = phi.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= family.mean_deriv(f[i]);
    }
    let g = phi.transpose() * scaled;
    // exact symmetry regardless of summation order
    (&g + g.transpose()) * 0.5
}

impl Predictor for GlmModel {
    fn output_dim(&self) -> usize {
        1
    }

    fn predict_logits(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let f = self.logits(inputs)?;
        Ok(DMatrix::from_column_slice(f.len(), 1, f.as_slice()))
    }

    fn memorability(&self, logits: &[f64]) -> f64 {
        self.family.mean_deriv(logits[0])
    }

    fn hard_label(&self, logits: &[f64]) -> f64 {
        self.family.hard_label(logits[0])
    }
}

/// `sign · Σ_i [A(φ_iᵀw) − t_i φ_iᵀw]` over a fixed design matrix.
///
/// With `t = y` this is the data loss; with soft targets `t_i = h(f*_i)` it
/// matches the functional K-prior term up to a constant.
#[derive(Debug, Clone)]
pub struct GlmLoss {
    family: ExpFamily,
    design: DMatrix<f64>,
    targets: DVector<f64>,
    sign: f64,
}

impl GlmLoss {
    pub fn new(family: ExpFamily, design: DMatrix<f64>, targets: DVector<f64>, sign: f64) -> Result<Self> {
        check_dim("glm loss targets", design.nrows(), targets.len())?;
        Ok(Self {
            family,
            design,
            targets,
            sign,
        })
    }

    pub fn labels(family: ExpFamily, design: DMatrix<f64>, data: &LabeledData) -> Result<Self> {
        Self::new(family, design, data.labels.clone(), 1.0)
    }

    pub fn negated(mut self) -> Self {
        self.sign = -self.sign;
        self
    }
}

impl FiniteSum for GlmLoss {
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
            v += self.family.loss(self.targets[i], f);
            let r = self.sign * (self.family.mean(f) - self.targets[i]);
            grad.axpy(r, &row.transpose(), 1.0);
        }
        self.sign * v
    }

    fn all_rows_value_grad(&self, w: &DVector<f64>, grad: &mut DVector<f64>) -> f64 {
        if self.design.nrows() == 0 {
            return 0.0;
        }
        let f = &self.design * w;
        let mut v = 0.0;
        let mut resid = DVector::zeros(f.len());
        for i in 0..f.len() {
            v += self.family.loss(self.targets[i], f[i]);
            resid[i] = self.sign * (self.family.mean(f[i]) - self.targets[i]);
        }
        grad.gemv_tr(1.0, &self.design, &resid, 1.0);
        self.sign * v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, d: usize) -> (GlmModel, LabeledData) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.5..1.5));
        let labels = DVector::from_fn(n, |_, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        let map = FeatureMap::new(2, true, d).unwrap();
        let w = DVector::from_fn(map.output_dim(), |_, _| rng.random_range(-1.0..1.0));
        (
            GlmModel::new(w, map, ExpFamily::Bernoulli).unwrap(),
            LabeledData::new(inputs, labels).unwrap(),
        )
    }

    #[test]
    fn objective_at_zero_weights() {
        let map = FeatureMap::linear(1);
        let m = GlmModel::zeros(map, ExpFamily::Bernoulli);
        for y in [0.0, 1.0] {
            let d = LabeledData::new(DMatrix::from_element(1, 1, 0.7), DVector::from_element(1, y)).unwrap();
            assert!((m.objective(&d, 3.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn objective_of_empty_data_is_regularizer() {
        let map = FeatureMap::new(1, false, 2).unwrap();
        let m = GlmModel::new(DVector::from_vec(vec![1.0, 1.0]), map, ExpFamily::Bernoulli).unwrap();
        assert_eq!(m.objective(&LabeledData::empty(2), 2.0).unwrap(), 2.0);
    }

    #[test]
    fn objective_matches_scalar_resummation() {
        let (m, d) = random_problem(11, 5, 2);
        let delta = 0.7;
        // independent oracle: expand each row, dot by hand, sum log(1+e^f) − y f
        let mut expected = 0.0;
        for i in 0..d.len() {
            let phi = m.feature_map().expand(&d.row(i)).unwrap();
            let f: f64 = phi.iter().zip(m.weights().iter()).map(|(a, b)| a * b).sum();
            expected += (1.0 + f.exp()).ln() - d.labels[i] * f;
        }
        expected += 0.5 * delta * m.weights().iter().map(|w| w * w).sum::<f64>();
        assert!((m.objective(&d, delta).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            let (m, d) = random_problem(seed, 7, 3);
            let delta = 0.3;
            let g = m.gradient(&d, delta).unwrap();
            let h = 1e-6;
            for j in 0..g.len() {
                let mut wp = m.weights().clone();
                wp[j] += h;
                let mut wm = m.weights().clone();
                wm[j] -= h;
                let fp = m.with_weights(wp).unwrap().objective(&d, delta).unwrap();
                let fm = m.with_weights(wm).unwrap().objective(&d, delta).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "seed {seed} j {j}");
            }
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let map = FeatureMap::new(1, true, 0).unwrap();
        let m = GlmModel::new(DVector::from_element(1, 0.4), map, ExpFamily::Bernoulli).unwrap();
        let y = ExpFamily::Bernoulli.mean(0.4);
        // labels outside {0,1} are fine for the gradient formula itself
        let d = LabeledData::new(DMatrix::zeros(1, 0), DVector::from_element(1, y)).unwrap();
        assert_eq!(m.gradient(&d, 0.0).unwrap()[0], 0.0);
    }

    #[test]
    fn ggn_example() {
        let map = FeatureMap::new(1, false, 2).unwrap();
        let m = GlmModel::zeros(map, ExpFamily::Bernoulli);
        let inputs = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let g = m.ggn(&inputs).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 1.0]));
        assert_eq!(m.ggn(&DMatrix::zeros(0, 2)).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn ggn_is_psd_and_additive() {
        for seed in 0..5 {
            let (m, d) = random_problem(100 + seed, 9, 2);
            let g = m.ggn(&d.inputs).unwrap();
            let eig = g.clone().symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12));
            let mut acc = DMatrix::zeros(g.nrows(), g.ncols());
            for i in 0..d.len() {
                acc += m.ggn(&d.inputs.rows(i, 1).into_owned()).unwrap();
            }
            assert!((acc - g).abs().max() <= 1e-12);
        }
    }

    #[test]
    fn dimension_checks() {
        let map = FeatureMap::linear(2);
        assert!(GlmModel::new(DVector::zeros(2), map, ExpFamily::Bernoulli).is_err());
        let m = GlmModel::zeros(map, ExpFamily::Bernoulli);
        assert!(m.objective(&LabeledData::empty(3), 1.0).is_err());
    }
}
