//! Memory sets: a subset of past inputs with the base model's logits.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledData;
use crate::error::{Error, Result};
use crate::model::Predictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selection {
    /// Largest `h'(f*)` (or `1 − Σp²` for softmax) first.
    TopHPrime,
    /// Uniform without replacement, ChaCha8 seeded with the given value.
    Random(u64),
    /// Caller-supplied rows.
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemorySet {
    indices: Vec<usize>,
    inputs: DMatrix<f64>,
    soft_logits: DMatrix<f64>,
    true_labels: DVector<f64>,
    strategy: Selection,
}

impl MemorySet {
    /// Records `model`'s logits at the given rows of `data`. Indices are
    /// sorted and deduplicated.
    pub fn from_indices<M: Predictor + ?Sized>(model: &M, data: &LabeledData, indices: &[usize], strategy: Selection) -> Result<Self> {
        let mut indices = indices.to_vec();
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
            return Err(Error::MemoryNotSubset(bad));
        }
        let picked = data.select(&indices)?;
        let soft_logits = model.predict_logits(&picked.inputs)?;
        Ok(Self {
            indices,
            inputs: picked.inputs,
            soft_logits,
            true_labels: picked.labels,
            strategy,
        })
    }

    /// Every row of `data`.
    pub fn full<M: Predictor + ?Sized>(model: &M, data: &LabeledData) -> Result<Self> {
        let all: Vec<usize> = (0..data.len()).collect();
        Self::from_indices(model, data, &all, Selection::TopHPrime)
    }

    pub fn empty(input_dim: usize, output_dim: usize) -> Self {
        Self {
            indices: Vec::new(),
            inputs: DMatrix::zeros(0, input_dim),
            soft_logits: DMatrix::zeros(0, output_dim),
            true_labels: DVector::zeros(0),
            strategy: Selection::Explicit,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    /// Base-model logits, one row per memory point.
    pub fn soft_logits(&self) -> &DMatrix<f64> {
        &self.soft_logits
    }

    /// First logit column; the whole record for scalar-output models.
    pub fn scalar_logits(&self) -> DVector<f64> {
        if self.soft_logits.ncols() == 0 {
            return DVector::zeros(self.len());
        }
        self.soft_logits.column(0).into_owned()
    }

    pub fn true_labels(&self) -> &DVector<f64> {
        &self.true_labels
    }

    pub fn strategy(&self) -> Selection {
        self.strategy
    }

    /// Memory inputs with their true labels.
    pub fn labeled(&self) -> LabeledData {
        LabeledData {
            inputs: self.inputs.clone(),
            labels: self.true_labels.clone(),
        }
    }

    /// Drops the entries whose source row is in `removed`.
    pub fn without_rows(&self, removed: &[usize]) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&k| !removed.contains(&self.indices[k])).collect();
        Self {
            indices: keep.iter().map(|&k| self.indices[k]).collect(),
            inputs: self.inputs.select_rows(&keep),
            soft_logits: self.soft_logits.select_rows(&keep),
            true_labels: self.true_labels.select_rows(&keep),
            strategy: self.strategy,
        }
    }
}

/// Scores every row of `data` by the model's memorability.
pub fn memorability_scores<M: Predictor + ?Sized>(model: &M, data: &LabeledData) -> Result<Vec<f64>> {
    let logits = model.predict_logits(&data.inputs)?;
    let mut row = vec![0.0; logits.ncols()];
    Ok((0..logits.nrows())
        .map(|i| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = logits[(i, j)];
            }
            model.memorability(&row)
        })
        .collect())
}

/// The `m` rows with the largest memorability; ties go to the smaller row.
pub fn select_memorable<M: Predictor + ?Sized>(model: &M, data: &LabeledData, m: usize) -> Result<MemorySet> {
    if m > data.len() {
        return Err(Error::MemoryTooLarge {
            requested: m,
            available: data.len(),
        });
    }
    let scores = memorability_scores(model, data)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(m);
    MemorySet::from_indices(model, data, &order, Selection::TopHPrime)
}

/// `m` rows drawn uniformly without replacement by ChaCha8 seeded with `seed`.
pub fn select_random<M: Predictor + ?Sized>(model: &M, data: &LabeledData, m: usize, seed: u64) -> Result<MemorySet> {
    if m > data.len() {
        return Err(Error::MemoryTooLarge {
            requested: m,
            available: data.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, data.len(), m).into_vec();
    MemorySet::from_indices(model, data, &picked, Selection::Random(seed))
}

/// `1 − Σ p_k²`, the trace of the softmax Jacobian `diag(p) − ppᵀ`.
pub fn multiclass_score(p: &[f64]) -> Result<f64> {
    if p.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("probabilities must be finite and nonnegative".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidArgument(format!("probabilities sum to {s}, not 1")));
    }
    Ok(1.0 - p.iter().map(|v| v * v).sum::<f64>())
}
