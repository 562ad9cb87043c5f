//! Common interface over GLMs and MLPs.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::family::ExpFamily;
use crate::features::FeatureMap;
use crate::glm::GlmModel;
use crate::mlp::{Mlp, MlpParams, MlpSpec};

/// Anything that maps input rows to logits.
pub trait Predictor {
    /// Number of logits per input (1 for GLMs and sigmoid MLPs).
    fn output_dim(&self) -> usize;

    /// Logits for every input row (N×K).
    fn predict_logits(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>>;

    /// Selection score of one logit row: `h'(f)` for scalar outputs,
    /// `1 − Σp²` for softmax.
    fn memorability(&self, logits: &[f64]) -> f64;

    /// Hard prediction: threshold 0.5 for sigmoid, argmax for softmax.
    fn hard_label(&self, logits: &[f64]) -> f64;

    fn accuracy(&self, inputs: &DMatrix<f64>, labels: &DVector<f64>) -> Result<f64> {
        if labels.is_empty() {
            return Ok(0.0);
        }
        let logits = self.predict_logits(inputs)?;
        let mut row = vec![0.0; logits.ncols()];
        let mut hits = 0usize;
        for i in 0..logits.nrows() {
            for (j, r) in row.iter_mut().enumerate() {
                *r = logits[(i, j)];
            }
            if self.hard_label(&row) == labels[i] {
                hits += 1;
            }
        }
        Ok(hits as f64 / labels.len() as f64)
    }
}

/// A model class: shape of the parameters without their values.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Glm { family: ExpFamily, map: FeatureMap },
    Mlp(MlpSpec),
}

impl ModelKind {
    pub fn num_params(&self) -> usize {
        match self {
            ModelKind::Glm { map, .. } => map.output_dim(),
            ModelKind::Mlp(spec) => spec.num_params(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelKind::Glm { map, .. } => map.input_dim(),
            ModelKind::Mlp(spec) => spec.input_dim(),
        }
    }

    pub fn with_weights(&self, w: DVector<f64>) -> Result<AnyModel> {
        Ok(match self {
            ModelKind::Glm { family, map } => AnyModel::Glm(GlmModel::new(w, *map, *family)?),
            ModelKind::Mlp(spec) => AnyModel::Mlp(Mlp::new(spec.clone(), MlpParams::unflatten(spec, w)?)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Glm(GlmModel),
    Mlp(Mlp),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Glm(m) => ModelKind::Glm {
                family: m.family(),
                map: *m.feature_map(),
            },
            AnyModel::Mlp(m) => ModelKind::Mlp(m.spec.clone()),
        }
    }

    pub fn weights(&self) -> &DVector<f64> {
        match self {
            AnyModel::Glm(m) => m.weights(),
            AnyModel::Mlp(m) => m.params.flatten(),
        }
    }

    pub fn as_predictor(&self) -> &dyn Predictor {
        match self {
            AnyModel::Glm(m) => m,
            AnyModel::Mlp(m) => m,
        }
    }
}

impl Predictor for AnyModel {
    fn output_dim(&self) -> usize {
        self.as_predictor().output_dim()
    }
    fn predict_logits(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.as_predictor().predict_logits(inputs)
    }
    fn memorability(&self, logits: &[f64]) -> f64 {
        self.as_predictor().memorability(logits)
    }
    fn hard_label(&self, logits: &[f64]) -> f64 {
        self.as_predictor().hard_label(logits)
    }
}
