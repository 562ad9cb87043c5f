//! Knowledge-adaptation priors (K-priors) for exponential-family GLMs and
//! small MLPs.
//!
//! A K-prior compresses a trained model into a memory of past inputs with
//! the model's own predictions as soft labels, plus a weight-space anchor.
//! Adding it to a new objective lets the model absorb new data, forget
//! data, swap its regularizer or change its model class without revisiting
//! the full training set.

pub mod adapt;
pub mod data;
pub mod error;
pub mod family;
pub mod features;
pub mod glm;
pub mod kprior;
pub mod memory;
pub mod mlp;
pub mod model;
pub mod objective;
pub mod optimizer;

pub use data::LabeledData;
pub use error::{Error, Result};
pub use family::ExpFamily;
pub use features::{FeatureMap, Nesting};
pub use glm::GlmModel;
pub use model::{AnyModel, ModelKind, Predictor};
pub use objective::FiniteSum;
pub use optimizer::{minimize, OptimResult, OptimizerConfig};
pub use kprior::{KPrior, KPriorSpec, WeightDivergence};
pub use memory::{MemorySet, Selection};
pub use adapt::{AdaptConfig, AdaptOutcome, AdaptationTask, BaseContext, Init, Method};
