//! Experiment harness for K-prior adaptation: seeded grids over task,
//! method, memory fraction and replicate, written out as CSV tables and
//! plot-ready series.

pub mod config;
pub mod error;
pub mod grid;
pub mod plot;
pub mod protocol;
pub mod record;

pub use config::{DataSource, ExperimentConfig, ModelSpec, SelectionKind, Settings, TaskKind};
pub use error::{BenchError, Result};
pub use grid::run_grid;
pub use plot::{emit_plot_data, plot_series, Series};
pub use record::{to_csv, ResultRecord};
