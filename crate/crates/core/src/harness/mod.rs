//! Experiment plumbing: configuration, offline design over all topologies,
//! the online loop, metrics, CSV traces and figures.

pub mod config;
pub mod export;
pub mod plot;
pub mod sim;
pub mod store;

pub use config::{load_config, parse_config, SimConfig};
pub use export::{export, import_steps};
pub use plot::{plot_comparison, plot_trace};
pub use sim::{metrics, run, synthesize_all, CostModel, Metrics, RunOptions, StepRecord, Trace};
pub use store::GainStore;
